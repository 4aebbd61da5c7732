"""Physical parameters, cluster geometry, and initial product states.

The lattice is hypercubic with coordination z = 2d.  Couplings are
normalised as J_alpha/z per bond so the interaction energy stays
extensive and z acts as the knob controlling correlation strength.
Clusters tile the infinite lattice periodically; a boundary link of a
cluster points at the wrapped coordinate in the adjacent tile, which
belongs to the complementary (sublattice-swapped) cluster exactly when
the tile shift along that direction flips checkerboard parity, i.e. for
odd side lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .operators import bloch_state

__all__ = [
    "ModelParams",
    "BlochPair",
    "BoundaryLink",
    "ClusterGeometry",
    "PARAMETER_SETS",
    "PRESET_PAIRS",
    "build_geometry",
    "product_state",
    "random_bloch_pair",
]

MAX_CLUSTER_SITES = 10  # keeps cluster Hilbert spaces at dim <= 2**10


@dataclass(frozen=True)
class ModelParams:
    """Couplings and rates, all in units of gamma."""

    J: tuple[float, float, float]
    Omega: float
    gamma: float = 1.0
    z: Optional[int] = None
    dimension: Optional[int] = None

    def __post_init__(self):
        if len(self.J) != 3:
            raise ValueError("J must have exactly three components (Jx, Jy, Jz)")
        object.__setattr__(self, "J", tuple(float(j) for j in self.J))
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.z is not None and self.z < 1:
            raise ValueError("coordination number z must be >= 1")
        if (
            self.z is not None
            and self.dimension is not None
            and self.z != 2 * self.dimension
        ):
            raise ValueError(
                f"cluster runs require z = 2*dimension, got z={self.z}, d={self.dimension}"
            )

    def with_z(self, z: int, dimension: Optional[int] = None) -> "ModelParams":
        return replace(self, z=int(z), dimension=dimension)


#: Coupling sets used throughout: both lie in the mean-field limit-cycle region.
PARAMETER_SETS = {
    "A": ModelParams(J=(-7.0, 6.0, 2.0), Omega=1.0),
    "B": ModelParams(J=(-6.4, 3.0, 6.0), Omega=2.25),
}


@dataclass(frozen=True)
class BlochPair:
    """Initial Bloch vectors of the two sublattices, each inside the unit ball."""

    n_A: tuple[float, float, float]
    n_B: tuple[float, float, float]

    def __post_init__(self):
        for name, n in (("n_A", self.n_A), ("n_B", self.n_B)):
            n = tuple(float(c) for c in n)
            object.__setattr__(self, name, n)
            if len(n) != 3:
                raise ValueError(f"{name} must have 3 components")
            if math.sqrt(sum(c * c for c in n)) > 1.0 + 1e-12:
                raise ValueError(f"{name} lies outside the unit ball: {n}")

    def arrays(self):
        return np.array(self.n_A), np.array(self.n_B)

    def swapped(self) -> "BlochPair":
        return BlochPair(self.n_B, self.n_A)


#: Named initial states; R_I relaxes to a stationary state and R_II enters
#: the limit cycle for parameter set A at z = 150.
PRESET_PAIRS = {
    "RI": BlochPair((0.0911, -0.5318, -0.7725), (-0.0007, -0.6958, 0.0654)),
    "RII": BlochPair((0.2576, 0.1597, 0.1999), (-0.4684, -0.4306, -0.4928)),
}


@dataclass(frozen=True)
class BoundaryLink:
    site: int
    axis: int
    sign: int  # +1 / -1 direction along `axis`
    mirror: int  # site index of the neighbour inside the adjacent tile
    partner: str  # "same" | "complement"


@dataclass(frozen=True)
class ClusterGeometry:
    shape: tuple[int, ...]
    n_sites: int
    internal_bonds: tuple[tuple[int, int, int], ...]  # (site_i, site_j, axis)
    boundary_links: tuple[BoundaryLink, ...]
    sublattice: tuple[int, ...]  # 0 = A, 1 = B

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def coordination(self) -> int:
        return 2 * len(self.shape)

    def needs_complement(self) -> bool:
        return any(l.partner == "complement" for l in self.boundary_links)


def build_geometry(shape) -> ClusterGeometry:
    """Construct bonds, boundary links, and sublattice labels for a cluster.

    Every site ends up with exactly 2d bond-or-link incidences.  The site
    at the coordinate origin carries sublattice label A.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ValueError(f"invalid cluster shape {shape}")
    n_sites = math.prod(shape)
    if n_sites > MAX_CLUSTER_SITES:
        raise ValueError(
            f"cluster with {n_sites} sites exceeds the 2**{MAX_CLUSTER_SITES} state-space cap"
        )

    def index(coords):
        return int(np.ravel_multi_index(coords, shape))

    bonds = []
    links = []
    sublattice = []
    for site in range(n_sites):
        coords = [int(c) for c in np.unravel_index(site, shape)]
        sublattice.append(sum(coords) % 2)
        for axis, side in enumerate(shape):
            partner = "complement" if side % 2 == 1 else "same"
            # +direction: records each internal bond exactly once
            up = coords.copy()
            up[axis] += 1
            if up[axis] < side:
                bonds.append((site, index(up), axis))
            else:
                up[axis] = 0
                links.append(BoundaryLink(site, axis, +1, index(up), partner))
            down = coords.copy()
            down[axis] -= 1
            if down[axis] < 0:
                down[axis] = side - 1
                links.append(BoundaryLink(site, axis, -1, index(down), partner))
    return ClusterGeometry(
        shape=shape,
        n_sites=n_sites,
        internal_bonds=tuple(bonds),
        boundary_links=tuple(links),
        sublattice=tuple(sublattice),
    )


def product_state(pair: BlochPair, geometry: ClusterGeometry) -> np.ndarray:
    """Tensor product of single-site Bloch states over the cluster sites.

    Sites labelled A get n_A, sites labelled B get n_B; site 0 is the
    leftmost tensor factor.
    """
    n_A, n_B = pair.arrays()
    rho = np.array([[1.0 + 0j]])
    for label in geometry.sublattice:
        rho = np.kron(rho, bloch_state(n_A if label == 0 else n_B))
    return rho


def random_bloch_pair(rng: np.random.Generator, distribution: str = "ball") -> BlochPair:
    """Draw independent random Bloch vectors for the two sublattices.

    "ball" samples uniformly over the solid unit ball (radius law
    r = u**(1/3)); "sphere" samples unit vectors on the surface.
    """

    def draw():
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        if distribution == "ball":
            v *= rng.uniform() ** (1.0 / 3.0)
        elif distribution != "sphere":
            raise ValueError(f"unknown distribution {distribution!r}")
        return tuple(v)

    return BlochPair(draw(), draw())
