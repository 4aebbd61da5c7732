"""Exact Lindblad evolution of small full lattices and analytic references.

Used by tests and the `oracle-check` CLI command to validate operator
construction and method-limit behaviour against trivially trustworthy
computations.  Deliberately slow and dense: n_sites is capped at 6 so the
vectorised superoperator never exceeds 4096 x 4096.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrator import StepControl, evolve, rk4_step
from .model import ModelParams
from .operators import (
    dense_liouvillian,
    embed,
    expectation,
    pauli,
    unvec,
    vec,
)

__all__ = [
    "SmallLattice",
    "ring_lattice",
    "chain_lattice",
    "build_superoperator",
    "exact_evolve",
    "analytic_single_site",
    "OracleCheck",
    "run_oracle_checks",
]

MAX_ORACLE_SITES = 6


@dataclass(frozen=True)
class SmallLattice:
    """A handful of spins with explicit bonds and a target z normalisation.

    `z_norm` is the coordination of the lattice the comparison targets
    (couplings enter as J_alpha / z_norm), not the coordination of this
    small system.  Length-2 rings keep a single bond; the wrap bond that
    would duplicate it is omitted.
    """

    n_sites: int
    bonds: tuple[tuple[int, int], ...]
    z_norm: int = 1

    def __post_init__(self):
        if not 1 <= self.n_sites <= MAX_ORACLE_SITES:
            raise ValueError(f"oracle supports 1..{MAX_ORACLE_SITES} sites")
        for i, j in self.bonds:
            if not (0 <= i < self.n_sites and 0 <= j < self.n_sites) or i == j:
                raise ValueError(f"invalid bond ({i}, {j})")


def ring_lattice(n_sites: int, z_norm: int = 1) -> SmallLattice:
    if n_sites == 1:
        bonds = ()
    elif n_sites == 2:
        bonds = ((0, 1),)
    else:
        bonds = tuple((i, (i + 1) % n_sites) for i in range(n_sites))
    return SmallLattice(n_sites, bonds, z_norm)


def chain_lattice(n_sites: int, z_norm: int = 1) -> SmallLattice:
    return SmallLattice(n_sites, tuple((i, i + 1) for i in range(n_sites - 1)), z_norm)


def build_hamiltonian(lattice: SmallLattice, params: ModelParams) -> np.ndarray:
    n = lattice.n_sites
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        H += 0.5 * params.Omega * embed(pauli("x"), i, n)
    for i, j in lattice.bonds:
        for alpha, axis in enumerate("xyz"):
            H += (params.J[alpha] / lattice.z_norm) * (
                embed(pauli(axis), i, n) @ embed(pauli(axis), j, n)
            )
    return H


def build_jumps(lattice: SmallLattice, params: ModelParams):
    n = lattice.n_sites
    return [(embed(pauli("minus"), i, n), params.gamma) for i in range(n)]


def build_superoperator(lattice: SmallLattice, params: ModelParams) -> np.ndarray:
    return dense_liouvillian(
        build_hamiltonian(lattice, params), build_jumps(lattice, params)
    )


def exact_evolve(
    lattice: SmallLattice,
    params: ModelParams,
    rho0: np.ndarray,
    t_end: float,
    dt: float,
    adaptive: bool = True,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
):
    """Evolve rho0 under the dense vectorised Liouvillian.

    Returns (times, rhos) sampled every `dt`.  Adaptive integration by
    default; `adaptive=False` uses fixed RK4 at dt for per-step
    comparisons against other evolution paths.
    """
    dim = 2**lattice.n_sites
    if rho0.shape != (dim, dim):
        raise ValueError(f"rho0 must be {dim}x{dim}")
    L = build_superoperator(lattice, params)
    rhs = lambda t, v: L @ v
    n_samples = int(round(t_end / dt))
    times = np.arange(n_samples + 1) * dt
    rhos = np.empty((n_samples + 1, dim, dim), dtype=complex)
    rhos[0] = rho0
    v = vec(rho0).astype(complex)
    if adaptive:
        for k in range(1, n_samples + 1):
            control = StepControl(
                dt=dt, t_end=dt, mode="adaptive", abs_tol=abs_tol, rel_tol=rel_tol
            )
            _, v = evolve(rhs, v, control)
            rhos[k] = unvec(v)
    else:
        t = 0.0
        for k in range(1, n_samples + 1):
            v = rk4_step(rhs, v, t, dt)
            t = times[k]
            rhos[k] = unvec(v)
    return times, rhos


def analytic_single_site(omega: float, gamma: float) -> np.ndarray:
    """Steady Bloch vector of the resonant driven-dissipative site.

    Closed form: z = -gamma^2 / (gamma^2 + 2 Omega^2), y = -2 Omega z / gamma,
    x = 0.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    z = -(gamma**2) / (gamma**2 + 2.0 * omega**2)
    y = -2.0 * omega * z / gamma
    return np.array([0.0, y, z])


@dataclass
class OracleCheck:
    name: str
    tolerance: float
    residual: float = np.nan
    passed: bool = False
    detail: str = ""

    def finish(self, residual: float, detail: str = ""):
        self.residual = float(residual)
        self.passed = bool(self.residual < self.tolerance)
        self.detail = detail
        return self


def _bloch_of(rho_site: np.ndarray) -> np.ndarray:
    return np.array([expectation(pauli(a), rho_site).real for a in "xyz"])


def _site_reduced(rho: np.ndarray, site: int, n: int) -> np.ndarray:
    full = rho.reshape((2,) * (2 * n))
    axes = [a for a in range(n) if a != site]
    out = full
    # trace out highest axes first so indices stay valid
    for a in sorted(axes, reverse=True):
        out = np.trace(out, axis1=a, axis2=a + out.ndim // 2)
    return out


def run_oracle_checks(pauli_table=None) -> list[OracleCheck]:
    """Equivalence and analytic checks; `pauli_table` overrides the
    operator source for negative tests."""
    P = pauli_table if pauli_table is not None else {a: pauli(a) for a in ("x", "y", "z", "minus")}
    checks = []
    rng = np.random.default_rng(20260809)

    # Pauli algebra: sigma^a sigma^b = delta I + i eps_abc sigma^c
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[a, b, c], eps[b, a, c] = 1.0, -1.0
    worst = 0.0
    for a, ax in enumerate("xyz"):
        for b, bx in enumerate("xyz"):
            expect = (a == b) * np.eye(2) + 1j * sum(
                eps[a, b, c] * P["xyz"[c]] for c in range(3)
            )
            worst = max(worst, float(np.abs(P[ax] @ P[bx] - expect).max()))
    checks.append(OracleCheck("pauli-algebra", 1e-14).finish(worst))

    # dense superoperator vs term-by-term application, one driven site
    params = ModelParams(J=(0.0, 0.0, 0.0), Omega=1.0)
    lat = ring_lattice(1)
    L = dense_liouvillian(
        0.5 * params.Omega * P["x"], [(P["minus"], params.gamma)]
    )
    from .operators import lindblad_apply

    worst = 0.0
    for _ in range(20):
        r = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        r = r + r.conj().T
        direct = lindblad_apply(0.5 * params.Omega * P["x"], [(P["minus"], 1.0)], r)
        worst = max(worst, float(np.abs(unvec(L @ vec(r)) - direct).max()))
    checks.append(OracleCheck("dense-vs-matrix-free", 1e-13).finish(worst))

    # analytic single-site steady state reached by exact evolution
    rho0 = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)
    _, rhos = exact_evolve(lat, params, rho0, t_end=50.0, dt=5.0)
    res = float(np.abs(_bloch_of(rhos[-1]) - analytic_single_site(1.0, 1.0)).max())
    checks.append(OracleCheck("single-site-steady-state", 1e-9).finish(res))

    # trace preservation and positivity on a 3-site ring, set A couplings
    paramsA = ModelParams(J=(-7.0, 6.0, 2.0), Omega=1.0).with_z(4)
    lat3 = ring_lattice(3, z_norm=4)
    rho0 = np.zeros((8, 8), dtype=complex)
    rho0[-1, -1] = 1.0  # all sites in |g>
    _, rhos = exact_evolve(lat3, paramsA, rho0, t_end=10.0, dt=2.0)
    tr_res = max(abs(np.trace(r) - 1.0) for r in rhos)
    min_eig = min(np.linalg.eigvalsh(r).min() for r in rhos)
    checks.append(OracleCheck("trace-preservation", 1e-10).finish(float(tr_res)))
    checks.append(
        OracleCheck("positivity", 1e-9).finish(float(max(0.0, -min_eig)))
    )

    # two decoupled sites factorise
    lat2 = ring_lattice(2)
    rho0 = np.kron(
        np.array([[0, 0], [0, 1]], dtype=complex),
        np.array([[0.5, 0], [0, 0.5]], dtype=complex),
    )
    _, rhos = exact_evolve(lat2, params, rho0, t_end=20.0, dt=4.0)
    worst = 0.0
    for r in rhos:
        r0 = _site_reduced(r, 0, 2)
        r1 = _site_reduced(r, 1, 2)
        worst = max(worst, float(np.abs(np.kron(r0, r1) - r).max()))
    checks.append(OracleCheck("decoupled-factorisation", 1e-9).finish(worst))
    return checks
