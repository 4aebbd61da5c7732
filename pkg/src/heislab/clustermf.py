"""Cluster mean-field evolution.

Exact Lindblad dynamics inside a finite cluster; interactions across the
cluster boundary are replaced by a self-consistent field

    B_j^alpha(t) = sum_{links l at j} (J_alpha / z) <sigma^alpha>_{mirror(l)}(t)

entering as -i [B_j . sigma_j, rho].  Even-sided clusters tile the
lattice with copies of themselves and read mirror polarizations from
their own state; any odd side length flips checkerboard parity across
the tile boundary, so a pair of complementary (sublattice-swapped)
clusters is evolved as one coupled system, each reading boundary
polarizations from the other.

The right-hand side never forms the 4^N x 4^N superoperator: the
Hamiltonian is a sparse matrix applied to rho (with rho H recovered as
(H rho)^dagger from Hermiticity), decay is handled by per-site
shifted-block additions, and boundary fields are folded into the sparse
Hamiltonian data in-place each Runge-Kutta stage.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .analysis import (
    DEFAULT_EPS_OSC,
    DEFAULT_RETENTION,
    DEFAULT_T_TRANSIENT,
    summarize_series,
)
from .model import BlochPair, ClusterGeometry, ModelParams, build_geometry, product_state
from .operators import embed, lindblad_apply, pauli
from .series import TrajectorySeries

__all__ = [
    "ClusterOperators",
    "cluster_internal_rhs",
    "boundary_field",
    "evolve_cmf",
    "default_dt",
]

TRACE_TOL = 1e-6


def default_dt(geometry: ClusterGeometry) -> float:
    """0.002 for 3x3-sized clusters, 0.01 up to 2x2x2."""
    return 0.002 if geometry.n_sites >= 9 else 0.01


def _internal_hamiltonian(geometry: ClusterGeometry, params: ModelParams, z: int):
    n = geometry.n_sites
    dim = 2**n
    H = np.zeros((dim, dim), dtype=complex)
    for j in range(n):
        H += 0.5 * params.Omega * embed(pauli("x"), j, n)
    for i, j, _axis in geometry.internal_bonds:
        for a, axis in enumerate("xyz"):
            H += (params.J[a] / z) * (
                embed(pauli(axis), i, n) @ embed(pauli(axis), j, n)
            )
    return H


def cluster_internal_rhs(
    rho: np.ndarray, geometry: ClusterGeometry, params: ModelParams, z: int | None = None
) -> np.ndarray:
    """Lindblad RHS of the isolated cluster (drive + internal bonds + decay).

    Reference implementation via dense term-by-term application; the
    evolution loop uses the compiled sparse path instead.
    """
    n = geometry.n_sites
    if rho.shape != (2**n, 2**n):
        raise ValueError(f"rho must be {2**n}x{2**n} for this geometry")
    z = z if z is not None else geometry.coordination
    H = _internal_hamiltonian(geometry, params, z)
    jumps = [(embed(pauli("minus"), j, n), params.gamma) for j in range(n)]
    return lindblad_apply(H, jumps, rho)


def boundary_field(
    partner_polarizations: np.ndarray,
    geometry: ClusterGeometry,
    params: ModelParams,
    z: int | None = None,
    own_polarizations: np.ndarray | None = None,
) -> np.ndarray:
    """Effective field (n_sites, 3): B_j^a = sum_links (J_a/z) <sigma^a>_mirror.

    `partner_polarizations` supplies mirror values for links tagged
    "complement"; links tagged "same" read from `own_polarizations`
    (defaults to the partner array, which is correct for the single
    self-consistent cluster of even shapes).
    """
    z = z if z is not None else geometry.coordination
    if own_polarizations is None:
        own_polarizations = partner_polarizations
    B = np.zeros((geometry.n_sites, 3))
    J = np.asarray(params.J)
    for link in geometry.boundary_links:
        source = (
            partner_polarizations
            if link.partner == "complement"
            else own_polarizations
        )
        B[link.site] += (J / z) * source[link.mirror]
    return B


class ClusterOperators:
    """Precomputed sparse structures for fast cluster RHS evaluation."""

    def __init__(self, geometry: ClusterGeometry, params: ModelParams, z: int):
        n = geometry.n_sites
        dim = 2**n
        self.geometry = geometry
        self.params = params
        self.z = z
        self.dim = dim
        self.masks = np.array([1 << (n - 1 - j) for j in range(n)], dtype=np.int64)
        # excitation count per basis state (|e> carries bit value 0)
        idx = np.arange(dim, dtype=np.int64)
        self.n_exc = np.zeros(dim)
        for m in self.masks:
            self.n_exc += ((idx & m) == 0).astype(float)
        H = sp.csr_matrix(_internal_hamiltonian(geometry, params, z))
        # union sparsity pattern: H plus every boundary-site Pauli
        pattern = H.copy()
        pattern.data[:] = 1.0
        pattern += sp.eye(dim, format="csr", dtype=complex)
        self.field_sites = sorted({l.site for l in geometry.boundary_links})
        single = {}
        for j in self.field_sites:
            for axis in "xyz":
                s_dense = sp.csr_matrix(embed(pauli(axis), j, n))
                single[(j, axis)] = s_dense
                mask = s_dense.copy()
                mask.data[:] = 1.0
                pattern += mask
        pattern.data[:] = 1.0
        pattern.sort_indices()
        self.indptr = pattern.indptr.copy()
        self.indices = pattern.indices.copy()
        self.static_data = np.zeros(len(pattern.data), dtype=complex)
        self._scatter(H, self.static_data)
        self.field_positions = {}
        for key, mat in single.items():
            coeffs = np.zeros(len(pattern.data), dtype=complex)
            self._scatter(mat, coeffs)
            nz = np.nonzero(coeffs)[0]
            self.field_positions[key] = (nz.astype(np.int64), coeffs[nz])

    def _scatter(self, mat: sp.csr_matrix, target: np.ndarray):
        mat = mat.tocsr()
        mat.sort_indices()
        for r in range(self.dim):
            cols = mat.indices[mat.indptr[r] : mat.indptr[r + 1]]
            vals = mat.data[mat.indptr[r] : mat.indptr[r + 1]]
            row_start, row_end = self.indptr[r], self.indptr[r + 1]
            row_cols = self.indices[row_start:row_end]
            pos = row_start + np.searchsorted(row_cols, cols)
            target[pos] += vals

    def effective_data(self, fields: np.ndarray, out: np.ndarray):
        """H data with -i[B_j . sigma_j, .] folded in as +B_j.sigma_j."""
        np.copyto(out, self.static_data)
        for j in self.field_sites:
            for a, axis in enumerate("xyz"):
                val = fields[j, a]
                if val != 0.0:
                    pos, coeffs = self.field_positions[(j, axis)]
                    out[pos] += val * coeffs

    def polarizations(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros((len(self.masks), 3))
        _kernels.site_polarizations(rho, self.masks, out)
        return out

    def rhs(self, rho, fields, data_buf, matvec_buf, out):
        """Full Lindblad RHS into `out`; assumes rho Hermitian."""
        self.effective_data(fields, data_buf)
        _kernels.csr_dense_matmul(self.indptr, self.indices, data_buf, rho, matvec_buf)
        _kernels.lindblad_assemble(matvec_buf, rho, self.n_exc, self.params.gamma, out)
        _kernels.jump_accumulate(rho, self.masks, self.params.gamma, out)


def evolve_cmf(
    pair: BlochPair,
    shape,
    params: ModelParams,
    t_end: float = 1000.0,
    dt: float | None = None,
    observer_stride: int = 10,
    t_transient: float = DEFAULT_T_TRANSIENT,
    eps_osc: float = DEFAULT_EPS_OSC,
    retention: float = DEFAULT_RETENTION,
    summarize: bool = True,
    positivity_check_stride: int = 0,
):
    """Cluster mean-field trajectory with instantaneous self-consistency.

    Boundary fields are recomputed from the partner's state at every
    Runge-Kutta stage, keeping the coupled system one well-posed ODE.
    Output is the per-sublattice average of <sigma^alpha> across all
    evolved clusters.  `positivity_check_stride` > 0 additionally
    verifies min eig(rho) >= -1e-7 at that many-step cadence.
    """
    geometry = shape if isinstance(shape, ClusterGeometry) else build_geometry(shape)
    z = geometry.coordination
    if params.z is not None and params.z != z:
        raise ValueError(
            f"params.z={params.z} inconsistent with cluster coordination {z}"
        )
    if dt is None:
        dt = default_dt(geometry)
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer multiple of dt")

    ops = ClusterOperators(geometry, params, z)
    paired = geometry.needs_complement()
    states = [product_state(pair, geometry)]
    if paired:
        states.append(product_state(pair.swapped(), geometry))
    n_clusters = len(states)
    partner = [1, 0] if paired else [0]

    # per-sublattice site lists: cluster c's site s carries global label
    # sublattice[s] XOR (c == complementary copy)
    site_groups = []
    for c in range(n_clusters):
        a_sites = [
            s
            for s in range(geometry.n_sites)
            if (geometry.sublattice[s] + c) % 2 == 0
        ]
        b_sites = [
            s
            for s in range(geometry.n_sites)
            if (geometry.sublattice[s] + c) % 2 == 1
        ]
        site_groups.append((a_sites, b_sites))

    dim = ops.dim
    data_buf = np.empty_like(ops.static_data)
    matvec_buf = np.empty((dim, dim), dtype=complex)
    k_bufs = [
        [np.empty((dim, dim), dtype=complex) for _ in range(n_clusters)]
        for _ in range(4)
    ]
    stage = [np.empty((dim, dim), dtype=complex) for _ in range(n_clusters)]

    def eval_rhs(rhos, k_out):
        pols = [ops.polarizations(r) for r in rhos]
        for c in range(n_clusters):
            fields = boundary_field(
                pols[partner[c]], geometry, params, z, own_polarizations=pols[c]
            )
            ops.rhs(rhos[c], fields, data_buf, matvec_buf, k_out[c])

    def record_row(rhos):
        row = np.zeros(6)
        count_a = count_b = 0
        for c in range(n_clusters):
            pol = ops.polarizations(rhos[c])
            a_sites, b_sites = site_groups[c]
            row[0:3] += pol[a_sites].sum(axis=0)
            row[3:6] += pol[b_sites].sum(axis=0)
            count_a += len(a_sites)
            count_b += len(b_sites)
        row[0:3] /= count_a
        row[3:6] /= count_b
        return row

    rec_t, rec_rows = [0.0], [record_row(states)]
    truncated = False
    reason = ""
    for step in range(1, n_steps + 1):
        eval_rhs(states, k_bufs[0])
        for c in range(n_clusters):
            np.multiply(k_bufs[0][c], 0.5 * dt, out=stage[c])
            stage[c] += states[c]
        eval_rhs(stage, k_bufs[1])
        for c in range(n_clusters):
            np.multiply(k_bufs[1][c], 0.5 * dt, out=stage[c])
            stage[c] += states[c]
        eval_rhs(stage, k_bufs[2])
        for c in range(n_clusters):
            np.multiply(k_bufs[2][c], dt, out=stage[c])
            stage[c] += states[c]
        eval_rhs(stage, k_bufs[3])
        for c in range(n_clusters):
            acc = k_bufs[0][c]
            acc += k_bufs[3][c]
            acc += 2.0 * k_bufs[1][c]
            acc += 2.0 * k_bufs[2][c]
            acc *= dt / 6.0
            states[c] += acc
        t_new = step * dt
        for c in range(n_clusters):
            tr = np.trace(states[c])
            if not np.isfinite(tr.real) or abs(tr - 1.0) > TRACE_TOL:
                truncated = True
                reason = f"trace drift {abs(tr - 1.0):.2e} at t={t_new:.4g}; reduce dt"
                break
        if positivity_check_stride and step % positivity_check_stride == 0:
            for c in range(n_clusters):
                min_eig = float(np.linalg.eigvalsh(states[c]).min())
                if min_eig < -1e-7:
                    truncated = True
                    reason = f"positivity violation {min_eig:.2e} at t={t_new:.4g}"
                    break
        if truncated:
            raise _kernels.TrajectoryAbort(reason, t_new)
        if step % observer_stride == 0 or step == n_steps:
            rec_t.append(t_new)
            rec_rows.append(record_row(states))
    series = TrajectorySeries.from_rows(np.array(rec_t), np.array(rec_rows))
    summary = (
        summarize_series(series, t_transient, eps_osc, retention) if summarize else None
    )
    return series, summary
