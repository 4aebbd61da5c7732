"""Compiled inner loops for the three evolution engines.

Everything here is a performance twin of a plain-numpy implementation in
`meanfield`, `cmop`, or `clustermf`; tests assert agreement between the
two paths.  All loops are sequential and allocation order is fixed, so
fixed-step trajectories are bit-reproducible.

Memory-kernel algebra used below: with Hermitian sublattice states the
right-product kernel is the complex conjugate of the left-product kernel
and the propagated right products are adjoints of the left ones, so the
Born integrand reduces to Z - Z^dagger where Z accumulates only the
left-product family.  In the eigenbasis of the local generator the
integrand is a sum of exponentials exp((lam_k + lam_l) tau) times
history-local coefficient products; the "spectral" engine integrates
each of those modes as an auxiliary ODE (exact, infinite memory) while
the "history" engine evaluates the same sum by trapezoidal quadrature
over a uniform history grid truncated at the memory window.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .operators import dense_liouvillian, pauli, vec

__all__ = [
    "TrajectoryAbort",
    "SuperopPack",
    "superop_pack",
    "local_liouvillian_matrix",
    "mf_evolve",
    "spectral_evolve",
    "history_evolve",
    "csr_dense_matmul",
    "lindblad_assemble",
    "jump_accumulate",
    "site_polarizations",
]


class TrajectoryAbort(RuntimeError):
    """Numerical abort of a single trajectory (trace drift, non-finite)."""

    def __init__(self, message, t_abort=np.nan):
        super().__init__(message)
        self.t_abort = t_abort


def local_liouvillian_matrix(params) -> np.ndarray:
    """Vectorised 4x4 local Liouvillian of the driven-dissipative site."""
    H = 0.5 * params.Omega * pauli("x")
    return dense_liouvillian(H, [(pauli("minus"), params.gamma)])


class SuperopPack:
    """Precomputed 4x4 superoperator pieces shared by the engines."""

    def __init__(self, omega: float, gamma: float):
        self.L4 = dense_liouvillian(
            0.5 * omega * pauli("x"), [(pauli("minus"), gamma)]
        )
        eye = np.eye(2, dtype=complex)
        sig = [pauli(a) for a in "xyz"]
        self.comm = np.stack(
            [np.kron(eye, s) - np.kron(s.T, eye) for s in sig]
        )  # [sigma^a, .] in vec form
        self.left = np.stack([np.kron(eye, s) for s in sig])  # vec(s rho)
        self.trace_vec = np.stack([vec(s.T) for s in sig])  # Tr{s rho} = w . vec(rho)
        w, V = np.linalg.eig(self.L4)
        cond = np.linalg.cond(V)
        if not (np.isfinite(cond) and cond < 1e8):
            raise RuntimeError(
                "local Liouvillian eigenbasis ill-conditioned; "
                "memory-kernel engines need a diagonalizable generator"
            )
        self.eigvals = w
        self.modes = np.ascontiguousarray(V)
        self.modes_inv = np.ascontiguousarray(np.linalg.inv(V))
        self.left_in_modes = np.ascontiguousarray(
            np.einsum("kj,ajl->akl", self.modes_inv, self.left)
        )
        self.trace_in_modes = np.ascontiguousarray(self.trace_vec @ self.modes)
        self.nu = w[:, None] + w[None, :]


_PACKS: dict[tuple[float, float], SuperopPack] = {}


def superop_pack(params) -> SuperopPack:
    key = (float(params.Omega), float(params.gamma))
    if key not in _PACKS:
        _PACKS[key] = SuperopPack(*key)
    return _PACKS[key]


# ---------------------------------------------------------------------------
# shared jit helpers

N_SPECTRAL = 56  # 2 * 4 state entries + 3 * 16 auxiliary memory modes


@njit(cache=True)
def _means(Wc, v, out):
    for a in range(3):
        acc = 0.0 + 0.0j
        for i in range(4):
            acc += Wc[a, i] * v[i]
        out[a] = acc.real


@njit(cache=True)
def _local_and_field(L4, Cc, J, a, b, mA, mB, da, db):
    for i in range(4):
        sa = 0.0 + 0.0j
        sb = 0.0 + 0.0j
        for k in range(4):
            sa += L4[i, k] * a[k]
            sb += L4[i, k] * b[k]
        da[i] = sa
        db[i] = sb
    for al in range(3):
        fA = -1j * J[al] * mB[al]
        fB = -1j * J[al] * mA[al]
        for i in range(4):
            ca = 0.0 + 0.0j
            cb = 0.0 + 0.0j
            for k in range(4):
                ca += Cc[al, i, k] * a[k]
                cb += Cc[al, i, k] * b[k]
            da[i] += fA * ca
            db[i] += fB * cb


@njit(cache=True)
def _fluct_products(Vinv, VinvSl, v, m, out):
    """Mode-space left fluctuation products P~[beta, k] of one sublattice."""
    vt = np.zeros(4, dtype=np.complex128)
    for k in range(4):
        acc = 0.0 + 0.0j
        for i in range(4):
            acc += Vinv[k, i] * v[i]
        vt[k] = acc
    for be in range(3):
        for k in range(4):
            acc = 0.0 + 0.0j
            for i in range(4):
                acc += VinvSl[be, k, i] * v[i]
            out[be, k] = acc - m[be] * vt[k]


@njit(cache=True)
def _born_add(V, Cc, c3, J, zf, born_scale, YA, YB, da, db):
    """Fold accumulated mode-space integrals into the two RHS vectors.

    YA/YB[al, be, l] are the Born integrals in mode space; the physical
    integrand is Z - Z^dagger with Z = V @ Y, entering as
    -(J_al J_be / z) [sigma^al, .].
    """
    pref = -born_scale / zf
    for al in range(3):
        zA = np.zeros(4, dtype=np.complex128)
        zB = np.zeros(4, dtype=np.complex128)
        for be in range(3):
            for i in range(4):
                accA = 0.0 + 0.0j
                accB = 0.0 + 0.0j
                for l in range(4):
                    accA += V[i, l] * YA[al, be, l]
                    accB += V[i, l] * YB[al, be, l]
                zA[i] += J[be] * accA
                zB[i] += J[be] * accB
        # I = Z - Z^dagger in vec (column-stacking) layout
        iA0 = zA[0] - np.conj(zA[0])
        iA1 = zA[1] - np.conj(zA[2])
        iA2 = zA[2] - np.conj(zA[1])
        iA3 = zA[3] - np.conj(zA[3])
        iB0 = zB[0] - np.conj(zB[0])
        iB1 = zB[1] - np.conj(zB[2])
        iB2 = zB[2] - np.conj(zB[1])
        iB3 = zB[3] - np.conj(zB[3])
        w = pref * J[al]
        for i in range(4):
            da[i] += w * (
                Cc[al, i, 0] * iA0
                + Cc[al, i, 1] * iA1
                + Cc[al, i, 2] * iA2
                + Cc[al, i, 3] * iA3
            )
            db[i] += w * (
                Cc[al, i, 0] * iB0
                + Cc[al, i, 1] * iB1
                + Cc[al, i, 2] * iB2
                + Cc[al, i, 3] * iB3
            )


# ---------------------------------------------------------------------------
# spectral engine: auxiliary-mode ODEs, exact memory integral

@njit(cache=True)
def _spectral_rhs(y, dy, L4, Cc, Wc, V, Vinv, VinvSl, c3, nu, J, zf, born_scale):
    a = y[0:4]
    b = y[4:8]
    mA = np.zeros(3)
    mB = np.zeros(3)
    _means(Wc, a, mA)
    _means(Wc, b, mB)
    da = dy[0:4]
    db = dy[4:8]
    _local_and_field(L4, Cc, J, a, b, mA, mB, da, db)
    if born_scale == 0.0:
        for i in range(8, N_SPECTRAL):
            dy[i] = 0.0 + 0.0j
        return
    Pa = np.zeros((3, 4), dtype=np.complex128)
    Pb = np.zeros((3, 4), dtype=np.complex128)
    _fluct_products(Vinv, VinvSl, a, mA, Pa)
    _fluct_products(Vinv, VinvSl, b, mB, Pb)
    # dM[be,k,l] = nu[k,l] M + P~B[be,k] P~A[be,l]
    idx = 8
    for be in range(3):
        for k in range(4):
            for l in range(4):
                dy[idx] = nu[k, l] * y[idx] + Pb[be, k] * Pa[be, l]
                idx += 1
    # Y[al,be,l] = sum_k c3[al,k] M[be,k,l]; B direction uses M transposed
    YA = np.zeros((3, 3, 4), dtype=np.complex128)
    YB = np.zeros((3, 3, 4), dtype=np.complex128)
    for al in range(3):
        for be in range(3):
            base = 8 + be * 16
            for l in range(4):
                accA = 0.0 + 0.0j
                accB = 0.0 + 0.0j
                for k in range(4):
                    accA += c3[al, k] * y[base + k * 4 + l]
                    accB += c3[al, k] * y[base + l * 4 + k]
                YA[al, be, l] = accA
                YB[al, be, l] = accB
    _born_add(V, Cc, c3, J, zf, born_scale, YA, YB, da, db)


@njit(cache=True)
def _spectral_loop(
    y,
    L4,
    Cc,
    Wc,
    V,
    Vinv,
    VinvSl,
    c3,
    nu,
    J,
    zf,
    born_scale,
    n_steps,
    dt,
    stride,
    trace_tol,
    rec_t,
    rec_rows,
):
    k1 = np.zeros(N_SPECTRAL, dtype=np.complex128)
    k2 = np.zeros(N_SPECTRAL, dtype=np.complex128)
    k3 = np.zeros(N_SPECTRAL, dtype=np.complex128)
    k4 = np.zeros(N_SPECTRAL, dtype=np.complex128)
    yt = np.zeros(N_SPECTRAL, dtype=np.complex128)
    m = np.zeros(3)
    n_rec = 0
    herm_max = 0.0
    for a in range(3):
        _means(Wc, y[0:4], m)
        rec_rows[0, a] = m[a]
        _means(Wc, y[4:8], m)
        rec_rows[0, 3 + a] = m[a]
    rec_t[0] = 0.0
    n_rec = 1
    for step in range(1, n_steps + 1):
        _spectral_rhs(y, k1, L4, Cc, Wc, V, Vinv, VinvSl, c3, nu, J, zf, born_scale)
        for i in range(N_SPECTRAL):
            yt[i] = y[i] + 0.5 * dt * k1[i]
        _spectral_rhs(yt, k2, L4, Cc, Wc, V, Vinv, VinvSl, c3, nu, J, zf, born_scale)
        for i in range(N_SPECTRAL):
            yt[i] = y[i] + 0.5 * dt * k2[i]
        _spectral_rhs(yt, k3, L4, Cc, Wc, V, Vinv, VinvSl, c3, nu, J, zf, born_scale)
        for i in range(N_SPECTRAL):
            yt[i] = y[i] + dt * k3[i]
        _spectral_rhs(yt, k4, L4, Cc, Wc, V, Vinv, VinvSl, c3, nu, J, zf, born_scale)
        for i in range(N_SPECTRAL):
            y[i] = y[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        trA = y[0] + y[3]
        trB = y[4] + y[7]
        if not (np.isfinite(trA.real) and np.isfinite(trB.real)):
            return n_rec, 2, step * dt, herm_max
        if abs(trA - 1.0) > trace_tol or abs(trB - 1.0) > trace_tol:
            return n_rec, 1, step * dt, herm_max
        hA = abs(y[1] - np.conj(y[2]))
        hB = abs(y[5] - np.conj(y[6]))
        if hA > herm_max:
            herm_max = hA
        if hB > herm_max:
            herm_max = hB
        if step % stride == 0 or step == n_steps:
            rec_t[n_rec] = step * dt
            _means(Wc, y[0:4], m)
            for a in range(3):
                rec_rows[n_rec, a] = m[a]
            _means(Wc, y[4:8], m)
            for a in range(3):
                rec_rows[n_rec, 3 + a] = m[a]
            n_rec += 1
    return n_rec, 0, 0.0, herm_max


# ---------------------------------------------------------------------------
# history engine: trapezoid over the stored grid, memory window T_mem

@njit(cache=True)
def _history_rhs(
    a,
    b,
    da,
    db,
    hP,
    cap,
    n,
    parity,
    n_mem,
    dt,
    Etable,
    L4,
    Cc,
    Wc,
    V,
    Vinv,
    VinvSl,
    c3,
    J,
    zf,
    born_scale,
):
    mA = np.zeros(3)
    mB = np.zeros(3)
    _means(Wc, a, mA)
    _means(Wc, b, mB)
    _local_and_field(L4, Cc, J, a, b, mA, mB, da, db)
    if born_scale == 0.0:
        return
    PsA = np.zeros((3, 4), dtype=np.complex128)
    PsB = np.zeros((3, 4), dtype=np.complex128)
    _fluct_products(Vinv, VinvSl, a, mA, PsA)
    _fluct_products(Vinv, VinvSl, b, mB, PsB)

    if parity == 0:
        j_hi = n - 1
        j_lo = n - n_mem
        gap = dt
    elif parity == 1:
        j_hi = n
        j_lo = n - n_mem + 1
        gap = 0.5 * dt
    else:
        j_hi = n
        j_lo = n - n_mem + 1
        gap = dt
    if j_lo < 0:
        j_lo = 0

    YA = np.zeros((3, 3, 4), dtype=np.complex128)
    YB = np.zeros((3, 3, 4), dtype=np.complex128)
    FA = np.zeros((3, 4), dtype=np.complex128)
    FB = np.zeros((3, 4), dtype=np.complex128)
    dkA = np.zeros((3, 3), dtype=np.complex128)
    dkB = np.zeros((3, 3), dtype=np.complex128)
    m_nodes = j_hi - j_lo + 1
    if m_nodes < 0:
        m_nodes = 0
    w_end = 0.5 * gap if m_nodes > 0 else 0.0
    for j in range(j_lo, j_hi + 1):
        if m_nodes == 1:
            w = 0.5 * gap
        elif j == j_lo:
            w = 0.5 * dt
        elif j == j_hi:
            w = 0.5 * (dt + gap)
        else:
            w = dt
        r = j % cap
        e_idx = 2 * (n - j) + parity
        for be in range(3):
            for k in range(4):
                ek = Etable[e_idx, k]
                FA[be, k] = ek * hP[r, 0, be, k]
                FB[be, k] = ek * hP[r, 1, be, k]
        for al in range(3):
            for be in range(3):
                accA = 0.0 + 0.0j
                accB = 0.0 + 0.0j
                for k in range(4):
                    accA += c3[al, k] * FB[be, k]
                    accB += c3[al, k] * FA[be, k]
                dkA[al, be] = w * accA
                dkB[al, be] = w * accB
        for al in range(3):
            for be in range(3):
                for l in range(4):
                    YA[al, be, l] += dkA[al, be] * FA[be, l]
                    YB[al, be, l] += dkB[al, be] * FB[be, l]
    # endpoint node at the stage time itself (delay zero)
    for al in range(3):
        for be in range(3):
            accA = 0.0 + 0.0j
            accB = 0.0 + 0.0j
            for k in range(4):
                accA += c3[al, k] * PsB[be, k]
                accB += c3[al, k] * PsA[be, k]
            dkA[al, be] = w_end * accA
            dkB[al, be] = w_end * accB
    for al in range(3):
        for be in range(3):
            for l in range(4):
                YA[al, be, l] += dkA[al, be] * PsA[be, l]
                YB[al, be, l] += dkB[al, be] * PsB[be, l]
    _born_add(V, Cc, c3, J, zf, born_scale, YA, YB, da, db)


@njit(cache=True)
def _write_hist(hP, cap, j, y, Wc, Vinv, VinvSl):
    m = np.zeros(3)
    P = np.zeros((3, 4), dtype=np.complex128)
    r = j % cap
    _means(Wc, y[0:4], m)
    _fluct_products(Vinv, VinvSl, y[0:4], m, P)
    for be in range(3):
        for k in range(4):
            hP[r, 0, be, k] = P[be, k]
    _means(Wc, y[4:8], m)
    _fluct_products(Vinv, VinvSl, y[4:8], m, P)
    for be in range(3):
        for k in range(4):
            hP[r, 1, be, k] = P[be, k]


@njit(cache=True)
def _history_loop(
    y,
    L4,
    Cc,
    Wc,
    V,
    Vinv,
    VinvSl,
    c3,
    J,
    zf,
    born_scale,
    Etable,
    n_steps,
    dt,
    n_mem,
    stride,
    trace_tol,
    rec_t,
    rec_rows,
):
    cap = n_mem + 4
    hP = np.zeros((cap, 2, 3, 4), dtype=np.complex128)
    _write_hist(hP, cap, 0, y, Wc, Vinv, VinvSl)
    k1 = np.zeros(8, dtype=np.complex128)
    k2 = np.zeros(8, dtype=np.complex128)
    k3 = np.zeros(8, dtype=np.complex128)
    k4 = np.zeros(8, dtype=np.complex128)
    yt = np.zeros(8, dtype=np.complex128)
    m = np.zeros(3)
    herm_max = 0.0
    _means(Wc, y[0:4], m)
    for a in range(3):
        rec_rows[0, a] = m[a]
    _means(Wc, y[4:8], m)
    for a in range(3):
        rec_rows[0, 3 + a] = m[a]
    rec_t[0] = 0.0
    n_rec = 1
    for step_i in range(n_steps):
        n = step_i
        _history_rhs(
            y[0:4], y[4:8], k1[0:4], k1[4:8], hP, cap, n, 0, n_mem, dt, Etable,
            L4, Cc, Wc, V, Vinv, VinvSl, c3, J, zf, born_scale,
        )
        for i in range(8):
            yt[i] = y[i] + 0.5 * dt * k1[i]
        _history_rhs(
            yt[0:4], yt[4:8], k2[0:4], k2[4:8], hP, cap, n, 1, n_mem, dt, Etable,
            L4, Cc, Wc, V, Vinv, VinvSl, c3, J, zf, born_scale,
        )
        for i in range(8):
            yt[i] = y[i] + 0.5 * dt * k2[i]
        _history_rhs(
            yt[0:4], yt[4:8], k3[0:4], k3[4:8], hP, cap, n, 1, n_mem, dt, Etable,
            L4, Cc, Wc, V, Vinv, VinvSl, c3, J, zf, born_scale,
        )
        for i in range(8):
            yt[i] = y[i] + dt * k3[i]
        _history_rhs(
            yt[0:4], yt[4:8], k4[0:4], k4[4:8], hP, cap, n, 2, n_mem, dt, Etable,
            L4, Cc, Wc, V, Vinv, VinvSl, c3, J, zf, born_scale,
        )
        for i in range(8):
            y[i] = y[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        step = step_i + 1
        _write_hist(hP, cap, step, y, Wc, Vinv, VinvSl)
        trA = y[0] + y[3]
        trB = y[4] + y[7]
        if not (np.isfinite(trA.real) and np.isfinite(trB.real)):
            return n_rec, 2, step * dt, herm_max
        if abs(trA - 1.0) > trace_tol or abs(trB - 1.0) > trace_tol:
            return n_rec, 1, step * dt, herm_max
        hA = abs(y[1] - np.conj(y[2]))
        hB = abs(y[5] - np.conj(y[6]))
        if hA > herm_max:
            herm_max = hA
        if hB > herm_max:
            herm_max = hB
        if step % stride == 0 or step == n_steps:
            rec_t[n_rec] = step * dt
            _means(Wc, y[0:4], m)
            for a in range(3):
                rec_rows[n_rec, a] = m[a]
            _means(Wc, y[4:8], m)
            for a in range(3):
                rec_rows[n_rec, 3 + a] = m[a]
            n_rec += 1
    return n_rec, 0, 0.0, herm_max


# ---------------------------------------------------------------------------
# python-facing wrappers

def _steps_and_records(t_end, dt, stride):
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer multiple of dt")
    n_rec_cap = n_steps // stride + 2
    return n_steps, np.zeros(n_rec_cap), np.zeros((n_rec_cap, 6))


def _finish(status, t_bad, n_rec, rec_t, rec_rows):
    if status == 1:
        raise TrajectoryAbort(
            f"trace drift beyond tolerance at t={t_bad:.4g}; reduce dt", t_bad
        )
    if status == 2:
        raise TrajectoryAbort(f"non-finite state at t={t_bad:.4g}", t_bad)
    return rec_t[:n_rec], rec_rows[:n_rec]


def mf_evolve(pack, J, y0, t_end, dt, stride, trace_tol=1e-6):
    """Mean-field trajectory via the spectral engine with the Born term off."""
    y = np.zeros(N_SPECTRAL, dtype=np.complex128)
    y[0:8] = y0
    n_steps, rec_t, rec_rows = _steps_and_records(t_end, dt, stride)
    n_rec, status, t_bad, _ = _spectral_loop(
        y, pack.L4, pack.comm, pack.trace_vec, pack.modes, pack.modes_inv,
        pack.left_in_modes, pack.trace_in_modes, pack.nu,
        np.asarray(J, dtype=float), 1.0, 0.0,
        n_steps, float(dt), int(stride), trace_tol, rec_t, rec_rows,
    )
    t, rows = _finish(status, t_bad, n_rec, rec_t, rec_rows)
    return t, rows, y[0:8].copy()


def spectral_evolve(pack, params, y0, t_end, dt, stride, born_scale=1.0, trace_tol=1e-6):
    """Born-truncated memory evolution with exact (auxiliary-mode) integral."""
    y = np.zeros(N_SPECTRAL, dtype=np.complex128)
    y[0:8] = y0
    n_steps, rec_t, rec_rows = _steps_and_records(t_end, dt, stride)
    n_rec, status, t_bad, herm = _spectral_loop(
        y, pack.L4, pack.comm, pack.trace_vec, pack.modes, pack.modes_inv,
        pack.left_in_modes, pack.trace_in_modes, pack.nu,
        np.asarray(params.J, dtype=float), float(params.z), float(born_scale),
        n_steps, float(dt), int(stride), trace_tol, rec_t, rec_rows,
    )
    t, rows = _finish(status, t_bad, n_rec, rec_t, rec_rows)
    return t, rows, y[0:8].copy(), herm


def history_evolve(
    pack, params, y0, t_end, dt, t_mem, stride, born_scale=1.0, trace_tol=1e-6
):
    """Born-truncated memory evolution via trapezoid over the history grid."""
    n_mem = int(round(t_mem / dt))
    if abs(n_mem * dt - t_mem) > 1e-9 * max(1.0, t_mem):
        raise ValueError("memory window T_mem must be an integer multiple of dt")
    y = np.asarray(y0, dtype=np.complex128).copy()
    n_steps, rec_t, rec_rows = _steps_and_records(t_end, dt, stride)
    # delay grid at dt/2 so half-step RK4 stages hit exact table entries
    k = np.arange(2 * n_mem + 4)[:, None]
    Etable = np.ascontiguousarray(np.exp(pack.eigvals[None, :] * (0.5 * dt) * k))
    n_rec, status, t_bad, herm = _history_loop(
        y, pack.L4, pack.comm, pack.trace_vec, pack.modes, pack.modes_inv,
        pack.left_in_modes, pack.trace_in_modes,
        np.asarray(params.J, dtype=float), float(params.z), float(born_scale),
        Etable, n_steps, float(dt), n_mem, int(stride), trace_tol, rec_t, rec_rows,
    )
    t, rows = _finish(status, t_bad, n_rec, rec_t, rec_rows)
    return t, rows, y.copy(), herm


# ---------------------------------------------------------------------------
# cluster kernels

@njit(cache=True)
def csr_dense_matmul(indptr, indices, data, rho, out):
    n = rho.shape[0]
    for r in range(n):
        for c in range(n):
            out[r, c] = 0.0 + 0.0j
        for p in range(indptr[r], indptr[r + 1]):
            v = data[p]
            col = indices[p]
            for c in range(n):
                out[r, c] += v * rho[col, c]


@njit(cache=True)
def lindblad_assemble(M, rho, n_exc, gamma, out):
    """out = -i(M - M^dagger) - (gamma/2)(n_r + n_c) rho, tiled for cache."""
    n = rho.shape[0]
    tile = 48
    half = 0.5 * gamma
    for rb in range(0, n, tile):
        r_end = min(rb + tile, n)
        for cb in range(0, n, tile):
            c_end = min(cb + tile, n)
            for r in range(rb, r_end):
                for c in range(cb, c_end):
                    out[r, c] = -1j * (M[r, c] - np.conj(M[c, r])) - half * (
                        n_exc[r] + n_exc[c]
                    ) * rho[r, c]


@njit(cache=True)
def jump_accumulate(rho, masks, gamma, out):
    """out += gamma * sum_sites s^- rho s^+ using shifted-block adds."""
    n = rho.shape[0]
    for s in range(masks.shape[0]):
        m = masks[s]
        for re in range(n):
            if re & m:
                continue
            rg = re + m
            cb = 0
            while cb < n:
                for c in range(cb, cb + m):
                    out[rg, c + m] += gamma * rho[re, c]
                cb += 2 * m


@njit(cache=True)
def site_polarizations(rho, masks, out):
    """Bloch components (x, y, z) of every site's reduced state.

    Uses only the diagonal and the one-bit-flip off-diagonals; assumes a
    Hermitian cluster state.
    """
    n = rho.shape[0]
    for s in range(masks.shape[0]):
        m = masks[s]
        x = 0.0
        ypol = 0.0
        zpol = 0.0
        for r in range(n):
            d = rho[r, r].real
            if r & m:
                zpol -= d
            else:
                zpol += d
                v = rho[r, r + m]
                x += 2.0 * v.real
                ypol -= 2.0 * v.imag
        out[s, 0] = x
        out[s, 1] = ypol
        out[s, 2] = zpol
