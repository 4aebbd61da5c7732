"""Self-consistent Mori projector dynamics in the Born approximation.

The sublattice states obey integro-differential equations: local
driven-dissipative evolution, the mean-field term, and a memory (Born)
term

    - sum_ab (J_a J_b / z) [sigma^a, Int_0^t dt' ( d_ab(t,t')
          e^{L (t-t')} dsig_A^b(t') rho_A(t')
        - s_ab(t,t') e^{L (t-t')} rho_A(t') dsig_A^b(t') )]

with kernels d_ab(t,t') = Tr{sigma^a e^{L (t-t')} dsig_B^b(t') rho_B(t')},
s_ab its right-product counterpart, and fluctuation operators
dsig^b(t) = sigma^b - <sigma^b>(t) I; the B equation swaps the roles of
the sublattices.  The coordination number z only scales the Born term,
so z -> infinity recovers plain mean field.

Three evolution engines share this definition:

* "history"  - trapezoidal quadrature over a uniform history grid,
  truncated at the memory window T_mem (compiled; the default).
* "spectral" - the memory integral decomposed over eigenmodes of the
  local generator and integrated exactly as auxiliary ODEs (compiled;
  effectively T_mem = infinity).  Used for large sweeps.
* "reference" - plain numpy transcription of the equations, kept for
  cross-checking the compiled paths.

Fixed-step RK4 throughout; half-step stages use propagator-table entries
at half-grid delays, so kernel evaluation never interpolates, and the
history integrand gains a short final trapezoid panel ending at the
stage time.  Positivity of the sublattice states is NOT guaranteed by
the Born truncation and is deliberately not asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .analysis import (
    DEFAULT_EPS_OSC,
    DEFAULT_RETENTION,
    DEFAULT_T_TRANSIENT,
    TrajectorySummary,
    summarize_series,
)
from .meanfield import mf_rhs, SublatticeState
from .model import BlochPair, ModelParams
from .operators import AXES, LocalPropagator, bloch_state, pauli, unvec, vec
from .series import TrajectorySeries

__all__ = [
    "HistoryBuffer",
    "BornKernelValue",
    "born_kernels",
    "cmop_rhs",
    "evolve_cmop",
]

DEFAULT_T_MEM = 20.0
TRACE_TOL = 1e-6


class HistoryBuffer:
    """Uniform-grid record of past sublattice states for the memory term.

    Per grid point and sublattice this stores rho, the means
    <sigma^b>, and the two fluctuation products dsig^b rho and
    rho dsig^b (computed at write time, since the memory integrand
    evaluates them at the history time).  Entries older than
    t_now - T_mem are evicted.
    """

    def __init__(self, dt: float, t_mem: float):
        if dt <= 0 or t_mem <= 0:
            raise ValueError("dt and T_mem must be positive")
        n_mem = int(round(t_mem / dt))
        if abs(n_mem * dt - t_mem) > 1e-9 * max(1.0, t_mem):
            raise ValueError("T_mem must be an integer multiple of dt")
        self.dt = float(dt)
        self.t_mem = float(t_mem)
        self.n_mem = n_mem
        self.base_index = 0  # grid index of entries[0]
        self.entries = []  # dicts per grid point

    def __len__(self):
        return len(self.entries)

    @property
    def t_top(self) -> float:
        if not self.entries:
            raise ValueError("history is empty")
        return (self.base_index + len(self.entries) - 1) * self.dt

    def append(self, t: float, rho_A: np.ndarray, rho_B: np.ndarray):
        j = int(round(t / self.dt))
        if abs(j * self.dt - t) > 1e-9:
            raise ValueError(f"history time {t} is off the grid (dt={self.dt})")
        expected = self.base_index + len(self.entries)
        if j != expected:
            raise ValueError(f"non-contiguous history append: got {j}, expected {expected}")
        entry = {}
        for key, rho in (("A", rho_A), ("B", rho_B)):
            means = np.array(
                [np.trace(pauli(a) @ rho).real for a in AXES]
            )
            prod_l = np.stack(
                [pauli(a) @ rho - means[i] * rho for i, a in enumerate(AXES)]
            )
            prod_r = np.stack(
                [rho @ pauli(a) - means[i] * rho for i, a in enumerate(AXES)]
            )
            entry[key] = (rho.copy(), means, prod_l, prod_r)
        self.entries.append(entry)
        # evict entries older than the memory window
        cutoff = self.base_index + len(self.entries) - 1 - self.n_mem - 2
        while self.base_index < cutoff:
            self.entries.pop(0)
            self.base_index += 1

    def index_of(self, t_prime: float) -> int:
        j = int(round(t_prime / self.dt))
        if abs(j * self.dt - t_prime) > 1e-9:
            raise ValueError(f"time {t_prime} is off the history grid")
        pos = j - self.base_index
        if not 0 <= pos < len(self.entries):
            raise ValueError(f"time {t_prime} outside the stored window")
        return pos

    def at(self, t_prime: float, sublattice: str):
        """(rho, means, left products, right products) stored at t_prime."""
        return self.entries[self.index_of(t_prime)][sublattice]


@dataclass
class BornKernelValue:
    """Two-time kernels d_ab and s_ab at delay tau = t - t'."""

    d: np.ndarray  # (3, 3) complex over (alpha, beta)
    s: np.ndarray
    tau: float


def born_kernels(
    history: HistoryBuffer,
    source: str,
    t: float,
    t_prime: float,
    prop: LocalPropagator,
) -> BornKernelValue:
    """Memory kernels built from the `source` sublattice's history.

    d[a, b] = Tr{sigma^a e^{L tau} (dsig^b rho)(t')} and s[a, b] the
    right-product counterpart.
    """
    tau = t - t_prime
    if tau < -1e-12:
        raise ValueError("t_prime must not exceed t")
    if tau > history.t_mem + 1e-9:
        raise ValueError(f"t_prime outside the memory window T_mem={history.t_mem}")
    _, _, prod_l, prod_r = history.at(t_prime, source)
    d = np.empty((3, 3), dtype=complex)
    s = np.empty((3, 3), dtype=complex)
    for b in range(3):
        fl = prop.apply(max(tau, 0.0), prod_l[b])
        fr = prop.apply(max(tau, 0.0), prod_r[b])
        for a in range(3):
            sig = pauli(AXES[a])
            d[a, b] = np.trace(sig @ fl)
            s[a, b] = np.trace(sig @ fr)
    return BornKernelValue(d=d, s=s, tau=tau)


def _born_window(t, history: HistoryBuffer, dt):
    """Grid node times and trapezoid weights for the integral ending at t.

    The final panel runs from the newest usable grid node to the stage
    time itself; its weight is returned separately for the endpoint.
    """
    top = history.t_top
    gap = t - top
    parity = int(round(2.0 * gap / dt))
    if parity not in (0, 1, 2) or abs(parity * 0.5 * dt - gap) > 1e-9:
        raise ValueError(f"stage time {t} is off the half-step grid")
    n = int(round(top / dt))
    if parity == 0:
        j_hi, end_gap = n - 1, dt
        j_lo = n - history.n_mem
    else:
        j_hi, end_gap = n, parity * 0.5 * dt
        j_lo = n - history.n_mem + 1
    j_lo = max(j_lo, history.base_index, 0)
    if j_lo > j_hi:
        return np.empty(0), np.empty(0), 0.0
    times = np.arange(j_lo, j_hi + 1) * dt
    m = times.size
    w = np.full(m, dt)
    if m == 1:
        w[0] = 0.5 * end_gap
    else:
        w[0] = 0.5 * dt
        w[-1] = 0.5 * (dt + end_gap)
    return times, w, 0.5 * end_gap


def cmop_rhs(
    t: float,
    state: SublatticeState,
    history: HistoryBuffer,
    params: ModelParams,
    prop: LocalPropagator,
    born_scale: float = 1.0,
):
    """Full right-hand side: local + mean-field + Born memory integral.

    The integral is evaluated by trapezoidal quadrature on the history
    grid, truncated at T_mem, with the current state supplying the
    zero-delay endpoint.  Plain numpy; the compiled engines must agree
    with this to near machine precision.
    """
    if params.z is None or params.z < 1:
        raise ValueError("cmop requires a coordination number z >= 1")
    dA, dB = mf_rhs(state, params)
    if born_scale == 0.0:
        return dA, dB
    if len(history) == 0:
        raise ValueError("insufficient history: buffer is empty")
    dt = history.dt
    times, weights, w_end = _born_window(t, history, dt)
    sig = [pauli(a) for a in AXES]
    J = params.J

    def products(rho):
        means = np.array([np.trace(s_ @ rho).real for s_ in sig])
        pl = np.stack([sig[b] @ rho - means[b] * rho for b in range(3)])
        pr = np.stack([rho @ sig[b] - means[b] * rho for b in range(3)])
        return pl, pr

    pl_A, pr_A = products(state.rho_A)
    pl_B, pr_B = products(state.rho_B)

    I_A = np.zeros((3, 3, 2, 2), dtype=complex)
    I_B = np.zeros((3, 3, 2, 2), dtype=complex)

    def accumulate(weight, fl_A, fr_A, fl_B, fr_B):
        # kernels for the A equation come from B products and vice versa
        for a in range(3):
            for b in range(3):
                d_ab = np.trace(sig[a] @ fl_B[b])
                s_ab = np.trace(sig[a] @ fr_B[b])
                I_A[a, b] += weight * (d_ab * fl_A[b] - s_ab * fr_A[b])
                d_ba = np.trace(sig[a] @ fl_A[b])
                s_ba = np.trace(sig[a] @ fr_A[b])
                I_B[a, b] += weight * (d_ba * fl_B[b] - s_ba * fr_B[b])

    for t_p, w in zip(times, weights):
        tau = t - t_p
        G = prop.matrix(tau)
        _, _, hl_A, hr_A = history.at(t_p, "A")
        _, _, hl_B, hr_B = history.at(t_p, "B")
        fl_A = np.stack([unvec(G @ vec(hl_A[b])) for b in range(3)])
        fr_A = np.stack([unvec(G @ vec(hr_A[b])) for b in range(3)])
        fl_B = np.stack([unvec(G @ vec(hl_B[b])) for b in range(3)])
        fr_B = np.stack([unvec(G @ vec(hr_B[b])) for b in range(3)])
        accumulate(w, fl_A, fr_A, fl_B, fr_B)
    if w_end > 0.0:
        accumulate(w_end, pl_A, pr_A, pl_B, pr_B)

    for a in range(3):
        for b in range(3):
            coeff = born_scale * J[a] * J[b] / params.z
            dA = dA - coeff * (sig[a] @ I_A[a, b] - I_A[a, b] @ sig[a])
            dB = dB - coeff * (sig[a] @ I_B[a, b] - I_B[a, b] @ sig[a])
    return dA, dB


def _reference_evolve(y0, params, t_end, dt, t_mem, born_scale, stride):
    """Pure-python RK4 driver over cmop_rhs; slow, test use only."""
    prop = LocalPropagator(params.Omega, params.gamma)
    history = HistoryBuffer(dt, t_mem)
    n_steps = int(round(t_end / dt))
    y = y0.copy()
    history.append(0.0, unvec(y[:4]), unvec(y[4:]))
    sig = [pauli(a) for a in AXES]

    def rhs(t, yv):
        st = SublatticeState(unvec(yv[:4]), unvec(yv[4:]), t)
        dA, dB = cmop_rhs(t, st, history, params, prop, born_scale)
        return np.concatenate([vec(dA), vec(dB)])

    def bloch_row(yv):
        a, b = unvec(yv[:4]), unvec(yv[4:])
        return [np.trace(s @ a).real for s in sig] + [
            np.trace(s @ b).real for s in sig
        ]

    rec_t, rec_rows = [0.0], [bloch_row(y)]
    for n in range(n_steps):
        t = n * dt
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = (n + 1) * dt
        history.append(t_new, unvec(y[:4]), unvec(y[4:]))
        for tr in (y[0] + y[3], y[4] + y[7]):
            if abs(tr - 1.0) > TRACE_TOL:
                raise _kernels.TrajectoryAbort(
                    f"trace drift at t={t_new:.4g}; reduce dt", t_new
                )
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            rec_t.append(t_new)
            rec_rows.append(bloch_row(y))
    return np.array(rec_t), np.array(rec_rows), y


def evolve_cmop(
    pair: BlochPair,
    params: ModelParams,
    t_end: float = 1000.0,
    dt: float = 0.01,
    t_mem: float = DEFAULT_T_MEM,
    born_scale: float = 1.0,
    observer_stride: int = 10,
    engine: str = "history",
    t_transient: float = DEFAULT_T_TRANSIENT,
    eps_osc: float = DEFAULT_EPS_OSC,
    retention: float = DEFAULT_RETENTION,
    summarize: bool = True,
):
    """Integrate the Born-truncated equations from a product initial state.

    Returns (TrajectorySeries, TrajectorySummary or None).  Trace drift
    beyond 1e-6 aborts with a step-size diagnostic (TrajectoryAbort).
    """
    if params.z is None or params.z < 1:
        raise ValueError("cmop requires params.z >= 1")
    n_A, n_B = pair.arrays()
    y0 = np.concatenate([vec(bloch_state(n_A)), vec(bloch_state(n_B))])
    if engine == "history":
        pack = _kernels.superop_pack(params)
        t, rows, _, _ = _kernels.history_evolve(
            pack, params, y0, t_end, dt, t_mem, observer_stride, born_scale, TRACE_TOL
        )
    elif engine == "spectral":
        pack = _kernels.superop_pack(params)
        t, rows, _, _ = _kernels.spectral_evolve(
            pack, params, y0, t_end, dt, observer_stride, born_scale, TRACE_TOL
        )
    elif engine == "reference":
        t, rows, _ = _reference_evolve(
            y0, params, t_end, dt, t_mem, born_scale, observer_stride
        )
    else:
        raise ValueError(f"unknown engine {engine!r}")
    series = TrajectorySeries.from_rows(t, rows)
    summary = (
        summarize_series(series, t_transient, eps_osc, retention) if summarize else None
    )
    return series, summary
