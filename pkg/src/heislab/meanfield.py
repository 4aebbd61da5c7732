"""Two-sublattice Gutzwiller mean-field dynamics.

Each sublattice's 2x2 density matrix evolves under the local
driven-dissipative Liouvillian plus a self-consistent classical field
from the other sublattice:

    d rho_A/dt = L rho_A - i sum_alpha J_alpha <sigma^alpha>_B [sigma^alpha, rho_A]

and symmetrically for B.  The z nearest neighbours each couple with
J_alpha/z, so the coordination number cancels exactly and never enters
the equations.  The classical field uses the real part of the trace;
for Hermitian states the imaginary part is roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .integrator import StepControl, evolve
from .model import BlochPair, ModelParams
from .operators import AXES, expectation, lindblad_apply, pauli, unvec, vec
from .series import TrajectorySeries

__all__ = ["SublatticeState", "mf_rhs", "evolve_mf", "local_hamiltonian"]


@dataclass
class SublatticeState:
    rho_A: np.ndarray
    rho_B: np.ndarray
    t: float = 0.0


def local_hamiltonian(params: ModelParams) -> np.ndarray:
    return 0.5 * params.Omega * pauli("x")


def mf_rhs(state: SublatticeState, params: ModelParams):
    """Time derivatives (d rho_A/dt, d rho_B/dt) of the mean-field pair."""
    H = local_hamiltonian(params)
    jumps = [(pauli("minus"), params.gamma)]
    out = []
    for rho, other in ((state.rho_A, state.rho_B), (state.rho_B, state.rho_A)):
        d = lindblad_apply(H, jumps, rho)
        for alpha, axis in enumerate(AXES):
            field = params.J[alpha] * expectation(pauli(axis), other).real
            s = pauli(axis)
            d = d - 1j * field * (s @ rho - rho @ s)
        out.append(d)
    return out[0], out[1]


def _flat_rhs(params: ModelParams):
    def rhs(t, y):
        state = SublatticeState(unvec(y[:4]), unvec(y[4:]), t)
        dA, dB = mf_rhs(state, params)
        return np.concatenate([vec(dA), vec(dB)])

    return rhs


def evolve_mf(
    pair: BlochPair,
    params: ModelParams,
    t_end: float,
    dt: float = 0.01,
    observer_stride: int = 10,
    engine: str = "compiled",
    control: StepControl | None = None,
) -> TrajectorySeries:
    """Integrate the mean-field equations from a product initial state.

    Returns the sampled Bloch-vector series of both sublattices.  The
    compiled engine and the plain one run the identical fixed-step RK4
    recursion; "reference" exists for cross-checks and for adaptive
    stepping via `control`.
    """
    n_A, n_B = pair.arrays()
    from .operators import bloch_state

    y0 = np.concatenate([vec(bloch_state(n_A)), vec(bloch_state(n_B))])
    if engine == "compiled" and control is None:
        t, rows, _ = _kernels.mf_evolve(
            _kernels.superop_pack(params),
            np.asarray(params.J, dtype=float),
            y0,
            float(t_end),
            float(dt),
            int(observer_stride),
        )
        return TrajectorySeries.from_rows(t, rows)
    if control is None:
        control = StepControl(dt=dt, t_end=t_end, observer_stride=observer_stride)
    recorder = _bloch_recorder()
    evolve(_flat_rhs(params), y0, control, recorder)
    t, rows = recorder.as_arrays()
    return TrajectorySeries.from_rows(t, rows)


def _bloch_recorder():
    from .integrator import SeriesRecorder

    sig = [pauli(a) for a in AXES]

    def extract(t, y):
        a, b = unvec(y[:4]), unvec(y[4:])
        return [np.trace(s @ a).real for s in sig] + [np.trace(s @ b).real for s in sig]

    return SeriesRecorder(extract)
