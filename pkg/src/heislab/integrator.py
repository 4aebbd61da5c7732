"""Time-stepping engines on flat state vectors.

Two schemes: classical fixed-step RK4 (required wherever a uniform
history grid matters) and an adaptive embedded Dormand-Prince 4(5) pair
for Markovian problems.  Both operate on 1-D numpy arrays of any dtype;
complex128 state is stored with numpy's native real/imaginary
interleaving, sublattice A entries before B, so observers can rebuild
matrices without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["StepControl", "IntegrationError", "rk4_step", "evolve", "SeriesRecorder"]


class IntegrationError(RuntimeError):
    """Raised on non-finite state, step-size underflow, or drift aborts."""


@dataclass
class StepControl:
    """Parameters of a single integration run."""

    dt: float
    t_end: float
    mode: str = "fixed"  # "fixed" | "adaptive"
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    dt_min: float = 1e-8
    dt_max: float = field(default=0.0)  # 0 -> 10*dt
    observer_stride: int = 1
    check_finite: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.dt_max == 0.0:
            self.dt_max = 10.0 * self.dt
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min exceeds dt_max")
        if self.observer_stride < 1:
            raise ValueError("observer stride must be >= 1")


def _require_finite(y, t, what):
    if not np.all(np.isfinite(y.view(float) if np.iscomplexobj(y) else y)):
        raise IntegrationError(f"non-finite values in {what} at t={t:.6g}")


def rk4_step(rhs, y, t, dt, check_finite=True):
    """One classical RK4 update; four RHS evaluations, deterministic."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = rhs(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = rhs(t + dt, y + dt * k3)
    y_new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if check_finite:
        _require_finite(y_new, t + dt, "RK4 state")
    return y_new


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _dopri_step(rhs, y, t, dt):
    k = [rhs(t, y)]
    for i in range(1, 7):
        yi = y + dt * sum(a * ki for a, ki in zip(_DP_A[i], k))
        k.append(rhs(t + _DP_C[i] * dt, yi))
    y5 = y + dt * sum(b * ki for b, ki in zip(_DP_B5, k) if b != 0.0)
    err = dt * sum((b5 - b4) * ki for b5, b4, ki in zip(_DP_B5, _DP_B4, k))
    return y5, err


def _error_norm(err, y_old, y_new, abs_tol, rel_tol):
    scale = abs_tol + rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def evolve(rhs, state0, control: StepControl, observer=None):
    """Integrate to t_end; observer(t, state) runs every stride steps.

    Returns (t_final, state_final).  Fixed mode requires t_end to be an
    integer multiple of dt (within 1e-9 relative) so histories line up.
    """
    y = np.array(state0, copy=True)
    t = 0.0
    if control.mode == "fixed":
        n_steps = int(round(control.t_end / control.dt))
        if abs(n_steps * control.dt - control.t_end) > 1e-9 * max(1.0, control.t_end):
            raise ValueError("t_end must be an integer multiple of dt in fixed mode")
        if observer is not None:
            observer(t, y)
        for step in range(1, n_steps + 1):
            y = rk4_step(rhs, y, t, control.dt, check_finite=control.check_finite)
            t = step * control.dt
            if observer is not None and (
                step % control.observer_stride == 0 or step == n_steps
            ):
                observer(t, y)
        return t, y

    # adaptive Dormand-Prince 4(5)
    dt = min(control.dt, control.t_end)
    accepted = 0
    if observer is not None:
        observer(t, y)
    while t < control.t_end - 1e-12 * control.t_end:
        dt = min(dt, control.t_end - t)
        y_new, err = _dopri_step(rhs, y, t, dt)
        if control.check_finite:
            _require_finite(y_new, t + dt, "adaptive state")
        norm = _error_norm(err, y, y_new, control.abs_tol, control.rel_tol)
        if norm <= 1.0:
            t += dt
            y = y_new
            accepted += 1
            if observer is not None and (
                accepted % control.observer_stride == 0
                or t >= control.t_end - 1e-12 * control.t_end
            ):
                observer(t, y)
        elif dt <= control.dt_min * (1 + 1e-12):
            raise IntegrationError(
                f"adaptive step underflow: dt={dt:.3e} at t={t:.6g}, err norm {norm:.3e}"
            )
        factor = 0.9 * norm ** -0.2 if norm > 0 else 5.0
        dt = float(np.clip(dt * np.clip(factor, 0.2, 5.0), control.dt_min, control.dt_max))
    return t, y


class SeriesRecorder:
    """Observer that stores (t, f(t, state)) rows."""

    def __init__(self, extract):
        self.extract = extract
        self.times = []
        self.rows = []

    def __call__(self, t, y):
        self.times.append(t)
        self.rows.append(self.extract(t, y))

    def as_arrays(self):
        return np.asarray(self.times), np.asarray(self.rows)
