"""Long-time trajectory classification and attractor statistics.

A trajectory is split at `t_transient`; the post-transient window is
declared a limit cycle when its peak-to-peak amplitude reaches `eps_osc`
AND the last quarter of the window retains at least a `retention`
fraction of that amplitude (slowly decaying ring-downs fail the second
test).  Frequencies come from mean upward zero crossings of the
mean-subtracted signal, which is robust to the anharmonic waveforms
these lattices produce, and are cross-checked against the dominant
discrete-Fourier peak.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import TrajectoryAbort
from .model import BlochPair, ModelParams, random_bloch_pair
from .series import TrajectorySeries

__all__ = [
    "TrajectorySummary",
    "FrequencyEstimate",
    "BasinEstimate",
    "PhasePoint",
    "classify",
    "estimate_frequency",
    "relative_phase",
    "summarize_series",
    "basin_scan",
    "basin_fraction",
    "phase_classify",
]

DEFAULT_T_TRANSIENT = 200.0
DEFAULT_T_END = 1000.0
DEFAULT_EPS_OSC = 1e-4
DEFAULT_RETENTION = 0.5
MIN_WINDOW = 50.0


@dataclass
class FrequencyEstimate:
    frequency: float
    uncertainty: float
    n_periods: int
    fft_frequency: float
    reliable: bool
    fft_consistent: bool


@dataclass
class TrajectorySummary:
    classification: str  # "Stationary" | "LimitCycle"
    amplitude: float  # peak-to-peak over the last quarter window
    amplitude_full: float  # peak-to-peak over the whole post-transient window
    frequency: Optional[float] = None
    frequency_err: Optional[float] = None
    frequency_reliable: bool = False
    fft_frequency: Optional[float] = None
    relative_phase: Optional[float] = None
    final_bloch_A: tuple = ()
    final_bloch_B: tuple = ()

    @property
    def is_limit_cycle(self) -> bool:
        return self.classification == "LimitCycle"


def _window(t, v, t_transient):
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    sel = t >= t_transient - 1e-12
    if not np.any(sel):
        raise ValueError("series does not reach t_transient")
    tw, vw = t[sel], v[sel]
    if tw[-1] - tw[0] < MIN_WINDOW - 1e-9:
        raise ValueError(
            f"post-transient window {tw[-1] - tw[0]:.3g} shorter than {MIN_WINDOW}"
        )
    return tw, vw


def classify(
    t,
    values,
    t_transient: float = DEFAULT_T_TRANSIENT,
    eps_osc: float = DEFAULT_EPS_OSC,
    retention: float = DEFAULT_RETENTION,
):
    """Label one series Stationary or LimitCycle.

    Returns (classification, amplitude_last_quarter, amplitude_full).
    """
    tw, vw = _window(t, values, t_transient)
    amp_full = float(np.ptp(vw))
    quarter = tw >= tw[-1] - 0.25 * (tw[-1] - tw[0])
    amp_last = float(np.ptp(vw[quarter]))
    is_lc = amp_full >= eps_osc and amp_last >= retention * amp_full
    return ("LimitCycle" if is_lc else "Stationary"), amp_last, amp_full


def estimate_frequency(t, values, t_transient: float = 0.0) -> FrequencyEstimate:
    """Frequency in cycles per unit time from upward mean crossings.

    The uncertainty propagates the standard error of the mean crossing
    interval; fewer than 5 complete periods flags the estimate
    unreliable.  The dominant FFT peak must agree within the larger of
    the uncertainty and the FFT bin width.
    """
    tw, vw = _window(t, values, t_transient)
    x = vw - vw.mean()
    up = np.nonzero((x[:-1] < 0.0) & (x[1:] >= 0.0))[0]
    crossings = tw[up] - x[up] * (tw[up + 1] - tw[up]) / (x[up + 1] - x[up])
    if crossings.size < 2:
        return FrequencyEstimate(math.nan, math.nan, 0, math.nan, False, False)
    intervals = np.diff(crossings)
    mean_T = float(intervals.mean())
    freq = 1.0 / mean_T
    n = intervals.size
    sigma = float(intervals.std(ddof=1)) if n > 1 else 0.0
    unc = sigma / (math.sqrt(n) * mean_T**2)

    # FFT cross-check on a uniform resampling of the window
    m = len(tw)
    tu = np.linspace(tw[0], tw[-1], m)
    xu = np.interp(tu, tw, x)
    spec = np.abs(np.fft.rfft(xu))
    spec[0] = 0.0
    freqs = np.fft.rfftfreq(m, d=(tu[-1] - tu[0]) / (m - 1))
    fft_freq = float(freqs[int(np.argmax(spec))])
    bin_width = freqs[1] - freqs[0]
    consistent = abs(fft_freq - freq) <= max(unc, bin_width)
    reliable = n >= 5 and consistent
    return FrequencyEstimate(freq, unc, n, fft_freq, reliable, consistent)


def relative_phase(t, series_a, series_b, frequency: float) -> float:
    """Phase of B relative to A at the given frequency, in (-pi, pi]."""
    t = np.asarray(t, dtype=float)
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    carrier = np.exp(-2j * np.pi * frequency * t)
    za = np.sum((a - a.mean()) * carrier)
    zb = np.sum((b - b.mean()) * carrier)
    phi = float(np.angle(zb) - np.angle(za))
    phi = (phi + np.pi) % (2.0 * np.pi) - np.pi
    if phi <= -np.pi + 1e-12:
        phi = np.pi
    return phi


def summarize_series(
    series: TrajectorySeries,
    t_transient: float = DEFAULT_T_TRANSIENT,
    eps_osc: float = DEFAULT_EPS_OSC,
    retention: float = DEFAULT_RETENTION,
) -> TrajectorySummary:
    """Full classification of a two-sublattice trajectory from its zA series."""
    label, amp_last, amp_full = classify(
        series.t, series.zA, t_transient, eps_osc, retention
    )
    nA, nB = series.final_bloch()
    out = TrajectorySummary(
        classification=label,
        amplitude=amp_last,
        amplitude_full=amp_full,
        final_bloch_A=tuple(nA),
        final_bloch_B=tuple(nB),
    )
    if label != "LimitCycle":
        return out
    est_a = estimate_frequency(series.t, series.zA, t_transient)
    out.frequency = est_a.frequency
    out.frequency_err = est_a.uncertainty
    out.frequency_reliable = est_a.reliable
    out.fft_frequency = est_a.fft_frequency
    label_b, _, _ = classify(series.t, series.zB, t_transient, eps_osc, retention)
    if label_b == "LimitCycle" and math.isfinite(est_a.frequency):
        est_b = estimate_frequency(series.t, series.zB, t_transient)
        combined = math.hypot(est_a.uncertainty, est_b.uncertainty)
        if (
            math.isfinite(est_b.frequency)
            and abs(est_b.frequency - est_a.frequency) <= max(combined, 1e-12) * 5 + 1e-9
        ):
            sel = series.t >= t_transient
            out.relative_phase = relative_phase(
                series.t[sel],
                series.zA[sel],
                series.zB[sel],
                0.5 * (est_a.frequency + est_b.frequency),
            )
    return out


@dataclass
class BasinEstimate:
    n_samples: int
    n_stationary: int
    n_failed: int = 0
    lc_frequencies: list = field(default_factory=list)

    @property
    def n_effective(self) -> int:
        return self.n_samples - self.n_failed

    @property
    def p_stationary(self) -> float:
        return self.n_stationary / self.n_effective if self.n_effective else math.nan

    @property
    def std_err(self) -> float:
        n, p = self.n_effective, self.p_stationary
        return math.sqrt(p * (1.0 - p) / n) if n else math.nan


def _run_method(method, pair, params, method_kwargs):
    if method == "mf":
        from .meanfield import evolve_mf

        kw = dict(method_kwargs)
        analysis_kw = {
            k: kw.pop(k)
            for k in ("t_transient", "eps_osc", "retention")
            if k in kw
        }
        series = evolve_mf(pair, params, **kw)
        return summarize_series(series, **analysis_kw)
    if method == "cmop":
        from .cmop import evolve_cmop

        _, summary = evolve_cmop(pair, params, **method_kwargs)
        return summary
    if method == "cmf":
        from .clustermf import evolve_cmf

        kw = dict(method_kwargs)
        shape = kw.pop("shape")
        _, summary = evolve_cmf(pair, shape, params, **kw)
        return summary
    raise ValueError(f"unknown method {method!r}")


def _basin_sample(args):
    method, params, ss, distribution, method_kwargs = args
    rng = np.random.default_rng(ss)
    pair = random_bloch_pair(rng, distribution)
    try:
        return _run_method(method, pair, params, method_kwargs)
    except TrajectoryAbort as exc:
        return exc


def basin_scan(
    method: str,
    params: ModelParams,
    n_samples: int,
    seed,
    distribution: str = "ball",
    workers: int = 1,
    **method_kwargs,
):
    """Run n independent random-initial-state trajectories and classify them.

    Returns (BasinEstimate, list of TrajectorySummary-or-TrajectoryAbort).
    Deterministic for a fixed seed: sample k always draws from the k-th
    spawned child of the root seed sequence regardless of worker count.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    children = np.random.SeedSequence(seed).spawn(n_samples)
    jobs = [(method, params, ss, distribution, method_kwargs) for ss in children]
    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(workers) as pool:
            results = pool.map(_basin_sample, jobs)
    else:
        results = [_basin_sample(j) for j in jobs]
    est = BasinEstimate(n_samples=n_samples, n_stationary=0)
    for res in results:
        if isinstance(res, TrajectoryAbort):
            est.n_failed += 1
        elif res.classification == "Stationary":
            est.n_stationary += 1
        elif res.frequency is not None and math.isfinite(res.frequency):
            est.lc_frequencies.append((res.frequency, res.frequency_err))
    return est, results


def basin_fraction(method, params, n_samples, seed, **kwargs) -> BasinEstimate:
    est, _ = basin_scan(method, params, n_samples, seed, **kwargs)
    return est


@dataclass
class PhasePoint:
    label: str
    attractor_classes: list
    n_unresolved: int


def _canonical_pair(nA, nB):
    a, b = tuple(nA), tuple(nB)
    return (a, b) if a <= b else (b, a)


def phase_classify(
    params: ModelParams,
    n_samples: int = 20,
    seed=0,
    distribution: str = "ball",
    t_end: float = DEFAULT_T_END,
    dt: float = 0.01,
    t_transient: float = DEFAULT_T_TRANSIENT,
    eps_osc: float = DEFAULT_EPS_OSC,
    retention: float = DEFAULT_RETENTION,
    attractor_tol: float = 1e-4,
    workers: int = 1,
) -> PhasePoint:
    """Mean-field attractor inventory of one parameter point.

    Labels: Uniform / AFM / LC when a single attractor class occurs,
    Bistable(...) when several do, UNRESOLVED when any trajectory is
    still transient at t_end (stationary-labelled but not yet settled
    below eps_osc).
    """
    est, results = basin_scan(
        "mf",
        params,
        n_samples,
        seed,
        distribution,
        workers,
        t_end=t_end,
        dt=dt,
        t_transient=t_transient,
        eps_osc=eps_osc,
        retention=retention,
    )
    reps = []  # (canonical pair, uniform?) of distinct stationary attractors
    has_lc = False
    unresolved = est.n_failed
    for res in results:
        if isinstance(res, TrajectoryAbort):
            continue
        if res.classification == "LimitCycle":
            has_lc = True
            continue
        if res.amplitude >= eps_osc:
            unresolved += 1
            continue
        pair = _canonical_pair(
            np.round(res.final_bloch_A, 12), np.round(res.final_bloch_B, 12)
        )
        uniform = (
            max(abs(a - b) for a, b in zip(res.final_bloch_A, res.final_bloch_B))
            < attractor_tol
        )
        for rep, _ in reps:
            direct = max(
                max(abs(x - y) for x, y in zip(pair[0], rep[0])),
                max(abs(x - y) for x, y in zip(pair[1], rep[1])),
            )
            if direct < attractor_tol:
                break
        else:
            reps.append((pair, uniform))
    classes = []
    n_uniform = sum(1 for _, u in reps if u)
    n_afm = len(reps) - n_uniform
    if n_uniform == 1:
        classes.append("Uniform")
    else:
        classes.extend(f"U{i + 1}" for i in range(n_uniform))
    if n_afm == 1:
        classes.append("AFM")
    else:
        classes.extend(f"AFM{i + 1}" for i in range(n_afm))
    if has_lc:
        classes.append("LC")
    if unresolved:
        label = "UNRESOLVED"
    elif len(classes) == 1:
        label = classes[0]
    else:
        label = "Bistable(" + ", ".join(classes) + ")"
    return PhasePoint(label=label, attractor_classes=classes, n_unresolved=unresolved)
