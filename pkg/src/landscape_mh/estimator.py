"""Self-normalized estimation of classical Gibbs expectations.

A chain run on the modified landscape samples ``mu^f`` instead of ``mu``.
Weighting each holding interval by ``w(x) = exp(H^f(x) - (H(x) - H_min))``
and normalizing by the integrated weight recovers ``mu(g)``.  Integrals are
exact sums over holding intervals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.stats import binomtest

from .analysis import build_generator, spectral_gap, stationary
from .core import weight
from .models import DEFAULT_CAP
from .sim import CompiledChain, Schedule, make_rng, run_replicas

__all__ = [
    "Observable",
    "self_normalized",
    "plain_time_average",
    "chernoff_time",
    "chernoff_inputs",
    "DeviationRow",
    "deviation_table",
    "deviation_probability",
    "empirical_concentration_time",
    "variance_scaling_check",
    "write_rows",
]

STREAM_VARIANCE_STARTS = 2


@dataclass
class Observable:
    """Bounded function of the state with a declared sup-norm bound ``a``."""

    func: Callable[[int], float] | np.ndarray
    a: float | None = None

    def __post_init__(self):
        if not callable(self.func):
            self.func = np.asarray(self.func, dtype=float)
            if self.a is None:
                self.a = float(np.max(np.abs(self.func)))
        if self.a is None or not self.a >= 0:
            raise ValueError("observable needs a non-negative sup bound a")

    @classmethod
    def indicator(cls, states, size):
        v = np.zeros(size)
        v[list(states)] = 1.0
        return cls(v, 1.0)

    def __call__(self, s):
        return float(self.func(s)) if callable(self.func) else float(self.func[s])

    def values(self, size):
        if callable(self.func):
            return np.array([self.func(s) for s in range(size)], dtype=float)
        if len(self.func) != size:
            raise ValueError(f"observable has {len(self.func)} values for {size} states")
        return self.func

    def validate(self, size):
        top = float(np.max(np.abs(self.values(size))))
        if top > self.a:
            raise ValueError(f"declared bound a={self.a} below max|g|={top}")
        return True


def _segment_values(traj, g, model, params=None):
    states, dur = traj.segments()
    uniq, inv = np.unique(states, return_inverse=True)
    gv = np.array([g(int(s)) for s in uniq])[inv]
    if params is None:
        return dur, gv, None
    h = np.array([model.energy(int(s)) for s in uniq], dtype=float)
    return dur, gv, np.asarray(weight(h, params), dtype=float)[inv]


def _ratio(dur, gv, wv):
    # centred at the first value so a constant g comes back exactly
    g0 = gv[0]
    return float(g0 + np.sum(wv * (gv - g0) * dur) / np.sum(wv * dur))


def self_normalized(traj, g, params, model=None):
    """``int w g / int w`` over the trajectory's holding intervals."""
    model = traj.model if model is None else model
    if model is None:
        raise ValueError("trajectory carries no model; pass model=")
    if not traj.horizon > 0:
        raise ValueError("trajectory has zero length")
    if params.c is None:
        params = params.resolve(model)
    dur, gv, wv = _segment_values(traj, g, model, params)
    return _ratio(dur, gv, wv)


def plain_time_average(traj, g):
    if not traj.horizon > 0:
        raise ValueError("trajectory has zero length")
    dur, gv, _ = _segment_values(traj, g, None)
    return _ratio(dur, gv, np.ones_like(dur))


# ---------------------------------------------------------------------------
# concentration
# ---------------------------------------------------------------------------


def chernoff_time(eta, eps, a, gap, z_ratio, min_pi_f):
    """Time after which the deviation probability is at most ``eps``.

    ``(Z^f/Z^0) 32 a^2 (1 + eta)^2 / (gap eta^2) ln(1 / (eps min mu^f))``.
    """
    if not (eta > 0 and 0 < eps < 1 and a > 0 and gap > 0 and z_ratio > 0 and 0 < min_pi_f < 1):
        raise ValueError("chernoff_time inputs out of range")
    return z_ratio * 32.0 * a * a * (1.0 + eta) ** 2 / (gap * eta * eta) * math.log(1.0 / (eps * min_pi_f))


def chernoff_inputs(model, params, cap=DEFAULT_CAP):
    """``gap``, ``z_ratio`` and ``min_pi_f`` by exact enumeration."""
    params = params.resolve(model) if params.c is None else params
    law = stationary(model, params, cap)
    gap = spectral_gap(build_generator(model, params, cap))
    return {"gap": gap, "z_ratio": law.z_ratio, "min_pi_f": law.min_f}


@dataclass
class DeviationRow:
    t: float
    start: int
    estimate_mean: float
    estimate_var: float
    exceedance: float
    half_width: float


CSV_COLUMNS = ["t", "start", "estimate-mean", "estimate-var", "exceedance", "half-width"]


def _half_width(k, n, level=0.95):
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(0.5 * (ci.high - ci.low))


def _replica_estimates(model, params, g, t_grid, x0, seed, stream, cap):
    params = params.resolve(model) if params.c is None else params
    chain = CompiledChain.from_model(model, cap)
    gv = g.values(chain.size)
    g0 = float(gv[0])
    wv = np.asarray(weight(chain.energies, params), dtype=float)
    res = run_replicas(
        chain, params.f, params.threshold, Schedule.constant(params.alpha),
        x0, t_grid, seed, stream=stream, g=gv - g0, w=wv,
    )
    return res.t_grid, g0 + res.integral_wg / res.integral_w


def deviation_table(model, params, g, eta, t_grid, x0_set, replicas, seed, cap=DEFAULT_CAP):
    """Exceedance frequency of ``estimate - mu(g) >= eta`` per (t, start)."""
    if replicas < 100:
        raise ValueError("deviation experiments need at least 100 replicas")
    if np.any(np.asarray(t_grid, dtype=float) <= 0):
        raise ValueError("deviation times must be positive")
    params = params.resolve(model) if params.c is None else params
    target = float(stationary(model, params, cap).mu @ g.values(model.state_count))
    starts = [int(x) for x in x0_set]
    # one lockstep run for all starts; replica block k belongs to starts[k]
    x0 = np.repeat(starts, replicas)
    times, est = _replica_estimates(model, params, g, t_grid, x0, seed, 0, cap)
    rows = []
    for k, start in enumerate(starts):
        block = est[:, k * replicas:(k + 1) * replicas]
        for j, t in enumerate(times.tolist()):
            hits = int(np.sum(block[j] - target >= eta))
            rows.append(DeviationRow(
                t, start, float(block[j].mean()), float((block[j] - block[j, 0]).var(ddof=1)),
                hits / replicas, _half_width(hits, replicas),
            ))
    rows.sort(key=lambda r: (r.t, r.start))
    return rows


def deviation_probability(model, params, g, eta, t, x0_set, replicas, seed, cap=DEFAULT_CAP):
    """Rows of :func:`deviation_table` at the single time ``t``."""
    return deviation_table(model, params, g, eta, [t], x0_set, replicas, seed, cap)


def empirical_concentration_time(model, params, g, eta, eps, t_grid, x0_set, replicas, seed, cap=DEFAULT_CAP):
    """Smallest grid time at which every start has exceedance ``<= eps`` (None if none)."""
    rows = deviation_table(model, params, g, eta, t_grid, x0_set, replicas, seed, cap)
    for t in sorted({r.t for r in rows}):
        if all(r.exceedance <= eps for r in rows if r.t == t):
            return t, rows
    return None, rows


def variance_scaling_check(model, params, g, t_list, replicas, seed, cap=DEFAULT_CAP):
    """Across-replica variance of the estimator per time and the log-log slope.

    Starts are drawn from ``mu^f`` so the run is stationary from time zero.
    The slope is ``nan`` when any variance is zero.
    """
    params = params.resolve(model) if params.c is None else params
    law = stationary(model, params, cap)
    rng = make_rng(seed, STREAM_VARIANCE_STARTS)
    x0 = rng.choice(len(law.mu_f), size=replicas, p=law.mu_f)
    times, est = _replica_estimates(model, params, g, t_list, x0, seed, 0, cap)
    # shift-invariant; the shift makes identical estimates give exactly 0
    var = (est - est[:, :1]).var(axis=1, ddof=1)
    table = [{"t": float(t), "variance": float(v), "mean": float(m)} for t, v, m in zip(times, var, est.mean(axis=1))]
    if np.all(var > 0) and len(times) > 1:
        slope = float(np.polyfit(np.log(times), np.log(var), 1)[0])
    else:
        slope = float("nan")
    return table, slope


def write_rows(rows, path):
    """Deviation rows as CSV with the documented column names."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            d = asdict(r)
            w.writerow([repr(float(d["t"])), d["start"]] + [repr(float(d[k])) for k in
                        ("estimate_mean", "estimate_var", "exceedance", "half_width")])
