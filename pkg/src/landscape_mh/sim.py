"""Exact continuous-time simulation of the modified chain.

Both the homogeneous and the annealed chain are simulated by thinning the
proposal process: candidate epochs arrive at the state's total proposal
rate ``R(x)``, a target is drawn with probability ``q(x, y) / R(x)`` and
accepted with probability ``exp(-(G(y) - G(x))_+)`` where ``G`` is the
modified potential at the current penalty.  Since acceptance never exceeds
one, the proposal process dominates for every penalty schedule and thinning
is exact.

Random numbers are consumed three per epoch, in a fixed order: the epoch
uniform, the proposal uniform, then the acceptance uniform.  Generators are
Philox (counter based) keyed by ``SeedSequence(seed, spawn_key=...)``.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import LandscapeParams, PenaltyFunction, potential
from .models import DEFAULT_CAP

__all__ = [
    "Schedule",
    "schedule_alpha",
    "Trajectory",
    "make_rng",
    "simulate_homogeneous",
    "simulate_annealed",
    "CompiledChain",
    "ReplicaResult",
    "run_replicas",
]

LOG_OFFSET = 1.5 * math.pi
_BLOCK = 4096

# spawn-key prefixes; one per consumer so streams never overlap
STREAM_TRAJECTORY = 0
STREAM_REPLICAS = 1


def make_rng(seed, *keys):
    """Philox generator for ``seed`` and the integer spawn key ``keys``."""
    if seed is None:
        raise ValueError("simulations need an explicit seed")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Penalty schedule ``t -> alpha_t``.

    ``constant``: ``alpha_t = a``.  ``exponential``: ``a exp(-b t)``.
    ``logarithmic``: ``(3 pi / 2) / ln(e^{3 pi / 2} + p t)``, so ``alpha_0 = 1``.
    """

    kind: str
    a: float = 1.0
    b: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "logarithmic"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and not self.a >= 0:
            raise ValueError("constant penalty must be >= 0")
        if self.kind == "exponential" and not (self.a > 0 and self.b > 0):
            raise ValueError("exponential schedule needs a > 0 and b > 0")
        if self.kind == "logarithmic" and not self.p > 0:
            raise ValueError("logarithmic schedule needs p > 0")

    @classmethod
    def constant(cls, alpha):
        return cls("constant", a=float(alpha))

    @classmethod
    def exponential(cls, scale, rate):
        return cls("exponential", a=float(scale), b=float(rate))

    @classmethod
    def logarithmic(cls, p):
        return cls("logarithmic", p=float(p))

    @property
    def is_constant(self):
        return self.kind == "constant"

    def alpha(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("schedule time must be >= 0")
        if self.kind == "constant":
            out = np.full(t.shape, self.a)
        elif self.kind == "exponential":
            out = self.a * np.exp(-self.b * t)
        else:
            # ln(e^{3pi/2} + p t) = 3pi/2 + log1p(p t e^{-3pi/2})
            out = LOG_OFFSET / (LOG_OFFSET + np.log1p(self.p * t * math.exp(-LOG_OFFSET)))
        return float(out) if out.ndim == 0 else out

    def beta(self, t):
        with np.errstate(divide="ignore"):
            out = np.divide(1.0, self.alpha(t))
        return float(out) if np.ndim(out) == 0 else out

    def describe(self):
        if self.kind == "constant":
            return {"kind": "constant", "alpha": self.a}
        if self.kind == "exponential":
            return {"kind": "exponential", "scale": self.a, "rate": self.b}
        return {"kind": "logarithmic", "p": self.p}


def schedule_alpha(schedule, t):
    return schedule.alpha(t)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Piecewise-constant sample path on ``[0, horizon]``.

    ``times[k]`` is the time of the k-th accepted jump and ``states[k]`` the
    state entered.  ``model`` is kept for estimators that need energies; it
    is not part of the serialized form.
    """

    x0: int
    times: np.ndarray
    states: np.ndarray
    horizon: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)
    model: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.times.shape != self.states.shape:
            raise ValueError("times and states differ in length")

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.x0 == other.x0
            and self.horizon == other.horizon
            and self.seed == other.seed
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )

    @property
    def n_events(self):
        return len(self.times)

    def segments(self):
        """Holding intervals as ``(states, durations)`` covering ``[0, horizon]``."""
        states = np.concatenate(([self.x0], self.states)).astype(np.int64)
        edges = np.concatenate(([0.0], self.times, [self.horizon]))
        return states, np.diff(edges)

    def occupation(self, size):
        """Fraction of ``[0, horizon]`` spent in each of ``size`` states."""
        states, dur = self.segments()
        return np.bincount(states, weights=dur, minlength=size) / self.horizon

    def state_at(self, t):
        k = bisect.bisect_right(self.times.tolist(), t)
        return int(self.x0 if k == 0 else self.states[k - 1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            header = {"x0": self.x0, "horizon": self.horizon, "seed": self.seed}
            header.update(self.meta)
            for key in sorted(header):
                fh.write(f"# {key}={json.dumps(header[key], sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "state"])
            w.writerow([repr(0.0), self.x0])
            for t, s in zip(self.times.tolist(), self.states.tolist()):
                w.writerow([repr(t), s])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key] = json.loads(value)
                elif line.strip():
                    rows.append(line.strip())
        if not rows or rows[0] != "time,state":
            raise ValueError(f"{path}: missing 'time,state' header")
        body = [r.split(",") for r in rows[2:]]
        x0 = meta.pop("x0")
        horizon = meta.pop("horizon")
        seed = meta.pop("seed")
        return cls(
            x0,
            [float(t) for t, _ in body],
            [int(s) for _, s in body],
            horizon,
            seed,
            meta,
        )


# ---------------------------------------------------------------------------
# single trajectories
# ---------------------------------------------------------------------------


def _resolve_params(model, params):
    if params.c is None:
        params = params.resolve(model)
    return params


def simulate_homogeneous(model, params, x0, T, seed, stream=0):
    """Exact path of the modified chain with fixed penalty ``params.alpha``."""
    params = _resolve_params(model, params)
    traj = simulate_annealed(
        model, params.f, params.threshold, Schedule.constant(params.alpha), x0, T, seed, stream
    )
    traj.meta["params"] = {"alpha": params.alpha, "c": params.threshold, "f": params.f.name}
    return traj


def simulate_annealed(model, f, c, schedule, x0, T, seed, stream=0, rng=None):
    """Exact path under a penalty schedule, by thinning the proposal process.

    ``rng`` overrides the generator derived from ``(seed, stream)``.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    x0 = int(x0)
    rng = make_rng(seed, STREAM_TRAJECTORY, stream) if rng is None else rng
    constant = schedule.is_constant
    alpha0 = schedule.a if constant else None

    moves = {}  # state -> (targets, cumulative rates, total)
    pot = {}  # state -> potential at the constant penalty
    energy = {}

    def table(s):
        entry = moves.get(s)
        if entry is None:
            nb = [(t, r) for t, r in model.neighbors(s) if r > 0]
            cum = np.cumsum([r for _, r in nb]).tolist() if nb else []
            entry = ([t for t, _ in nb], cum, cum[-1] if cum else 0.0)
            moves[s] = entry
        return entry

    def h(s):
        v = energy.get(s)
        if v is None:
            v = energy[s] = float(model.energy(s))
        return v

    def g_const(s):
        v = pot.get(s)
        if v is None:
            v = pot[s] = potential(h(s), c, f, alpha0)
        return v

    times, states = [], []
    t, x = 0.0, x0
    buf, k = [], 0
    while True:
        targets, cum, total = table(x)
        if total == 0.0:
            break
        if k == len(buf):
            buf, k = rng.random(3 * _BLOCK).tolist(), 0
        u_epoch, u_prop, u_acc = buf[k], buf[k + 1], buf[k + 2]
        k += 3
        t += -math.log1p(-u_epoch) / total
        if t > T:
            break
        j = bisect.bisect_right(cum, u_prop * total)
        y = targets[min(j, len(targets) - 1)]
        if constant:
            d = g_const(y) - g_const(x)
        else:
            a = float(schedule.alpha(t))
            d = potential(h(y), c, f, a) - potential(h(x), c, f, a)
        if d <= 0.0 or u_acc < math.exp(-d):
            x = y
            times.append(t)
            states.append(y)
    meta = {"model": getattr(model, "name", "model"), "schedule": schedule.describe(), "c": c, "f": f.name, "stream": stream}
    return Trajectory(x0, times, states, float(T), seed, meta, model)


# ---------------------------------------------------------------------------
# vectorized replicas
# ---------------------------------------------------------------------------


@dataclass
class CompiledChain:
    """Dense neighbour tables of an enumerable model for vectorized runs."""

    energies: np.ndarray
    idx: np.ndarray
    cumrate: np.ndarray
    total: np.ndarray
    name: str = "model"

    @property
    def size(self):
        return len(self.energies)

    @classmethod
    def from_model(cls, model, cap=DEFAULT_CAP):
        energies = model.energies(cap)
        idx, rate = model.neighbor_table(cap)
        cum = np.cumsum(rate, axis=1)
        return cls(energies, idx, cum, cum[:, -1].copy(), model.name)


@dataclass
class ReplicaResult:
    """States at each grid time, plus running integrals when requested.

    ``integral_wg[k]`` and ``integral_w[k]`` are ``int_0^{t_k} w g`` and
    ``int_0^{t_k} w`` for every replica.
    """

    t_grid: np.ndarray
    states_at: np.ndarray
    integral_wg: np.ndarray | None = None
    integral_w: np.ndarray | None = None


@numba.njit(cache=True)
def _replica_kernel(rng, x, t_grid, idx, cumrate, total, pot, wg, w, track, col, states_out, wg_out, w_out):
    # one replica, same draw order and comparisons as simulate_annealed
    T = t_grid[-1]
    ng = t_grid.shape[0]
    width = cumrate.shape[1]
    t = 0.0
    k = 0
    acc_wg = 0.0
    acc_w = 0.0
    while True:
        R = total[x]
        if R > 0.0:
            u_epoch = rng.random()
            u_prop = rng.random()
            u_acc = rng.random()
            t_new = t - np.log1p(-u_epoch) / R
        else:
            t_new = np.inf
        while k < ng and t_grid[k] < t_new:
            states_out[k, col] = x
            if track:
                wg_out[k, col] = acc_wg + wg[x] * (t_grid[k] - t)
                w_out[k, col] = acc_w + w[x] * (t_grid[k] - t)
            k += 1
        if t_new > T:
            break
        if track:
            acc_wg += wg[x] * (t_new - t)
            acc_w += w[x] * (t_new - t)
        target = u_prop * R
        j = 0
        while j < width - 1 and cumrate[x, j] <= target:
            j += 1
        y = idx[x, j]
        d = pot[y] - pot[x]
        if d <= 0.0 or u_acc < np.exp(-d):
            x = y
        t = t_new


def _run_constant(chain, pot, x0, t_grid, seed, stream, wg, w):
    n = x0.size
    track = wg is not None
    if not track:
        wg = w = np.zeros(chain.size)
    states_at = np.empty((t_grid.size, n), dtype=np.int64)
    int_wg = np.zeros((t_grid.size, n))
    int_w = np.zeros((t_grid.size, n))
    for i in range(n):
        rng = make_rng(seed, STREAM_REPLICAS, stream, i)
        _replica_kernel(rng, int(x0[i]), t_grid, chain.idx, chain.cumrate, chain.total,
                        pot, wg, w, track, i, states_at, int_wg, int_w)
    if not track:
        return ReplicaResult(t_grid, states_at)
    return ReplicaResult(t_grid, states_at, int_wg, int_w)


def run_replicas(chain, f, c, schedule, x0, t_grid, seed, stream=0, g=None, w=None):
    """Independent replicas started from ``x0`` (one entry per replica).

    Constant schedules run each replica through a compiled loop with its own
    generator keyed by ``(seed, stream, replica index)``, so replica ``i``
    follows exactly the path :func:`simulate_annealed` would produce with
    that generator.  Time-varying schedules run all replicas in lockstep on a
    single stream keyed by ``(seed, stream)``, drawing an ``(n, 3)`` block
    per epoch in the same epoch/proposal/acceptance order.  Pass per-state
    arrays ``g`` and ``w`` (constant schedules only) to accumulate the
    estimator integrals.
    """
    t_grid = np.sort(np.asarray(t_grid, dtype=float).ravel())
    if t_grid.size == 0 or t_grid[0] < 0:
        raise ValueError("grid times must be non-negative")
    track = g is not None
    if track and not schedule.is_constant:
        raise ValueError("estimator integrals need a constant schedule")
    if track:
        g = np.asarray(g, dtype=float)
        w = np.ones(chain.size) if w is None else np.asarray(w, dtype=float)
        wg = w * g
    T = float(t_grid[-1])
    if schedule.is_constant:
        pot = np.asarray(potential(chain.energies, c, f, schedule.a), dtype=float)
        x0 = np.array(x0, dtype=np.int64).ravel()
        return _run_constant(chain, pot, x0, t_grid, seed, stream, wg if track else None, w if track else None)
    rng = make_rng(seed, STREAM_REPLICAS, stream)

    state = np.array(x0, dtype=np.int64).ravel().copy()
    n = state.size
    t = np.zeros(n)
    states_at = np.empty((t_grid.size, n), dtype=np.int64)
    safe_total = np.where(chain.total > 0, chain.total, 1.0)
    width = chain.cumrate.shape[1]

    # finished replicas stay in the arrays, parked at t = T with a frozen state
    while True:
        u = rng.random((n, 3))
        total = chain.total[state]
        with np.errstate(divide="ignore"):
            dt = np.where(total > 0, -np.log1p(-u[:, 0]) / safe_total[state], np.inf)
        t_new = t + dt
        for k, tg in enumerate(t_grid):
            hit = (t <= tg) & (tg < t_new)
            states_at[k, hit] = state[hit]
        alive = t_new <= T
        if not alive.any():
            break
        target = u[:, 1] * total
        cum = chain.cumrate[state]
        j = np.minimum((cum <= target[:, None]).sum(axis=1), width - 1)
        y = chain.idx[state, j]
        a = schedule.alpha(np.minimum(t_new, T))
        d = potential(chain.energies[y], c, f, a) - potential(chain.energies[state], c, f, a)
        accept = alive & (u[:, 2] < np.exp(-np.maximum(d, 0.0)))
        state = np.where(accept, y, state)
        t = np.where(alive, t_new, T)
    return ReplicaResult(t_grid, states_at)
