"""Exact dense analysis of enumerable models.

Everything here works on the full state space: generators, stationary
laws, spectral gaps, exact TV curves, bottleneck elevations and critical
heights, and the explicit bounds that relate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .core import EnergyRef, LandscapeParams, PenaltyFunction, potential, psi
from .models import DEFAULT_CAP, ModelError, UnionFind

__all__ = [
    "ReversibilityError",
    "GeneratorMatrix",
    "StationaryLaw",
    "CriticalHeight",
    "build_generator",
    "stationary",
    "tv_distance",
    "spectral_gap",
    "Spectrum",
    "tv_curve",
    "max_tv_curve",
    "bottleneck_matrix",
    "bottleneck_elevation",
    "critical_height",
    "critical_height_bruteforce",
    "bias_bound",
    "convergence_envelope",
    "holley_stroock_bound",
    "spin_gap_bound",
    "schedule_p_from_model",
    "log_schedule_mixing_bound",
    "condition_constant",
    "annealed_law",
    "annealed_tv_experiment",
    "modified_energies",
]


class ReversibilityError(ArithmeticError):
    """Generator is not reversible with respect to its stationary law."""


def modified_energies(model, params, cap=DEFAULT_CAP):
    """Raw energies and ``H^f`` for every state (``H^f`` has minimum 0)."""
    energies = model.energies(cap)
    ref = EnergyRef(float(energies.min()), "exact-enumeration")
    return energies, np.asarray(psi(energies, params, ref), dtype=float)


def _gibbs(hf):
    p = np.exp(-(hf - hf.min()))
    return p / p.sum()


@dataclass
class GeneratorMatrix:
    """Dense rate matrix with the stationary law it is reversible for."""

    rates: np.ndarray
    pi: np.ndarray
    energies: np.ndarray
    modified: np.ndarray
    params: LandscapeParams | None = None

    @property
    def size(self):
        return self.rates.shape[0]

    def check(self, rtol=1e-10):
        M = self.rates
        off = M - np.diag(np.diag(M))
        if np.any(off < 0):
            raise ValueError("negative off-diagonal rate")
        if np.max(np.abs(M.sum(axis=1))) > 1e-12 * max(1.0, np.abs(M).max()):
            raise ValueError("rows do not sum to zero")
        flux = self.pi[:, None] * off
        scale = np.maximum(np.abs(flux), np.abs(flux.T))
        bad = np.abs(flux - flux.T) > rtol * np.where(scale > 0, scale, 1.0)
        if np.any(bad):
            raise ReversibilityError("detailed balance violated")
        return True


@dataclass
class StationaryLaw:
    mu_f: np.ndarray
    mu: np.ndarray
    z_f: float
    z0: float
    energies: np.ndarray
    modified: np.ndarray

    @property
    def z_ratio(self):
        return self.z_f / self.z0

    @property
    def min_f(self):
        return float(self.mu_f.min())

    @property
    def max_f(self):
        return float(self.mu_f.max())


def build_generator(model, params, cap=DEFAULT_CAP):
    """``M(x, y) = q(x, y) exp(-(H^f(y) - H^f(x))_+)`` with zero row sums."""
    energies, hf = modified_energies(model, params, cap)
    idx, rate = model.neighbor_table(cap)
    n = len(energies)
    acc = np.exp(-np.maximum(hf[idx] - hf[:, None], 0.0))
    M = np.zeros((n, n))
    rows = np.repeat(np.arange(n), idx.shape[1])
    np.add.at(M, (rows, idx.ravel()), (rate * acc).ravel())
    np.fill_diagonal(M, 0.0)
    np.fill_diagonal(M, -M.sum(axis=1))
    return GeneratorMatrix(M, _gibbs(hf), energies, hf, params)


def stationary(model, params, cap=DEFAULT_CAP):
    """``mu^f`` together with the classical ``mu`` and both partition sums."""
    energies, hf = modified_energies(model, params, cap)
    shifted = energies - energies.min()
    z_f = float(np.exp(-hf).sum())
    z0 = float(np.exp(-shifted).sum())
    return StationaryLaw(np.exp(-hf) / z_f, np.exp(-shifted) / z0, z_f, z0, energies, hf)


def tv_distance(p, q):
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def _symmetrize(G, tol=1e-8):
    d = np.sqrt(G.pi)
    S = -(d[:, None] * G.rates / d[None, :])
    residual = np.max(np.abs(S - S.T)) / max(1.0, np.max(np.abs(S)))
    if residual > tol:
        raise ReversibilityError(f"symmetrization residual {residual:.3e}")
    return 0.5 * (S + S.T), d


def spectral_gap(G):
    """Second-smallest eigenvalue of ``-M`` via ``D^{1/2} (-M) D^{-1/2}``."""
    S, _ = _symmetrize(G)
    if S.shape[0] == 1:
        return 0.0
    if S.shape[0] > 512:
        w = scipy.linalg.eigh(S, eigvals_only=True, subset_by_index=[0, 1])
    else:
        w = np.linalg.eigvalsh(S)
    if abs(w[0]) > 1e-10 * max(1.0, abs(w[-1])):
        raise ReversibilityError(f"smallest eigenvalue {w[0]:.3e} is not zero")
    return float(max(w[1], 0.0))


@dataclass
class Spectrum:
    """Full eigendecomposition of the symmetrized generator."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    sqrt_pi: np.ndarray
    pi: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, G):
        S, d = _symmetrize(G)
        w, V = np.linalg.eigh(S)
        return cls(np.maximum(w, 0.0), V, d, G.pi)

    @property
    def gap(self):
        return float(self.eigenvalues[1]) if len(self.eigenvalues) > 1 else 0.0

    def transition_row(self, x0, t):
        """Row ``P^t(x0, .)``."""
        V, d = self.vectors, self.sqrt_pi
        coef = V[x0] * np.exp(-self.eigenvalues * t)
        row = (V @ coef) * d / d[x0]
        return row

    def tv(self, x0, t):
        return tv_distance(self.transition_row(x0, t), self.pi)


def tv_curve(G, x0, times, spectrum=None):
    """Exact ``TV(P^t(x0, .), pi)`` for each time, as ``[(t, tv), ...]``."""
    spec = spectrum or Spectrum.of(G)
    out = [(float(t), spec.tv(x0, t)) for t in times]
    vals = [v for _, v in out]
    order = np.argsort([t for t, _ in out])
    sorted_vals = np.asarray(vals)[order]
    if np.any(np.diff(sorted_vals) > 1e-10):
        raise ArithmeticError("exact TV curve is not monotone; eigendecomposition lost accuracy")
    return out


def max_tv_curve(G, times, spectrum=None):
    """Worst-start TV curve ``max_x TV(P^t(x, .), pi)``."""
    spec = spectrum or Spectrum.of(G)
    return [(float(t), max(spec.tv(x, t) for x in range(G.size))) for t in times]


# ---------------------------------------------------------------------------
# bottlenecks and critical heights
# ---------------------------------------------------------------------------


def _sweep_order(energies):
    # ties broken by state index for reproducible witnesses
    return np.lexsort((np.arange(len(energies)), energies))


def bottleneck_matrix(model, energies=None, cap=DEFAULT_CAP):
    """All-pairs lowest-possible highest elevation by a threshold union-find sweep.

    States are inserted by increasing energy; two states first share a
    component when the state carrying their bottleneck level is inserted.
    """
    energies = model.energies(cap) if energies is None else np.asarray(energies, float)
    idx, rate = model.neighbor_table(cap)
    n = len(energies)
    B = np.full((n, n), np.nan)
    uf = UnionFind(n)
    members = {s: [s] for s in range(n)}
    inserted = np.zeros(n, dtype=bool)
    for s in _sweep_order(energies).tolist():
        h = energies[s]
        inserted[s] = True
        B[s, s] = h
        for t, r in zip(idx[s].tolist(), rate[s].tolist()):
            if r <= 0 or not inserted[t]:
                continue
            ra, rb = uf.find(s), uf.find(t)
            if ra == rb:
                continue
            ma, mb = members[ra], members[rb]
            B[np.ix_(ma, mb)] = h
            B[np.ix_(mb, ma)] = h
            root = uf.union(ra, rb)
            members[root] = ma + mb
            members.pop(rb if root == ra else ra)
    if np.isnan(B).any():
        raise ModelError(f"{model.name}: proposal graph is disconnected")
    return B


def bottleneck_elevation(model, x, y, energies=None, cap=DEFAULT_CAP):
    """``H(x, y)``: minimal level at which ``x`` and ``y`` are connected."""
    energies = model.energies(cap) if energies is None else np.asarray(energies, float)
    idx, rate = model.neighbor_table(cap)
    uf = UnionFind(len(energies))
    inserted = np.zeros(len(energies), dtype=bool)
    for s in _sweep_order(energies).tolist():
        inserted[s] = True
        for t, r in zip(idx[s].tolist(), rate[s].tolist()):
            if r > 0 and inserted[t]:
                uf.union(s, t)
        if inserted[x] and inserted[y] and uf.find(x) == uf.find(y):
            return float(energies[s])
    raise ModelError(f"{model.name}: states {x} and {y} are not connected")


@dataclass
class CriticalHeight:
    value: float
    witness: tuple[int, int]
    level: float


def critical_height(model, params=None, energies=None, cap=DEFAULT_CAP):
    """Critical height of the classical (``params is None``) or modified chain.

    ``max_{x,y} H(x,y) - E(x) - E(y) + min E`` where ``E`` is the raw or the
    modified energy.  Only merge events of the union-find sweep can attain
    the maximum, and at a merge the best pair is the two component minima.
    """
    raw = model.energies(cap) if energies is None else np.asarray(energies, float)
    if params is None:
        e = raw
    else:
        e = np.asarray(psi(raw, params, EnergyRef(float(raw.min()))), dtype=float)
    idx, rate = model.neighbor_table(cap)
    n = len(e)
    e_min = float(e.min())
    uf = UnionFind(n)
    comp_min = list(range(n))
    inserted = np.zeros(n, dtype=bool)
    s0 = int(_sweep_order(e)[0])
    best = CriticalHeight(0.0, (s0, s0), float(e[s0]))
    for s in _sweep_order(e).tolist():
        h = e[s]
        inserted[s] = True
        for t, r in zip(idx[s].tolist(), rate[s].tolist()):
            if r <= 0 or not inserted[t]:
                continue
            ra, rb = uf.find(s), uf.find(t)
            if ra == rb:
                continue
            a, b = comp_min[ra], comp_min[rb]
            # same association as the brute-force formula, so values match bitwise
            value = h - (e[a] + e[b]) + e_min
            if value > best.value:
                pair = (a, b) if e[a] >= e[b] else (b, a)
                best = CriticalHeight(float(value), pair, float(h))
            root = uf.union(ra, rb)
            comp_min[root] = a if (e[a], a) <= (e[b], b) else b
    if len({uf.find(k) for k in range(n)}) > 1:
        raise ModelError(f"{model.name}: proposal graph is disconnected")
    return best


def critical_height_bruteforce(model, energies=None, max_states=12):
    """Minimax over every simple path; exponential, for small test models."""
    e = model.energies() if energies is None else np.asarray(energies, float)
    n = len(e)
    if n > max_states:
        raise ModelError(f"brute force limited to {max_states} states")
    nbrs = [[t for t, r in model.neighbors(s) if r > 0] for s in range(n)]
    B = np.full((n, n), np.inf)
    for src in range(n):
        stack = [(src, e[src], 1 << src)]
        while stack:
            node, elev, visited = stack.pop()
            if elev < B[src, node]:
                B[src, node] = elev
            for t in nbrs[node]:
                if not visited >> t & 1:
                    stack.append((t, max(elev, e[t]), visited | (1 << t)))
    values = B - (e[:, None] + e[None, :]) + e.min()
    return B, float(values.max())


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


@dataclass
class BiasBound:
    bound: float
    xi: float
    tv: float


def bias_bound(model, params, cap=DEFAULT_CAP):
    """Small-penalty bias bound ``alpha xi e^{H_max - H_min} / |X|`` and exact TV.

    ``xi = #{H > c} (H_max - H_min) f((H_max - c)_+)``.
    """
    law = stationary(model, params, cap)
    e = law.energies
    c = params.threshold
    spread = float(e.max() - e.min())
    xi = float(np.sum(e > c)) * spread * float(params.f(max(float(e.max()) - c, 0.0)))
    bound = params.alpha * xi * math.exp(spread) / len(e)
    return BiasBound(bound, xi, tv_distance(law.mu_f, law.mu))


@dataclass
class Envelope:
    lower: float
    exact: float
    upper: float
    max_over_starts: float


def convergence_envelope(G, x, t, spectrum=None):
    """``(1/2) e^{-gap t}`` and ``(e^{H_max-H_min} |X| / 2) e^{-gap t}`` around the exact TV.

    The lower bound is a statement about the worst start, so ``max_over_starts``
    is the quantity to compare it with.
    """
    spec = spectrum or Spectrum.of(G)
    gap = spec.gap
    spread = float(G.energies.max() - G.energies.min())
    decay = math.exp(-gap * t)
    exact = spec.tv(x, t)
    worst = max(spec.tv(y, t) for y in range(G.size))
    return Envelope(0.5 * decay, exact, 0.5 * math.exp(spread) * G.size * decay, worst)


def holley_stroock_bound(model, params, proposal_gap=None, cap=DEFAULT_CAP):
    """Gap lower bound ``proposal_gap * exp(-3 max H^f)``.

    ``max H^f`` comes from enumeration when possible; otherwise, for the
    quadratic penalty, from the cap ``(c - H_min) + pi / (2 sqrt(alpha))``
    with ``H_min`` taken as the model's ground energy.
    """
    gap = model.proposal_gap if proposal_gap is None else proposal_gap
    if gap is None:
        raise ValueError(f"{model.name}: proposal gap unknown; pass it explicitly")
    n = model.state_count
    if n is not None and n <= cap:
        _, hf = modified_energies(model, params, cap)
        top = float(hf.max())
    elif params.f.kind == "quadratic" and params.alpha > 0:
        top = (params.threshold - model.ground()[1]) + math.pi / (2 * math.sqrt(params.alpha))
    else:
        raise ModelError("max H^f needs enumeration or the quadratic cap")
    return gap * math.exp(-3.0 * top)


def spin_gap_bound(proposal_gap, delta, alpha):
    """Closed-form spin-model bound ``proposal_gap * exp(-3 delta - 3 pi / (2 sqrt alpha))``."""
    if alpha == 0:
        return 0.0  # the exponent diverges; the bound degenerates
    return proposal_gap * math.exp(-3.0 * delta - 3.0 * math.pi / (2.0 * math.sqrt(alpha)))


def schedule_p_from_model(K, h_range, state_count, C=1.0):
    """Return ``(p, M)`` with ``M = C max(ln |X|, H_max - H_min)`` and ``p = pi K / M``."""
    if not (K > 0 and C > 0):
        raise ValueError("K and C must be positive")
    big_m = C * max(math.log(state_count), h_range)
    return math.pi * K / big_m, big_m


def log_schedule_mixing_bound(state_count, h_range, K, C=1.0, eps=0.1):
    """Mixing-time bound (up to a constant) under the logarithmic penalty schedule.

    ``(1/p) (exp{3 pi (ln|X| + M + ln(1/eps)) / (2 M)} - e^{3 pi / 2})``.
    """
    p, big_m = schedule_p_from_model(K, h_range, state_count, C)
    expo = 3.0 * math.pi * (math.log(state_count) + big_m + math.log(1.0 / eps)) / (2.0 * big_m)
    return (math.exp(expo) - math.exp(1.5 * math.pi)) / p


def condition_constant(model, c, beta_grid, cap=DEFAULT_CAP):
    """Largest ``K`` with ``gap(alpha = 1/beta) >= K exp(-(3 pi / 2) sqrt(beta))`` on the grid."""
    out = []
    for beta in beta_grid:
        params = LandscapeParams(1.0 / beta, c, PenaltyFunction.quadratic())
        gap = spectral_gap(build_generator(model, params, cap))
        out.append(gap * math.exp(1.5 * math.pi * math.sqrt(beta)))
    return float(min(out))


# ---------------------------------------------------------------------------
# time-varying penalty
# ---------------------------------------------------------------------------


def annealed_law(model, f, c, schedule, x0, times, rtol=1e-9, atol=1e-12, cap=DEFAULT_CAP):
    """Exact law of the annealed chain by integrating the forward equation.

    Returns an array of shape ``(len(times), |X|)``.
    """
    energies = model.energies(cap)
    idx, rate = model.neighbor_table(cap)
    n = len(energies)
    rows = np.repeat(np.arange(n), idx.shape[1])
    cols = idx.ravel()
    flat_rate = rate.ravel()

    def rhs(t, p):
        g = np.asarray(potential(energies, c, f, float(schedule.alpha(t))), dtype=float)
        acc = np.exp(-np.maximum(g[cols] - g[rows], 0.0)) * flat_rate
        out = np.zeros(n)
        np.add.at(out, cols, p[rows] * acc)
        np.add.at(out, rows, -p[rows] * acc)
        return out

    p0 = np.zeros(n)
    p0[x0] = 1.0
    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(times.max())), p0, t_eval=times, method="LSODA", rtol=rtol, atol=atol)
    if not sol.success:
        raise ArithmeticError(sol.message)
    return sol.y.T


def annealed_tv_experiment(model, f, c, schedule, t_grid, replicas, seed, starts=None, cap=DEFAULT_CAP):
    """Replica estimate of ``TV(law at t, mu)`` under a penalty schedule.

    Returns one row per (start, t) with the plug-in TV, the expected plug-in
    inflation ``sqrt(|X| / replicas)``-scale note, and the exact value from the
    forward equation for comparison.
    """
    from .sim import CompiledChain, run_replicas

    chain = CompiledChain.from_model(model, cap)
    mu = _gibbs(chain.energies)
    starts = range(chain.size) if starts is None else starts
    rows = []
    for k, x0 in enumerate(starts):
        res = run_replicas(chain, f, c, schedule, np.full(replicas, x0), t_grid, seed, stream=k)
        for j, t in enumerate(res.t_grid):
            counts = np.bincount(res.states_at[j], minlength=chain.size)
            rows.append({
                "start": int(x0),
                "t": float(t),
                "tv": tv_distance(counts / replicas, mu),
                "plugin_inflation": math.sqrt(chain.size / replicas),
            })
    return rows
