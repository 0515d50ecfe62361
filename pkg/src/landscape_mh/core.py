"""Penalty functions and the landscape-modified Hamiltonian.

The modified energy of a state with raw energy ``v`` is

    psi(v) = int_{h_min}^{v} du / (alpha * f((u - c)_+) + 1)

which is the identity shift ``v - h_min`` below the threshold ``c`` and a
damped integral above it.  Differences of modified energies, acceptance
factors and self-normalization weights never need ``h_min``; only the
absolute ``psi`` does.

All functions accept scalars or numpy arrays for energies.  Scalars go
through ``math`` so the per-event cost inside the simulators stays small.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "DomainError",
    "NumericalError",
    "PenaltyFunction",
    "LandscapeParams",
    "EnergyRef",
    "psi",
    "energy_delta",
    "acceptance_factor",
    "weight",
    "quadrature_oracle",
    "adaptive_simpson",
    "threshold_potential",
    "potential",
    "random_triples",
    "oracle_sweep",
]

# Half-width of the window around alpha = 1 where the exponential closed form
# switches to its series expansion (removable singularity).
EXP_LIMIT_WIDTH = 1e-6

# models up to this many states are enumerated to validate thresholds
ENUMERATION_LIMIT = 8192


class DomainError(ValueError):
    """Energy argument outside the domain of the modified Hamiltonian."""


class NumericalError(ArithmeticError):
    """Quadrature failed to reach its tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# penalty functions
# ---------------------------------------------------------------------------

_KINDS = ("zero", "linear", "quadratic", "exp_minus_one", "custom")


@dataclass(frozen=True)
class PenaltyFunction:
    """The damping function ``f`` together with its integral transform.

    Use the constructors (:meth:`zero`, :meth:`linear`, :meth:`quadratic`,
    :meth:`exp_minus_one`, :meth:`custom`) rather than the raw fields.
    """

    kind: str
    func: Callable[[float], float] | None = None
    tol: float = 1e-12
    printed_form: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown penalty function {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom penalty function needs an evaluator")
        if self.printed_form and self.kind != "exp_minus_one":
            raise ValueError("printed_form only applies to exp_minus_one")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def quadratic(cls):
        return cls("quadratic")

    @classmethod
    def exp_minus_one(cls, printed_form=False):
        """``f(x) = e^x - 1``.

        With ``printed_form=True`` the tail uses the printed closed form in
        which ``e^v`` and ``e^c`` appear unshifted; that form only matches
        the defining integral when ``c = 0`` and exists for comparison.
        """
        return cls("exp_minus_one", printed_form=printed_form)

    @classmethod
    def custom(cls, func, tol=1e-12, check_grid=None):
        """Wrap a pointwise evaluator, checking ``f(0) = 0`` and monotonicity."""
        pf = cls("custom", func=func, tol=tol)
        grid = np.linspace(0.0, 50.0, 501) if check_grid is None else np.asarray(check_grid, float)
        values = np.array([float(func(x)) for x in grid])
        if abs(float(func(0.0))) > 0.0:
            raise ValueError("custom penalty function must satisfy f(0) = 0")
        if np.any(values < 0):
            raise ValueError("custom penalty function must be non-negative")
        if np.any(np.diff(values) < -1e-12 * np.maximum(1.0, np.abs(values[1:]))):
            raise ValueError("custom penalty function must be non-decreasing")
        return pf

    @classmethod
    def from_name(cls, name):
        key = name.strip().lower().replace("-", "_")
        aliases = {"exp": "exp_minus_one", "expminusone": "exp_minus_one", "none": "zero"}
        key = aliases.get(key, key)
        if key == "custom" or key not in _KINDS:
            raise ValueError(f"unknown penalty function {name!r}")
        return cls(key)

    @property
    def name(self):
        return "exp_minus_one_printed" if self.printed_form else self.kind

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(x)
        elif self.kind == "linear":
            out = x.copy()
        elif self.kind == "quadratic":
            out = x * x
        elif self.kind == "exp_minus_one":
            out = np.expm1(x)
        else:
            out = np.vectorize(lambda s: float(self.func(s)), otypes=[float])(x)
        return out if out.ndim else float(out)

    def tail(self, v, c, alpha):
        """``int_c^v du / (alpha f(u - c) + 1)`` for ``v >= c``.

        ``alpha`` may be an array broadcasting against ``v`` (used by the
        annealed simulator where each replica sits at its own time).
        """
        if np.ndim(v) == 0 and np.ndim(alpha) == 0 and np.ndim(c) == 0:
            return self._tail_scalar(float(v), float(c), float(alpha))
        v, c, alpha = np.broadcast_arrays(
            np.asarray(v, float), np.asarray(c, float), np.asarray(alpha, float)
        )
        s = v - c
        if self.kind == "zero":
            return s.copy()
        if self.kind == "linear":
            safe = np.where(alpha > 0, alpha, 1.0)
            return np.where(alpha > 0, np.log1p(safe * s) / safe, s)
        if self.kind == "quadratic":
            root = np.sqrt(np.where(alpha > 0, alpha, 1.0))
            return np.where(alpha > 0, np.arctan(root * s) / root, s)
        if self.kind == "exp_minus_one":
            if self.printed_form:
                return np.vectorize(self._tail_scalar, otypes=[float])(v, c, alpha)
            u = -np.expm1(-s)
            d = alpha - 1.0
            near = np.abs(d) < EXP_LIMIT_WIDTH
            safe = np.where(near, 1.0, d)
            x = d * u
            series = u * (1.0 - x / 2.0 + x * x / 3.0)
            # 1 + (alpha-1) u = e^{-s} + alpha u; use the positive sum when
            # the log1p argument is far from 0 and would cancel
            with np.errstate(invalid="ignore", divide="ignore"):
                log_arg = np.where(np.abs(x) < 0.5, np.log1p(x), np.log(np.exp(-s) + alpha * u))
            return np.where(near, series, log_arg / safe)
        return np.vectorize(self._tail_scalar, otypes=[float])(v, c, alpha)

    def _tail_scalar(self, v, c, alpha):
        s = v - c
        if self.kind == "zero" or alpha == 0.0:
            return s
        if self.kind == "linear":
            return math.log1p(alpha * s) / alpha
        if self.kind == "quadratic":
            root = math.sqrt(alpha)
            return math.atan(root * s) / root
        if self.kind == "exp_minus_one":
            d = alpha - 1.0
            if self.printed_form:
                num = (
                    math.log(alpha * math.expm1(v) + 1.0)
                    - math.log(alpha * math.expm1(c) + 1.0)
                    - s
                )
                if abs(d) < EXP_LIMIT_WIDTH:
                    raise NumericalError("printed exponential form is singular at alpha = 1", 0.0)
                return num / d
            u = -math.expm1(-s)
            if abs(d) < EXP_LIMIT_WIDTH:
                x = d * u
                return u * (1.0 - x / 2.0 + x * x / 3.0)
            x = d * u
            if abs(x) < 0.5:
                return math.log1p(x) / d
            return math.log(math.exp(-s) + alpha * u) / d
        # custom
        # non-convergence surfaces as NumericalError below, not as a warning
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, err = integrate.quad(
                lambda x: 1.0 / (alpha * float(self.func(x)) + 1.0),
                0.0,
                s,
                epsabs=self.tol,
                epsrel=0.0,
                limit=500,
            )
        if err > self.tol:
            raise NumericalError("custom penalty quadrature did not converge", err)
        return value


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LandscapeParams:
    """Penalty ``alpha``, threshold ``c`` and damping function ``f``.

    The threshold may be left unresolved by giving ``delta`` instead of
    ``c``; :meth:`resolve` then sets ``c = reference energy + delta`` once a
    model is attached.  ``epsilon`` is the temperature and is always 1.
    """

    alpha: float
    c: float | None = None
    f: PenaltyFunction = PenaltyFunction("quadratic")
    delta: float | None = None
    reference: str = "ground"
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"penalty parameter must be >= 0, got {self.alpha}")
        if self.epsilon != 1.0:
            raise ValueError("only unit temperature (epsilon = 1) is supported")
        if self.c is None and self.delta is None:
            raise ValueError("give either an absolute threshold c or an offset delta")
        if self.reference not in ("ground", "h_min"):
            raise ValueError(f"unknown threshold reference {self.reference!r}")

    @property
    def threshold(self):
        if self.c is None:
            raise ValueError("threshold is an unresolved offset; call resolve(model) first")
        return float(self.c)

    @property
    def classical(self):
        return self.alpha == 0 or self.f.kind == "zero"

    def with_alpha(self, alpha):
        return replace(self, alpha=float(alpha))

    def resolve(self, model, check=True):
        """Return params with an absolute threshold, validated against ``model``.

        ``H_min <= c <= H_max`` is checked whenever the model is enumerable.
        """
        params = self
        if self.c is None:
            if self.reference == "ground":
                base = model.ground()[1]
            else:
                base = EnergyRef.from_model(model).h_min
            params = replace(self, c=float(base + self.delta))
        if check and model.state_count is not None and model.state_count <= ENUMERATION_LIMIT:
            energies = model.energies()
            lo, hi = float(energies.min()), float(energies.max())
            if not lo <= params.c <= hi:
                raise ValueError(
                    f"threshold c = {params.c} outside [H_min, H_max] = [{lo}, {hi}]"
                )
        return params


@dataclass(frozen=True)
class EnergyRef:
    """Reference minimum energy needed only by the absolute transform."""

    h_min: float
    provenance: str = "user-supplied"

    @classmethod
    def from_model(cls, model):
        if model.state_count is not None and model.state_count <= ENUMERATION_LIMIT:
            return cls(float(model.energies().min()), "exact-enumeration")
        return cls(float(model.ground()[1]), "known-ground-state")


def _scalar_out(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def potential(v, c, f, alpha):
    """``int_c^v du / (alpha f((u-c)_+) + 1)``, valid on both sides of ``c``.

    Any two values differ by exactly the modified-energy difference, so this
    is the ``h_min``-free potential the dynamics actually use.  ``alpha``
    may be an array (one penalty per replica).
    """
    if np.ndim(v) == 0 and np.ndim(alpha) == 0:
        v = float(v)
        if v <= c or alpha == 0 or f.kind == "zero":
            return v - c
        return f._tail_scalar(v, c, float(alpha))
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if f.kind == "zero" or (alpha.ndim == 0 and alpha == 0):
        return np.broadcast_to(v - c, np.broadcast(v, alpha).shape).copy()
    above = np.maximum(v, c)
    return np.where(v <= c, v - c, f.tail(above, c, alpha))


def threshold_potential(v, params):
    """:func:`potential` for a resolved parameter set."""
    return potential(v, params.threshold, params.f, params.alpha)


def psi(v, params, ref):
    """Modified Hamiltonian at raw energy ``v``, measured from ``ref.h_min``."""
    h_min = float(ref.h_min)
    arr = np.asarray(v, dtype=float)
    if np.any(arr < h_min):
        raise DomainError(f"energy {np.min(arr)} below reference minimum {h_min}")
    c = params.threshold
    if params.classical:
        return _scalar_out(arr - h_min)
    if h_min <= c:
        # identity region below c, (c - h_min) + tail above
        if arr.ndim == 0:
            x = float(arr)
            return x - h_min if x < c else (c - h_min) + params.f._tail_scalar(x, c, params.alpha)
        return np.where(arr < c, arr - h_min, (c - h_min) + params.f.tail(np.maximum(arr, c), c, params.alpha))
    return _scalar_out(threshold_potential(arr, params) - threshold_potential(h_min, params))


def energy_delta(h_x, h_y, params):
    """``H^f(y) - H^f(x)``; antisymmetric, no reference energy needed."""
    return _scalar_out(threshold_potential(h_y, params) - threshold_potential(h_x, params))


def acceptance_factor(h_x, h_y, params):
    """Metropolis multiplier ``exp(-(H^f(y) - H^f(x))_+)`` in (0, 1]."""
    d = energy_delta(h_x, h_y, params)
    if np.ndim(d) == 0:
        return math.exp(-d) if d > 0 else 1.0
    return np.exp(-np.maximum(d, 0.0))


def weight(h_x, params):
    """Self-normalization weight ``exp(H^f(x) - (H(x) - H_min))`` in (0, 1].

    Computed as ``exp(tail(c ^ h -> h) - (h - c ^ h))`` which is exactly 1
    at or below the threshold.
    """
    c = params.threshold
    if np.ndim(h_x) == 0:
        h = float(h_x)
        if h <= c or params.classical:
            return 1.0
        return math.exp(params.f._tail_scalar(h, c, params.alpha) - (h - c))
    h = np.asarray(h_x, dtype=float)
    if params.classical:
        return np.ones_like(h)
    above = np.maximum(h, c)
    return np.where(h <= c, 1.0, np.exp(params.f.tail(above, c, params.alpha) - (above - c)))


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------


def adaptive_simpson(fn, a, b, tol=1e-12, max_depth=60):
    """Adaptive Simpson quadrature of a vectorized integrand on ``[a, b]``.

    Intervals are refined level by level; each interval owns a share of the
    tolerance proportional to its width and is accepted once the Richardson
    estimate ``|S_left + S_right - S_whole| / 15`` falls below that share.
    """
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    lo = np.array([a])
    hi = np.array([b])
    flo, fhi = fn(lo), fn(hi)
    mid = 0.5 * (lo + hi)
    fmid = fn(mid)
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
    share = np.array([tol])
    total = 0.0
    for _ in range(max_depth):
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = fn(lm), fn(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        err = left + right - whole
        done = np.abs(err) <= 15.0 * share
        total += float(np.sum((left + right + err / 15.0)[done]))
        keep = ~done
        if not keep.any():
            return sign * total
        pending = np.abs(err[keep])
        lo, mid, hi = lo[keep], mid[keep], hi[keep]
        flo, fmid, fhi = flo[keep], fmid[keep], fhi[keep]
        lm, rm, flm, frm = lm[keep], rm[keep], flm[keep], frm[keep]
        left, right, share = left[keep], right[keep], share[keep] / 2.0
        lo = np.concatenate([lo, mid])
        hi, mid = np.concatenate([mid, hi]), np.concatenate([lm, rm])
        flo, fhi = np.concatenate([flo, fmid]), np.concatenate([fmid, fhi])
        fmid = np.concatenate([flm, frm])
        whole = np.concatenate([left, right])
        share = np.concatenate([share, share])
    residual = float(np.sum(pending)) / 15.0
    raise NumericalError("adaptive Simpson hit its recursion cap", residual)


def quadrature_oracle(v, params, ref, tol=1e-12, max_depth=60):
    """Numerically integrate the defining integral of ``psi``.

    Independent of every closed form: it only evaluates ``f`` pointwise.
    The interval is split at ``c`` where the integrand has a kink.
    """
    if np.ndim(v):
        return np.array([quadrature_oracle(x, params, ref, tol, max_depth) for x in np.ravel(v)]).reshape(np.shape(v))
    v = float(v)
    h_min = float(ref.h_min)
    if v < h_min:
        raise DomainError(f"energy {v} below reference minimum {h_min}")
    c = params.threshold
    alpha = float(params.alpha)
    f = params.f

    def integrand(u):
        return 1.0 / (alpha * np.asarray(f(np.maximum(u - c, 0.0)), dtype=float) + 1.0)

    if h_min < c < v:
        return adaptive_simpson(integrand, h_min, c, tol, max_depth) + adaptive_simpson(
            integrand, c, v, tol, max_depth
        )
    return adaptive_simpson(integrand, h_min, v, tol, max_depth)


def random_triples(n, seed):
    """``n`` random ``(alpha, c, v, h_min)`` draws used by the oracle sweep.

    ``alpha`` is log-uniform on ``[1e-3, 1e2]``, ``c`` uniform on
    ``[-5, 5]``, ``h_min`` up to 3 below ``c`` and ``v`` uniform on
    ``[h_min, c + 10]``.
    """
    rng = np.random.default_rng(seed)
    alpha = 10.0 ** rng.uniform(-3.0, 2.0, n)
    c = rng.uniform(-5.0, 5.0, n)
    h_min = c - rng.uniform(0.0, 3.0, n)
    v = rng.uniform(h_min, c + 10.0)
    return alpha, c, v, h_min


def oracle_sweep(f, n=1000, seed=0, tol=1e-12):
    """Largest ``|psi_closed - psi_quadrature|`` over ``n`` random triples.

    Returns ``(max_residual, worst)`` where ``worst`` is the offending
    ``(alpha, c, v, h_min)``.
    """
    worst, arg = 0.0, None
    for a, c, v, h in zip(*random_triples(n, seed)):
        params = LandscapeParams(float(a), float(c), f)
        ref = EnergyRef(float(h))
        r = abs(psi(float(v), params, ref) - quadrature_oracle(float(v), params, ref, tol))
        if r > worst or arg is None:
            worst, arg = r, (float(a), float(c), float(v), float(h))
    return worst, arg
