from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landscape_mh.core import (
    EXP_LIMIT_WIDTH,
    DomainError,
    EnergyRef,
    LandscapeParams,
    NumericalError,
    PenaltyFunction,
    acceptance_factor,
    adaptive_simpson,
    energy_delta,
    oracle_sweep,
    potential,
    psi,
    quadrature_oracle,
    weight,
)
from landscape_mh.models import IsingModel, reference_chain

# values frozen from the quadrature oracle (and, independently, the
# elementary antiderivatives pi/4, ln(7)/2, 1 - e^-2)
PI_4 = 0.7853981633974483
HALF_LN7 = 0.9729550745276566
ONE_MINUS_E2 = 0.8646647167633873

QUAD = PenaltyFunction.quadratic()
LIN = PenaltyFunction.linear()
EXP = PenaltyFunction.exp_minus_one()
ZERO = PenaltyFunction.zero()
FAMILIES = [LIN, QUAD, EXP]
REF0 = EnergyRef(0.0)


def P(alpha, c, f=QUAD):
    return LandscapeParams(alpha, c, f)


# -- psi examples ------------------------------------------------------------


def test_psi_identity_below_threshold():
    assert psi(0.5, P(1.0, 1.0), REF0) == 0.5


def test_psi_quadratic_arctan():
    assert psi(1.0, P(1.0, 0.0), REF0) == pytest.approx(PI_4, abs=1e-12)
    assert quadrature_oracle(1.0, P(1.0, 0.0), REF0) == pytest.approx(PI_4, abs=1e-12)


def test_psi_linear_log():
    assert psi(3.0, P(2.0, 0.0, LIN), REF0) == pytest.approx(HALF_LN7, abs=1e-12)
    assert quadrature_oracle(3.0, P(2.0, 0.0, LIN), REF0) == pytest.approx(HALF_LN7, abs=1e-12)


def test_psi_zero_function_is_shift():
    assert psi(2.0, P(5.0, 0.0, ZERO), REF0) == 2.0


def test_psi_below_reference_is_domain_error():
    with pytest.raises(DomainError):
        psi(-1.0, P(1.0, 0.0), REF0)
    with pytest.raises(DomainError):
        quadrature_oracle(-1.0, P(1.0, 0.0), REF0)


def test_psi_array_matches_scalar():
    v = np.linspace(0, 9, 37)
    for f in FAMILIES:
        params = P(0.7, 2.0, f)
        arr = psi(v, params, REF0)
        assert np.allclose(arr, [psi(float(x), params, REF0) for x in v], rtol=0, atol=1e-14)


# -- oracle --------------------------------------------------------------------


def test_oracle_empty_interval():
    assert quadrature_oracle(0.0, P(1.0, 0.0), REF0) == 0.0


def test_oracle_exp_unit_alpha():
    got = quadrature_oracle(2.0, P(1.0, 0.0, EXP), REF0)
    assert got == pytest.approx(ONE_MINUS_E2, abs=1e-12)
    assert psi(2.0, P(1.0, 0.0, EXP), REF0) == pytest.approx(ONE_MINUS_E2, abs=1e-12)


def test_adaptive_simpson_polynomial_and_cap():
    assert adaptive_simpson(lambda u: u**3, 0.0, 2.0) == pytest.approx(4.0, abs=1e-13)
    with pytest.raises(NumericalError) as info:
        adaptive_simpson(lambda u: np.where(u > 0.3, 1.0, 0.0) * np.sin(1 / (u + 1e-9)), 0.0, 1.0, tol=1e-15, max_depth=4)
    assert info.value.residual >= 0


def test_oracle_sweep_all_families():
    for f in FAMILIES:
        worst, _ = oracle_sweep(f, n=200, seed=3)
        assert worst <= 1e-10


# -- exp branch near alpha = 1 -------------------------------------------------


def test_exp_branches_agree_at_the_cut():
    for s in (0.01, 0.5, 3.0, 20.0):
        inner = EXP.tail(s, 0.0, 1.0 + 0.999 * EXP_LIMIT_WIDTH)
        outer = EXP.tail(s, 0.0, 1.0 + 1.001 * EXP_LIMIT_WIDTH)
        assert abs(inner - outer) < 1e-9


def test_exp_unit_alpha_matches_oracle():
    for s in (0.1, 1.0, 4.0, 15.0):
        params = P(1.0, 1.0, EXP)
        assert abs(psi(1.0 + s, params, REF0) - quadrature_oracle(1.0 + s, params, REF0)) < 1e-9


def test_printed_exp_form_only_matches_at_zero_threshold():
    printed = PenaltyFunction.exp_minus_one(printed_form=True)
    for alpha in (0.3, 2.0, 7.0):
        assert printed.tail(2.5, 0.0, alpha) == pytest.approx(EXP.tail(2.5, 0.0, alpha), abs=1e-12)
    # with c != 0 the printed form drifts away from the defining integral
    params = P(2.0, 1.5, printed)
    ref = EnergyRef(0.0)
    assert abs(psi(4.0, params, ref) - quadrature_oracle(4.0, P(2.0, 1.5, EXP), ref)) > 1e-3


# -- deltas, acceptance, weight -------------------------------------------------


def test_energy_delta_examples():
    assert energy_delta(1.0, 1.0, P(3.0, 0.0)) == 0.0
    assert energy_delta(0.0, 1.0, P(1.0, 0.0)) == pytest.approx(PI_4, abs=1e-12)
    assert energy_delta(1.0, 0.0, P(1.0, 0.0)) == pytest.approx(-PI_4, abs=1e-12)


def test_acceptance_examples():
    assert acceptance_factor(2.0, 1.0, P(1.0, 0.0)) == 1.0
    assert acceptance_factor(0.0, 1.0, P(1.0, 0.0)) == pytest.approx(0.45593812776599624, abs=1e-12)
    assert acceptance_factor(0.0, 1.0, P(1.0, 0.0, ZERO)) == pytest.approx(math.exp(-1), abs=1e-15)


def test_weight_examples():
    assert weight(-3.0, P(4.0, 0.0)) == 1.0
    assert weight(1.0, P(1.0, 0.0)) == pytest.approx(0.8068626393979738, abs=1e-12)
    assert weight(7.0, P(0.0, 0.0)) == 1.0


def test_weight_matches_absolute_form():
    rng = np.random.default_rng(5)
    for f in FAMILIES:
        for _ in range(50):
            h_min = rng.uniform(-3, 0)
            c = h_min + rng.uniform(0, 3)
            h = h_min + rng.uniform(0, 8)
            params = P(float(10 ** rng.uniform(-2, 1.5)), c, f)
            absolute = math.exp(psi(h, params, EnergyRef(h_min)) - (h - h_min))
            assert abs(weight(h, params) - absolute) <= 1e-12


# -- custom functions ------------------------------------------------------------


def test_custom_matches_quadratic():
    custom = PenaltyFunction.custom(lambda x: x * x)
    for v in (0.5, 2.0, 9.0):
        assert psi(v, P(2.0, 0.3, custom), REF0) == pytest.approx(psi(v, P(2.0, 0.3), REF0), abs=1e-10)


def test_custom_validation():
    with pytest.raises(ValueError):
        PenaltyFunction.custom(lambda x: x + 1.0)
    with pytest.raises(ValueError):
        PenaltyFunction.custom(lambda x: -x)
    with pytest.raises(ValueError):
        PenaltyFunction.custom(lambda x: math.sin(x))


def test_custom_quadrature_failure_carries_residual():
    jumpy = PenaltyFunction.custom(lambda x: 0.0 if x < 1 else 1e9 * (1 + math.floor(x * 1e3)), tol=1e-15)
    with pytest.raises(NumericalError) as info:
        jumpy.tail(40.0, 0.0, 1.0)
    assert info.value.residual > 0


# -- params ------------------------------------------------------------------------


def test_params_validation_and_resolution():
    with pytest.raises(ValueError):
        LandscapeParams(-1.0, 0.0)
    with pytest.raises(ValueError):
        LandscapeParams(1.0, 0.0, epsilon=2.0)
    with pytest.raises(ValueError):
        LandscapeParams(1.0)
    m = IsingModel.complete(4)
    p = LandscapeParams(1.0, delta=0.5).resolve(m)
    assert p.threshold == -4.5
    with pytest.raises(ValueError):
        LandscapeParams(1.0, c=100.0).resolve(m)
    with pytest.raises(ValueError):
        LandscapeParams(1.0, delta=0.5).threshold


def test_energy_ref_for_spin_models_is_ground_energy():
    m = IsingModel.hypercube(2)
    assert EnergyRef.from_model(m).h_min == m.ground()[1] == -4.0


def test_potential_differences_equal_psi_differences():
    m = reference_chain("double-well")
    e = m.energies()
    params = P(3.0, 1.0)
    g = potential(e, 1.0, QUAD, 3.0)
    h = psi(e, params, EnergyRef(0.0))
    assert np.allclose(np.diff(g), np.diff(h), atol=1e-14)


def test_potential_accepts_alpha_array():
    v = np.array([0.0, 2.0, 5.0])
    a = np.array([0.0, 1.0, 4.0])
    got = potential(v, 1.0, QUAD, a)
    want = [potential(float(x), 1.0, QUAD, float(y)) for x, y in zip(v, a)]
    assert np.allclose(got, want, atol=1e-15)


# -- properties ----------------------------------------------------------------------

family = st.sampled_from(FAMILIES)
alphas = st.floats(0.0, 100.0)
centers = st.floats(-10.0, 10.0)


@settings(max_examples=150, deadline=None)
@given(family, alphas, centers, st.floats(0.0, 50.0), st.floats(0.0, 5.0))
def test_closed_form_matches_oracle(f, alpha, c, gap, below):
    params = P(alpha, c, f)
    ref = EnergyRef(c - below)
    v = c + gap
    assert abs(psi(v, params, ref) - quadrature_oracle(v, params, ref)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(family, alphas, centers, st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_psi_monotone_and_dominated(f, alpha, c, a, b):
    params = P(alpha, c, f)
    ref = EnergyRef(c - 2.0)
    lo, hi = sorted((c - 2.0 + a, c - 2.0 + b))
    p_lo, p_hi = psi(lo, params, ref), psi(hi, params, ref)
    assert p_lo <= p_hi
    assert psi(ref.h_min, params, ref) == 0.0
    assert p_hi <= hi - ref.h_min + 1e-12
    if hi <= c or alpha == 0:
        assert p_hi == pytest.approx(hi - ref.h_min, abs=1e-12)
    elif hi - c > 1e-3 and alpha > 1e-3:
        assert p_hi < hi - ref.h_min


@settings(max_examples=100, deadline=None)
@given(family, centers, st.floats(0.0, 4.0), st.floats(0.0, 3.0))
def test_small_alpha_recovers_raw_energy(f, c, gap, below):
    params = P(1e-8, c, f)
    ref = EnergyRef(c - below)
    v = c + gap
    assert abs(psi(v, params, ref) - (v - ref.h_min)) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 100.0), centers, st.floats(0.0, 1e4), st.floats(0.0, 5.0))
def test_quadratic_cap(alpha, c, gap, below):
    params = P(alpha, c)
    ref = EnergyRef(c - below)
    assert psi(c + gap, params, ref) <= below + math.pi / (2 * math.sqrt(alpha)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(family, alphas, centers, st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_delta_antisymmetric_and_additive(f, alpha, c, x, y, z):
    params = P(alpha, c, f)
    assert energy_delta(x, y, params) == -energy_delta(y, x, params)
    total = energy_delta(x, y, params) + energy_delta(y, z, params)
    assert energy_delta(x, z, params) == pytest.approx(total, abs=1e-12)
    assert 0.0 < acceptance_factor(x, y, params) <= 1.0
    assert 0.0 < weight(x, params) <= 1.0
