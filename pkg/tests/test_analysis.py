from __future__ import annotations

import math

import numpy as np
import pytest

from landscape_mh.analysis import (
    ReversibilityError,
    Spectrum,
    annealed_law,
    annealed_tv_experiment,
    bias_bound,
    bottleneck_elevation,
    bottleneck_matrix,
    build_generator,
    condition_constant,
    convergence_envelope,
    critical_height,
    critical_height_bruteforce,
    holley_stroock_bound,
    log_schedule_mixing_bound,
    max_tv_curve,
    schedule_p_from_model,
    spectral_gap,
    spin_gap_bound,
    stationary,
    tv_curve,
    tv_distance,
)
from landscape_mh.core import EnergyRef, LandscapeParams, PenaltyFunction, psi
from landscape_mh.models import IsingModel, TabularModel, reference_chain
from landscape_mh.sim import Schedule

from conftest import random_tabular

QUAD = PenaltyFunction.quadratic()
E1 = math.exp(-1.0)


def P(alpha, c, f=QUAD):
    return LandscapeParams(alpha, c, f)


def two_state():
    return reference_chain("two-state")


def three_state():
    return reference_chain("three-state")


# -- generators and stationary laws ----------------------------------------------


def test_two_state_classical_rates():
    G = build_generator(two_state(), P(0.0, 0.0))
    assert G.rates[0, 1] == pytest.approx(E1, abs=1e-15)
    assert G.rates[1, 0] == 1.0
    assert np.allclose(G.rates.sum(axis=1), 0.0, atol=1e-15)


def test_generator_dominated_by_proposal_and_reversible(rng):
    for k in range(10):
        m = random_tabular(rng, int(rng.integers(3, 15)))
        e = m.energies()
        params = P(float(10 ** rng.uniform(-2, 2)), float(rng.uniform(e.min(), e.max())))
        G = build_generator(m, params)
        G.check()
        law = stationary(m, params)
        assert np.allclose(G.pi, law.mu_f, atol=1e-15)
        idx, rate = m.neighbor_table()
        for s in range(m.state_count):
            for t, r in zip(idx[s], rate[s]):
                if r > 0:
                    assert G.rates[s, t] <= r
                    lhs, rhs = law.mu_f[s] * G.rates[s, t], law.mu_f[t] * G.rates[t, s]
                    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_check_rejects_irreversible():
    G = build_generator(three_state(), P(1.0, 0.0))
    G.rates[0, 1] *= 1.5
    G.rates[0, 0] = -G.rates[0, 1:].sum()
    with pytest.raises(ReversibilityError):
        G.check()


def test_stationary_examples():
    flat = TabularModel([1.0] * 4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    assert np.allclose(stationary(flat, P(2.0, 1.0)).mu_f, 0.25)
    m = three_state()
    law0 = stationary(m, P(0.0, 0.0))
    want = np.exp(-np.array([0.0, 2.0, 1.0]))
    assert np.allclose(law0.mu, want / want.sum(), atol=1e-15)
    assert np.allclose(law0.mu_f, law0.mu, atol=1e-15)
    law = stationary(m, P(1.0, 0.0))
    props = np.array([1.0, math.exp(-math.atan(2.0)), math.exp(-math.pi / 4)])
    assert np.allclose(law.mu_f, props / props.sum(), atol=1e-14)
    assert law.min_f == law.mu_f.min() and law.max_f == law.mu_f.max()


def test_tv_examples():
    assert tv_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.5, 0.5], [1, 0]) == 0.5


# -- spectral gap and curves -----------------------------------------------------------


def test_two_state_gap():
    assert spectral_gap(build_generator(two_state(), P(0.0, 0.0))) == pytest.approx(1.3678794411714423, abs=1e-12)


def test_flat_complete_graph_gap_is_proposal_gap():
    n = 6
    m = TabularModel([0.0] * n, [(i, j, 1.0 / n) for i in range(n) for j in range(i + 1, n)])
    assert spectral_gap(build_generator(m, P(3.0, 0.0))) == pytest.approx(1.0, abs=1e-12)


def test_gap_invariant_under_relabeling(rng):
    m = random_tabular(rng, 9)
    perm = rng.permutation(9)
    inv = np.argsort(perm)
    e = m.energy_list
    relabeled = TabularModel([e[perm[k]] for k in range(9)], [(int(inv[i]), int(inv[j]), r) for i, j, r in m.edge_list])
    params = P(2.0, 1.0)
    assert spectral_gap(build_generator(m, params)) == pytest.approx(spectral_gap(build_generator(relabeled, params)), rel=1e-10)


def test_gap_uses_subset_solver_above_512_states():
    m = IsingModel.complete(10)
    params = LandscapeParams(1.0, f=QUAD, delta=0.5).resolve(m)
    G = build_generator(m, params)
    full = np.linalg.eigvalsh(-(np.sqrt(G.pi)[:, None] * G.rates / np.sqrt(G.pi)[None, :]))
    assert spectral_gap(G) == pytest.approx(full[1], rel=1e-8)


def test_tv_curve_examples():
    m = two_state()
    G = build_generator(m, P(0.0, 0.0))
    mu = G.pi
    curve = tv_curve(G, 0, [0.0, 0.3, 1.0, 4.0, 60.0])
    assert curve[0][1] == pytest.approx(1 - mu[0], abs=1e-14)
    assert curve[-1][1] < 1e-12
    lam = 1.0 + E1
    for t, v in curve:
        assert v == pytest.approx(mu[1] * math.exp(-lam * t), abs=1e-14)


def test_tv_slope_matches_gap(corpus):
    for m in corpus[:3] + corpus[6:]:
        G = build_generator(m, P(1.0, float(m.energies().min()) + 0.5))
        spec = Spectrum.of(G)
        t1, t2 = 12.0 / spec.gap, 16.0 / spec.gap
        worst = lambda t: max(spec.tv(x, t) for x in range(G.size))
        slope = (math.log(worst(t2)) - math.log(worst(t1))) / (t2 - t1)
        assert slope == pytest.approx(-spec.gap, rel=0.01)


def test_transition_rows_match_forward_equation():
    m = reference_chain("double-well")
    params = P(2.0, 1.0)
    spec = Spectrum.of(build_generator(m, params))
    law = annealed_law(m, QUAD, 1.0, Schedule.constant(2.0), 4, [0.5, 5.0])
    for row, t in zip(law, (0.5, 5.0)):
        assert np.allclose(row, spec.transition_row(4, t), atol=1e-7)


# -- bottlenecks and critical heights ----------------------------------------------


def test_three_state_heights():
    m = three_state()
    h0 = critical_height(m)
    assert h0.value == 1.0
    assert set(h0.witness) == {0, 2}
    hf = critical_height(m, P(1.0, 0.0))
    assert hf.value == pytest.approx(0.32175055439664213, abs=1e-12)


def test_single_well_has_zero_height():
    m = TabularModel([0.0, 1.0, 2.5, 3.0], [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    assert critical_height(m).value == 0.0


def test_bottleneck_examples():
    m = three_state()
    e = m.energies()
    assert bottleneck_elevation(m, 0, 2) == 2.0 == bottleneck_elevation(m, 2, 0)
    assert bottleneck_elevation(m, 0, 1) == 2.0
    for x in range(3):
        assert bottleneck_elevation(m, x, x) == e[x]
    B = bottleneck_matrix(m)
    assert np.array_equal(B, B.T)


def test_union_find_equals_bruteforce(rng):
    for _ in range(40):
        m = random_tabular(rng, int(rng.integers(2, 9)), extra=0.6)
        B_bf, m_bf = critical_height_bruteforce(m)
        assert np.array_equal(bottleneck_matrix(m), B_bf)
        assert critical_height(m).value == m_bf
        params = P(float(rng.uniform(0.1, 5)), float(rng.uniform(0, 3)))
        hf = np.asarray(psi(m.energies(), params, EnergyRef(float(m.energies().min()))))
        B_f, mf_bf = critical_height_bruteforce(m, hf)
        assert critical_height(m, params).value == pytest.approx(mf_bf, abs=1e-12)


def test_modified_bottlenecks_are_transformed_bottlenecks(corpus):
    for m in corpus:
        e = m.energies()
        params = P(2.0, float(e.min()) + 0.3)
        ref = EnergyRef(float(e.min()))
        hf = np.asarray(psi(e, params, ref))
        B = bottleneck_matrix(m)
        Bf = bottleneck_matrix(m, energies=hf)
        assert np.allclose(Bf, psi(B, params, ref), atol=1e-12)
        mf = critical_height(m, params)
        x, y = mf.witness
        direct = psi(float(B[x, y]), params, ref) - hf[x] - hf[y]
        assert mf.value == pytest.approx(direct, abs=1e-12)
        assert mf.value <= critical_height(m).value + 1e-12


# -- bounds ---------------------------------------------------------------------------


def test_bias_examples():
    m = three_state()
    b0 = bias_bound(m, P(0.0, 0.0))
    assert b0.bound == 0.0 and b0.tv == 0.0
    top = bias_bound(m, P(1.0, 2.0))
    assert top.xi == 0.0 and top.bound == 0.0 and top.tv == 0.0
    b = bias_bound(m, P(0.1, 0.0))
    assert 0.0 < b.tv <= b.bound


def test_bias_linear_in_small_alpha(corpus):
    for m in corpus[:3]:
        c = float(m.energies().min())
        r1 = bias_bound(m, P(0.01, c)).tv / bias_bound(m, P(0.005, c)).tv
        r2 = bias_bound(m, P(0.005, c)).tv / bias_bound(m, P(0.0025, c)).tv
        assert r1 == pytest.approx(2.0, rel=0.2) and r2 == pytest.approx(2.0, rel=0.2)


def test_envelope_examples():
    m = two_state()
    G = build_generator(m, P(0.0, 0.0))
    spec = Spectrum.of(G)
    env0 = convergence_envelope(G, 0, 0.0, spec)
    assert env0.upper >= 1 - G.pi[0]
    ratios = set()
    for t in np.linspace(0, 5, 11):
        env = convergence_envelope(G, 0, t, spec)
        assert env.lower <= env.max_over_starts + 1e-15
        assert env.exact <= env.upper
        ratios.add(round(env.upper / env.lower, 9))
    assert ratios == {round(math.e * 2, 9)}


def test_envelope_on_corpus(corpus):
    for m in corpus:
        e = m.energies()
        G = build_generator(m, P(1.0, float(e.min()) + 0.5))
        spec = Spectrum.of(G)
        for t in (0.0, 0.5, 2.0, 10.0):
            env = convergence_envelope(G, 0, t, spec)
            assert env.lower <= env.max_over_starts + 1e-12
            assert env.exact <= env.upper


def test_max_tv_curve_is_worst_start():
    G = build_generator(three_state(), P(1.0, 0.0))
    spec = Spectrum.of(G)
    for t, v in max_tv_curve(G, [0.0, 1.0], spec):
        assert v == max(spec.tv(x, t) for x in range(3))


def test_spin_bound_examples():
    assert spin_gap_bound(2 / 4, 0.1, 9 * math.pi**2 / 4) == pytest.approx(0.1362658965170063, abs=1e-15)
    assert spin_gap_bound(0.5, 1e-12, 1e24) == pytest.approx(0.5, rel=1e-9)
    assert spin_gap_bound(0.5, 0.1, 0.0) == 0.0


def test_holley_stroock_on_hypercube_and_alpha_grid():
    m = IsingModel.hypercube(2)
    for alpha in (0.25, 1.0, 4.0, 100.0, 1e4):
        params = LandscapeParams(alpha, f=QUAD, delta=0.5).resolve(m)
        gap = spectral_gap(build_generator(m, params))
        hs = holley_stroock_bound(m, params)
        assert gap >= hs > 0
        assert hs >= spin_gap_bound(m.proposal_gap, 0.5, alpha) * (1 - 1e-12)


def test_holley_stroock_needs_gap():
    with pytest.raises(ValueError):
        holley_stroock_bound(three_state(), P(1.0, 0.0))


def test_schedule_p_examples():
    p, big_m = schedule_p_from_model(1.0, 1.0, 2, 1.0)
    assert big_m == 1.0 and p == pytest.approx(math.pi)
    assert schedule_p_from_model(1.0, 1.0, 2, 2.0)[0] == pytest.approx(p / 2)
    assert schedule_p_from_model(1.0, 500.0, 2, 3.0)[1] == 1500.0
    with pytest.raises(ValueError):
        schedule_p_from_model(0.0, 1.0, 2)


def test_mixing_bound_examples():
    expo = 3 * math.pi * (math.log(2) + 1 + math.log(10)) / 2
    assert log_schedule_mixing_bound(2, 1.0, 1.0, 1.0, 0.1) == pytest.approx((math.exp(expo) - math.exp(1.5 * math.pi)) / math.pi, rel=1e-12)
    assert log_schedule_mixing_bound(2, 1.0, 2.0, 1.0, 0.1) == pytest.approx(log_schedule_mixing_bound(2, 1.0, 1.0, 1.0, 0.1) / 2, rel=1e-12)
    huge = [log_schedule_mixing_bound(2, h, 1.0, 1.0, 0.1) * schedule_p_from_model(1.0, h, 2)[0] for h in (1e2, 1e4, 1e6)]
    assert huge[0] > huge[1] > huge[2] > 0 and huge[2] < huge[0] / 1000


def test_condition_constant(corpus):
    m = reference_chain("double-well")
    beta = 2.0
    gap = spectral_gap(build_generator(m, P(1 / beta, 1.0)))
    assert condition_constant(m, 1.0, [beta]) == pytest.approx(gap * math.exp(1.5 * math.pi * math.sqrt(beta)))
    grid = np.linspace(1, 10, 7)
    for model in corpus:
        c = float(model.energies().min()) + 0.5
        K = condition_constant(model, c, grid)
        assert K > 0
        for b in grid:
            g = spectral_gap(build_generator(model, P(1 / b, c)))
            assert g >= K * math.exp(-1.5 * math.pi * math.sqrt(b)) * (1 - 1e-12)


# -- annealing -------------------------------------------------------------------------


def test_annealed_experiment_at_time_zero():
    m = reference_chain("double-well")
    rows = annealed_tv_experiment(m, QUAD, 1.0, Schedule.logarithmic(1.0), [0.0], 200, seed=1, starts=[4])
    mu = np.exp(-m.energies())
    mu /= mu.sum()
    assert rows[0]["tv"] == pytest.approx(1 - mu[4], abs=1e-15)


def test_annealed_experiment_classical_tracks_exact():
    m = three_state()
    G = build_generator(m, P(0.0, 0.0))
    spec = Spectrum.of(G)
    times = [0.25, 1.0, 3.0]
    rows = annealed_tv_experiment(m, QUAD, 0.0, Schedule.constant(0.0), times, 4000, seed=2, starts=[2])
    for r in rows:
        exact = spec.tv(2, r["t"])
        # plug-in TV: exact value plus sampling noise of order sqrt(|X| / replicas)
        assert abs(r["tv"] - exact) < 3 * r["plugin_inflation"]


def test_annealed_law_is_a_distribution():
    m = reference_chain("double-well")
    law = annealed_law(m, QUAD, 5.0, Schedule.logarithmic(1.0), 0, [1.0, 10.0, 100.0])
    assert np.allclose(law.sum(axis=1), 1.0, atol=1e-8)
    assert law.min() > -1e-9
