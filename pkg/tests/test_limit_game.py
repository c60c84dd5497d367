import numpy as np
import pytest

from robustcmu.adversary import AdversaryStrategy, default_family
from robustcmu.curve import solve_f
from robustcmu.estimates import joint_se, paired_se
from robustcmu.limit_game import estimate_game_cost, estimate_value, simulate_f_reflected
from robustcmu.model import DivergenceModel, SystemConfig


def _quiet(steps, streams):
    return np.zeros((1, steps, streams)), np.ones((1, steps))


def test_degenerate_path_stays_at_origin(quad_cost):
    cfg = SystemConfig([0.5, 0.5], [1.0, 1.0], [0.5, 0.5], [1.0, 1.0], [0.0, 0.0])
    assert np.all(cfg.m_hat == 0)
    paths = simulate_f_reflected(cfg, quad_cost, AdversaryStrategy.zero(2), 2.0, 0.01, 0, noise=_quiet(200, 4))
    assert np.all(paths.X == 0) and np.all(paths.Y == 0) and np.all(paths.W == 0)


def test_deterministic_drift_follows_curve(quad_cost):
    cfg = SystemConfig([0.5, 0.5], [1.0, 1.0], [1.5, 1.5], [1.0, 1.0], [0.0, 0.0])
    np.testing.assert_allclose(cfg.m_hat, [1.0, 1.0])
    paths = simulate_f_reflected(cfg, quad_cost, AdversaryStrategy.zero(2), 2.0, 0.01, 0, noise=_quiet(200, 4))
    t = paths.times
    np.testing.assert_allclose(paths.W[0], 2 * t, atol=1e-12)
    expected = np.array([solve_f(w, cfg, quad_cost).f for w in 2 * t])
    np.testing.assert_allclose(paths.X[0], expected, atol=1e-10)


def test_paths_are_deterministic_in_seed(sym_config, quad_cost):
    adv = AdversaryStrategy.feedback("boundary", 1.0, 2)
    a = simulate_f_reflected(sym_config, quad_cost, adv, 2.0, 0.01, 11, reps=3)
    b = simulate_f_reflected(sym_config, quad_cost, adv, 2.0, 0.01, 11, reps=3)
    for name in ("B", "W", "X", "ell"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = simulate_f_reflected(sym_config, quad_cost, adv, 2.0, 0.01, 12, reps=3)
    assert not np.array_equal(a.W, c.W)


def test_reflection_and_workload_identity(sym_config, quad_cost):
    p = simulate_f_reflected(sym_config, quad_cost, AdversaryStrategy.zero(2), 5.0, 0.01, 3, reps=4)
    assert np.all(p.W >= 0)
    np.testing.assert_allclose(p.X @ sym_config.theta, p.W, atol=1e-10)
    y = p.Y @ sym_config.theta
    assert np.all(np.diff(y, axis=1) >= -1e-12)


def test_first_rep_slices_same_paths(sym_config, quad_cost):
    adv = AdversaryStrategy.zero(2)
    whole = simulate_f_reflected(sym_config, quad_cost, adv, 1.0, 0.01, 5, reps=4)
    tail = simulate_f_reflected(sym_config, quad_cost, adv, 1.0, 0.01, 5, reps=2, first_rep=2)
    np.testing.assert_array_equal(whole.W[2:], tail.W)


def test_refined_path_passes_through_coarse(sym_config, quad_cost):
    adv = AdversaryStrategy.zero(2)
    coarse = simulate_f_reflected(sym_config, quad_cost, adv, 1.0, 0.02, 5, reps=2)
    fine = simulate_f_reflected(sym_config, quad_cost, adv, 1.0, 0.02, 5, reps=2, refine=1)
    np.testing.assert_allclose(fine.B[:, ::2], coarse.B, atol=1e-12)


def test_zero_adversary_has_no_penalty(sym_config, quad_cost, quad_div, discount):
    est = estimate_game_cost(sym_config, quad_cost, quad_div, discount, AdversaryStrategy.zero(2), 200, seed=1)
    np.testing.assert_array_equal(est.divergence, 0.0)
    assert est.holding > 0 and est.mean == est.holding


def test_constant_adversary_matches_girsanov_quadratic(sym_config, quad_cost, quad_div, discount):
    adv = AdversaryStrategy.constant([0.5, 0.5, -0.5, -0.5])
    paths = simulate_f_reflected(sym_config, quad_cost, adv, 2.0, 0.01, 0, reps=2)
    clock = np.concatenate([np.ones(2), sym_config.rho])
    np.testing.assert_allclose(paths.G[:, -1], 0.5 * 0.25 * clock * 2.0 * np.ones((2, 4)))


def test_std_error_scales_with_reps(sym_config, quad_cost, quad_div, discount):
    adv = AdversaryStrategy.zero(2)
    small = estimate_game_cost(sym_config, quad_cost, quad_div, discount, adv, 400, seed=8)
    large = estimate_game_cost(sym_config, quad_cost, quad_div, discount, adv, 1600, seed=8)
    assert 0.5 * 0.7 <= large.std_error / small.std_error <= 0.5 * 1.3


def test_step_refinement_consistent(sym_config, quad_cost, quad_div, discount):
    adv = AdversaryStrategy.constant([0.5, 0.5, -0.5, -0.5])
    coarse = estimate_game_cost(sym_config, quad_cost, quad_div, discount, adv, 400, step=0.02, seed=4)
    fine = estimate_game_cost(sym_config, quad_cost, quad_div, discount, adv, 400, step=0.02, seed=4, refine=1)
    assert abs(coarse.mean - fine.mean) < 3 * joint_se(coarse, fine)


def test_value_family_of_zero_is_nominal(sym_config, quad_cost, quad_div, discount):
    zero = AdversaryStrategy.zero(2)
    best, est, _ = estimate_value(sym_config, quad_cost, quad_div, discount, [zero], 200, seed=2)
    nominal = estimate_game_cost(sym_config, quad_cost, quad_div, discount, zero, 200, seed=2)
    assert best is zero and est.mean == nominal.mean


def test_value_dominates_nominal(sym_config, quad_cost, quad_div, discount):
    fam = default_family(2)
    best, est, results = estimate_value(sym_config, quad_cost, quad_div, discount, fam, 200, seed=2)
    nominal = results[0]
    assert fam[0].is_zero
    assert est.mean >= nominal.mean - 3 * nominal.std_error
    assert est.mean == max(r.mean for r in results)
    assert paired_se(est, nominal) >= 0


def test_huge_penalty_makes_zero_optimal(sym_config, quad_cost, discount):
    fam = default_family(2)
    heavy = DivergenceModel([1e4, 1e4], [1e4, 1e4], 2.0)
    best, _, _ = estimate_value(sym_config, quad_cost, heavy, discount, fam, 50, seed=2)
    assert best.is_zero


def test_misaligned_step_rejected(sym_config, quad_cost, quad_div, discount):
    with pytest.raises(ValueError):
        estimate_game_cost(sym_config, quad_cost, quad_div, discount, AdversaryStrategy.zero(2), 10, step=0.03)
