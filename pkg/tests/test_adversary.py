import math

import numpy as np
import pytest

from robustcmu.adversary import (
    AdversaryStrategy,
    constant_grid,
    default_family,
    divergence_penalty,
    eval_strategy,
    load_schedule,
    parse_strategy,
    quadrature_weights,
    rn_exponent_brownian,
    rn_exponent_poisson,
)
from robustcmu.errors import ConfigError, NonPositiveIntensity
from robustcmu.model import DivergenceModel, ExponentialDiscount, FiniteHorizon


def test_zero_and_constant():
    zero = AdversaryStrategy.zero(2)
    assert zero.is_zero
    np.testing.assert_array_equal(eval_strategy(zero, 7, [3.0, 0.0]), np.zeros(4))
    const = AdversaryStrategy.constant([0.5, 0.5, -0.5, 0.25])
    for x in ([0.0, 0.0], [5.0, 1.0]):
        np.testing.assert_array_equal(eval_strategy(const, 3, x), [0.5, 0.5, -0.5, 0.25])


def test_boundary_feedback_rule():
    fb = AdversaryStrategy.feedback("boundary", 1.0, 2)
    out = eval_strategy(fb, 0, [0.0, 2.0])
    np.testing.assert_array_equal(out[:2], [1.0, 0.0])
    np.testing.assert_array_equal(out[2:], [0.0, 0.0])


def test_threshold_feedback_rule_bounded():
    fb = AdversaryStrategy.feedback("threshold", 2.0, 2, level=1.0)
    out = eval_strategy(fb, 0, [10.0, 10.0], theta=np.ones(2))
    assert np.all(np.abs(out) <= 2.0)


def test_schedule_and_loader(tmp_path):
    path = tmp_path / "sched.csv"
    path.write_text("grid_index,a1,s1\n0,0.5,0\n3,1.0,-1.0\n")
    sched = load_schedule(path, 1)
    np.testing.assert_array_equal(eval_strategy(sched, 2, [0.0]), [0.5, 0.0])
    np.testing.assert_array_equal(eval_strategy(sched, 3, [0.0]), [1.0, -1.0])
    np.testing.assert_array_equal(eval_strategy(sched, 50, [0.0]), [1.0, -1.0])
    assert parse_strategy("schedule sched.csv", 1, base_dir=tmp_path).table.shape == (4, 2)


@pytest.mark.parametrize(
    "text", ["const 3 0 0 0", "const 1 1", "feedback nope 1", "feedback boundary 5", "bogus", ""]
)
def test_invalid_strategies(text):
    with pytest.raises(ConfigError):
        parse_strategy(text, 2)


def test_default_family_shape():
    fam = default_family(2)
    assert len(fam) == 10
    assert sum(s.is_zero for s in fam) == 1
    assert len({s.label for s in fam}) == 10
    assert all(np.all(np.abs(s.table) <= 1.0) for s in constant_grid(2))


def test_poisson_constant_reference_is_zero():
    rn = rn_exponent_poisson([0.2, 0.7], [0.0], [3.0], 3.0, eval_times=[0.0, 0.5, 1.0])
    np.testing.assert_array_equal(rn.ell, 0.0)


def test_poisson_closed_forms():
    one = rn_exponent_poisson([0.5], [0.0], [2.0], 1.0, eval_times=[1.0])
    # oracle: 1 * log(2/1) - (2 - 1) * 1
    assert one.ell[0] == pytest.approx(-0.3068528194400547, abs=1e-15)
    none = rn_exponent_poisson([], [0.0], [2.0], 1.0, eval_times=[1.0])
    assert none.ell[0] == -1.0
    # G is the Kullback-Leibler compensator: (psi log(psi/r) - psi + r) t
    assert one.G[0] == pytest.approx(2 * math.log(2) - 1)
    np.testing.assert_allclose(one.H + one.G, one.ell)


def test_poisson_constant_stream_bit_for_bit(rng):
    psi, r, t = 3.7, 2.2, 4.0
    events = np.sort(rng.uniform(0, t, size=17))
    rn = rn_exponent_poisson(events, [0.0], [psi], r, eval_times=[t])
    assert rn.ell[0] == 17 * math.log(psi / r) - (psi - r) * t


def test_poisson_piecewise_and_predictable():
    # event at the knot belongs to the first piece
    rn = rn_exponent_poisson([1.0], [0.0, 1.0], [2.0, 1.0], 1.0, eval_times=[2.0])
    assert rn.ell[0] == pytest.approx(math.log(2.0) - 1.0)
    with pytest.raises(NonPositiveIntensity):
        rn_exponent_poisson([], [0.0], [0.0], 1.0)


def test_brownian_examples():
    h = 0.01
    zero = rn_exponent_brownian(np.zeros(100), np.ones(100), h)
    np.testing.assert_array_equal(zero.ell, 0.0)
    c = 1.7
    det = rn_exponent_brownian(np.full(100, c), np.zeros(100), h)
    assert det.ell[-1] == pytest.approx(c**2 / 2, rel=1e-12)


def test_brownian_martingale_identity():
    rng = np.random.default_rng(2024)
    reps, steps, h = 10_000, 100, 0.01
    psi = np.where(np.arange(steps) < 50, 1.0, -0.5)
    dB = rng.normal(scale=math.sqrt(h), size=(reps, steps))
    ell = rn_exponent_brownian(psi, dB, h, measure="P").ell[:, -1]
    lr = np.exp(ell)
    se = lr.std(ddof=1) / math.sqrt(reps)
    assert abs(lr.mean() - 1.0) <= 3 * se


def test_quadrature_weights_integrate_exponential():
    t = np.linspace(0, 20, 20001)
    w = quadrature_weights(t, ExponentialDiscount(1.0))
    assert w.sum() == pytest.approx(1 - math.exp(-20), rel=1e-7)
    assert quadrature_weights(t, FiniteHorizon(5.0), horizon=5.0).sum() == pytest.approx(5.0)


def _constant_exponents(c, t):
    from robustcmu.adversary import RNExponent

    ell = np.full(t.size, float(c))
    return [RNExponent(t, ell, ell, np.zeros_like(ell))] * 2


def test_divergence_penalty_cases():
    t = np.linspace(0, 20, 20001)
    div = DivergenceModel([1.0], [1.0], 2.0)
    disc = ExponentialDiscount(1.0)
    np.testing.assert_array_equal(divergence_penalty(_constant_exponents(0.0, t), div, disc, 20.0), 0.0)
    # oracle (quad of e^{-t} over [0, 20]): 0.9999999979388464
    np.testing.assert_allclose(
        divergence_penalty(_constant_exponents(1.0, t), div, disc, 20.0), 0.9999999979388464, rtol=1e-7
    )
    np.testing.assert_array_equal(divergence_penalty(_constant_exponents(-5.0, t), div, disc, 20.0), 0.0)
    with pytest.raises(ValueError):
        divergence_penalty(_constant_exponents(1.0, t)[:1], div, disc, 20.0)
