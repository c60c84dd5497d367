import numpy as np
import pytest

from robustcmu.errors import (
    ConfigError,
    CriticalLoadViolation,
    DimensionMismatch,
    ExponentOrderViolation,
    NonPositiveRate,
    RateUnderflow,
)
from robustcmu.model import (
    CostModel,
    DivergenceModel,
    ExponentialDiscount,
    FiniteHorizon,
    SystemConfig,
    check_exponent_order,
    derived_rates,
    validate_config,
)


def test_symmetric_config_derived_fields(sym_config):
    np.testing.assert_allclose(sym_config.rho, [0.5, 0.5])
    assert sym_config.rho.sum() == 1.0
    np.testing.assert_allclose(sym_config.theta, [1.0, 1.0])
    np.testing.assert_allclose(sym_config.sigma, [np.sqrt(0.5)] * 2)
    np.testing.assert_allclose(sym_config.m_hat, [-0.5, -0.5])


def test_overloaded_config_rejected():
    with pytest.raises(CriticalLoadViolation):
        validate_config({"lambda": [0.5, 0.6], "mu": [1.0, 1.0]})


def test_m_hat_matches_direct_evaluation():
    cfg = validate_config(
        {"lambda": [0.6, 0.2], "mu": [1.0, 0.5], "lambda_hat": [1.0, -1.0], "mu_hat": [0.0, 2.0]}
    )
    np.testing.assert_allclose(cfg.rho, [0.6, 0.4])
    # oracle: lambda_hat - rho * mu_hat = (1 - 0, -1 - 0.8)
    np.testing.assert_allclose(cfg.m_hat, [1.0, -1.8])


def test_arrays_are_read_only(sym_config):
    with pytest.raises(ValueError):
        sym_config.rho[0] = 1.0


@pytest.mark.parametrize(
    "raw, exc",
    [
        ({"lambda": [0.5, 0.5], "mu": [1.0]}, DimensionMismatch),
        ({"lambda": [0.0, 1.0], "mu": [1.0, 1.0]}, NonPositiveRate),
        ({"lambda": [0.5, 0.5], "mu": [1.0, -1.0]}, NonPositiveRate),
        ({"lambda": [0.5, 0.5], "mu": [1.0, 1.0], "x0_hat": [-1.0, 0.0]}, ConfigError),
        ({"lambda": [0.5, 0.5], "mu": [1.0, 1.0], "classes": 3}, DimensionMismatch),
    ],
)
def test_invalid_configs(raw, exc):
    with pytest.raises(exc):
        validate_config(raw)


def test_scaled_rates():
    cfg = SystemConfig([0.5, 0.5], [1.0, 1.0], [0.0, 2.0], [0.0, 0.0], [0.0, 0.0])
    rates = derived_rates(cfg, 100)
    assert rates.lam_n[0] == 50.0
    assert rates.lam_n[1] == 70.0
    np.testing.assert_allclose(rates.arrival_scale, np.sqrt(50.0))
    np.testing.assert_allclose(rates.m_hat_n, cfg.m_hat)
    np.testing.assert_allclose(rates.theta_n, cfg.theta)


def test_rate_underflow():
    cfg = SystemConfig([0.1, 0.9], [1.0, 1.0], [-2.0, 0.0], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(RateUnderflow):
        derived_rates(cfg, 4)
    with pytest.raises(RateUnderflow):
        derived_rates(cfg, 0)


def test_cost_model():
    cost = CostModel([1.0, 2.0], [2.0, 3.0])
    x = np.array([[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_allclose(cost.total(x), [1 + 16, 2])
    np.testing.assert_allclose(cost.derivative(np.array([1.0, 2.0])), [2.0, 24.0])
    assert cost.p_max == 3.0
    with pytest.raises(ConfigError):
        CostModel([1.0], [1.0])
    with pytest.raises(ConfigError):
        CostModel([0.0], [2.0])


def test_cost_strictly_increasing_and_convex(rng):
    cost = CostModel([0.7, 1.3], [1.5, 2.5])
    a = rng.uniform(0, 10, size=(1000, 2))
    b = a + rng.uniform(1e-3, 5, size=a.shape)
    assert np.all(cost.per_class(b) > cost.per_class(a))
    assert np.all(cost.derivative(b) > cost.derivative(a))


def test_divergence_model_and_exponent_order():
    div = DivergenceModel([1.0], [2.0], 2.0)
    np.testing.assert_allclose(div.kappa, [1.0, 2.0])
    np.testing.assert_allclose(div.g(np.array([-5.0, 3.0]), np.array([1.0, 2.0])), [0.0, 18.0])
    with pytest.raises(ExponentOrderViolation):
        check_exponent_order(CostModel([1.0], [3.0]), div)
    check_exponent_order(CostModel([1.0], [2.0]), div)


def test_discounts():
    exp = ExponentialDiscount(0.5)
    assert exp.effective_horizon() == 40.0
    assert ExponentialDiscount(5.0).effective_horizon() == 20.0
    np.testing.assert_allclose(exp.weight(np.array([0.0, 2.0])), [1.0, np.exp(-1.0)])
    fin = FiniteHorizon(3.0)
    assert fin.effective_horizon() == 3.0
    np.testing.assert_allclose(fin.weight(np.array([0.0, 2.0])), [1.0, 1.0])
    with pytest.raises(ConfigError):
        ExponentialDiscount(0.0)
