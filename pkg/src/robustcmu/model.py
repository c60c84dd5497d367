"""Problem parameters: rates, holding costs, divergence penalties and discounting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    CriticalLoadViolation,
    DimensionMismatch,
    ExponentOrderViolation,
    NonPositiveRate,
    RateUnderflow,
)

CRITICAL_LOAD_TOL = 1e-12


def _frozen(values, name: str, size: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise DimensionMismatch(f"{name} has {arr.size} entries, expected {size}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """First- and second-order rates of the critically loaded system.

    Derived quantities (``rho``, ``theta``, ``m_hat``, ``sigma``, ``sigma_s``)
    are computed once on construction.
    """

    lam: np.ndarray
    mu: np.ndarray
    lam_hat: np.ndarray
    mu_hat: np.ndarray
    x0_hat: np.ndarray
    rho: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)
    m_hat: np.ndarray = field(init=False, repr=False)
    sigma: np.ndarray = field(init=False, repr=False)
    sigma_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lam = _frozen(self.lam, "lambda")
        size = lam.size
        if size < 1:
            raise DimensionMismatch("at least one class is required")
        mu = _frozen(self.mu, "mu", size)
        lam_hat = _frozen(self.lam_hat, "lambda_hat", size)
        mu_hat = _frozen(self.mu_hat, "mu_hat", size)
        x0_hat = _frozen(self.x0_hat, "x0_hat", size)
        if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
            raise NonPositiveRate(f"arrival rates must be positive, got {lam.tolist()}")
        if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise NonPositiveRate(f"service rates must be positive, got {mu.tolist()}")
        if np.any(x0_hat < 0):
            raise ConfigError("x0_hat must be nonnegative")
        rho = lam / mu
        load = float(np.sum(rho))
        if abs(load - 1.0) > CRITICAL_LOAD_TOL:
            raise CriticalLoadViolation(f"sum of rho_i is {load!r}, must equal 1")
        for name, value in (
            ("lam", lam),
            ("mu", mu),
            ("lam_hat", lam_hat),
            ("mu_hat", mu_hat),
            ("x0_hat", x0_hat),
            ("rho", rho),
            ("theta", 1.0 / mu),
            ("m_hat", lam_hat - rho * mu_hat),
            ("sigma", np.sqrt(lam)),
            ("sigma_s", np.sqrt(mu)),
        ):
            object.__setattr__(self, name, _frozen(value, name))

    @property
    def classes(self) -> int:
        return self.lam.size


@dataclass(frozen=True)
class ScaledRates:
    """Rates of the n-th system together with the perturbation scales ``sqrt(lam*n)``, ``sqrt(mu*n)``."""

    n: int
    lam_n: np.ndarray
    mu_n: np.ndarray
    rho: np.ndarray
    arrival_scale: np.ndarray
    service_scale: np.ndarray

    @property
    def theta_n(self) -> np.ndarray:
        return self.n / self.mu_n

    @property
    def m_hat_n(self) -> np.ndarray:
        return (self.lam_n - self.rho * self.mu_n) / math.sqrt(self.n)


def derived_rates(config: SystemConfig, n: int) -> ScaledRates:
    """Rates of the n-th system: ``lam*n + lam_hat*sqrt(n)`` and likewise for mu."""
    if int(n) != n or n < 1:
        raise RateUnderflow(f"scaling parameter must be a positive integer, got {n}")
    n = int(n)
    root = math.sqrt(n)
    lam_n = config.lam * n + config.lam_hat * root
    mu_n = config.mu * n + config.mu_hat * root
    if np.any(lam_n <= 0) or np.any(mu_n <= 0):
        raise RateUnderflow(
            f"n={n} too small: scaled rates lambda_n={lam_n.tolist()}, mu_n={mu_n.tolist()}"
        )
    return ScaledRates(
        n,
        _frozen(lam_n, "lambda_n"),
        _frozen(mu_n, "mu_n"),
        config.rho,
        _frozen(np.sqrt(config.lam * n), "arrival_scale"),
        _frozen(np.sqrt(config.mu * n), "service_scale"),
    )


@dataclass(frozen=True)
class CostModel:
    """Separable power holding cost ``C(x) = sum_i c_i * x_i**p_i`` with ``p_i > 1``."""

    c: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        c = _frozen(self.c, "cost.c")
        p = _frozen(self.p, "cost.p", c.size)
        if np.any(c <= 0):
            raise NonPositiveRate(f"cost coefficients must be positive, got {c.tolist()}")
        if np.any(p <= 1):
            raise ExponentOrderViolation(f"cost exponents must exceed 1, got {p.tolist()}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "p", p)

    @property
    def p_max(self) -> float:
        return float(np.max(self.p))

    @property
    def c0(self) -> float:
        return float(np.max(self.c))

    def per_class(self, x):
        """Per-class costs; the class axis is last."""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.c * x**self.p

    def total(self, x):
        return np.sum(self.per_class(x), axis=-1)

    def derivative(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return self.c * self.p * x ** (self.p - 1.0)


@dataclass(frozen=True)
class DivergenceModel:
    """Penalty functions ``g_{j,i}(x) = kappa_{j,i} * max(x, 0)**pbar``."""

    kappa_a: np.ndarray
    kappa_s: np.ndarray
    pbar: float

    def __post_init__(self):
        ka = _frozen(self.kappa_a, "div.kappa_A")
        ks = _frozen(self.kappa_s, "div.kappa_S", ka.size)
        if np.any(ka <= 0) or np.any(ks <= 0):
            raise NonPositiveRate("divergence weights must be positive")
        if not self.pbar >= 1:
            raise ExponentOrderViolation(f"div.pbar must be >= 1, got {self.pbar}")
        object.__setattr__(self, "kappa_a", ka)
        object.__setattr__(self, "kappa_s", ks)
        object.__setattr__(self, "pbar", float(self.pbar))

    @property
    def kappa(self) -> np.ndarray:
        """Weights in stream order (A_1..A_I, S_1..S_I)."""
        return np.concatenate([self.kappa_a, self.kappa_s])

    def g(self, x, kappa):
        return kappa * np.maximum(np.asarray(x, dtype=float), 0.0) ** self.pbar


class Discount:
    """Base class for discount functions; ``weight(t)`` is non-increasing."""

    def weight(self, t):
        raise NotImplementedError

    def effective_horizon(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialDiscount(Discount):
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise NonPositiveRate(f"discount rate must be positive, got {self.gamma}")

    def weight(self, t):
        return np.exp(-self.gamma * np.asarray(t, dtype=float))

    def effective_horizon(self) -> float:
        return max(20.0 / self.gamma, 20.0)

    def describe(self) -> str:
        return f"exp {self.gamma:g}"


@dataclass(frozen=True)
class FiniteHorizon(Discount):
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise NonPositiveRate(f"horizon must be positive, got {self.horizon}")

    def weight(self, t):
        return (np.asarray(t, dtype=float) <= self.horizon).astype(float)

    def effective_horizon(self) -> float:
        return float(self.horizon)

    def describe(self) -> str:
        return f"horizon {self.horizon:g}"


def check_exponent_order(cost: CostModel, divergence: DivergenceModel, line: int | None = None):
    if divergence.pbar < cost.p_max:
        raise ExponentOrderViolation(
            f"div.pbar={divergence.pbar:g} is below the cost growth exponent p={cost.p_max:g}",
            line=line,
        )
    if cost.c.size != divergence.kappa_a.size:
        raise DimensionMismatch("cost and divergence models disagree on the number of classes")


def validate_config(raw: Mapping[str, Sequence[float] | float]) -> SystemConfig:
    """Build a :class:`SystemConfig` from raw numeric parameters.

    Recognised keys: ``lambda``, ``mu`` (required), ``lambda_hat``, ``mu_hat``,
    ``x0_hat`` (default zeros), ``classes`` (optional dimension check) and,
    when both present, ``cost.p`` and ``div.pbar`` for the exponent-order check.
    """
    lam = np.atleast_1d(np.asarray(raw["lambda"], dtype=float))
    size = int(raw.get("classes", lam.size))
    zeros = np.zeros(size)
    if lam.size != size:
        raise DimensionMismatch(f"lambda has {lam.size} entries, expected {size}")
    config = SystemConfig(
        lam=lam,
        mu=_frozen(raw["mu"], "mu", size),
        lam_hat=_frozen(raw.get("lambda_hat", zeros), "lambda_hat", size),
        mu_hat=_frozen(raw.get("mu_hat", zeros), "mu_hat", size),
        x0_hat=_frozen(raw.get("x0_hat", zeros), "x0_hat", size),
    )
    if "cost.p" in raw and "div.pbar" in raw:
        p = float(np.max(np.atleast_1d(raw["cost.p"])))
        pbar = float(np.atleast_1d(raw["div.pbar"])[0])
        if pbar < p:
            raise ExponentOrderViolation(f"div.pbar={pbar:g} is below p={p:g}")
    return config
