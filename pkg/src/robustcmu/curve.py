"""Minimizing curve: the cheapest queue vector holding a given workload.

For a workload ``w`` the curve ``f(w)`` minimizes ``C(q)`` over ``q >= 0`` with
``theta . q = w``.  At the optimum all marginal indices ``mu_i C_i'(f_i)``
share a common value ``eta``; with power costs each ``f_i`` is an explicit
function of ``eta``, so the problem reduces to a monotone scalar root.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CostModel, SystemConfig

FEASIBILITY_TOL = 1e-13  # relative to w
_MAX_BISECTIONS = 2000


@dataclass(frozen=True)
class CurveSolution:
    w: float
    f: np.ndarray
    eta: float


def _index_scale(config: SystemConfig, cost: CostModel) -> np.ndarray:
    # mu_i * C_i'(x) = scale_i * x**(p_i - 1)
    return config.mu * cost.c * cost.p


def index_inverse(eta: float, i: int, config: SystemConfig, cost: CostModel) -> float:
    """The queue length ``x >= 0`` at which class ``i`` has index ``mu_i C_i'(x) = eta``."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    if eta == 0:
        return 0.0
    scale = config.mu[i] * cost.c[i] * cost.p[i]
    return float((eta / scale) ** (1.0 / (cost.p[i] - 1.0)))


def _queues_at(eta: float, scale: np.ndarray, cost: CostModel) -> np.ndarray:
    return (eta / scale) ** (1.0 / (cost.p - 1.0))


def solve_f(w: float, config: SystemConfig, cost: CostModel) -> CurveSolution:
    """Bisection on the common index until ``|theta . f - w| <= 1e-13 w`` (or the bracket stops shrinking)."""
    w = float(w)
    if not w >= 0:
        raise ValueError(f"workload must be nonnegative, got {w}")
    size = config.classes
    if w == 0:
        return CurveSolution(0.0, np.zeros(size), 0.0)
    scale = _index_scale(config, cost)
    tol = FEASIBILITY_TOL * w

    lo, hi = 0.0, 1.0
    while config.theta @ _queues_at(hi, scale, cost) < w:
        lo, hi = hi, 2.0 * hi
    eta = hi
    for _ in range(_MAX_BISECTIONS):
        eta = 0.5 * (lo + hi)
        gap = config.theta @ _queues_at(eta, scale, cost) - w
        if abs(gap) <= tol or not lo < eta < hi:
            break
        if gap < 0:
            lo = eta
        else:
            hi = eta
    return CurveSolution(w, _queues_at(eta, scale, cost), float(eta))


def check_optimality_oracle(
    w: float,
    solution,
    sample_count: int,
    config: SystemConfig,
    cost: CostModel,
    rng: np.random.Generator | None = None,
) -> float:
    """Largest amount by which ``C(solution)`` exceeds ``C(q)`` over random feasible ``q``.

    Feasible points are uniform on ``{q >= 0 : theta . q = w}``.  A true
    minimizer gives a value ``<= 0`` up to rounding.
    """
    f = solution.f if isinstance(solution, CurveSolution) else np.asarray(solution, dtype=float)
    if w == 0:
        return 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    weights = rng.dirichlet(np.ones(config.classes), size=sample_count)
    q = w * weights / config.theta
    return float(np.max(cost.total(f) - cost.total(q)))


class CurveTable:
    """Vectorized evaluation of ``f`` for simulator hot paths.

    A geometric ``w``-grid stores ``log eta``; lookups interpolate in log-log
    space, then a few Newton steps on ``log eta`` make the result exact to
    rounding.  Points outside the table are handled by the same Newton polish
    starting from the extrapolated guess.
    """

    def __init__(
        self,
        config: SystemConfig,
        cost: CostModel,
        w_max: float = 100.0,
        points: int = 4096,
        w_min: float | None = None,
    ):
        self.config = config
        self.cost = cost
        self._theta = np.asarray(config.theta)
        self._log_scale = np.log(_index_scale(config, cost))
        self._inv_pm1 = 1.0 / (np.asarray(cost.p) - 1.0)
        w_min = w_max * 1e-8 if w_min is None else w_min
        self.log_w = np.linspace(np.log(w_min), np.log(w_max), points)
        self.log_eta = np.array([np.log(solve_f(np.exp(lw), config, cost).eta) for lw in self.log_w])
        self.log_w.flags.writeable = False
        self.log_eta.flags.writeable = False
        dw = self.log_w[1] - self.log_w[0]
        self._slope_lo = (self.log_eta[1] - self.log_eta[0]) / dw
        self._slope_hi = (self.log_eta[-1] - self.log_eta[-2]) / dw

    def _guess(self, log_w: np.ndarray) -> np.ndarray:
        u = np.interp(log_w, self.log_w, self.log_eta)
        below = log_w < self.log_w[0]
        above = log_w > self.log_w[-1]
        u[below] = self.log_eta[0] + self._slope_lo * (log_w[below] - self.log_w[0])
        u[above] = self.log_eta[-1] + self._slope_hi * (log_w[above] - self.log_w[-1])
        return u

    def __call__(self, w) -> np.ndarray:
        """``f(w)`` for an array of workloads; output has a trailing class axis."""
        w = np.asarray(w, dtype=float)
        shape = w.shape
        flat = w.reshape(-1)
        out = np.zeros((flat.size, self.config.classes))
        pos = flat > 0
        if np.any(pos):
            log_w = np.log(flat[pos])
            u = self._guess(log_w)
            for _ in range(60):
                terms = self._theta * np.exp((u[:, None] - self._log_scale) * self._inv_pm1)
                total = terms.sum(axis=1)
                phi = np.log(total) - log_w
                if np.max(np.abs(phi)) < 1e-14:
                    break
                u = u - phi * total / (terms * self._inv_pm1).sum(axis=1)
            x = np.exp((u[:, None] - self._log_scale) * self._inv_pm1)
            # exact feasibility
            out[pos] = x * (flat[pos] / (x @ self._theta))[:, None]
        return out.reshape(shape + (self.config.classes,))
