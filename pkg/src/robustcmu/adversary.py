"""Bounded perturbation strategies for the adversary and likelihood-ratio bookkeeping.

A strategy emits a vector ``psi_hat`` of length ``2I`` ordered
``(A_1..A_I, S_1..S_I)``, held constant on intervals ``[l*delta, (l+1)*delta)``.
The same strategy object drives both the queueing simulation and the limiting
diffusion, so their costs are directly comparable.

Only this bounded, grid-constant, state-feedback subclass of the admissible
measures is searched, so any maximum over it is a lower bound on the true
supremum.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import ConfigError, NonPositiveIntensity
from .model import Discount, DivergenceModel

log = logging.getLogger(__name__)

DEFAULT_DELTA = 0.1
DEFAULT_BOUND = 2.0

ZERO, CONSTANT, SCHEDULE, FEEDBACK = 0, 1, 2, 3
_KIND_NAMES = {ZERO: "zero", CONSTANT: "const", SCHEDULE: "schedule", FEEDBACK: "feedback"}

# named feedback rules; each reads the scaled queue vector at decision times
FEEDBACK_RULES = {
    # raise the arrival rate of every empty class to +k
    "boundary": 0,
    # once the workload theta.x reaches `level`, arrivals +k and services -k
    "threshold": 1,
}


@numba.njit(cache=True, nogil=True)
def _emit(kind, table, rule, k, level, theta, grid_index, x_hat, out):
    size = x_hat.shape[0]
    if kind == 0:
        out[:] = 0.0
    elif kind == 1:
        out[:] = table[0]
    elif kind == 2:
        row = grid_index if grid_index < table.shape[0] else table.shape[0] - 1
        out[:] = table[row]
    else:
        out[:] = 0.0
        if rule == 0:
            for i in range(size):
                if x_hat[i] == 0.0:
                    out[i] = k
        elif rule == 1:
            workload = 0.0
            for i in range(size):
                workload += theta[i] * x_hat[i]
            if workload >= level:
                for i in range(size):
                    out[i] = k
                    out[size + i] = -k
    for m in range(out.shape[0]):
        if out[m] > k:
            out[m] = k
        elif out[m] < -k:
            out[m] = -k


@numba.njit(cache=True, nogil=True)
def _emit_batch(kind, table, rule, k, level, theta, grid_index, x_hat, out):
    for r in range(x_hat.shape[0]):
        _emit(kind, table, rule, k, level, theta, grid_index, x_hat[r], out[r])


@dataclass(frozen=True)
class AdversaryStrategy:
    """A rule producing ``psi_hat`` in ``[-bound, bound]^{2I}`` on a ``delta``-grid.

    Build instances with :meth:`zero`, :meth:`constant`, :meth:`schedule` or
    :meth:`feedback`.
    """

    kind: int
    classes: int
    table: np.ndarray
    delta: float = DEFAULT_DELTA
    bound: float = DEFAULT_BOUND
    rule: str | None = None
    rule_k: float = 0.0
    level: float = 1.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError(f"adversary delta must be positive, got {self.delta}")
        if not self.bound > 0:
            raise ConfigError(f"adversary bound must be positive, got {self.bound}")
        table = np.array(self.table, dtype=float).reshape(-1, 2 * self.classes)
        if np.any(np.abs(table) > self.bound):
            raise ConfigError(f"perturbation values must lie in [-{self.bound}, {self.bound}]")
        if self.kind == FEEDBACK and self.rule not in FEEDBACK_RULES:
            raise ConfigError(f"unknown feedback rule {self.rule!r}")
        if self.kind == FEEDBACK and not 0 < self.rule_k <= self.bound:
            raise ConfigError(f"feedback level k={self.rule_k} outside (0, {self.bound}]")
        table.flags.writeable = False
        object.__setattr__(self, "table", table)
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self) -> str:
        if self.kind == ZERO:
            return "zero"
        if self.kind == CONSTANT:
            return "const(" + ",".join(f"{v:g}" for v in self.table[0]) + ")"
        if self.kind == SCHEDULE:
            return f"schedule[{self.table.shape[0]}]"
        return f"feedback:{self.rule}:{self.rule_k:g}"

    @classmethod
    def zero(cls, classes: int, delta: float = DEFAULT_DELTA, bound: float = DEFAULT_BOUND):
        return cls(ZERO, classes, np.zeros((1, 2 * classes)), delta, bound)

    @classmethod
    def constant(cls, values, delta: float = DEFAULT_DELTA, bound: float = DEFAULT_BOUND):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size % 2:
            raise ConfigError("a constant perturbation needs 2I values")
        return cls(CONSTANT, values.size // 2, values[None, :], delta, bound)

    @classmethod
    def schedule(cls, table, delta: float = DEFAULT_DELTA, bound: float = DEFAULT_BOUND, label: str = ""):
        """Row ``l`` applies on ``[l*delta, (l+1)*delta)``; the last row is held afterwards."""
        table = np.atleast_2d(np.asarray(table, dtype=float))
        if table.shape[1] % 2:
            raise ConfigError("schedule rows need 2I values")
        return cls(SCHEDULE, table.shape[1] // 2, table, delta, bound, label=label)

    @classmethod
    def feedback(
        cls,
        rule: str,
        k: float,
        classes: int,
        delta: float = DEFAULT_DELTA,
        bound: float = DEFAULT_BOUND,
        level: float = 1.0,
    ):
        return cls(FEEDBACK, classes, np.zeros((1, 2 * classes)), delta, bound, rule, float(k), float(level))

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO or (self.kind in (CONSTANT, SCHEDULE) and not np.any(self.table))

    @property
    def rule_code(self) -> int:
        return FEEDBACK_RULES.get(self.rule, -1)

    def kernel_args(self, theta: np.ndarray):
        """Positional arguments for the compiled evaluator, after ``kind``/``table``."""
        return (
            self.kind,
            np.ascontiguousarray(self.table),
            self.rule_code,
            float(self.bound if self.kind != FEEDBACK else self.rule_k),
            float(self.level),
            np.ascontiguousarray(theta, dtype=float),
        )

    def grid_index(self, t: float) -> int:
        return int(math.floor(t / self.delta + 1e-12))


def eval_strategy(strategy: AdversaryStrategy, grid_index: int, x_hat, theta=None) -> np.ndarray:
    """The perturbation vector in force on ``[l*delta, (l+1)*delta)`` given the scaled state."""
    if grid_index < 0:
        raise ValueError("grid index must be nonnegative")
    x_hat = np.ascontiguousarray(x_hat, dtype=float)
    theta = np.ones(strategy.classes) if theta is None else theta
    out = np.empty(2 * strategy.classes)
    kind, table, rule, k, level, theta = strategy.kernel_args(theta)
    _emit(kind, table, rule, k, level, theta, int(grid_index), x_hat, out)
    # the clip inside the kernel uses the rule level; enforce the strategy box as well
    return np.clip(out, -strategy.bound, strategy.bound)


def eval_strategy_batch(strategy: AdversaryStrategy, grid_index: int, x_hat, theta) -> np.ndarray:
    """Row-wise :func:`eval_strategy` for a ``(reps, I)`` array of states."""
    x_hat = np.ascontiguousarray(x_hat, dtype=float)
    out = np.empty((x_hat.shape[0], 2 * strategy.classes))
    if strategy.kind in (ZERO, CONSTANT):
        out[:] = strategy.table[0]
        return out
    kind, table, rule, k, level, theta = strategy.kernel_args(theta)
    _emit_batch(kind, table, rule, k, level, theta, int(grid_index), x_hat, out)
    return out


def constant_grid(
    classes: int,
    arrival_levels=(0.0, 0.5, 1.0),
    service_levels=(0.0, -0.5, -1.0),
    delta: float = DEFAULT_DELTA,
    bound: float = DEFAULT_BOUND,
) -> list[AdversaryStrategy]:
    """Constant strategies with every arrival entry at ``a`` and every service entry at ``b``."""
    out = []
    for a in arrival_levels:
        for b in service_levels:
            if a == 0 and b == 0:
                out.append(AdversaryStrategy.zero(classes, delta, bound))
            else:
                out.append(AdversaryStrategy.constant([a] * classes + [b] * classes, delta, bound))
    return out


def default_family(classes: int, delta: float = DEFAULT_DELTA, bound: float = DEFAULT_BOUND):
    """Zero, a 3x3 constant grid in ``[-1, 1]`` and the boundary feedback rule with k=1."""
    family = constant_grid(classes, delta=delta, bound=bound)
    family.append(AdversaryStrategy.feedback("boundary", 1.0, classes, delta, bound))
    return family


def load_schedule(path, classes: int, delta: float = DEFAULT_DELTA, bound: float = DEFAULT_BOUND):
    """Read a ``grid_index, psi_hat_1, ..., psi_hat_2I`` CSV; gaps hold the previous row."""
    rows = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                idx = int(rec[0])
            except ValueError:
                continue  # header
            vals = [float(v) for v in rec[1:]]
            if len(vals) != 2 * classes:
                raise ConfigError(f"{path}: schedule row {idx} has {len(vals)} values, expected {2 * classes}")
            rows[idx] = vals
    if not rows:
        raise ConfigError(f"{path}: empty schedule")
    table = np.zeros((max(rows) + 1, 2 * classes))
    current = np.zeros(2 * classes)
    for l in range(table.shape[0]):
        if l in rows:
            current = np.asarray(rows[l])
        table[l] = current
    return AdversaryStrategy.schedule(table, delta, bound, label=f"schedule:{Path(path).name}")


def parse_strategy(text: str, classes: int, delta=DEFAULT_DELTA, bound=DEFAULT_BOUND, base_dir=None):
    """Parse ``zero | const v1 .. v2I | feedback <rule> k [level] | schedule <file>``."""
    parts = text.split()
    if not parts:
        raise ConfigError("empty adversary specification")
    head = parts[0]
    if head == "zero" and len(parts) == 1:
        return AdversaryStrategy.zero(classes, delta, bound)
    if head == "const":
        values = [float(v) for v in parts[1:]]
        if len(values) != 2 * classes:
            raise ConfigError(f"const needs {2 * classes} values, got {len(values)}")
        return AdversaryStrategy.constant(values, delta, bound)
    if head == "feedback" and len(parts) in (3, 4):
        level = float(parts[3]) if len(parts) == 4 else 1.0
        return AdversaryStrategy.feedback(parts[1], float(parts[2]), classes, delta, bound, level)
    if head == "schedule" and len(parts) == 2:
        path = Path(parts[1])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_schedule(path, classes, delta, bound)
    raise ConfigError(f"cannot parse adversary specification {text!r}")


@dataclass(frozen=True)
class RNExponent:
    """Log likelihood-ratio path ``ell = H + G`` of one stream.

    ``H`` is the martingale part under the perturbed measure and ``G`` the
    compensator part.
    """

    times: np.ndarray
    ell: np.ndarray
    H: np.ndarray
    G: np.ndarray


def rn_exponent_poisson(
    event_times,
    knots,
    intensity,
    reference_rate: float,
    eval_times=None,
    exposure=None,
) -> RNExponent:
    """Log density of a point process with piecewise-constant intensity against rate ``r``.

    ``intensity[m]`` applies on ``[knots[m], knots[m+1])`` (the last value
    forever).  For a service stream pass ``exposure[m]``, the fraction of
    effort on each piece, so the compensator integrates against ``dT``.
    Within one piece the exponent is ``count*log(psi/r) - (psi - r)*exposure``
    evaluated in that order, so a single constant piece reproduces the
    closed form exactly.
    """
    knots = np.asarray(knots, dtype=float).reshape(-1)
    psi = np.asarray(intensity, dtype=float).reshape(-1)
    if knots.size != psi.size or knots[0] != 0.0:
        raise ValueError("knots must start at 0 and match the intensity values")
    if np.any(psi <= 0) or reference_rate <= 0:
        raise NonPositiveIntensity("intensities must be positive")
    u = np.ones_like(psi) if exposure is None else np.asarray(exposure, dtype=float).reshape(-1)
    events = np.sort(np.asarray(event_times, dtype=float).reshape(-1))
    if eval_times is None:
        eval_times = np.unique(np.concatenate([[0.0], knots, events]))
    eval_times = np.asarray(eval_times, dtype=float)

    log_ratio = np.log(psi / reference_rate)
    excess = psi - reference_rate
    kl_rate = psi * log_ratio - psi + reference_rate
    # predictable: an event at a knot is charged to the piece before it
    event_piece = np.maximum(np.searchsorted(knots, events, side="left") - 1, 0)
    seg_len = np.diff(np.append(knots, np.inf))

    ell = np.empty(eval_times.size)
    comp = np.empty(eval_times.size)
    for idx, t in enumerate(eval_times):
        m = int(np.searchsorted(knots, t, side="right") - 1)
        before = events <= t
        counts = np.bincount(event_piece[before], minlength=knots.size)
        ell_t = 0.0
        g_t = 0.0
        for j in range(m):
            ell_t += counts[j] * log_ratio[j] - excess[j] * u[j] * seg_len[j]
            g_t += kl_rate[j] * u[j] * seg_len[j]
        span = t - knots[m]
        ell_t += counts[m] * log_ratio[m] - excess[m] * u[m] * span
        g_t += kl_rate[m] * u[m] * span
        ell[idx] = ell_t
        comp[idx] = g_t
    return RNExponent(eval_times, ell, ell - comp, comp)


def rn_exponent_brownian(psi_hat, increments, h: float, measure: str = "Q", clock_rate: float = 1.0) -> RNExponent:
    """Girsanov exponent accumulated on an Euler grid.

    ``psi_hat[..., k]`` applies on step ``k``; ``increments`` are Brownian
    increments on the stream's clock (variance ``clock_rate*h``).  With
    ``measure="Q"`` they are increments of the perturbed-measure Brownian
    motion and ``ell = int psi dB^Q + 1/2 int psi^2``; with ``measure="P"``
    they are reference increments and ``ell = int psi dB - 1/2 int psi^2``.
    """
    psi_hat = np.asarray(psi_hat, dtype=float)
    dB = np.asarray(increments, dtype=float)
    psi_hat = np.broadcast_to(psi_hat, dB.shape)
    quad = 0.5 * psi_hat**2 * clock_rate * h
    if measure == "Q":
        dH = psi_hat * dB
    elif measure == "P":
        dH = psi_hat * dB - 2.0 * quad
    else:
        raise ValueError(f"measure must be 'Q' or 'P', got {measure!r}")
    pad = [(0, 0)] * (dB.ndim - 1) + [(1, 0)]
    H = np.pad(np.cumsum(dH, axis=-1), pad)
    G = np.pad(np.cumsum(quad, axis=-1), pad)
    times = h * np.arange(dB.shape[-1] + 1)
    return RNExponent(times, H + G, H, G)


def quadrature_weights(times, discount: Discount, horizon: float | None = None) -> np.ndarray:
    """Trapezoid weights ``w_k`` with ``sum_k w_k y(t_k) ~ int_0^horizon rho(t) y(t) dt``."""
    times = np.asarray(times, dtype=float)
    if horizon is not None:
        times = times[times <= horizon]
    dt = np.diff(times)
    w = np.zeros(times.size)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w * discount.weight(times)


def divergence_penalty(
    exponents,
    divergence: DivergenceModel,
    discount: Discount,
    horizon: float,
) -> np.ndarray:
    """Pathwise ``int_0^horizon rho(t) g_s(ell_s(t)) dt`` for each stream ``s``.

    ``exponents`` is a sequence of :class:`RNExponent` in stream order
    ``(A_1..A_I, S_1..S_I)``.
    """
    kappa = divergence.kappa
    if len(exponents) != kappa.size:
        raise ValueError(f"expected {kappa.size} streams, got {len(exponents)}")
    out = np.empty(kappa.size)
    for s, rn in enumerate(exponents):
        keep = rn.times <= horizon
        w = quadrature_weights(rn.times[keep], discount)
        out[s] = w @ divergence.g(rn.ell[keep], kappa[s])
    return out
