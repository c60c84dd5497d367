"""Flat ``key = value`` configuration files.

Grammar (one assignment per line, ``#`` starts a comment, vectors are
whitespace separated)::

    classes     = 2
    lambda      = 0.5 0.5
    mu          = 1.0 1.0
    lambda_hat  = 0 0
    mu_hat      = 1 1
    x0_hat      = 0 0
    cost.c      = 1 1
    cost.p      = 2 2
    div.kappa_A = 1 1
    div.kappa_S = 1 1
    div.pbar    = 2
    discount    = exp 1.0            # or: horizon 10.0
    adversary   = zero               # const v1..v2I | feedback <rule> k [level] | schedule <file>
    adversary.delta = 0.1
    adversary.bound = 2.0

Optional simulation and study keys: ``sim.horizon``, ``sim.step``,
``sim.grid_points``, ``family.arrival_levels``, ``family.service_levels``,
``family.feedback`` (repeatable), ``study.kind``, ``study.n_grid``,
``study.reps``, ``study.limit_reps``, ``study.seed``, ``study.out``,
``study.policy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .adversary import (
    DEFAULT_BOUND,
    DEFAULT_DELTA,
    AdversaryStrategy,
    constant_grid,
    parse_strategy,
)
from .errors import ConfigError, DimensionMismatch, ParseError
from .model import (
    CostModel,
    Discount,
    DivergenceModel,
    ExponentialDiscount,
    FiniteHorizon,
    SystemConfig,
    check_exponent_order,
)

STUDY_KINDS = ("convergence", "collapse", "policy_dominance", "value_limit")

_VECTOR_KEYS = {
    "lambda", "mu", "lambda_hat", "mu_hat", "x0_hat", "cost.c", "cost.p", "div.kappa_A", "div.kappa_S",
    "family.arrival_levels", "family.service_levels", "study.n_grid",
}
_SCALAR_KEYS = {
    "classes", "div.pbar", "adversary.delta", "adversary.bound", "sim.horizon", "sim.step",
    "sim.grid_points", "study.reps", "study.limit_reps", "study.seed",
}
_TEXT_KEYS = {"discount", "adversary", "family.feedback", "study.kind", "study.out", "study.policy"}
_REPEATABLE = {"family.feedback"}


@dataclass(frozen=True)
class StudySpec:
    kind: str = "convergence"
    n_grid: tuple[int, ...] = (16, 64, 256)
    reps: int = 2000
    limit_reps: int = 4000
    seed: int = 0
    out: str | None = None
    policy: str = "cmu_preemptive"

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}; choose from {', '.join(STUDY_KINDS)}")
        if not self.n_grid:
            raise ConfigError("study.n_grid must not be empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("study.n_grid must be strictly increasing")
        if any(n < 1 for n in self.n_grid):
            raise ConfigError("scaling parameters must be positive")
        if self.reps < 2 or self.limit_reps < 2:
            raise ConfigError("studies need at least two replications")


@dataclass(frozen=True)
class SimSettings:
    horizon: float | None = None
    step: float | None = None
    grid_points: int = 2000


@dataclass(frozen=True)
class ConfigBundle:
    config: SystemConfig
    cost: CostModel
    divergence: DivergenceModel
    discount: Discount
    study: StudySpec
    adversary: AdversaryStrategy
    family: list = field(default_factory=list)
    sim: SimSettings = SimSettings()
    source: str | None = None

    @property
    def horizon(self) -> float:
        return self.discount.effective_horizon() if self.sim.horizon is None else self.sim.horizon


def _read(path):
    entries: dict[str, tuple[object, int]] = {}
    repeated: dict[str, list[tuple[str, int]]] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key:
                raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
            if key in _REPEATABLE:
                repeated.setdefault(key, []).append((value, lineno))
                continue
            if key in entries:
                raise ParseError(f"duplicate key {key!r}", line=lineno)
            if key in _TEXT_KEYS:
                entries[key] = (value, lineno)
            elif key in _VECTOR_KEYS or key in _SCALAR_KEYS:
                try:
                    numbers = [float(v) for v in value.split()]
                except ValueError:
                    raise ParseError(f"non-numeric value for {key!r}: {value!r}", line=lineno) from None
                if not numbers:
                    raise ParseError(f"missing value for {key!r}", line=lineno)
                if key in _SCALAR_KEYS:
                    if len(numbers) != 1:
                        raise ParseError(f"{key!r} takes a single number", line=lineno)
                    entries[key] = (numbers[0], lineno)
                else:
                    entries[key] = (numbers, lineno)
            else:
                raise ParseError(f"unknown key {key!r}", line=lineno)
    return entries, repeated


def _vector(entries, key, size, default=None):
    if key not in entries:
        if default is None:
            raise ParseError(f"missing required key {key!r}")
        return [default] * size
    values, lineno = entries[key]
    if len(values) != size:
        raise DimensionMismatch(f"{key} has {len(values)} entries but classes = {size}", line=lineno)
    return values


def _with_line(entries, key, build):
    try:
        return build()
    except ConfigError as exc:
        if exc.line is None and key in entries:
            raise type(exc)(str(exc), line=entries[key][1]) from None
        raise


def _discount(entries) -> Discount:
    if "discount" not in entries:
        return ExponentialDiscount(1.0)
    text, lineno = entries["discount"]
    parts = text.split()
    try:
        if len(parts) == 2 and parts[0] == "exp":
            return ExponentialDiscount(float(parts[1]))
        if len(parts) == 2 and parts[0] == "horizon":
            return FiniteHorizon(float(parts[1]))
    except ValueError:
        pass
    except ConfigError as exc:
        raise type(exc)(str(exc), line=lineno) from None
    raise ParseError(f"discount must be 'exp <rate>' or 'horizon <T>', got {text!r}", line=lineno)


def parse_config(path) -> ConfigBundle:
    """Read and validate a configuration file; the first error reports its line number."""
    path = Path(path)
    entries, repeated = _read(path)
    if "lambda" not in entries:
        raise ParseError("missing required key 'lambda'")
    size = int(entries["classes"][0]) if "classes" in entries else len(entries["lambda"][0])
    if size < 1:
        raise ParseError("classes must be positive", line=entries["classes"][1])
    lam = _vector(entries, "lambda", size)
    mu = _vector(entries, "mu", size)
    lam_hat = _vector(entries, "lambda_hat", size, 0.0)
    mu_hat = _vector(entries, "mu_hat", size, 0.0)
    x0_hat = _vector(entries, "x0_hat", size, 0.0)

    def build_system():
        return SystemConfig(lam, mu, lam_hat, mu_hat, x0_hat)

    key = "mu" if "mu" in entries else "lambda"
    config = _with_line(entries, key, build_system)

    cost = _with_line(
        entries, "cost.p", lambda: CostModel(_vector(entries, "cost.c", size, 1.0), _vector(entries, "cost.p", size, 2.0))
    )
    pbar = entries.get("div.pbar", (2.0, None))[0]
    divergence = _with_line(
        entries,
        "div.pbar",
        lambda: DivergenceModel(
            _vector(entries, "div.kappa_A", size, 1.0), _vector(entries, "div.kappa_S", size, 1.0), pbar
        ),
    )
    check_exponent_order(cost, divergence, line=entries.get("div.pbar", (None, None))[1])
    discount = _discount(entries)

    delta = entries.get("adversary.delta", (DEFAULT_DELTA, None))[0]
    bound = entries.get("adversary.bound", (DEFAULT_BOUND, None))[0]
    adv_text = entries.get("adversary", ("zero", None))[0]
    adversary = _with_line(
        entries, "adversary", lambda: parse_strategy(adv_text, size, delta, bound, base_dir=path.parent)
    )

    arrival_levels = entries.get("family.arrival_levels", ((0.0, 0.5, 1.0), None))[0]
    service_levels = entries.get("family.service_levels", ((0.0, -0.5, -1.0), None))[0]
    family = _with_line(
        entries, "family.arrival_levels", lambda: constant_grid(size, arrival_levels, service_levels, delta, bound)
    )
    for text, lineno in repeated.get("family.feedback", [("boundary 1", None)]):
        try:
            family.append(parse_strategy("feedback " + text, size, delta, bound))
        except ConfigError as exc:
            raise type(exc)(str(exc), line=lineno) from None

    sim = SimSettings(
        horizon=entries.get("sim.horizon", (None, None))[0],
        step=entries.get("sim.step", (None, None))[0],
        grid_points=int(entries.get("sim.grid_points", (2000, None))[0]),
    )
    study = _with_line(
        entries,
        "study.n_grid",
        lambda: StudySpec(
            kind=entries.get("study.kind", ("convergence", None))[0],
            n_grid=tuple(int(v) for v in entries.get("study.n_grid", ((16, 64, 256), None))[0]),
            reps=int(entries.get("study.reps", (2000, None))[0]),
            limit_reps=int(entries.get("study.limit_reps", (4000, None))[0]),
            seed=int(entries.get("study.seed", (0, None))[0]),
            out=entries.get("study.out", (None, None))[0],
            policy=entries.get("study.policy", ("cmu_preemptive", None))[0],
        ),
    )
    return ConfigBundle(config, cost, divergence, discount, study, adversary, family, sim, str(path))
