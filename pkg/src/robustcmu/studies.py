"""Experiment drivers and CSV output.

Every study is deterministic in the configuration and its master seed.
All strategies, policies and scaling parameters are driven by the same
per-replication random streams (common random numbers).
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from pathlib import Path

import numpy as np

from .adversary import CONSTANT, ZERO, AdversaryStrategy
from .config import ConfigBundle
from .curve import CurveTable
from .estimates import CostEstimate
from .limit_game import default_step, estimate_value
from .prelimit import (
    Policy,
    collapse_metric,
    estimate_qcp_cost,
    simulate_system,
)

log = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = ["n", "policy", "V_hat_n", "SE", "V_hat_limit", "SE_limit", "gap", "argmax_n", "argmax_limit"]
COLLAPSE_COLUMNS = ["n", "median_collapse_metric", "q90_collapse_metric", "reps"]


def limit_columns(classes: int) -> list[str]:
    return (
        ["strategy_id", "reps", "mean", "std_error", "holding"]
        + [f"div_A_{i + 1}" for i in range(classes)]
        + [f"div_S_{i + 1}" for i in range(classes)]
        + ["h", "T_eff", "seed"]
    )


def prelimit_columns(classes: int) -> list[str]:
    return (
        ["n", "policy", "strategy_id", "reps", "mean", "std_error", "holding"]
        + [f"div_A_{i + 1}" for i in range(classes)]
        + [f"div_S_{i + 1}" for i in range(classes)]
        + ["T_eff", "seed"]
    )


def limit_row(est: CostEstimate, h: float, horizon: float, seed: int) -> list:
    return [est.label, est.replications, est.mean, est.std_error, est.holding, *est.divergence, h, horizon, seed]


def prelimit_row(est: CostEstimate, n: int, policy: str, horizon: float, seed: int) -> list:
    return [n, policy, est.label, est.replications, est.mean, est.std_error, est.holding, *est.divergence, horizon, seed]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def dump_event_log(path, events, classes: int):
    kinds = {0: "arrival", 1: "departure", 2: "grid_tick", 3: "start"}
    columns = ["time", "kind", "class"] + [f"x_{i + 1}" for i in range(classes)] + [f"T_{i + 1}" for i in range(classes)]
    rows = (
        [t, kinds[int(k)], int(c) + 1 if c >= 0 else "", *x.tolist(), *tt.tolist()]
        for t, k, c, x, tt in zip(events.time, events.kind, events.cls, events.X, events.T)
    )
    write_csv(path, columns, rows)


def dump_trajectory(path, traj, classes: int):
    columns = (
        ["t"]
        + [f"xhat_{i + 1}" for i in range(classes)]
        + [f"yhat_{i + 1}" for i in range(classes)]
        + [f"rn_A_{i + 1}" for i in range(classes)]
        + [f"rn_S_{i + 1}" for i in range(classes)]
    )
    table = np.column_stack([traj.times, traj.x_hat, traj.y_hat, traj.ell])
    write_csv(path, columns, (row.tolist() for row in table))


def _limit_step(bundle: ConfigBundle) -> float:
    return default_step(bundle.horizon) if bundle.sim.step is None else bundle.sim.step


def run_value_limit_study(bundle: ConfigBundle, out=None):
    """Limit-game cost of every strategy in the family; returns ``(best, estimate, rows)``."""
    spec = bundle.study
    h = _limit_step(bundle)
    best, best_est, results = estimate_value(
        bundle.config, bundle.cost, bundle.divergence, bundle.discount, bundle.family,
        spec.limit_reps, h, bundle.horizon, spec.seed,
    )
    rows = [limit_row(r, h, bundle.horizon, spec.seed) for r in results]
    if out is not None:
        write_csv(out, limit_columns(bundle.config.classes), rows)
    return best, best_est, rows


def prelimit_value(bundle: ConfigBundle, n: int, policy, family=None, reps=None):
    """Largest prelimit robust cost over the family: ``(best strategy, estimate, all estimates)``."""
    family = bundle.family if family is None else family
    reps = bundle.study.reps if reps is None else reps
    results = [
        estimate_qcp_cost(
            bundle.config, bundle.cost, n, policy, s, bundle.discount, bundle.divergence, reps,
            bundle.horizon, bundle.study.seed, bundle.sim.grid_points,
        )
        for s in family
    ]
    best = int(np.argmax([r.mean for r in results]))
    return family[best], results[best], results


def run_convergence_study(bundle: ConfigBundle, out=None, limit=None):
    """Rows ``n, policy, V_hat_n, SE, V_hat_limit, SE_limit, gap`` along ``study.n_grid``.

    ``limit`` may pass a precomputed ``(best, estimate, ...)`` from
    :func:`run_value_limit_study` to avoid recomputing the limit value.
    """
    spec = bundle.study
    policy = Policy.parse(spec.policy, bundle.config.classes)
    if limit is None:
        limit = run_value_limit_study(bundle)
    best_lim, est_lim = limit[0], limit[1]
    rows = []
    for n in spec.n_grid:
        best_n, est_n, _ = prelimit_value(bundle, n, policy)
        gap = abs(est_n.mean - est_lim.mean)
        log.info("n=%d V_n=%.4f (%s) V=%.4f gap=%.4f", n, est_n.mean, best_n.label, est_lim.mean, gap)
        rows.append([n, policy.label, est_n.mean, est_n.std_error, est_lim.mean, est_lim.std_error, gap,
                     best_n.label, best_lim.label])
    if out is not None:
        write_csv(out, CONVERGENCE_COLUMNS, rows)
    return rows


def collapse_metrics(bundle: ConfigBundle, n: int, reps: int, policy="cmu_preemptive", curve=None) -> np.ndarray:
    curve = CurveTable(bundle.config, bundle.cost) if curve is None else curve
    out = np.empty(reps)
    for r in range(reps):
        _, traj = simulate_system(
            bundle.config, bundle.cost, n, policy, bundle.adversary, bundle.horizon, bundle.study.seed, r,
            bundle.sim.grid_points, record_events=False,
        )
        out[r] = collapse_metric(traj, curve)
    return out


def run_collapse_study(bundle: ConfigBundle, out=None):
    """Rows ``n, median_collapse_metric, q90_collapse_metric, reps`` along ``study.n_grid``."""
    spec = bundle.study
    curve = CurveTable(bundle.config, bundle.cost)
    rows = []
    for n in spec.n_grid:
        metrics = collapse_metrics(bundle, n, spec.reps, spec.policy, curve)
        rows.append([n, float(np.median(metrics)), float(np.quantile(metrics, 0.9)), spec.reps])
    if out is not None:
        write_csv(out, COLLAPSE_COLUMNS, rows)
    return rows


def dominance_policies(classes: int) -> list[Policy]:
    policies = [Policy("cmu_preemptive"), Policy("cmu_nonpreemptive")]
    orders = itertools.permutations(range(classes)) if classes <= 3 else [tuple(range(classes)), tuple(reversed(range(classes)))]
    policies += [Policy("static_priority", tuple(o)) for o in orders]
    policies.append(Policy("fixed_fraction"))
    return policies


def worst_constant(bundle: ConfigBundle) -> AdversaryStrategy:
    """Limit-game argmax over the zero and constant members of the family."""
    constants = [s for s in bundle.family if s.kind in (ZERO, CONSTANT)]
    best, _, _ = estimate_value(
        bundle.config, bundle.cost, bundle.divergence, bundle.discount, constants,
        bundle.study.limit_reps, _limit_step(bundle), bundle.horizon, bundle.study.seed,
    )
    return best


def run_policy_dominance_study(bundle: ConfigBundle, out=None, adversary=None, n=None, policies=None):
    """Robust cost of each policy at ``n`` (default: last of ``study.n_grid``) against one strategy.

    Without an explicit ``adversary`` the configured one is used, or, if that
    is zero, the worst constant strategy of the family in the limit game.
    """
    spec = bundle.study
    n = spec.n_grid[-1] if n is None else n
    if adversary is None:
        adversary = bundle.adversary if not bundle.adversary.is_zero else worst_constant(bundle)
    policies = dominance_policies(bundle.config.classes) if policies is None else policies
    estimates = {}
    rows = []
    for policy in policies:
        est = estimate_qcp_cost(
            bundle.config, bundle.cost, n, policy, adversary, bundle.discount, bundle.divergence,
            spec.reps, bundle.horizon, spec.seed, bundle.sim.grid_points,
        )
        estimates[policy.label] = est
        rows.append(prelimit_row(est, n, policy.label, bundle.horizon, spec.seed))
    if out is not None:
        write_csv(out, prelimit_columns(bundle.config.classes), rows)
    return estimates, rows


def run_study(bundle: ConfigBundle, kind: str | None = None, out=None):
    kind = bundle.study.kind if kind is None else kind
    out = bundle.study.out if out is None else out
    if kind == "convergence":
        return run_convergence_study(bundle, out)
    if kind == "collapse":
        return run_collapse_study(bundle, out)
    if kind == "policy_dominance":
        return run_policy_dominance_study(bundle, out)[1]
    if kind == "value_limit":
        return run_value_limit_study(bundle, out)[2]
    raise ValueError(f"unknown study kind {kind!r}")


def gap_standard_error(row) -> float:
    """Standard error of the ``gap`` column of a convergence row."""
    return math.hypot(row[3], row[5])
