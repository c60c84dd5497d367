"""Event-driven simulation of the n-th multiclass queue under perturbed rates.

Each of the ``2I`` streams (arrivals ``A_i``, potential services ``S_i``) is
a unit-rate Poisson process run on its own integrated-intensity clock.  The
arrival clock of class ``i`` advances at ``psi_A,i``; the service clock at
``psi_S,i * U_i`` where ``U_i`` is the effort on class ``i``.  Intensities
are constant between events and adversary decision times, so the next
firing is exact.  Unit exponentials are drawn per ``(seed, replication,
stream)``, which keeps the streams independent and lets different
policies, strategies and scaling parameters share random numbers.

Stream order everywhere is ``(A_1..A_I, S_1..S_I)``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .adversary import AdversaryStrategy, _emit, quadrature_weights
from .curve import CurveTable
from .errors import ConfigError, HorizonOverflow
from .estimates import CostEstimate
from .model import CostModel, Discount, DivergenceModel, ScaledRates, SystemConfig, derived_rates

log = logging.getLogger(__name__)

IDLE = -1
DEFAULT_GRID_POINTS = 2000
DEFAULT_EVENT_CAP = 10**7
CLAMP_FLOOR = 1e-6  # clamped intensities are set to this fraction of the nominal rate

POLICY_CODES = {"cmu_preemptive": 0, "cmu_nonpreemptive": 1, "static_priority": 2, "fixed_fraction": 3}

ARRIVAL, DEPARTURE, TICK, START = 0, 1, 2, 3

_OK, _NEED_EXPS, _EVENT_CAP, _LOG_FULL = 0, 1, 2, 3


@dataclass(frozen=True)
class Policy:
    name: str
    order: tuple[int, ...] = ()

    def __post_init__(self):
        if self.name not in POLICY_CODES:
            raise ConfigError(f"unknown policy {self.name!r}; choose from {sorted(POLICY_CODES)}")

    @classmethod
    def parse(cls, text: str, classes: int) -> Policy:
        """``cmu_preemptive``, ``cmu_nonpreemptive``, ``fixed_fraction`` or ``static_priority:2,1`` (1-based)."""
        name, _, rest = text.partition(":")
        if name != "static_priority":
            if rest:
                raise ConfigError(f"policy {name!r} takes no arguments")
            return cls(name)
        order = tuple(int(v) - 1 for v in rest.split(",")) if rest else tuple(range(classes))
        if sorted(order) != list(range(classes)):
            raise ConfigError(f"static priority order must be a permutation of 1..{classes}")
        return cls(name, order)

    @property
    def label(self) -> str:
        if self.name == "static_priority":
            return "static_priority:" + ",".join(str(i + 1) for i in self.order)
        return self.name


@numba.njit(cache=True, nogil=True)
def _cmu_select(X, mu, c, p, sqrt_n):
    best = -1
    best_index = -1.0
    for i in range(X.shape[0]):
        if X[i] > 0:
            idx = mu[i] * c[i] * p[i] * (X[i] / sqrt_n) ** (p[i] - 1.0)
        else:
            idx = 0.0
        if idx > best_index:
            best_index = idx
            best = i
    if best_index <= 0.0:
        return -1
    return best


@numba.njit(cache=True, nogil=True)
def _allocate(policy, X, in_service, order, frac, mu, c, p, sqrt_n, U):
    size = X.shape[0]
    U[:] = 0.0
    if policy == 0:
        j = _cmu_select(X, mu, c, p, sqrt_n)
        if j >= 0:
            U[j] = 1.0
    elif policy == 1:
        if in_service >= 0:
            U[in_service] = 1.0
    elif policy == 2:
        for m in range(size):
            i = order[m]
            if X[i] > 0:
                U[i] = 1.0
                break
    else:
        total = 0.0
        for i in range(size):
            if X[i] > 0:
                total += frac[i]
        if total > 0.0:
            for i in range(size):
                if X[i] > 0:
                    U[i] = frac[i] / total


@numba.njit(cache=True, nogil=True)
def _set_intensities(
    X, sqrt_n, ref, scale, clamp_floor, adv_kind, adv_table, adv_rule, adv_k, adv_level, adv_theta,
    tick, t, T, psi_hat, xh, rate, lr, exc, klr, seg_base, g_base, seg_cnt, seg_start, first,
):
    size = X.shape[0]
    for i in range(size):
        xh[i] = X[i] / sqrt_n
    _emit(adv_kind, adv_table, adv_rule, adv_k, adv_level, adv_theta, tick, xh, psi_hat)
    clamped = 0
    for s in range(2 * size):
        value = ref[s] + psi_hat[s] * scale[s]
        if value <= 0.0:
            value = clamp_floor * ref[s]
            clamped += 1
        if first or value != rate[s]:
            expo = t if s < size else T[s - size]
            span = expo - seg_start[s]
            if not first:
                seg_base[s] += seg_cnt[s] * lr[s] - exc[s] * span
                g_base[s] += klr[s] * span
            seg_cnt[s] = 0
            seg_start[s] = expo
            rate[s] = value
            lr[s] = math.log(value / ref[s])
            exc[s] = value - ref[s]
            klr[s] = value * lr[s] - value + ref[s]
    return clamped


@numba.njit(cache=True, nogil=True)
def _run(
    x0, sqrt_n, ref, scale, mu, c, p, policy, order, frac,
    adv_kind, adv_table, adv_rule, adv_k, adv_level, adv_theta, delta, clamp_floor,
    out_times, exps, exp_len, event_cap,
    out_X, out_T, out_cnt, out_ell, out_G,
    record, ev_time, ev_kind, ev_class, ev_X, ev_T, ev_U,
):
    size = x0.shape[0]
    streams = 2 * size
    X = x0.copy()
    T = np.zeros(size)
    U = np.zeros(size)
    E = np.empty(streams)
    ptr = np.ones(streams, dtype=np.int64)
    for s in range(streams):
        E[s] = exps[s, 0]
    psi_hat = np.empty(streams)
    xh = np.empty(size)
    rate = np.zeros(streams)
    lr = np.zeros(streams)
    exc = np.zeros(streams)
    klr = np.zeros(streams)
    seg_base = np.zeros(streams)
    g_base = np.zeros(streams)
    seg_cnt = np.zeros(streams, dtype=np.int64)
    seg_start = np.zeros(streams)
    cnt = np.zeros(streams, dtype=np.int64)
    cur = np.zeros(streams)
    log_cap = ev_time.shape[0]

    t = 0.0
    tick = 0
    clamped = _set_intensities(
        X, sqrt_n, ref, scale, clamp_floor, adv_kind, adv_table, adv_rule, adv_k, adv_level, adv_theta,
        0, t, T, psi_hat, xh, rate, lr, exc, klr, seg_base, g_base, seg_cnt, seg_start, True,
    )
    in_service = -1
    if policy == 1:
        in_service = _cmu_select(X, mu, c, p, sqrt_n)
    _allocate(policy, X, in_service, order, frac, mu, c, p, sqrt_n, U)
    n_logged = 0
    if record:
        ev_time[0] = 0.0
        ev_kind[0] = 3
        ev_class[0] = -1
        ev_X[0] = X
        ev_T[0] = T
        ev_U[0] = U
        n_logged = 1

    n_out = out_times.shape[0]
    k_out = 0
    next_tick = delta
    n_events = 0
    while True:
        best = -1
        best_dt = np.inf
        for s in range(streams):
            r = rate[s] if s < size else rate[s] * U[s - size]
            cur[s] = r
            if r > 0.0:
                d = E[s] / r
                if d < best_dt:
                    best_dt = d
                    best = s
        next_out = out_times[k_out]
        boundary = next_out if next_out < next_tick else next_tick
        is_event = best >= 0 and t + best_dt < boundary
        dt = best_dt if is_event else boundary - t
        if dt < 0.0:
            dt = 0.0
        for s in range(streams):
            E[s] -= cur[s] * dt
            if E[s] < 0.0:
                E[s] = 0.0
        for i in range(size):
            T[i] += U[i] * dt
        if is_event:
            t += dt
            n_events += 1
            if n_events > event_cap:
                return _EVENT_CAP, n_events, n_logged, clamped, -1
            s = best
            if ptr[s] >= exp_len[s]:
                return _NEED_EXPS, n_events, n_logged, clamped, s
            E[s] = exps[s, ptr[s]]
            ptr[s] += 1
            seg_cnt[s] += 1
            cnt[s] += 1
            if s < size:
                X[s] += 1
                if policy == 1 and in_service < 0:
                    in_service = _cmu_select(X, mu, c, p, sqrt_n)
            else:
                X[s - size] -= 1
                if policy == 1:
                    in_service = _cmu_select(X, mu, c, p, sqrt_n)
            _allocate(policy, X, in_service, order, frac, mu, c, p, sqrt_n, U)
            if record:
                if n_logged >= log_cap:
                    return _LOG_FULL, n_events, n_logged, clamped, -1
                ev_time[n_logged] = t
                ev_kind[n_logged] = 0 if s < size else 1
                ev_class[n_logged] = s if s < size else s - size
                ev_X[n_logged] = X
                ev_T[n_logged] = T
                ev_U[n_logged] = U
                n_logged += 1
        else:
            t = boundary
            if next_out == boundary:
                for i in range(size):
                    out_X[k_out, i] = X[i]
                    out_T[k_out, i] = T[i]
                for s in range(streams):
                    expo = t if s < size else T[s - size]
                    span = expo - seg_start[s]
                    out_cnt[k_out, s] = cnt[s]
                    out_ell[k_out, s] = seg_base[s] + (seg_cnt[s] * lr[s] - exc[s] * span)
                    out_G[k_out, s] = g_base[s] + klr[s] * span
                k_out += 1
                if k_out == n_out:
                    break
            if next_tick == boundary:
                tick += 1
                next_tick = (tick + 1) * delta
                clamped += _set_intensities(
                    X, sqrt_n, ref, scale, clamp_floor, adv_kind, adv_table, adv_rule, adv_k, adv_level,
                    adv_theta, tick, t, T, psi_hat, xh, rate, lr, exc, klr, seg_base, g_base, seg_cnt,
                    seg_start, False,
                )
                if record:
                    if n_logged >= log_cap:
                        return _LOG_FULL, n_events, n_logged, clamped, -1
                    ev_time[n_logged] = t
                    ev_kind[n_logged] = 2
                    ev_class[n_logged] = -1
                    ev_X[n_logged] = X
                    ev_T[n_logged] = T
                    ev_U[n_logged] = U
                    n_logged += 1
    return _OK, n_events, n_logged, clamped, -1


@dataclass
class EventLog:
    """Every arrival, departure and decision tick, with the state right after it.

    ``U[k]`` is the effort allocation in force from ``time[k]`` until the next
    entry.  The first entry (kind ``START``) is the initial state.
    """

    time: np.ndarray
    kind: np.ndarray
    cls: np.ndarray
    X: np.ndarray
    T: np.ndarray
    U: np.ndarray


@dataclass
class ScaledTrajectory:
    """Raw and diffusion-scaled quantities of one replication on the output grid."""

    rates: ScaledRates
    times: np.ndarray
    X: np.ndarray  # queue lengths
    T: np.ndarray  # cumulative effort per class
    counts: np.ndarray  # cumulative arrivals (A_i) and departures (D_i)
    ell: np.ndarray  # log likelihood ratio per stream
    G: np.ndarray  # compensator part of ell
    events: int = 0
    clamped: int = 0

    @property
    def root_n(self) -> float:
        return math.sqrt(self.rates.n)

    @property
    def x_hat(self) -> np.ndarray:
        return self.X / self.root_n

    @property
    def y_hat(self) -> np.ndarray:
        r = self.rates
        return r.mu_n / self.root_n * (r.rho * self.times[:, None] - self.T)

    @property
    def H(self) -> np.ndarray:
        return self.ell - self.G

    def scaled_arrivals(self) -> np.ndarray:
        size = self.X.shape[1]
        return (self.counts[:, :size] - self.rates.lam_n * self.times[:, None]) / self.root_n

    def scaled_services(self) -> np.ndarray:
        """``S_hat(T(t))``: centred departures measured against the effort clock."""
        size = self.X.shape[1]
        return (self.counts[:, size:] - self.rates.mu_n * self.T) / self.root_n

    def identity_residual(self) -> float:
        """Largest deviation from ``X = X(0) + m t + A - S(T) + Y`` over the grid."""
        rebuilt = (
            self.x_hat[0]
            + self.rates.m_hat_n * self.times[:, None]
            + self.scaled_arrivals()
            - self.scaled_services()
            + self.y_hat
        )
        return float(np.max(np.abs(rebuilt - self.x_hat)))

    def idle_push(self) -> np.ndarray:
        """``theta^n . Y^n(t) = sqrt(n) * (t - sum_i T_i(t))``."""
        return self.root_n * (self.times - self.T.sum(axis=1))


def select_class_cmu(x_hat, config: SystemConfig, cost: CostModel) -> int:
    """Class to serve under the generalized c-mu rule, or ``IDLE`` at the origin.

    Maximizes ``mu_i C_i'(x_i)``; ties go to the smallest index.  Classes are
    0-based here.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if np.any(x_hat < 0):
        raise ValueError("scaled queue lengths must be nonnegative")
    if not np.any(x_hat > 0):
        return IDLE
    index = config.mu * cost.derivative(x_hat)
    return int(np.argmax(index))


class _Streams:
    """Per-stream unit exponentials, extendable without changing the prefix."""

    def __init__(self, seed: int, rep: int, sizes):
        self.gens = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, s))) for s in range(len(sizes))]
        self.chunks = [g.standard_exponential(int(k)) for g, k in zip(self.gens, sizes)]

    def grow(self, s: int):
        self.chunks[s] = np.concatenate([self.chunks[s], self.gens[s].standard_exponential(self.chunks[s].size + 64)])

    def packed(self):
        lengths = np.array([c.size for c in self.chunks], dtype=np.int64)
        out = np.zeros((len(self.chunks), int(lengths.max())))
        for s, ch in enumerate(self.chunks):
            out[s, : ch.size] = ch
        return out, lengths


def _stream_sizes(rates: ScaledRates, x0: np.ndarray, adversary: AdversaryStrategy, horizon: float):
    peak = rates.lam_n + adversary.bound * rates.arrival_scale
    mean = peak * horizon
    arrivals = np.ceil(mean + 6 * np.sqrt(mean) + 32)
    services = arrivals + x0 + 2
    return np.concatenate([arrivals, services]).astype(np.int64)


def simulate_system(
    config: SystemConfig,
    cost: CostModel,
    n: int,
    policy: Policy | str,
    adversary: AdversaryStrategy,
    horizon: float,
    seed: int,
    rep: int = 0,
    grid_points: int = DEFAULT_GRID_POINTS,
    record_events: bool = True,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> tuple[EventLog | None, ScaledTrajectory]:
    """One replication of the n-th system; deterministic in ``(seed, rep)``."""
    rates = derived_rates(config, n)
    size = config.classes
    if isinstance(policy, str):
        policy = Policy.parse(policy, size)
    if adversary.classes != size:
        raise ConfigError("adversary dimension does not match the number of classes")
    root = math.sqrt(rates.n)
    x0 = np.rint(np.asarray(config.x0_hat) * root).astype(np.int64)
    ref = np.concatenate([rates.lam_n, rates.mu_n])
    scale = np.concatenate([rates.arrival_scale, rates.service_scale])
    order = np.array(policy.order if policy.order else range(size), dtype=np.int64)
    frac = np.asarray(config.rho, dtype=float)
    mu = np.asarray(config.mu, dtype=float)
    c = np.asarray(cost.c, dtype=float)
    p = np.asarray(cost.p, dtype=float)
    out_times = np.linspace(0.0, horizon, grid_points)
    kind, table, rule, k, level, theta = adversary.kernel_args(config.theta)

    streams = _Streams(seed, rep, _stream_sizes(rates, x0, adversary, horizon))
    log_cap = int(sum(c.size for c in streams.chunks) + horizon / adversary.delta + 16) if record_events else 0
    while True:
        exps, lengths = streams.packed()
        out_X = np.zeros((grid_points, size), dtype=np.int64)
        out_T = np.zeros((grid_points, size))
        out_cnt = np.zeros((grid_points, 2 * size), dtype=np.int64)
        out_ell = np.zeros((grid_points, 2 * size))
        out_G = np.zeros((grid_points, 2 * size))
        ev_time = np.zeros(log_cap)
        ev_kind = np.zeros(log_cap, dtype=np.int64)
        ev_class = np.zeros(log_cap, dtype=np.int64)
        ev_X = np.zeros((log_cap, size), dtype=np.int64)
        ev_T = np.zeros((log_cap, size))
        ev_U = np.zeros((log_cap, size))
        status, n_events, n_logged, clamped, stream = _run(
            x0, root, ref, scale, mu, c, p, POLICY_CODES[policy.name], order, frac,
            kind, table, rule, k, level, theta, float(adversary.delta), CLAMP_FLOOR,
            out_times, exps, lengths, int(event_cap),
            out_X, out_T, out_cnt, out_ell, out_G,
            bool(record_events), ev_time, ev_kind, ev_class, ev_X, ev_T, ev_U,
        )
        if status == _OK:
            break
        if status == _NEED_EXPS:
            streams.grow(stream)
        elif status == _LOG_FULL:
            log_cap *= 2
        else:
            raise HorizonOverflow(f"more than {event_cap} events before t={horizon}")
    if clamped:
        log.warning("clamped %d non-positive perturbed intensities (n=%d, %s)", clamped, n, adversary.label)
    traj = ScaledTrajectory(rates, out_times, out_X, out_T, out_cnt, out_ell, out_G, n_events, clamped)
    events = None
    if record_events:
        m = n_logged
        events = EventLog(ev_time[:m], ev_kind[:m], ev_class[:m], ev_X[:m], ev_T[:m], ev_U[:m])
    return events, traj


def audit_event_log(events: EventLog, tol: float = 1e-12) -> dict[str, int]:
    """Count violations of the queueing invariants; all zero for a valid run."""
    X, U = events.X, events.U
    busy = X.sum(axis=1) > 0
    effort = U.sum(axis=1)
    dep = np.flatnonzero(events.kind == DEPARTURE)
    dep_ok = dep > 0
    before = dep[dep_ok] - 1
    cls = events.cls[dep[dep_ok]]
    served_before = U[before, cls] > 0
    nonempty_before = X[before, cls] > 0
    idle = np.diff(events.time) * (1.0 - effort[:-1])
    return {
        "negative_queue": int(np.sum(X < 0)),
        "effort_on_empty_class": int(np.sum((X == 0) & (U > tol))),
        "effort_above_one": int(np.sum(effort > 1 + tol)),
        "idle_while_busy": int(np.sum(busy & (effort < 1 - tol))),
        "departure_not_in_service": int(np.sum(~served_before) + np.sum(~dep_ok)),
        "departure_from_empty": int(np.sum(~nonempty_before)),
        "idle_growth_while_busy": int(np.sum((idle > tol) & busy[:-1])),
    }


def _policy_of(policy, size):
    return Policy.parse(policy, size) if isinstance(policy, str) else policy


def _workers() -> int:
    env = os.environ.get("ROBUSTCMU_THREADS")
    cpus = os.cpu_count() or 1
    return max(1, min(int(env), cpus) if env else cpus)


def estimate_qcp_cost(
    config: SystemConfig,
    cost: CostModel,
    n: int,
    policy: Policy | str,
    adversary: AdversaryStrategy,
    discount: Discount,
    divergence: DivergenceModel,
    reps: int,
    horizon: float | None = None,
    seed: int = 0,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> CostEstimate:
    """Robust cost of ``policy`` against one strategy, estimated under the perturbed measure."""
    if reps < 2:
        raise ConfigError("at least two replications are required")
    horizon = discount.effective_horizon() if horizon is None else float(horizon)
    policy = _policy_of(policy, config.classes)
    kappa = divergence.kappa
    weights = quadrature_weights(np.linspace(0.0, horizon, grid_points), discount)

    def one(rep):
        _, traj = simulate_system(
            config, cost, n, policy, adversary, horizon, seed, rep, grid_points, record_events=False
        )
        hold = weights @ cost.total(traj.x_hat)
        div = weights @ divergence.g(traj.ell, kappa)
        return hold, div

    workers = _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(r) for r in range(reps)]
    holding = np.array([r[0] for r in results])
    div = np.array([r[1] for r in results])
    return CostEstimate.from_samples(holding, div, label=adversary.label)


def collapse_metric(trajectory: ScaledTrajectory, curve: CurveTable) -> float:
    """``sup_t |X_hat(t) - f(theta^n . X_hat(t))|`` over the output grid (Euclidean norm)."""
    x_hat = trajectory.x_hat
    workload = x_hat @ trajectory.rates.theta_n
    gap = x_hat - curve(workload)
    return float(np.max(np.sqrt(np.sum(gap**2, axis=1))))
