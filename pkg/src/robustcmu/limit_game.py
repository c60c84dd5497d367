"""The limiting diffusion game under the workload-reflecting control.

The minimizer's control keeps the state on the minimizing curve:
``X(t) = f(W(t))`` with ``W = Gamma[theta . L]`` the reflected workload of
the free process ``L(t) = x0 + m t + noise``.  The maximizer picks
perturbation drifts; paths are simulated directly under the perturbed
measure, so costs are plain sample means.

Service streams run on the clock ``rho_i t`` (the limit of the cumulative
service effort), with diffusion coefficient ``sqrt(mu_i)``.  In law the
noise equals ``sqrt(lambda_i) B_S(t)``; the clock only changes how a
service perturbation enters the drift (``sqrt(mu_i) rho_i psi``) and the
likelihood ratio (``rho_i psi^2 / 2`` per unit time), which matches the
queueing system driven by the same strategy.

The running infimum of the workload is taken over the continuous path:
within each Euler step the free workload is a Brownian bridge and its
minimum is sampled exactly.  Set ``bridge=False`` for plain grid sampling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .adversary import AdversaryStrategy, eval_strategy_batch, quadrature_weights
from .curve import CurveTable
from .errors import ConfigError
from .estimates import CostEstimate
from .model import CostModel, Discount, DivergenceModel, SystemConfig

log = logging.getLogger(__name__)

CHUNK = 500


@dataclass
class LimitPaths:
    """Sampled paths of a batch of replications; the leading axis is the replication."""

    times: np.ndarray
    psi_hat: np.ndarray  # (reps, steps, 2I), value on each step
    B: np.ndarray  # (reps, steps+1, 2I), reference-measure Brownian motions
    L_hat: np.ndarray  # (reps, steps+1, I)
    W: np.ndarray  # (reps, steps+1)
    X: np.ndarray  # (reps, steps+1, I)
    Y: np.ndarray  # (reps, steps+1, I)
    ell: np.ndarray  # (reps, steps+1, 2I)
    H: np.ndarray
    G: np.ndarray


def effective_horizon(discount: Discount, horizon: float | None = None) -> float:
    return discount.effective_horizon() if horizon is None else float(horizon)


def default_step(horizon: float) -> float:
    return 1e-3 * horizon


def _curve_for(config: SystemConfig, cost: CostModel, horizon: float, bound: float) -> CurveTable:
    drift = abs(float(config.theta @ config.m_hat)) + bound * float(config.theta @ (config.sigma + config.sigma_s))
    spread = math.sqrt(float(2 * np.sum(config.theta**2 * config.lam)) * horizon)
    w_max = float(config.theta @ config.x0_hat) + drift * horizon + 8 * spread + 1.0
    return CurveTable(config, cost, w_max=w_max)


def _noise(seed: int, rep: int, steps: int, streams: int, refine: int):
    """Standard normal increments (unit variance per step) and bridge uniforms.

    The coarse draws depend only on ``(seed, rep)``; each refinement level
    splits every step with a Brownian bridge using its own stream, so the
    refined path passes through the coarse one.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, 0)))
    z = rng.standard_normal((steps, streams))
    for level in range(1, refine + 1):
        extra = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, level))).standard_normal(z.shape)
        # z is N(0, 1) per step; halves of a unit-variance step have variance 1/2 each
        first = 0.5 * z + 0.5 * extra
        second = z - first
        z = np.empty((2 * z.shape[0], streams))
        z[0::2] = first * math.sqrt(2.0)
        z[1::2] = second * math.sqrt(2.0)
    u_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep, 1000 + refine)))
    u = u_rng.random(z.shape[0])
    return z, 1.0 - u  # uniforms in (0, 1]


def _simulate_chunk(
    config: SystemConfig,
    cost: CostModel,
    adversary: AdversaryStrategy,
    horizon: float,
    step: float,
    seed: int,
    rep_ids,
    refine: int,
    bridge: bool,
    curve,
    keep_paths: bool,
    noise_override=None,
):
    size = config.classes
    streams = 2 * size
    h = step / 2**refine
    steps = int(round(horizon / h))
    if abs(steps * h - horizon) > 1e-9 * horizon:
        raise ConfigError(f"step {h} does not divide the horizon {horizon}")
    per_tick = adversary.delta / h
    if abs(per_tick - round(per_tick)) > 1e-9 * per_tick:
        raise ConfigError(f"adversary delta {adversary.delta} is not a multiple of the step {h}")
    per_tick = int(round(per_tick))
    reps = len(rep_ids)

    if noise_override is None:
        draws = [_noise(seed, int(r), int(round(horizon / step)), streams, refine) for r in rep_ids]
        z = np.stack([d[0] for d in draws])
        unif = np.stack([d[1] for d in draws])
    else:
        z, unif = noise_override
    clock = np.concatenate([np.ones(size), config.rho])
    dBQ = z * np.sqrt(clock * h)  # increments under the perturbed measure

    theta = np.asarray(config.theta)
    sig = np.asarray(config.sigma)
    sig_s = np.asarray(config.sigma_s)
    var_w = float(np.sum(theta**2 * (sig**2 + sig_s**2 * config.rho))) * h

    psi = np.zeros((reps, steps, streams))
    L = np.empty((reps, steps + 1, size))
    L[:, 0] = config.x0_hat
    W = np.empty((reps, steps + 1))
    run_min = theta @ config.x0_hat * np.ones(reps)
    W[:, 0] = run_min - np.minimum(run_min, 0.0)
    X = np.empty((reps, steps + 1, size))
    X[:, 0] = curve(W[:, 0])

    for tick in range(-(-steps // per_tick)):
        k0 = tick * per_tick
        k1 = min(k0 + per_tick, steps)
        ph = eval_strategy_batch(adversary, tick, X[:, k0], theta)
        psi[:, k0:k1] = ph[:, None, :]
        drift = config.m_hat + sig * ph[:, :size] - sig_s * config.rho * ph[:, size:]
        dL = drift[:, None, :] * h + sig * dBQ[:, k0:k1, :size] - sig_s * dBQ[:, k0:k1, size:]
        L[:, k0 + 1 : k1 + 1] = L[:, k0 : k0 + 1] + np.cumsum(dL, axis=1)
        free = L[:, k0 : k1 + 1] @ theta
        if bridge:
            a, b = free[:, :-1], free[:, 1:]
            lows = 0.5 * (a + b - np.sqrt((b - a) ** 2 - 2.0 * var_w * np.log(unif[:, k0:k1])))
        else:
            lows = free[:, 1:]
        block_min = np.minimum(np.minimum.accumulate(lows, axis=1), run_min[:, None])
        run_min = block_min[:, -1]
        W[:, k0 + 1 : k1 + 1] = free[:, 1:] - np.minimum(block_min, 0.0)
        X[:, k0 + 1 : k1 + 1] = curve(W[:, k0 + 1 : k1 + 1])

    quad = 0.5 * psi**2 * clock * h
    dH = psi * dBQ
    H = np.zeros((reps, steps + 1, streams))
    G = np.zeros((reps, steps + 1, streams))
    np.cumsum(dH, axis=1, out=H[:, 1:])
    np.cumsum(quad, axis=1, out=G[:, 1:])
    ell = H + G
    times = h * np.arange(steps + 1)
    if not keep_paths:
        return times, X, ell, None
    dB = dBQ + psi * clock * h
    B = np.zeros((reps, steps + 1, streams))
    np.cumsum(dB, axis=1, out=B[:, 1:])
    paths = LimitPaths(times, psi, B, L, W, X, X - L, ell, H, G)
    return times, X, ell, paths


def simulate_f_reflected(
    config: SystemConfig,
    cost: CostModel,
    adversary: AdversaryStrategy,
    horizon: float,
    step: float,
    seed: int,
    reps: int = 1,
    refine: int = 0,
    bridge: bool = True,
    split=None,
    first_rep: int = 0,
    noise=None,
) -> LimitPaths:
    """Simulate ``reps`` replications of the game state under the workload-reflecting control.

    ``refine`` halves the step that many times using Brownian-bridge
    refinement of the same coarse path.  ``split`` replaces the minimizing
    curve by another map from workload to queue vector (for baselines).
    ``noise`` injects ``(z, uniforms)`` directly, bypassing the seeded draws.
    """
    curve = split if split is not None else _curve_for(config, cost, horizon, adversary.bound)
    rep_ids = range(first_rep, first_rep + reps)
    _, _, _, paths = _simulate_chunk(
        config, cost, adversary, horizon, step, seed, rep_ids, refine, bridge, curve, True, noise
    )
    return paths


def estimate_game_cost(
    config: SystemConfig,
    cost: CostModel,
    divergence: DivergenceModel,
    discount: Discount,
    adversary: AdversaryStrategy,
    reps: int,
    step: float | None = None,
    horizon: float | None = None,
    seed: int = 0,
    refine: int = 0,
    bridge: bool = True,
    curve=None,
) -> CostEstimate:
    """Mean over replications of discounted holding cost minus the divergence penalties."""
    if reps < 2:
        raise ConfigError("at least two replications are required")
    horizon = effective_horizon(discount, horizon)
    step = default_step(horizon) if step is None else step
    curve = _curve_for(config, cost, horizon, adversary.bound) if curve is None else curve
    kappa = divergence.kappa
    holding = np.empty(reps)
    div = np.empty((reps, kappa.size))
    weights = None
    for start in range(0, reps, CHUNK):
        ids = range(start, min(start + CHUNK, reps))
        times, X, ell, _ = _simulate_chunk(
            config, cost, adversary, horizon, step, seed, ids, refine, bridge, curve, False
        )
        if weights is None:
            weights = quadrature_weights(times, discount)
        holding[ids.start : ids.stop] = cost.total(X) @ weights
        div[ids.start : ids.stop] = np.einsum("k,rks->rs", weights, divergence.g(ell, kappa))
    return CostEstimate.from_samples(holding, div, label=adversary.label)


def estimate_value(
    config: SystemConfig,
    cost: CostModel,
    divergence: DivergenceModel,
    discount: Discount,
    family,
    reps: int,
    step: float | None = None,
    horizon: float | None = None,
    seed: int = 0,
    search_budget: int | None = None,
    bridge: bool = True,
):
    """Largest estimated cost over a finite strategy family (common random numbers).

    Returns ``(best_strategy, best_estimate, all_estimates)``.  The maximum
    over a finite bounded family only bounds the game value from below.
    """
    family = list(family)
    if search_budget is not None:
        family = family[:search_budget]
    if not family:
        raise ConfigError("empty adversary family")
    horizon = effective_horizon(discount, horizon)
    bound = max(s.bound for s in family)
    curve = _curve_for(config, cost, horizon, bound)
    results = [
        estimate_game_cost(
            config, cost, divergence, discount, s, reps, step, horizon, seed, bridge=bridge, curve=curve
        )
        for s in family
    ]
    best = int(np.argmax([r.mean for r in results]))
    return family[best], results[best], results
