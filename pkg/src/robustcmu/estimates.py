from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo estimate of ``E[holding] - sum_s E[divergence_s]``.

    ``samples`` keeps the per-replication totals so estimates computed with
    common random numbers can be compared pairwise.
    """

    mean: float
    std_error: float
    replications: int
    holding: float
    divergence: np.ndarray
    holding_se: float = 0.0
    samples: np.ndarray = field(default=None, repr=False, compare=False)
    holding_samples: np.ndarray = field(default=None, repr=False, compare=False)
    label: str = ""

    @classmethod
    def from_samples(cls, holding, divergence, label: str = "") -> CostEstimate:
        """``holding`` has shape ``(reps,)``, ``divergence`` shape ``(reps, streams)``."""
        holding = np.asarray(holding, dtype=float)
        divergence = np.asarray(divergence, dtype=float)
        reps = holding.size
        if reps < 2:
            raise ValueError("at least two replications are needed for a standard error")
        totals = holding - divergence.sum(axis=1)
        return cls(
            mean=float(totals.mean()),
            std_error=float(totals.std(ddof=1) / math.sqrt(reps)),
            replications=reps,
            holding=float(holding.mean()),
            divergence=divergence.mean(axis=0),
            holding_se=float(holding.std(ddof=1) / math.sqrt(reps)),
            samples=totals,
            holding_samples=holding,
            label=label,
        )


def joint_se(*estimates: CostEstimate) -> float:
    """Standard error of a difference of independent estimates."""
    return math.sqrt(sum(e.std_error**2 for e in estimates))


def paired_se(a: CostEstimate, b: CostEstimate) -> float:
    """Standard error of ``a.mean - b.mean`` when both used the same random numbers."""
    diff = a.samples - b.samples
    return float(diff.std(ddof=1) / math.sqrt(diff.size))
