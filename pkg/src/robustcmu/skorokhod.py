"""One-dimensional Skorokhod reflection at zero on sampled paths.

The map acts on sampled values only; excursions between sample points are
not seen.  Callers control the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SampledPath:
    """An RCLL path known on a time grid.

    ``interpolation`` is ``"step"`` (right-continuous, constant between
    samples) or ``"linear"``.  Repeated time stamps are collapsed, keeping the
    last value, which is the right limit.
    """

    times: np.ndarray
    values: np.ndarray
    interpolation: str = "step"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if times.size != values.size or times.size == 0:
            raise ValueError("times and values must be non-empty and of equal length")
        if times[0] != 0.0:
            raise ValueError("paths start at time 0")
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be nondecreasing")
        if self.interpolation not in ("step", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        keep = np.append(times[1:] != times[:-1], True)
        times, values = times[keep], values[keep]
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def _with(self, values: np.ndarray) -> SampledPath:
        return SampledPath(self.times, values, self.interpolation)


def regulator_values(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """``-min(0, running min)`` along ``axis``; the minimal pushing process."""
    return -np.minimum(np.minimum.accumulate(values, axis=axis), 0.0)


def reflect_values(values: np.ndarray, axis: int = -1) -> np.ndarray:
    return values + regulator_values(values, axis=axis)


def reflect(path: SampledPath) -> SampledPath:
    """Reflected path ``l(t) - inf_{s<=t} min(l(s), 0)``."""
    return path._with(reflect_values(path.values))


def regulator(path: SampledPath) -> SampledPath:
    """The nondecreasing, nonnegative term added by :func:`reflect`."""
    return path._with(regulator_values(path.values))
