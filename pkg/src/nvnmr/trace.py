from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ProbabilityTrace:
    """Readout probabilities sampled on a time grid.

    ``tau`` is the shot duration. Main-text protocols sample back-to-back
    shots, so ``times = n * tau``; the spectrum uses the actual spacing of
    ``times``.
    """

    times: np.ndarray
    values: np.ndarray
    tau: float
    stderr: np.ndarray | None = None
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if self.values.size and (self.values.min() < -1e-12 or self.values.max() > 1 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        self.flags = tuple(dict.fromkeys(self.flags))

    @classmethod
    def from_shots(cls, values, tau, **kwargs) -> "ProbabilityTrace":
        values = np.asarray(values, dtype=float)
        times = tau * np.arange(1, values.size + 1, dtype=float)
        return cls(times, values, tau, **kwargs)

    def __len__(self):
        return self.values.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else self.tau

    def is_uniform(self, rtol=1e-9) -> bool:
        if len(self) < 2:
            return True
        d = np.diff(self.times)
        return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))
