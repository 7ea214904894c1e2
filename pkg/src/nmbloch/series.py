"""Time-series container shared by all solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TimeSeries:
    """Spin expectation values sampled on a time grid.

    ``sx``, ``sy``, ``sz`` hold <sigma_x>, <sigma_y>, <sigma_z>.  They are
    float arrays for deterministic solvers and ensemble means; a single
    stochastic trajectory stores complex values (only the real part is
    physical, the imaginary part is a diagnostic).  ``se``, when present,
    holds per-point standard errors with columns (se_sx, se_sy, se_sz).
    ``meta`` carries run diagnostics (max imaginary part, fit residual,
    norm drift, ...) keyed by name.
    """

    t: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    se: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def values(self) -> np.ndarray:
        """(n, 3) array of the three components."""
        return np.column_stack([self.sx, self.sy, self.sz])

    def component(self, name: str) -> np.ndarray:
        return {"sx": self.sx, "sy": self.sy, "sz": self.sz}[name]
