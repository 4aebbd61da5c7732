"""Container for sublattice-resolved Bloch-vector time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TrajectorySeries"]


@dataclass
class TrajectorySeries:
    """Sampled trajectory: times plus (x, y, z) per sublattice."""

    t: np.ndarray          # (n,)
    bloch_A: np.ndarray    # (n, 3)
    bloch_B: np.ndarray    # (n, 3)
    truncated: bool = False
    truncation_reason: str = ""

    @classmethod
    def from_rows(cls, t, rows, **kw):
        rows = np.asarray(rows, dtype=float)
        return cls(np.asarray(t, dtype=float), rows[:, 0:3], rows[:, 3:6], **kw)

    @property
    def zA(self) -> np.ndarray:
        return self.bloch_A[:, 2]

    @property
    def zB(self) -> np.ndarray:
        return self.bloch_B[:, 2]

    def final_bloch(self):
        return self.bloch_A[-1].copy(), self.bloch_B[-1].copy()

    def columns(self) -> np.ndarray:
        """(n, 7) array ordered t, xA, yA, zA, xB, yB, zB."""
        return np.column_stack([self.t, self.bloch_A, self.bloch_B])
