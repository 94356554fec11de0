"""Centered-moment feature windows fed to the LSTM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

__all__ = ["FeatureWindow", "WindowBatch", "build_windows", "build_window_batch"]

N_FEATURES = 4


@dataclass
class FeatureWindow:
    matrix: np.ndarray  # (L, 4), oldest lag first
    target: float
    t_index: int


@dataclass
class WindowBatch:
    """All windows of a segment stacked for vectorized forward passes."""

    X: np.ndarray        # (N, L, 4)
    y: np.ndarray        # (N,)
    t_index: np.ndarray  # (N,) position of each target in the source segment

    def __len__(self):
        return len(self.y)

    def __getitem__(self, idx) -> "WindowBatch":
        if isinstance(idx, (int, np.integer)):
            idx = [idx]
        return WindowBatch(self.X[idx], self.y[idx], self.t_index[idx])

    def windows(self) -> list[FeatureWindow]:
        return [FeatureWindow(self.X[k], float(self.y[k]), int(self.t_index[k]))
                for k in range(len(self.y))]

    @classmethod
    def from_windows(cls, windows) -> "WindowBatch":
        windows = list(windows)
        return cls(np.stack([w.matrix for w in windows]),
                   np.array([w.target for w in windows], dtype=float),
                   np.array([w.t_index for w in windows], dtype=int))


def build_window_batch(values, L: int, offset: int = 0) -> WindowBatch:
    """Windows for every target index ``t`` in ``L .. n-1`` (zero-based).

    Row ``j`` of window ``t`` is ``[r, d**2, d**3, d**4]`` for ``r = values[t-L+j]``
    and ``d = r - mean(values[t-L:t])``. ``offset`` is added to ``t_index``.
    """
    r = np.asarray(values, dtype=float)
    if L < 2:
        raise ValueError("window length L must be >= 2")
    if len(r) <= L:
        raise DataError(f"segment of length {len(r)} too short for L={L}")
    lagged = sliding_window_view(r[:-1], L)  # (n-L, L): lagged[k] = r[k:k+L]
    d = lagged - lagged.mean(axis=1, keepdims=True)
    d2 = d * d
    X = np.stack([lagged, d2, d2 * d, d2 * d2], axis=-1)
    t = np.arange(L, len(r))
    return WindowBatch(np.ascontiguousarray(X), r[L:].copy(), t + offset)


def build_windows(values, L: int, offset: int = 0) -> list[FeatureWindow]:
    return build_window_batch(values, L, offset).windows()
