"""Online process-noise statistics from differenced utilization observations.

The true utilization is modeled as a random walk, so successive
observation differences z_t = y_t - y_{t-1} carry the per-step process
noise. A sliding window of the last T differences yields:

  per-component variance   (1/T) * [ sum(z^2)/T - (sum(z)/T)^2 ]
  cross-component entry    (1/T) * [ sum((z1-mu1)(z2-mu2))/T ]

i.e. the population (co)variance of the window divided again by T, which
converts the accumulated window variance into a per-step increment. Both
entries carry the same leading 1/T so the matrix stays dimensionally
consistent.

Until T differences have accumulated the window is "warming up" and the
caller is expected to keep using its initial process-noise guess.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

# Keeps a sampled covariance strictly inside the PSD cone when two
# component streams are perfectly correlated.
_OFFDIAG_SLACK = 1.0 - 1e-9


class WindowNotReady(RuntimeError):
    """Raised when an estimate is requested before T differences exist."""


@dataclass
class NoiseEstimate:
    """Current process covariance W together with the pinned observation covariance V."""

    W: np.ndarray
    V: np.ndarray

    @classmethod
    def initial(cls, n: int, w0: float = 4.0, v: float = 1.0) -> "NoiseEstimate":
        return cls(W=w0 * np.eye(n), V=v * np.eye(n))


class DiffWindow:
    """Ring buffer of per-component observation differences.

    capacity is the window length T (default 5 control samples). The
    first pushed observation only establishes the reference point; each
    later push appends y - y_prev per component, evicting the oldest
    difference once the buffer is full.
    """

    def __init__(self, n_components: int, capacity: int = 5):
        if n_components < 1:
            raise ValueError("need at least one component")
        if capacity < 2:
            raise ValueError("window capacity must be at least 2")
        self.n = int(n_components)
        self.capacity = int(capacity)
        self._diffs: list[deque[float]] = [deque(maxlen=self.capacity) for _ in range(self.n)]
        self._y_prev: list[float] | None = None

    def __len__(self) -> int:
        return len(self._diffs[0])

    @property
    def ready(self) -> bool:
        return len(self._diffs[0]) >= self.capacity

    def push(self, y) -> None:
        """Record an observation vector (percentage points per component)."""
        ys = [float(v) for v in np.asarray(y).reshape(-1)]
        if len(ys) != self.n:
            raise ValueError(f"expected {self.n} components, got {len(ys)}")
        if not all(math.isfinite(v) for v in ys):
            raise ValueError("observation contains non-finite values")
        if self._y_prev is not None:
            for i in range(self.n):
                self._diffs[i].append(ys[i] - self._y_prev[i])
        self._y_prev = ys

    def reset(self) -> None:
        for d in self._diffs:
            d.clear()
        self._y_prev = None

    def variance(self, component: int = 0) -> float:
        """Per-step process-noise variance estimate for one component:
        the window's population variance divided again by the window
        length (centered two-pass evaluation)."""
        if not self.ready:
            raise WindowNotReady(f"have {len(self)} differences, need {self.capacity}")
        zs = self._diffs[component]
        t = float(self.capacity)
        mean = sum(zs) / t
        pop_var = sum((z - mean) * (z - mean) for z in zs) / t
        return pop_var / t

    def covariance(self) -> np.ndarray:
        """Per-step process-noise covariance across all components.

        Diagonal entries match variance(); off-diagonals are the
        windowed cross-covariances, clamped to keep the matrix PSD
        (sampling plus rounding can otherwise nudge it just outside).
        """
        if not self.ready:
            raise WindowNotReady(f"have {len(self)} differences, need {self.capacity}")
        t = float(self.capacity)
        n = self.n
        cols = [list(self._diffs[i]) for i in range(n)]
        means = [sum(c) / t for c in cols]
        w = np.empty((n, n))
        for i in range(n):
            w[i, i] = self.variance(i)
        for i in range(n):
            ci, mi = cols[i], means[i]
            for j in range(i + 1, n):
                cj, mj = cols[j], means[j]
                cross = sum((zi - mi) * (zj - mj) for zi, zj in zip(ci, cj)) / t / t
                bound = math.sqrt(w[i, i] * w[j, j]) * _OFFDIAG_SLACK
                cross = min(max(cross, -bound), bound)
                w[i, j] = cross
                w[j, i] = cross
        if n > 2:
            w = _shrink_to_psd(w)
        return w


def _shrink_to_psd(w: np.ndarray) -> np.ndarray:
    """Scale off-diagonals toward zero until the matrix is PSD.

    Pairwise clamping guarantees PSD for two components but not beyond;
    shrinking the off-diagonal block preserves the diagonal variances.
    """
    d = np.diag(np.diag(w))
    off = w - d
    scale = 1.0
    for _ in range(64):
        candidate = d + scale * off
        if np.linalg.eigvalsh(candidate)[0] >= -1e-15 * max(1.0, float(np.trace(d))):
            return candidate
        scale *= 0.9
    return d
