"""Dynamic time warping distance and pairwise similarity matrices.

The distance kernel accumulates w(i, j) = |s_i - t_j| along the classic
three-way recurrence with the (0, 0) cell as boundary condition. Distance
computation keeps only two rolling rows (O(min(m, n)) memory); the full cost
matrix is materialized only when the warping path itself is requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .timeseries import z_normalize

# Above this size the anti-diagonal vectorized kernel wins over the scalar one.
_VECTOR_KERNEL_MIN = 24


def _check_pair(s, t) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.size == 0 or t.size == 0:
        raise InvalidInput("DTW requires nonempty sequences")
    return s, t


def dtw_distance(s, t, window: int | None = None) -> float:
    """Accumulated DTW cost between two sequences.

    `window` optionally constrains |i - j| to a Sakoe-Chiba band; the paper
    pipeline runs unconstrained, so it defaults to off.
    """
    return dtw_distance_with_steps(s, t, window=window)[0]


def dtw_distance_with_steps(s, t, window: int | None = None) -> tuple[float, int]:
    """DTW cost plus the number of aligned steps on the optimal path.

    The step count is the path length backtracking would produce with the
    deterministic tie order diagonal > vertical > horizontal; it normalizes
    costs across events of different lengths without materializing the path.
    """
    s, t = _check_pair(s, t)
    if s.size < t.size:
        s, t = t, s  # roll over the shorter sequence
    if window is not None and window < abs(s.size - t.size):
        window = abs(s.size - t.size)  # band must reach the final cell
    if min(s.size, t.size) >= _VECTOR_KERNEL_MIN:
        return _dtw_diagonal(s, t, window)
    return _dtw_rows(s, t, window)


def _dtw_rows(s: np.ndarray, t: np.ndarray, window: int | None) -> tuple[float, int]:
    m, n = s.size, t.size
    inf = float("inf")
    prev = [inf] * n
    prev_steps = [0] * n
    cur = [inf] * n
    cur_steps = [0] * n
    for i in range(m):
        lo, hi = 0, n
        if window is not None:
            lo, hi = max(0, i - window), min(n, i + window + 1)
        si = s[i]
        for j in range(n):
            if j < lo or j >= hi:
                cur[j] = inf
                cur_steps[j] = 0
                continue
            w = abs(si - t[j])
            if i == 0 and j == 0:
                cur[j] = w
                cur_steps[j] = 1
                continue
            diag = prev[j - 1] if (i > 0 and j > 0) else inf
            up = prev[j] if i > 0 else inf
            left = cur[j - 1] if j > 0 else inf
            best = min(diag, up, left)
            if best == diag:
                steps = prev_steps[j - 1]
            elif best == up:
                steps = prev_steps[j]
            else:
                steps = cur_steps[j - 1]
            cur[j] = w + best
            cur_steps[j] = steps + 1
        prev, cur = cur, prev
        prev_steps, cur_steps = cur_steps, prev_steps
    return prev[n - 1], prev_steps[n - 1]


def _dtw_diagonal(s: np.ndarray, t: np.ndarray, window: int | None) -> tuple[float, int]:
    """Anti-diagonal sweep: cells on diagonal d = i + j depend only on d-1, d-2."""
    m, n = s.size, t.size
    inf = np.inf
    width = min(m, n) + 1
    prev2 = np.full(width, inf)
    prev1 = np.full(width, inf)
    steps_prev2 = np.zeros(width, dtype=np.int64)
    steps_prev1 = np.zeros(width, dtype=np.int64)

    for d in range(m + n - 1):
        i_lo = max(0, d - n + 1)
        i_hi = min(d, m - 1)
        i = np.arange(i_lo, i_hi + 1)
        j = d - i
        w = np.abs(s[i] - t[j])
        cur = np.full(i.size, inf)
        steps_cur = np.zeros(i.size, dtype=np.int64)

        if d == 0:
            cur[0] = w[0]
            steps_cur[0] = 1
        else:
            p_lo = max(0, d - n)  # first i on diagonal d-1
            up = np.full(i.size, inf)      # (i-1, j)
            left = np.full(i.size, inf)    # (i, j-1)
            diag = np.full(i.size, inf)    # (i-1, j-1)
            s_up = np.zeros(i.size, dtype=np.int64)
            s_left = np.zeros(i.size, dtype=np.int64)
            s_diag = np.zeros(i.size, dtype=np.int64)

            k_up = i - 1 - p_lo
            ok = i > 0
            up[ok] = prev1[k_up[ok]]
            s_up[ok] = steps_prev1[k_up[ok]]
            k_left = i - p_lo
            ok = j > 0
            left[ok] = prev1[k_left[ok]]
            s_left[ok] = steps_prev1[k_left[ok]]
            if d >= 2:
                pp_lo = max(0, d - 1 - n)
                k_diag = i - 1 - pp_lo
                ok = (i > 0) & (j > 0)
                diag[ok] = prev2[k_diag[ok]]
                s_diag[ok] = steps_prev2[k_diag[ok]]

            best = np.minimum(diag, np.minimum(up, left))
            pred_steps = np.where(diag == best, s_diag, np.where(up == best, s_up, s_left))
            cur = w + best
            steps_cur = pred_steps + 1

        if window is not None:
            outside = np.abs(i - j) > window
            cur[outside] = inf
            steps_cur[outside] = 0

        prev2 = prev1
        steps_prev2 = steps_prev1
        prev1 = cur
        steps_prev1 = steps_cur

    return float(prev1[-1]), int(steps_prev1[-1])


def dtw_path(s, t) -> tuple[float, list[tuple[int, int]]]:
    """Full-matrix DTW returning the cost and the optimal warping path.

    Ties prefer the diagonal, then the vertical, then the horizontal move,
    matching the step counts reported by `dtw_distance_with_steps`.
    """
    s, t = _check_pair(s, t)
    m, n = s.size, t.size
    cost = np.abs(s[:, None] - t[None, :])
    acc = np.full((m, n), np.inf)
    acc[0, 0] = cost[0, 0]
    for i in range(m):
        for j in range(n):
            if i == 0 and j == 0:
                continue
            diag = acc[i - 1, j - 1] if (i > 0 and j > 0) else np.inf
            up = acc[i - 1, j] if i > 0 else np.inf
            left = acc[i, j - 1] if j > 0 else np.inf
            acc[i, j] = cost[i, j] + min(diag, up, left)

    path = [(m - 1, n - 1)]
    i, j = m - 1, n - 1
    while (i, j) != (0, 0):
        diag = acc[i - 1, j - 1] if (i > 0 and j > 0) else np.inf
        up = acc[i - 1, j] if i > 0 else np.inf
        left = acc[i, j - 1] if j > 0 else np.inf
        best = min(diag, up, left)
        if best == diag:
            i, j = i - 1, j - 1
        elif best == up:
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    path.reverse()
    return float(acc[m - 1, n - 1]), path


def normalized_dtw_cost(s, t, window: int | None = None) -> float:
    """DTW cost divided by the aligned-path length (cost per aligned step)."""
    cost, steps = dtw_distance_with_steps(s, t, window=window)
    return cost / steps


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric pairwise DTW distance matrix over an event set."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidInput("similarity matrix must be square")

    @property
    def size(self) -> int:
        return self.values.shape[0]


def similarity_matrix(events, window: int | None = None) -> SimilarityMatrix:
    """Pairwise DTW distances between z-normalized events.

    Entries are computed for i <= j and mirrored; the diagonal is zero by
    construction (identical normalized inputs).
    """
    if len(events) == 0:
        raise InvalidInput("similarity matrix requires at least one event")
    normalized = [z_normalize(e)[0] for e in events]
    a = len(normalized)
    values = np.zeros((a, a))
    for i in range(a):
        for j in range(i + 1, a):
            d = dtw_distance(normalized[i], normalized[j], window=window)
            values[i, j] = d
            values[j, i] = d
    return SimilarityMatrix(values)
