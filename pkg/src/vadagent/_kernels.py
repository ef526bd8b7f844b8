"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The fallback is selected by setting ``VADAGENT_DISABLE_NUMBA=1`` in the
environment (or automatically when numba is not importable). Both paths
produce bit-identical results; ``benchmarks/bench_kernels.py`` compares
their throughput.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("VADAGENT_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

if not _DISABLE:
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False
else:
    USING_NUMBA = False


def _auroc_scan(scores, labels):
    # Mann-Whitney rank estimator with midranks for ties.
    n = scores.shape[0]
    n_pos = 0
    for i in range(n):
        n_pos += labels[i]
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.nan
    order = np.argsort(scores)
    rank_sum = 0.0
    i = 0
    while i < n:
        j = i
        v = scores[order[i]]
        while j + 1 < n and scores[order[j + 1]] == v:
            j += 1
        midrank = 0.5 * (i + j) + 1.0  # mean of one-based ranks i+1 .. j+1
        for k in range(i, j + 1):
            if labels[order[k]] == 1:
                rank_sum += midrank
        i = j + 1
    return (rank_sum - 0.5 * n_pos * (n_pos + 1.0)) / (n_pos * n_neg)


def _bootstrap_scan(sa, sb, y, dom_start, dom_len, idx):
    # One macro-AUROC delta per resample row of idx. Resampled domains
    # that collapse to a single class are skipped for that resample.
    R = idx.shape[0]
    D = dom_start.shape[0]
    nmax = 0
    for d in range(D):
        if dom_len[d] > nmax:
            nmax = dom_len[d]
    buf_a = np.empty(nmax, np.float64)
    buf_b = np.empty(nmax, np.float64)
    buf_y = np.empty(nmax, np.uint8)
    deltas = np.empty(R, np.float64)
    skipped = np.zeros(R, np.int64)
    for r in range(R):
        sum_a = 0.0
        sum_b = 0.0
        used = 0
        for d in range(D):
            st = dom_start[d]
            ln = dom_len[d]
            npos = 0
            for k in range(ln):
                g = idx[r, st + k]
                buf_a[k] = sa[g]
                buf_b[k] = sb[g]
                buf_y[k] = y[g]
                npos += y[g]
            if npos == 0 or npos == ln:
                skipped[r] += 1
                continue
            sum_a += _auroc_scan(buf_a[:ln], buf_y[:ln])
            sum_b += _auroc_scan(buf_b[:ln], buf_y[:ln])
            used += 1
        if used > 0:
            deltas[r] = (sum_a - sum_b) / used
        else:
            deltas[r] = np.nan
    return deltas, skipped


def _label_scan(mask):
    # 8-connected flood fill; labels assigned in raster-scan order of each
    # component's first (top-left-most) cell.
    H, W = mask.shape
    labels = np.zeros((H, W), np.int32)
    stack = np.empty((H * W, 2), np.int32)
    next_label = 0
    for i in range(H):
        for j in range(W):
            if mask[i, j] != 0 and labels[i, j] == 0:
                next_label += 1
                labels[i, j] = next_label
                stack[0, 0] = i
                stack[0, 1] = j
                sp = 1
                while sp > 0:
                    sp -= 1
                    ci = stack[sp, 0]
                    cj = stack[sp, 1]
                    for di in range(-1, 2):
                        for dj in range(-1, 2):
                            ni = ci + di
                            nj = cj + dj
                            if (
                                0 <= ni < H
                                and 0 <= nj < W
                                and mask[ni, nj] != 0
                                and labels[ni, nj] == 0
                            ):
                                labels[ni, nj] = next_label
                                stack[sp, 0] = ni
                                stack[sp, 1] = nj
                                sp += 1
    return labels, next_label


if USING_NUMBA:
    _auroc_scan = njit(cache=True)(_auroc_scan)
    _bootstrap_scan = njit(cache=True)(_bootstrap_scan)
    _label_scan = njit(cache=True)(_label_scan)


def _auroc_numpy(scores, labels):
    """Vectorized midrank AUROC, used on the no-numba path."""
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts
    midranks = starts + (counts + 1) / 2.0  # one-based
    rank_sum = midranks[inverse][labels == 1].sum()
    return float((rank_sum - 0.5 * n_pos * (n_pos + 1)) / (n_pos * n_neg))


def auroc_kernel(scores: np.ndarray, labels: np.ndarray) -> float:
    """AUROC of float64 scores against uint8/bool labels; NaN if one class."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if USING_NUMBA:
        return float(_auroc_scan(scores, labels))
    return _auroc_numpy(scores, labels)


def bootstrap_deltas_kernel(
    scores_a: np.ndarray,
    scores_b: np.ndarray,
    labels: np.ndarray,
    dom_start: np.ndarray,
    dom_len: np.ndarray,
    idx: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-resample macro AUROC deltas (A minus B) over pre-drawn indices.

    Items must already be grouped so that domain ``d`` occupies the
    contiguous slice ``[dom_start[d], dom_start[d] + dom_len[d])``, and each
    row of ``idx`` holds global indices drawn with replacement within each
    domain slice. Pre-drawing the indices keeps the two execution paths and
    any parallel scheduling bit-identical for a fixed seed.
    """
    sa = np.ascontiguousarray(scores_a, dtype=np.float64)
    sb = np.ascontiguousarray(scores_b, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.uint8)
    dom_start = np.ascontiguousarray(dom_start, dtype=np.int64)
    dom_len = np.ascontiguousarray(dom_len, dtype=np.int64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if USING_NUMBA:
        return _bootstrap_scan(sa, sb, y, dom_start, dom_len, idx)
    R = idx.shape[0]
    deltas = np.empty(R, np.float64)
    skipped = np.zeros(R, np.int64)
    for r in range(R):
        sum_a = 0.0
        sum_b = 0.0
        used = 0
        for d in range(dom_start.shape[0]):
            sl = idx[r, dom_start[d] : dom_start[d] + dom_len[d]]
            ys = y[sl]
            npos = int(ys.sum())
            if npos == 0 or npos == ys.shape[0]:
                skipped[r] += 1
                continue
            sum_a += _auroc_numpy(sa[sl], ys)
            sum_b += _auroc_numpy(sb[sl], ys)
            used += 1
        deltas[r] = (sum_a - sum_b) / used if used else np.nan
    return deltas, skipped


def label_components_kernel(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected component labels for a boolean grid.

    Labels are 1-based and ordered by the raster-scan position of each
    component's first cell; 0 marks background.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    labels, count = _label_scan(mask)
    return labels, int(count)


def warmup() -> None:
    """Force JIT compilation of all kernels (no-op on the numpy path)."""
    s = np.array([0.1, 0.9, 0.4, 0.6], dtype=np.float64)
    y = np.array([0, 1, 0, 1], dtype=np.uint8)
    auroc_kernel(s, y)
    bootstrap_deltas_kernel(
        s,
        s,
        y,
        np.array([0], dtype=np.int64),
        np.array([4], dtype=np.int64),
        np.zeros((2, 4), dtype=np.int64),
    )
    label_components_kernel(np.eye(3, dtype=bool))
