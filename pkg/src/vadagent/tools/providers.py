"""Pluggable frozen-feature providers.

The runtime only needs two capabilities from a vision backbone: a global
unit-norm embedding per image and a grid of patch feature vectors. A real
deployment plugs in a frozen self-supervised transformer; the deterministic
synthetic provider below computes the same shapes from pixel statistics so
that every retrieval/expert contract is testable offline.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..imaging import to_luma


class FeatureProvider(Protocol):
    def embed_global(self, image: np.ndarray) -> np.ndarray:
        """Unit-norm 1-D embedding."""

    def patch_tokens(self, image: np.ndarray) -> np.ndarray:
        """(H, W, D) grid of patch feature vectors; grid size fixed."""


def _block_bounds(n: int, parts: int) -> np.ndarray:
    return np.linspace(0, n, parts + 1).round().astype(int)


def _pool_blocks(channel: np.ndarray, grid: int) -> np.ndarray:
    h, w = channel.shape
    ri = _block_bounds(h, grid)
    ci = _block_bounds(w, grid)
    out = np.empty((grid, grid), dtype=np.float64)
    for i in range(grid):
        for j in range(grid):
            block = channel[ri[i] : max(ri[i] + 1, ri[i + 1]), ci[j] : max(ci[j] + 1, ci[j + 1])]
            out[i, j] = float(block.mean())
    return out


class SyntheticProvider:
    """Deterministic pixel-statistics provider used in tests and toy runs.

    Patch tokens are 6-dimensional per cell: RGB means, luma standard
    deviation, and mean absolute horizontal/vertical gradients. The default
    48x48 grid matches the expert heatmap resolution used in trace output.
    """

    def __init__(self, grid: int = 48, embed_grid: int = 8):
        self.grid = grid
        self.embed_grid = embed_grid

    def embed_global(self, image: np.ndarray) -> np.ndarray:
        arr = np.asarray(image, dtype=np.float64) / 255.0
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        parts = [_pool_blocks(arr[..., c], self.embed_grid).ravel() for c in range(3)]
        vec = np.concatenate(parts + [np.array([1.0])])  # constant term keeps norm > 0
        return vec / np.linalg.norm(vec)

    def patch_tokens(self, image: np.ndarray) -> np.ndarray:
        arr = np.asarray(image, dtype=np.float64) / 255.0
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        luma = to_luma(np.asarray(image))
        h, w = luma.shape
        g = self.grid
        ri = _block_bounds(h, g)
        ci = _block_bounds(w, g)
        gx = np.abs(np.diff(luma, axis=1))
        gy = np.abs(np.diff(luma, axis=0))
        tokens = np.empty((g, g, 6), dtype=np.float64)
        for i in range(g):
            r0, r1 = ri[i], max(ri[i] + 1, ri[i + 1])
            for j in range(g):
                c0, c1 = ci[j], max(ci[j] + 1, ci[j + 1])
                tokens[i, j, 0] = arr[r0:r1, c0:c1, 0].mean()
                tokens[i, j, 1] = arr[r0:r1, c0:c1, 1].mean()
                tokens[i, j, 2] = arr[r0:r1, c0:c1, 2].mean()
                tokens[i, j, 3] = luma[r0:r1, c0:c1].std()
                gxb = gx[r0:r1, c0 : max(c0 + 1, c1 - 1)]
                gyb = gy[r0 : max(r0 + 1, r1 - 1), c0:c1]
                tokens[i, j, 4] = gxb.mean() if gxb.size else 0.0
                tokens[i, j, 5] = gyb.mean() if gyb.size else 0.0
        return tokens
