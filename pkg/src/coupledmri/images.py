"""Patch extraction and aggregation with wrap-around boundary handling.

Images are plain 2D float64 arrays. A patch is a square window vectorized
in row-major order; windows that cross an image edge continue from the
opposite edge, so every stride lattice position yields a full patch and
(when the stride divides the patch side) every pixel is covered by the
same number of patches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def normalize(img: np.ndarray) -> np.ndarray:
    """Affinely rescale intensities to [0, 1].

    A constant image maps to all zeros; otherwise the minimum maps to 0
    and the maximum to 1.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.size == 0:
        raise ValueError("cannot normalize an empty image")
    lo = float(img.min())
    hi = float(img.max())
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def overlap_count(patch_side: int, stride: int) -> int:
    """Number of overlapping patches covering each pixel.

    Valid only when ``stride`` divides ``patch_side``; otherwise coverage
    is non-uniform and there is no single count.
    """
    if patch_side <= 0 or stride <= 0:
        raise ValueError("patch_side and stride must be positive")
    if patch_side % stride != 0:
        raise ValueError(
            f"stride {stride} does not divide patch side {patch_side}; "
            "per-pixel coverage would be non-uniform"
        )
    return (patch_side // stride) ** 2


@dataclass
class PatchMatrix:
    """Vectorized patches of one image, one column per patch.

    Columns are ordered row-major by the top-left corner of each patch on
    the stride lattice; within a column, pixels are in row-major order.
    """

    columns: np.ndarray
    patch_side: int
    stride: int
    source_rows: int
    source_cols: int
    _indices: np.ndarray = field(repr=False, default=None)

    @property
    def count(self) -> int:
        return self.columns.shape[1]

    def indices(self) -> np.ndarray:
        """Flat source-pixel index of every patch entry, shape (count, n)."""
        if self._indices is None:
            self._indices = _patch_indices(
                self.source_rows, self.source_cols, self.patch_side, self.stride
            )
        return self._indices


def _patch_indices(rows, cols, patch_side, stride):
    # (count, patch_side**2) flat indices, wrap-around via modulo
    ri = (np.arange(0, rows, stride)[:, None] + np.arange(patch_side)[None, :]) % rows
    ci = (np.arange(0, cols, stride)[:, None] + np.arange(patch_side)[None, :]) % cols
    flat = ri[:, None, :, None] * cols + ci[None, :, None, :]
    return np.ascontiguousarray(flat.reshape(-1, patch_side * patch_side))


def extract_patches(img: np.ndarray, patch_side: int, stride: int = 1) -> PatchMatrix:
    """Extract all wrap-around patches whose corners lie on the stride lattice.

    Parameters
    ----------
    img : 2D array
        Source image.
    patch_side : int
        Side length of the square patches.
    stride : int
        Corner lattice spacing; must divide both image dimensions so the
        lattice tiles the torus evenly.

    Returns
    -------
    PatchMatrix with one length ``patch_side**2`` column per corner.
    """
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a nonempty 2D image")
    rows, cols = img.shape
    if patch_side <= 0 or stride <= 0:
        raise ValueError("patch_side and stride must be positive")
    if rows % stride != 0 or cols % stride != 0:
        raise ValueError(
            f"stride {stride} must divide the image dimensions {rows}x{cols}"
        )
    idx = _patch_indices(rows, cols, patch_side, stride)
    columns = np.ascontiguousarray(img.reshape(-1)[idx].T)
    return PatchMatrix(columns, patch_side, stride, rows, cols, idx)


def aggregate_patches(pm: PatchMatrix) -> np.ndarray:
    """Average overlapping patches back into an image.

    Each pixel becomes the arithmetic mean of all patch entries covering
    it. With wrap-around and a stride dividing the patch side the
    per-pixel count equals ``overlap_count(patch_side, stride)``; the
    actual counts are used so the mean is exact in every case.
    """
    idx = pm.indices()
    if idx.shape != pm.columns.T.shape:
        raise ValueError("patch matrix is internally inconsistent")
    n_pixels = pm.source_rows * pm.source_cols
    acc = np.zeros(n_pixels, dtype=np.result_type(pm.columns, np.float64))
    np.add.at(acc, idx.reshape(-1), pm.columns.T.reshape(-1))
    counts = np.zeros(n_pixels, dtype=np.int64)
    np.add.at(counts, idx.reshape(-1), 1)
    return (acc / counts).reshape(pm.source_rows, pm.source_cols)


def coverage_counts(rows, cols, patch_side, stride):
    """Per-pixel patch coverage computed by direct accumulation."""
    idx = _patch_indices(rows, cols, patch_side, stride)
    counts = np.zeros(rows * cols, dtype=np.int64)
    np.add.at(counts, idx.reshape(-1), 1)
    return counts.reshape(rows, cols)
