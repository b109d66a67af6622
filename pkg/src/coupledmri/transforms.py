"""Unitary 2D DFT, variable-density sampling masks, and undersampling operators.

The frequency grid is kept in standard FFT layout (DC at index [0, 0]);
low frequencies are those at small wrapped distance from DC. All
transforms use the orthonormal normalization, so energy is preserved and
the adjoint of the sampling-restricted transform is its conjugate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK_KINDS = ("cartesian1d", "random2d")


def dft2(img: np.ndarray) -> np.ndarray:
    """Orthonormal 2D DFT of an image."""
    img = np.asarray(img)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a nonempty 2D grid")
    return np.fft.fft2(img, norm="ortho")


def idft2(k: np.ndarray) -> np.ndarray:
    """Orthonormal inverse 2D DFT; returns a complex image grid."""
    k = np.asarray(k)
    if k.ndim != 2 or k.size == 0:
        raise ValueError("expected a nonempty 2D grid")
    return np.fft.ifft2(k, norm="ortho")


@dataclass
class SamplingMask:
    """Boolean k-space sample-location set on the FFT-layout grid."""

    sampled: np.ndarray
    kind: str
    fold: float

    @property
    def rows(self) -> int:
        return self.sampled.shape[0]

    @property
    def cols(self) -> int:
        return self.sampled.shape[1]

    @property
    def num_samples(self) -> int:
        return int(self.sampled.sum())

    def flat_indices(self) -> np.ndarray:
        """Row-major flat indices of the sampled locations."""
        return np.flatnonzero(self.sampled.reshape(-1))


@dataclass
class Measurements:
    """Complex k-space values retained at the sampled locations.

    ``values[i]`` corresponds to ``mask.flat_indices()[i]`` (row-major
    order over the grid).
    """

    values: np.ndarray
    mask: SamplingMask


def _wrapped_distance(m: int) -> np.ndarray:
    # distance of each FFT index from DC, wrapping past the Nyquist index
    p = np.arange(m)
    return np.minimum(p, m - p).astype(np.float64)


def make_mask(
    kind: str,
    rows: int,
    cols: int,
    fold: float,
    seed: int,
    center_fraction: float = 0.04,
    decay_power: float = 6.0,
) -> SamplingMask:
    """Generate a variable-density sampling mask with exact cardinality.

    Candidates (phase-encode lines for ``cartesian1d``, individual grid
    points for ``random2d``) are ranked by a seeded weighted draw whose
    weights decay with distance from the k-space center as
    ``(1 - d/d_max)**decay_power``. A central band (or disc) covering
    ``center_fraction`` of the grid is always included first, and exactly
    ``round(total/fold)`` candidates are kept, so the requested fold is
    met to within one line or point.
    """
    if kind not in MASK_KINDS:
        raise ValueError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    if rows <= 0 or cols <= 0:
        raise ValueError("mask dimensions must be positive")
    if not fold >= 1:
        raise ValueError("undersampling fold must be >= 1")
    if fold > rows * cols:
        raise ValueError(f"fold {fold} exceeds the number of grid points")

    rng = np.random.default_rng(seed)
    sampled = np.zeros((rows, cols), dtype=bool)

    if kind == "cartesian1d":
        target = max(1, round(rows / fold))
        d = _wrapped_distance(rows)
        d_max = max(d.max(), 1.0)
        weights = np.clip((1.0 - d / d_max) ** decay_power, 1e-12, None)
        # Efraimidis-Spirakis keys: top-k by u**(1/w) samples w/o replacement
        keys = rng.random(rows) ** (1.0 / weights)
        n_center = min(rows, max(1, round(center_fraction * rows)))
        center_rank = np.lexsort((np.arange(rows), d))
        in_center = np.zeros(rows, dtype=bool)
        in_center[center_rank[:n_center]] = True
        order = np.lexsort((np.arange(rows), -keys, ~in_center))
        sampled[order[:target], :] = True
    else:
        total = rows * cols
        target = max(1, round(total / fold))
        dr = _wrapped_distance(rows)[:, None]
        dc = _wrapped_distance(cols)[None, :]
        d = np.hypot(dr, dc).reshape(-1)
        d_max = max(d.max(), 1.0)
        weights = np.clip((1.0 - d / d_max) ** decay_power, 1e-12, None)
        keys = rng.random(total) ** (1.0 / weights)
        radius = max(1.0, center_fraction * min(rows, cols))
        in_center = d <= radius
        order = np.lexsort((np.arange(total), -keys, ~in_center))
        flat = sampled.reshape(-1)
        flat[order[:target]] = True

    achieved = rows * cols / max(int(sampled.sum()), 1)
    return SamplingMask(sampled=sampled, kind=kind, fold=achieved)


def full_mask(rows: int, cols: int) -> SamplingMask:
    """Mask sampling every k-space location (fold 1)."""
    return SamplingMask(np.ones((rows, cols), dtype=bool), "cartesian1d", 1.0)


def undersample(k: np.ndarray, mask: SamplingMask) -> Measurements:
    """Restrict a k-space grid to the sampled locations."""
    k = np.asarray(k)
    if k.shape != mask.sampled.shape:
        raise ValueError(
            f"k-space shape {k.shape} does not match mask shape {mask.sampled.shape}"
        )
    values = k.reshape(-1)[mask.flat_indices()].astype(np.complex128)
    return Measurements(values=values, mask=mask)


def embed_measurements(y: Measurements) -> np.ndarray:
    """Zero-filled k-space grid holding the measured values at their locations."""
    mask = y.mask
    idx = mask.flat_indices()
    if y.values.shape != idx.shape:
        raise ValueError("measurement count does not match the mask")
    grid = np.zeros(mask.sampled.shape, dtype=np.complex128)
    grid.reshape(-1)[idx] = y.values
    return grid


def zero_filled_recon(y: Measurements, mask: SamplingMask) -> np.ndarray:
    """Magnitude image of the inverse DFT of zero-filled measurements.

    This is the standard baseline and the initialization of the
    reconstruction cycle.
    """
    if mask is not y.mask and not np.array_equal(mask.sampled, y.mask.sampled):
        raise ValueError("mask disagrees with the measurements' own mask")
    return np.abs(idft2(embed_measurements(y)))
