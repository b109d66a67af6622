"""Quality metrics and synthetic coupled phantoms for desk-scale checks.

The phantom pair stands in for registered multi-contrast scans: both
images share one piecewise-smooth geometry, the second contrast remaps
region intensities with a decreasing map (structures bright in one tend
dark in the other), and each contrast carries one feature the other
lacks so that copying the guidance can never be a shortcut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .images import normalize


def psnr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against a peak of 1.

    The reference is expected on the normalized [0, 1] scale. Identical
    inputs return ``inf``.
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError(
            f"shape mismatch: {reference.shape} vs {estimate.shape}"
        )
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def residual_map(
    reference: np.ndarray, estimate: np.ndarray, rescale: bool = False
) -> np.ndarray:
    """Per-pixel absolute error; ``rescale`` stretches it to [0, 1] for display."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError(
            f"shape mismatch: {reference.shape} vs {estimate.shape}"
        )
    out = np.abs(reference - estimate)
    return normalize(out) if rescale else out


@dataclass
class PhantomPair:
    """A registered synthetic contrast pair with known unique features."""

    target: np.ndarray
    guidance: np.ndarray
    seed: int
    description: str
    target_only: np.ndarray
    guidance_only: np.ndarray


def _ellipse_mask(rows, cols, cy, cx, ry, rx, angle):
    yy, xx = np.mgrid[0:rows, 0:cols]
    y = yy - cy
    x = xx - cx
    c, s = np.cos(angle), np.sin(angle)
    u = (c * x + s * y) / rx
    v = (-s * x + c * y) / ry
    return u * u + v * v <= 1.0


def _rect_mask(rows, cols, cy, cx, hy, hx):
    yy, xx = np.mgrid[0:rows, 0:cols]
    return (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)


def make_phantom_pair(rows: int, cols: int, seed: int) -> PhantomPair:
    """Generate a coupled phantom pair of the given size.

    A head-like outer ellipse contains a seeded arrangement of ellipses
    and rectangles painted in order. Target intensities come from a
    shuffled well-separated ramp; guidance intensities are an affine
    decreasing remap of the same ramp. One extra ellipse is painted into
    the target only and another into the guidance only. Both images are
    lightly blurred and normalized to [0, 1].
    """
    if rows < 32 or cols < 32:
        raise ValueError("phantom dimensions must be at least 32")
    rng = np.random.default_rng(seed)

    n_shapes = 9
    labels = np.zeros((rows, cols), dtype=np.int64)
    outer = _ellipse_mask(
        rows, cols, rows / 2, cols / 2, rows * 0.45, cols * 0.45, 0.0
    )
    labels[outer] = 1
    next_label = 2
    for _ in range(n_shapes):
        cy = rng.uniform(0.22, 0.78) * rows
        cx = rng.uniform(0.22, 0.78) * cols
        if rng.random() < 0.7:
            ry = rng.uniform(0.05, 0.16) * rows
            rx = rng.uniform(0.05, 0.16) * cols
            mask = _ellipse_mask(rows, cols, cy, cx, ry, rx, rng.uniform(0, np.pi))
        else:
            hy = rng.uniform(0.04, 0.12) * rows
            hx = rng.uniform(0.04, 0.12) * cols
            mask = _rect_mask(rows, cols, cy, cx, hy, hx)
        labels[mask & outer] = next_label
        next_label += 1

    # shared region intensities: separated ramp, shuffled per seed
    n_regions = next_label
    ramp = np.linspace(0.15, 0.95, n_regions - 1)
    rng.shuffle(ramp)
    t_levels = np.concatenate([[0.02], ramp])
    g_levels = np.concatenate([[0.02], 1.05 - 0.95 * ramp])

    target = t_levels[labels]
    guidance = g_levels[labels]

    # contrast-unique features on top of the shared geometry
    def unique_ellipse():
        cy = rng.uniform(0.3, 0.7) * rows
        cx = rng.uniform(0.3, 0.7) * cols
        ry = rng.uniform(0.06, 0.11) * rows
        rx = rng.uniform(0.06, 0.11) * cols
        return _ellipse_mask(rows, cols, cy, cx, ry, rx, rng.uniform(0, np.pi)) & outer

    target_only = unique_ellipse()
    guidance_only = unique_ellipse()
    target = np.where(target_only, 0.85, target)
    guidance = np.where(guidance_only, 0.9, guidance)

    sigma = 0.7
    target = normalize(gaussian_filter(target, sigma))
    guidance = normalize(gaussian_filter(guidance, sigma))
    return PhantomPair(
        target=target,
        guidance=guidance,
        seed=seed,
        description=f"coupled phantom {rows}x{cols} seed {seed}",
        target_only=target_only,
        guidance_only=guidance_only,
    )
