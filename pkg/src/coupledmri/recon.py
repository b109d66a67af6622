"""The reconstruction cycle: train, denoise, enforce k-space consistency.

Each cycle retrains the coupled dictionaries on patches of the current
estimate paired with the guidance image, denoises every patch by joint
sparse coding with per-cycle error thresholds, and pushes the result back
toward the measurements with a closed-form frequency-domain update. The
thresholds decay linearly over the cycles, tightening the patch model as
the estimate improves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cdl
from .config import ReconConfig
from .images import (
    PatchMatrix,
    aggregate_patches,
    extract_patches,
    normalize,
    overlap_count,
)
from .sparse import SparseCodeBatch, batch_code, batch_code_joint
from .transforms import (
    Measurements,
    SamplingMask,
    dft2,
    embed_measurements,
    idft2,
    zero_filled_recon,
)


def epsilon_at(schedule: tuple[float, float], t: int, cycles: int) -> float:
    """Linearly interpolated threshold for cycle ``t`` of ``cycles``.

    Cycle 1 uses the schedule start, the final cycle its end; a single
    cycle uses the start value.
    """
    start, end = schedule
    if not 1 <= t <= cycles:
        raise ValueError(f"cycle index {t} outside 1..{cycles}")
    if cycles == 1:
        return float(start)
    return float(start + (t - 1) / (cycles - 1) * (end - start))


@dataclass
class CycleRecord:
    cycle: int
    eps_c: float
    eps_1: float
    psnr: float
    residual: float
    millis: float


@dataclass
class ReconTrace:
    """Per-cycle diagnostics; ``images`` holds pre-magnitude snapshots
    when they were requested and ``dictionary`` the final trained
    dictionary."""

    records: list[CycleRecord] = field(default_factory=list)
    images: list[np.ndarray] = field(default_factory=list)
    dictionary: object = None

    def __len__(self) -> int:
        return len(self.records)

    def eps_values(self) -> np.ndarray:
        return np.array([[r.eps_c, r.eps_1] for r in self.records])

    def psnr_values(self) -> np.ndarray:
        return np.array([r.psnr for r in self.records])


@dataclass
class DenoiseInfo:
    """Stop diagnostics of one denoising pass over all patches."""

    joint: SparseCodeBatch | None
    unique: SparseCodeBatch
    mean_residual: float


def _code_patches(cols1, cols2, dct, cfg, eps_c, eps_1):
    zb = batch_code_joint(
        cols1, cols2, dct.psi_c, dct.phi_c, cfg.s_c, eps_c, cfg.omp_mode
    )
    common = zb.synthesize(dct.psi_c)
    ub = batch_code(cols1 - common, dct.psi, cfg.s_1, eps_1, cfg.omp_mode)
    return zb, ub, common + ub.synthesize(dct.psi)


def denoise_stage(
    x1: np.ndarray,
    x2: np.ndarray,
    dct: cdl.CoupledDictionary,
    cfg: ReconConfig,
    eps_c: float,
    eps_1: float,
    return_info: bool = False,
):
    """Denoise the target estimate patch by patch with guidance coupling.

    Every patch on the stride lattice is coded jointly with its guidance
    counterpart against the common dictionaries, then its remaining
    target-side residual is coded against the unique target dictionary.
    The per-patch estimates are averaged back into an image. The guidance
    image itself is never altered and its unique code is not needed here.
    """
    if x1.shape != x2.shape:
        raise ValueError("target and guidance images must share a shape")
    pm1 = extract_patches(x1, cfg.patch_side, cfg.stride)
    pm2 = extract_patches(x2, cfg.patch_side, cfg.stride)
    cols1, cols2 = pm1.columns, pm2.columns
    means = None
    if cfg.subtract_patch_means:
        means = cols1.mean(axis=0, keepdims=True)
        cols1 = cols1 - means
        cols2 = cols2 - cols2.mean(axis=0, keepdims=True)
    zb, ub, estimates = _code_patches(cols1, cols2, dct, cfg, eps_c, eps_1)
    if means is not None:
        estimates = estimates + means
    out = aggregate_patches(
        PatchMatrix(estimates, cfg.patch_side, cfg.stride, *x1.shape, pm1.indices())
    )
    if not return_info:
        return out
    diff = cols1 - (estimates - means if means is not None else estimates)
    mean_residual = float(np.mean(np.linalg.norm(diff, axis=0)))
    return out, DenoiseInfo(joint=zb, unique=ub, mean_residual=mean_residual)


def kspace_consistency_complex(
    x_hat: np.ndarray,
    y: Measurements,
    mask: SamplingMask,
    nu1: float,
    beta: int,
) -> np.ndarray:
    """Pre-magnitude consistency update; returns the complex image.

    Off-mask frequencies keep the denoised image's spectrum. Sampled
    frequencies blend toward the measurements with weight nu1/beta, and
    an infinite nu1 replaces them exactly.
    """
    if not (nu1 >= 0):
        raise ValueError("nu1 must be nonnegative (or infinite)")
    if beta <= 0:
        raise ValueError("beta must be a positive overlap count")
    if x_hat.shape != mask.sampled.shape:
        raise ValueError("image and mask shapes disagree")
    k_hat = dft2(x_hat)
    y_grid = embed_measurements(y)
    if np.isinf(nu1):
        k_tilde = np.where(mask.sampled, y_grid, k_hat)
    elif nu1 == 0:
        k_tilde = k_hat
    else:
        nu_scaled = nu1 / beta
        blended = (k_hat + nu_scaled * y_grid) / (1.0 + nu_scaled)
        k_tilde = np.where(mask.sampled, blended, k_hat)
    return idft2(k_tilde)


def kspace_consistency(
    x_hat: np.ndarray,
    y: Measurements,
    mask: SamplingMask,
    nu1: float,
    beta: int,
) -> np.ndarray:
    """Magnitude image after the k-space consistency update."""
    return np.abs(kspace_consistency_complex(x_hat, y, mask, nu1, beta))


def _draw_training_set(x, guidance, cfg, rng, seed):
    pm1 = extract_patches(x, cfg.patch_side, cfg.stride)
    pm2 = extract_patches(guidance, cfg.patch_side, cfg.stride)
    total = pm1.count
    size = cfg.subset_size(total)
    picks = rng.choice(total, size=size, replace=False)
    return cdl.TrainingSet(
        x1=np.ascontiguousarray(pm1.columns[:, picks]),
        x2=np.ascontiguousarray(pm2.columns[:, picks]),
        seed=seed,
    )


def _trace_row(t, eps_c, eps_1, estimate, ground_truth, info, started):
    from .evaluate import psnr

    value = psnr(ground_truth, estimate) if ground_truth is not None else float("nan")
    return CycleRecord(
        cycle=t,
        eps_c=eps_c,
        eps_1=eps_1,
        psnr=value,
        residual=info.mean_residual,
        millis=(time.perf_counter() - started) * 1000.0,
    )


def reconstruct(
    y: Measurements,
    mask: SamplingMask,
    guidance: np.ndarray,
    cfg: ReconConfig,
    ground_truth: np.ndarray | None = None,
    record_images: bool = False,
) -> tuple[np.ndarray, ReconTrace]:
    """Recover the target contrast from undersampled k-space with guidance.

    Starts from the zero-filled baseline and runs ``cfg.cycles`` rounds of
    dictionary training, coupled denoising, and consistency enforcement.
    The guidance image is normalized once up front and must be registered
    to the target. Fully deterministic for fixed inputs and seed.

    Returns the final magnitude image and the per-cycle trace.
    """
    cfg.validate()
    guidance = normalize(np.asarray(guidance, dtype=np.float64))
    if guidance.shape != mask.sampled.shape:
        raise ValueError("guidance shape does not match the measurement grid")
    if ground_truth is not None:
        ground_truth = normalize(np.asarray(ground_truth, dtype=np.float64))
    rng = np.random.default_rng(cfg.seed)
    beta = overlap_count(cfg.patch_side, cfg.stride)
    x = zero_filled_recon(y, mask)
    trace = ReconTrace()
    dct = None
    for t in range(1, cfg.cycles + 1):
        started = time.perf_counter()
        train_seed = int(rng.integers(np.iinfo(np.int64).max))
        ts = _draw_training_set(x, guidance, cfg, rng, train_seed)
        init = dct if (cfg.warm_start and dct is not None) else None
        dct = cdl.train(ts, _with_seed(cfg, train_seed), init=init)
        eps_c = epsilon_at(cfg.eps_c_schedule, t, cfg.cycles)
        eps_1 = epsilon_at(cfg.eps_1_schedule, t, cfg.cycles)
        x_hat, info = denoise_stage(x, guidance, dct, cfg, eps_c, eps_1, return_info=True)
        x_complex = kspace_consistency_complex(x_hat, y, mask, cfg.nu1, beta)
        x = np.abs(x_complex)
        if record_images:
            trace.images.append(x_complex)
        trace.records.append(
            _trace_row(t, eps_c, eps_1, x, ground_truth, info, started)
        )
    trace.dictionary = dct
    return x, trace


def reconstruct_single_contrast(
    y: Measurements,
    mask: SamplingMask,
    cfg: ReconConfig,
    ground_truth: np.ndarray | None = None,
    record_images: bool = False,
) -> tuple[np.ndarray, ReconTrace]:
    """Unguided baseline: the same cycle with a single learned dictionary.

    Patches are coded against one dictionary with the solo support cap
    and the second threshold schedule; the common/guidance branch is
    absent. Useful as the ablation reference for the guided pipeline.
    """
    cfg.validate()
    if ground_truth is not None:
        ground_truth = normalize(np.asarray(ground_truth, dtype=np.float64))
    rng = np.random.default_rng(cfg.seed)
    beta = overlap_count(cfg.patch_side, cfg.stride)
    x = zero_filled_recon(y, mask)
    trace = ReconTrace()
    psi = None
    for t in range(1, cfg.cycles + 1):
        started = time.perf_counter()
        train_seed = int(rng.integers(np.iinfo(np.int64).max))
        pm = extract_patches(x, cfg.patch_side, cfg.stride)
        picks = rng.choice(pm.count, size=cfg.subset_size(pm.count), replace=False)
        columns = np.ascontiguousarray(pm.columns[:, picks])
        init = psi if (cfg.warm_start and psi is not None) else None
        psi = cdl.train_single(columns, _with_seed(cfg, train_seed), init=init)
        eps_1 = epsilon_at(cfg.eps_1_schedule, t, cfg.cycles)
        cols = pm.columns
        means = None
        if cfg.subtract_patch_means:
            means = cols.mean(axis=0, keepdims=True)
            cols = cols - means
        ub = batch_code(cols, psi, cfg.solo_cap, eps_1, cfg.omp_mode)
        estimates = ub.synthesize(psi)
        if means is not None:
            estimates = estimates + means
        x_hat = aggregate_patches(
            PatchMatrix(estimates, cfg.patch_side, cfg.stride, *x.shape, pm.indices())
        )
        diff = pm.columns - estimates
        info = DenoiseInfo(
            joint=None,
            unique=ub,
            mean_residual=float(np.mean(np.linalg.norm(diff, axis=0))),
        )
        x_complex = kspace_consistency_complex(x_hat, y, mask, cfg.nu1, beta)
        x = np.abs(x_complex)
        if record_images:
            trace.images.append(x_complex)
        eps_c = epsilon_at(cfg.eps_c_schedule, t, cfg.cycles)
        trace.records.append(
            _trace_row(t, eps_c, eps_1, x, ground_truth, info, started)
        )
    trace.dictionary = psi
    return x, trace


def _with_seed(cfg: ReconConfig, seed: int) -> ReconConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)
