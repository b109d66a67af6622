"""Guided MRI reconstruction from undersampled k-space.

A fully sampled companion contrast steers the recovery of an
undersampled target contrast: coupled dictionaries learned on patch
pairs capture shared structure, joint sparse coding denoises the
estimate, and a closed-form frequency-domain update keeps it consistent
with the measurements. Images are plain 2D float64 arrays on a [0, 1]
intensity scale.
"""

from .cdl import (
    CoupledDictionary,
    SparseCodeSet,
    TrainingSet,
    init_dictionaries,
    replace_dead_atoms,
    sparse_coding_step,
    train,
    train_single,
    update_common_atoms,
    update_unique_atoms,
)
from .config import INFINITE, ReconConfig
from .evaluate import PhantomPair, make_phantom_pair, psnr, residual_map
from .images import (
    PatchMatrix,
    aggregate_patches,
    extract_patches,
    normalize,
    overlap_count,
)
from .recon import (
    ReconTrace,
    denoise_stage,
    epsilon_at,
    kspace_consistency,
    kspace_consistency_complex,
    reconstruct,
    reconstruct_single_contrast,
)
from .sparse import SparseCode, SparseCodeBatch, batch_code, batch_code_joint, joint_omp, omp
from .transforms import (
    Measurements,
    SamplingMask,
    dft2,
    embed_measurements,
    full_mask,
    idft2,
    make_mask,
    undersample,
    zero_filled_recon,
)

__version__ = "0.1.0"

__all__ = [
    "CoupledDictionary",
    "INFINITE",
    "Measurements",
    "PatchMatrix",
    "PhantomPair",
    "ReconConfig",
    "ReconTrace",
    "SamplingMask",
    "SparseCode",
    "SparseCodeBatch",
    "SparseCodeSet",
    "TrainingSet",
    "aggregate_patches",
    "batch_code",
    "batch_code_joint",
    "denoise_stage",
    "dft2",
    "embed_measurements",
    "epsilon_at",
    "extract_patches",
    "full_mask",
    "idft2",
    "init_dictionaries",
    "joint_omp",
    "kspace_consistency",
    "kspace_consistency_complex",
    "make_mask",
    "make_phantom_pair",
    "normalize",
    "omp",
    "overlap_count",
    "psnr",
    "reconstruct",
    "reconstruct_single_contrast",
    "replace_dead_atoms",
    "residual_map",
    "sparse_coding_step",
    "train",
    "train_single",
    "undersample",
    "update_common_atoms",
    "update_unique_atoms",
    "zero_filled_recon",
]
