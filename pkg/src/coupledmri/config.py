"""Reconstruction configuration: every tunable scalar in one place.

Defaults follow the standard operating point for 256x256 images: 8x8
patches at stride 1, 512 atoms, caps (6, 2, 2), 50 learning iterations
inside each of 60 cycles, thresholds 0.1 to 0.005 and 0.09 to 0.004, and
an infinite measurement weight for the noise-free setting (sampled
frequencies are replaced exactly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

INFINITE = math.inf


@dataclass
class ReconConfig:
    patch_side: int = 8
    n_atoms: int = 512
    s_c: int = 6
    s_1: int = 2
    s_2: int = 2
    train_iters: int = 50
    cycles: int = 60
    stride: int = 1
    nu1: float = INFINITE
    eps_c_schedule: tuple[float, float] = (0.1, 0.005)
    eps_1_schedule: tuple[float, float] = (0.09, 0.004)
    training_subset: int | None = None
    seed: int = 0
    omp_mode: str = "correlation"
    warm_start: bool = True
    s_solo: int | None = None
    subtract_patch_means: bool = False

    @property
    def solo_cap(self) -> int:
        """Support cap for the single-contrast variant (defaults to s_c + s_1)."""
        return self.s_solo if self.s_solo is not None else self.s_c + self.s_1

    def subset_size(self, total: int) -> int:
        """Training columns to draw from ``total`` available patches."""
        if self.training_subset is not None:
            return min(self.training_subset, total)
        return min(total, 10 * self.n_atoms)

    def validate(self) -> None:
        if self.patch_side <= 0 or self.stride <= 0:
            raise ValueError("patch_side and stride must be positive")
        if self.patch_side % self.stride != 0:
            raise ValueError("stride must divide patch_side for uniform coverage")
        if self.n_atoms <= 0:
            raise ValueError("n_atoms must be positive")
        if min(self.s_c, self.s_1, self.s_2) < 0:
            raise ValueError("support caps must be nonnegative")
        if self.train_iters < 0:
            raise ValueError("train_iters must be nonnegative")
        if self.cycles < 1:
            raise ValueError("at least one cycle is required")
        if not (self.nu1 >= 0):
            raise ValueError("nu1 must be nonnegative (or infinite)")
        for name, (start, end) in (
            ("eps_c_schedule", self.eps_c_schedule),
            ("eps_1_schedule", self.eps_1_schedule),
        ):
            if not (start >= end >= 0):
                raise ValueError(f"{name} must satisfy start >= end >= 0")
        if self.omp_mode not in ("correlation", "exact_ls"):
            raise ValueError(f"unknown omp_mode {self.omp_mode!r}")
        if self.training_subset is not None and self.training_subset <= 0:
            raise ValueError("training_subset must be positive when given")
        if self.s_solo is not None and self.s_solo < 0:
            raise ValueError("s_solo must be nonnegative when given")
