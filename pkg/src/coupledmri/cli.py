"""Command-line front end for the simulate / reconstruct / evaluate workflow.

Commands
--------
simulate      mask + retrospective measurements + zero-filled baseline
reconstruct   guided (or single-contrast) reconstruction with trace CSV
evaluate      PSNR and residual map between two images
mask-gen      write a sampling mask container
phantom-gen   write a coupled phantom pair as graymaps
gallery       render a trained dictionary's atoms as one image

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 numeric
failure (non-finite values produced).

Heavy imports happen after argument parsing so that ``--threads`` can cap
the BLAS pools before they start; the cap must never change results.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class NumericFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# flat key=value experiment configs

_RECON_KEYS = {
    "patch_side": int,
    "n_atoms": int,
    "s_c": int,
    "s_1": int,
    "s_2": int,
    "train_iters": int,
    "cycles": int,
    "stride": int,
    "nu1": float,
    "eps_c_start": float,
    "eps_c_end": float,
    "eps_1_start": float,
    "eps_1_end": float,
    "training_subset": int,
    "seed": int,
    "omp_mode": str,
    "warm_start": bool,
    "s_solo": int,
    "subtract_patch_means": bool,
}
_EXPERIMENT_KEYS = {
    "mask_kind": str,
    "fold": float,
    "mask_seed": int,
    "center_fraction": float,
    "decay_power": float,
    "ablation": bool,
}
CONFIG_KEYS = {**_RECON_KEYS, **_EXPERIMENT_KEYS}
_OPTIONAL_INT_KEYS = {"training_subset", "s_solo"}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key=value`` lines ('#' comments, blank lines allowed)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def _parse_value(key, value):
    kind = CONFIG_KEYS[key]
    if key in _OPTIONAL_INT_KEYS and value.lower() == "none":
        return None
    if kind is bool:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{key} must be a boolean, got {value!r}")
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)  # accepts 'inf'
    return value


def serialize_config(values: dict) -> str:
    """Inverse of :func:`parse_config_text` over known keys."""
    lines = []
    for key in CONFIG_KEYS:
        if key not in values:
            continue
        value = values[key]
        if value is None:
            rendered = "none"
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{key}={rendered}")
    return "\n".join(lines) + "\n"


def _merged_settings(args) -> dict:
    """defaults <- config file <- explicit CLI flags."""
    from .config import ReconConfig

    base = ReconConfig()
    merged = {
        "patch_side": base.patch_side,
        "n_atoms": base.n_atoms,
        "s_c": base.s_c,
        "s_1": base.s_1,
        "s_2": base.s_2,
        "train_iters": base.train_iters,
        "cycles": base.cycles,
        "stride": base.stride,
        "nu1": base.nu1,
        "eps_c_start": base.eps_c_schedule[0],
        "eps_c_end": base.eps_c_schedule[1],
        "eps_1_start": base.eps_1_schedule[0],
        "eps_1_end": base.eps_1_schedule[1],
        "training_subset": base.training_subset,
        "seed": base.seed,
        "omp_mode": base.omp_mode,
        "warm_start": base.warm_start,
        "s_solo": base.s_solo,
        "subtract_patch_means": base.subtract_patch_means,
        "mask_kind": "cartesian1d",
        "fold": 4.0,
        "mask_seed": 0,
        "center_fraction": 0.04,
        "decay_power": 6.0,
        "ablation": False,
    }
    if getattr(args, "config", None):
        merged.update(parse_config_text(Path(args.config).read_text()))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _recon_config(settings):
    from .config import ReconConfig

    cfg = ReconConfig(
        patch_side=settings["patch_side"],
        n_atoms=settings["n_atoms"],
        s_c=settings["s_c"],
        s_1=settings["s_1"],
        s_2=settings["s_2"],
        train_iters=settings["train_iters"],
        cycles=settings["cycles"],
        stride=settings["stride"],
        nu1=settings["nu1"],
        eps_c_schedule=(settings["eps_c_start"], settings["eps_c_end"]),
        eps_1_schedule=(settings["eps_1_start"], settings["eps_1_end"]),
        training_subset=settings["training_subset"],
        seed=settings["seed"],
        omp_mode=settings["omp_mode"],
        warm_start=settings["warm_start"],
        s_solo=settings["s_solo"],
        subtract_patch_means=settings["subtract_patch_means"],
    )
    cfg.validate()
    return cfg


def _add_config_flags(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--patch-side", dest="patch_side", type=int)
    p.add_argument("--atoms", dest="n_atoms", type=int)
    p.add_argument("--s-c", dest="s_c", type=int)
    p.add_argument("--s-1", dest="s_1", type=int)
    p.add_argument("--s-2", dest="s_2", type=int)
    p.add_argument("--train-iters", dest="train_iters", type=int)
    p.add_argument("--cycles", dest="cycles", type=int)
    p.add_argument("--stride", dest="stride", type=int)
    p.add_argument("--nu1", dest="nu1", type=float, help="'inf' for exact replacement")
    p.add_argument("--eps-c-start", dest="eps_c_start", type=float)
    p.add_argument("--eps-c-end", dest="eps_c_end", type=float)
    p.add_argument("--eps-1-start", dest="eps_1_start", type=float)
    p.add_argument("--eps-1-end", dest="eps_1_end", type=float)
    p.add_argument("--subset", dest="training_subset", type=int)
    p.add_argument("--seed", dest="seed", type=int)
    p.add_argument("--omp-mode", dest="omp_mode", choices=["correlation", "exact_ls"])
    p.add_argument(
        "--no-warm-start", dest="warm_start", action="store_const", const=False
    )
    p.add_argument("--s-solo", dest="s_solo", type=int)
    p.add_argument(
        "--subtract-means",
        dest="subtract_patch_means",
        action="store_const",
        const=True,
    )


def _add_mask_flags(p):
    p.add_argument("--mask-kind", dest="mask_kind", choices=["cartesian1d", "random2d"])
    p.add_argument("--fold", dest="fold", type=float)
    p.add_argument("--mask-seed", dest="mask_seed", type=int)
    p.add_argument("--center-fraction", dest="center_fraction", type=float)
    p.add_argument("--decay-power", dest="decay_power", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coupledmri",
        description="guided MRI reconstruction from undersampled k-space",
    )
    parser.add_argument(
        "--threads",
        type=int,
        help="cap BLAS worker threads (results are unaffected)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="retrospectively undersample a ground truth")
    p.add_argument("--target", required=True, help="ground-truth graymap")
    p.add_argument("--mask-file", help="reuse an existing mask container")
    p.add_argument("--out-dir", required=True)
    _add_mask_flags(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run the reconstruction cycle")
    p.add_argument("--measurements", required=True)
    p.add_argument("--guidance", help="fully sampled companion graymap")
    p.add_argument("--ground-truth", help="enables PSNR and residual outputs")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ablation", action="store_const", const=True, default=None,
                   help="single-contrast run without guidance")
    p.add_argument("--gallery", action="store_true",
                   help="also write the trained dictionary and its atom gallery")
    _add_config_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PSNR between two graymaps")
    p.add_argument("--reference", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--residual-out", help="write the display-scaled residual map")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mask-gen", help="write a sampling mask")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_mask_flags(p)
    p.set_defaults(func=cmd_mask_gen)

    p = sub.add_parser("phantom-gen", help="write a coupled phantom pair")
    p.add_argument("--rows", type=int, default=128)
    p.add_argument("--cols", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("gallery", help="render dictionary atoms")
    p.add_argument("--dictionary", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gallery)

    return parser


# ---------------------------------------------------------------------------
# commands


def _require_finite(arr, what):
    import numpy as np

    if not np.isfinite(arr).all():
        raise NumericFailure(f"non-finite values in {what}")


def _load_mask_or_make(args, settings, rows, cols):
    from . import storage, transforms

    if getattr(args, "mask_file", None):
        mask = storage.read_mask(args.mask_file)
        if (mask.rows, mask.cols) != (rows, cols):
            raise ValueError("mask shape does not match the target image")
        return mask
    return transforms.make_mask(
        settings["mask_kind"],
        rows,
        cols,
        settings["fold"],
        settings["mask_seed"],
        center_fraction=settings["center_fraction"],
        decay_power=settings["decay_power"],
    )


def cmd_simulate(args) -> int:
    from . import evaluate, images, storage, transforms

    settings = _merged_settings(args)
    target = images.normalize(storage.read_pgm(args.target))
    mask = _load_mask_or_make(args, settings, *target.shape)
    y = transforms.undersample(transforms.dft2(target), mask)
    baseline = transforms.zero_filled_recon(y, mask)
    _require_finite(baseline, "zero-filled baseline")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_mask(out / "mask.cmask", mask)
    storage.write_measurements(out / "measurements.cmeas", y)
    storage.write_pgm(out / "zero_filled.pgm", baseline)
    print(f"zero_filled_psnr={evaluate.psnr(target, baseline)!r}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    from . import evaluate, images, recon, storage

    settings = _merged_settings(args)
    ablation = bool(settings.get("ablation"))
    cfg = _recon_config(settings)

    y = storage.read_measurements(args.measurements)
    mask = y.mask
    ground_truth = (
        images.normalize(storage.read_pgm(args.ground_truth))
        if args.ground_truth
        else None
    )
    if ablation:
        image, trace = recon.reconstruct_single_contrast(
            y, mask, cfg, ground_truth=ground_truth
        )
    else:
        if not args.guidance:
            raise ValueError("a guidance image is required unless --ablation is set")
        guidance = storage.read_pgm(args.guidance)
        image, trace = recon.reconstruct(
            y, mask, guidance, cfg, ground_truth=ground_truth
        )
    _require_finite(image, "reconstruction")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_pgm(out / "reconstruction.pgm", image)
    storage.write_trace_csv(out / "trace.csv", trace)
    if ground_truth is not None:
        residual = evaluate.residual_map(ground_truth, image)
        storage.write_pgm(out / "residual.pgm", evaluate.residual_map(
            ground_truth, image, rescale=True))
        storage.write_pgm(out / "residual_raw.pgm", residual)
        print(f"final_psnr={evaluate.psnr(ground_truth, image)!r}")
    else:
        print("final_psnr=nan")
    if args.gallery and trace.dictionary is not None and not ablation:
        storage.write_dictionary(out / "dictionary.cdict", trace.dictionary)
        storage.write_pgm(out / "gallery.pgm", render_gallery(trace.dictionary))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from . import evaluate, images, storage

    reference = images.normalize(storage.read_pgm(args.reference))
    estimate = storage.read_pgm(args.estimate)
    if reference.shape != estimate.shape:
        raise ValueError("reference and estimate shapes differ")
    print(f"psnr={evaluate.psnr(reference, estimate)!r}")
    if args.residual_out:
        storage.write_pgm(
            args.residual_out, evaluate.residual_map(reference, estimate, rescale=True)
        )
    return EXIT_OK


def cmd_mask_gen(args) -> int:
    from . import storage, transforms

    settings = _merged_settings(args)
    mask = transforms.make_mask(
        settings["mask_kind"],
        args.rows,
        args.cols,
        settings["fold"],
        settings["mask_seed"],
        center_fraction=settings["center_fraction"],
        decay_power=settings["decay_power"],
    )
    storage.write_mask(args.out, mask)
    print(f"samples={mask.num_samples} achieved_fold={mask.fold!r}")
    return EXIT_OK


def cmd_phantom_gen(args) -> int:
    from . import evaluate, storage

    pair = evaluate.make_phantom_pair(args.rows, args.cols, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_pgm(out / "target.pgm", pair.target)
    storage.write_pgm(out / "guidance.pgm", pair.guidance)
    print(f"phantom={pair.description!r}")
    return EXIT_OK


def render_gallery(dct) -> np.ndarray:
    """Tile the four dictionaries' atoms into one displayable image.

    Each atom is reshaped to its square patch and min-max normalized
    (constant atoms render mid-gray). The four grids are arranged with
    the common pair in the left column: target dictionaries on top,
    guidance dictionaries below.
    """
    import numpy as np

    side = int(round(np.sqrt(dct.n)))
    if side * side != dct.n:
        raise ValueError("atoms are not square patches")

    def grid(matrix):
        k = matrix.shape[1]
        cols = int(np.ceil(np.sqrt(k)))
        rows = int(np.ceil(k / cols))
        canvas = np.zeros((rows * (side + 1) + 1, cols * (side + 1) + 1))
        for i in range(k):
            atom = matrix[:, i].reshape(side, side)
            lo, hi = atom.min(), atom.max()
            cell = np.full_like(atom, 0.5) if hi == lo else (atom - lo) / (hi - lo)
            r, c = divmod(i, cols)
            canvas[
                1 + r * (side + 1) : 1 + r * (side + 1) + side,
                1 + c * (side + 1) : 1 + c * (side + 1) + side,
            ] = cell
        return canvas

    g_psi_c, g_psi = grid(dct.psi_c), grid(dct.psi)
    g_phi_c, g_phi = grid(dct.phi_c), grid(dct.phi)
    top = np.hstack([g_psi_c, np.ones((g_psi_c.shape[0], 4)), g_psi])
    bottom = np.hstack([g_phi_c, np.ones((g_phi_c.shape[0], 4)), g_phi])
    gap = np.ones((4, top.shape[1]))
    return np.vstack([top, gap, bottom])


def cmd_gallery(args) -> int:
    from . import storage

    dct = storage.read_dictionary(args.dictionary)
    storage.write_pgm(args.out, render_gallery(dct))
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return EXIT_VALIDATION
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, EOFError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        from .storage import FormatError

        code = EXIT_IO if isinstance(exc, FormatError) else EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
