"""Coupled dictionary learning by alternating sparse coding and atom updates.

Four dictionaries are learned over paired patch sets: a common pair
(psi_c, phi_c) whose stacked atoms share one code, and per-contrast
unique dictionaries (psi, phi). Each learning iteration codes the
training pairs, then sweeps the atoms in ascending order applying the
closed-form coordinate update followed by projection onto the unit ball;
later atoms in a sweep see earlier updates. Atoms whose code row is all
zero are replaced by the strongest training residual after each sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import batch_code, batch_code_joint

NORM_SLACK = 1e-12


@dataclass
class CoupledDictionary:
    """The four (n, K) dictionaries with their norm constraints.

    Stacked common atom pairs [psi_c_k; phi_c_k] have joint norm at most
    1; unique atoms psi_k and phi_k are each individually bounded by 1.
    """

    psi_c: np.ndarray
    phi_c: np.ndarray
    psi: np.ndarray
    phi: np.ndarray

    @property
    def n(self) -> int:
        return self.psi_c.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.psi_c.shape[1]

    def stacked_common(self) -> np.ndarray:
        return np.vstack([self.psi_c, self.phi_c])

    def validate(self) -> None:
        shapes = {m.shape for m in (self.psi_c, self.phi_c, self.psi, self.phi)}
        if len(shapes) != 1:
            raise ValueError(f"dictionary matrices disagree in shape: {shapes}")
        joint = np.linalg.norm(self.stacked_common(), axis=0)
        if joint.max(initial=0.0) > 1.0 + NORM_SLACK:
            raise ValueError("a common atom pair exceeds the joint unit-norm bound")
        for name, m in (("psi", self.psi), ("phi", self.phi)):
            norms = np.linalg.norm(m, axis=0)
            if norms.max(initial=0.0) > 1.0 + NORM_SLACK:
                raise ValueError(f"a {name} atom exceeds the unit-norm bound")

    def copy(self) -> "CoupledDictionary":
        return CoupledDictionary(
            self.psi_c.copy(), self.phi_c.copy(), self.psi.copy(), self.phi.copy()
        )


@dataclass
class TrainingSet:
    """Positionally paired patch columns from the target and guidance images."""

    x1: np.ndarray
    x2: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.x1.shape != self.x2.shape:
            raise ValueError("paired training matrices must have equal shapes")

    @property
    def n(self) -> int:
        return self.x1.shape[0]

    @property
    def count(self) -> int:
        return self.x1.shape[1]


@dataclass
class SparseCodeSet:
    """Dense code matrices from one coding pass: common Z, unique U and V."""

    z: np.ndarray
    u: np.ndarray
    v: np.ndarray


def _project_ball(m: np.ndarray) -> np.ndarray:
    """Scale columns with norm above 1 back onto the unit ball."""
    norms = np.linalg.norm(m, axis=0)
    return m / np.maximum(norms, 1.0)


def init_dictionaries(ts: TrainingSet, n_atoms: int, seed: int) -> CoupledDictionary:
    """Draw initial atoms from the training patches themselves.

    Common atom pairs take positionally paired columns from both
    contrasts and are projected jointly; unique atoms take independent
    draws per contrast. Columns are drawn without replacement when the
    training set is large enough.
    """
    if n_atoms <= 0:
        raise ValueError("the dictionary needs at least one atom")
    rng = np.random.default_rng(seed)
    replace = ts.count < n_atoms
    idx_common = rng.choice(ts.count, size=n_atoms, replace=replace)
    idx_psi = rng.choice(ts.count, size=n_atoms, replace=replace)
    idx_phi = rng.choice(ts.count, size=n_atoms, replace=replace)
    stacked = _project_ball(
        np.vstack([ts.x1[:, idx_common], ts.x2[:, idx_common]]).astype(np.float64)
    )
    n = ts.n
    return CoupledDictionary(
        psi_c=np.ascontiguousarray(stacked[:n]),
        phi_c=np.ascontiguousarray(stacked[n:]),
        psi=_project_ball(ts.x1[:, idx_psi].astype(np.float64)),
        phi=_project_ball(ts.x2[:, idx_phi].astype(np.float64)),
    )


def sparse_coding_step(
    ts: TrainingSet,
    dct: CoupledDictionary,
    s_c: int,
    s_1: int,
    s_2: int,
    mode: str = "correlation",
) -> SparseCodeSet:
    """One coding pass: common codes first, then per-contrast unique codes.

    Training stops on the support caps only (no error threshold), so the
    caps alone control sparsity here.
    """
    z = batch_code_joint(ts.x1, ts.x2, dct.psi_c, dct.phi_c, s_c, 0.0, mode).to_dense()
    r1 = ts.x1 - dct.psi_c @ z
    r2 = ts.x2 - dct.phi_c @ z
    u = batch_code(r1, dct.psi, s_1, 0.0, mode).to_dense()
    v = batch_code(r2, dct.phi, s_2, 0.0, mode).to_dense()
    return SparseCodeSet(z=z, u=u, v=v)


def fit_objective(dct: CoupledDictionary, ts: TrainingSet, codes: SparseCodeSet) -> float:
    """Squared Frobenius representation error of both contrasts."""
    r1 = ts.x1 - dct.psi_c @ codes.z - dct.psi @ codes.u
    r2 = ts.x2 - dct.phi_c @ codes.z - dct.phi @ codes.v
    return float(np.sum(r1 * r1) + np.sum(r2 * r2))


def _bcd_sweep(target: np.ndarray, residual: np.ndarray, code: np.ndarray) -> None:
    """In-place ascending-order coordinate sweep over the atoms.

    ``residual`` must equal the fit residual including every atom's
    current contribution; it is kept consistent as atoms move. Atoms with
    an all-zero code row are skipped (dead-atom replacement handles them).
    """
    for k in range(target.shape[1]):
        row = code[k]
        denom = float(row @ row)
        if denom == 0.0:
            continue
        old = target[:, k].copy()
        atom = residual @ row / denom + old
        atom /= max(np.linalg.norm(atom), 1.0)
        target[:, k] = atom
        residual += np.outer(old - atom, row)


def update_common_atoms(
    dct: CoupledDictionary, ts: TrainingSet, codes: SparseCodeSet
) -> CoupledDictionary:
    """Coordinate-descent sweep over the stacked common atom pairs."""
    out = dct.copy()
    stacked = np.vstack([out.psi_c, out.phi_c])
    residual = (
        np.vstack([ts.x1 - out.psi @ codes.u, ts.x2 - out.phi @ codes.v])
        - stacked @ codes.z
    )
    _bcd_sweep(stacked, residual, codes.z)
    n = out.n
    out.psi_c = np.ascontiguousarray(stacked[:n])
    out.phi_c = np.ascontiguousarray(stacked[n:])
    return out


def update_unique_atoms(
    dct: CoupledDictionary, ts: TrainingSet, codes: SparseCodeSet
) -> CoupledDictionary:
    """Coordinate-descent sweeps over psi (with U) and phi (with V)."""
    out = dct.copy()
    r1 = ts.x1 - out.psi_c @ codes.z - out.psi @ codes.u
    _bcd_sweep(out.psi, r1, codes.u)
    r2 = ts.x2 - out.phi_c @ codes.z - out.phi @ codes.v
    _bcd_sweep(out.phi, r2, codes.v)
    return out


def _replace_dead(target, code, residual):
    """Swap atoms with all-zero code rows for the strongest residual columns."""
    dead = np.flatnonzero(~code.any(axis=1))
    if dead.size == 0:
        return
    norms = np.linalg.norm(residual, axis=0)
    order = np.lexsort((np.arange(norms.size), -norms))
    for i, k in enumerate(dead):
        col = residual[:, order[i % norms.size]]
        norm = np.linalg.norm(col)
        if norm <= 1e-12:
            continue
        target[:, k] = col / norm


def replace_dead_atoms(
    dct: CoupledDictionary,
    ts: TrainingSet,
    codes: SparseCodeSet,
    seed: int = 0,
    which: str = "both",
) -> CoupledDictionary:
    """Replace unused atoms by normalized high-energy training residuals.

    Replacement columns are assigned in descending residual norm with
    ties broken toward the lower column index, so the result is
    reproducible; ``seed`` is accepted for interface stability.
    """
    if which not in ("common", "unique", "both"):
        raise ValueError(f"unknown replacement scope {which!r}")
    out = dct.copy()
    if which in ("common", "both"):
        stacked = np.vstack([out.psi_c, out.phi_c])
        residual = (
            np.vstack([ts.x1 - out.psi @ codes.u, ts.x2 - out.phi @ codes.v])
            - stacked @ codes.z
        )
        _replace_dead(stacked, codes.z, residual)
        n = out.n
        out.psi_c = np.ascontiguousarray(stacked[:n])
        out.phi_c = np.ascontiguousarray(stacked[n:])
    if which in ("unique", "both"):
        r1 = ts.x1 - out.psi_c @ codes.z - out.psi @ codes.u
        _replace_dead(out.psi, codes.u, r1)
        r2 = ts.x2 - out.phi_c @ codes.z - out.phi @ codes.v
        _replace_dead(out.phi, codes.v, r2)
    return out


def train(
    ts: TrainingSet,
    cfg,
    init: CoupledDictionary | None = None,
    callback=None,
) -> CoupledDictionary:
    """Alternate coding and atom-update sweeps for ``cfg.train_iters`` rounds.

    ``init`` warm-starts from an existing dictionary; otherwise atoms are
    drawn from the training patches using ``cfg.seed``. ``callback``, when
    given, is invoked as ``callback(phase, iteration, dct, codes)`` after
    the coding pass and after each update half-step, which is how the
    tests observe constraint and monotonicity behavior mid-run.
    """
    dct = init.copy() if init is not None else init_dictionaries(ts, cfg.n_atoms, cfg.seed)
    dct.validate()
    for it in range(cfg.train_iters):
        codes = sparse_coding_step(ts, dct, cfg.s_c, cfg.s_1, cfg.s_2, cfg.omp_mode)
        if callback is not None:
            callback("coding", it, dct, codes)
        dct = update_common_atoms(dct, ts, codes)
        dct = replace_dead_atoms(dct, ts, codes, cfg.seed, which="common")
        if callback is not None:
            callback("common", it, dct, codes)
        dct = update_unique_atoms(dct, ts, codes)
        dct = replace_dead_atoms(dct, ts, codes, cfg.seed, which="unique")
        if callback is not None:
            callback("unique", it, dct, codes)
    return dct


def init_single_dictionary(columns: np.ndarray, n_atoms: int, seed: int) -> np.ndarray:
    """Initial single-contrast dictionary drawn from the given patches."""
    if n_atoms <= 0:
        raise ValueError("the dictionary needs at least one atom")
    rng = np.random.default_rng(seed)
    count = columns.shape[1]
    idx = rng.choice(count, size=n_atoms, replace=count < n_atoms)
    return _project_ball(columns[:, idx].astype(np.float64))


def train_single(
    columns: np.ndarray,
    cfg,
    init: np.ndarray | None = None,
    callback=None,
) -> np.ndarray:
    """Single-dictionary variant used by the unguided reconstruction.

    Codes the patches against one dictionary with the solo support cap,
    then applies the same coordinate sweep and dead-atom replacement.
    """
    psi = init.copy() if init is not None else init_single_dictionary(
        columns, cfg.n_atoms, cfg.seed
    )
    for it in range(cfg.train_iters):
        u = batch_code(columns, psi, cfg.solo_cap, 0.0, cfg.omp_mode).to_dense()
        if callback is not None:
            callback("coding", it, psi, u)
        residual = columns - psi @ u
        _bcd_sweep(psi, residual, u)
        _replace_dead(psi, u, columns - psi @ u)
        if callback is not None:
            callback("update", it, psi, u)
    return psi
