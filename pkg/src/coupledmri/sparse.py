"""Greedy sparse coding with dual stopping (support cap and error threshold).

Two atom-selection rules are provided. ``exact_ls`` re-solves the least
squares problem for every candidate atom and keeps the one with the
smallest post-refit residual; it is the reference rule and is pinned to
an independent oracle in the tests. ``correlation`` picks the atom most
correlated with the current residual before refitting; it is the default
production rule and is fully vectorized over batches of signals.

Both rules re-solve least squares on the active set after each selection,
stop as soon as the squared residual drops to ``eps`` or the support
reaches its cap, and break ties toward the lowest atom index. Rank
deficient active sets are resolved in the minimum-norm sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-9
_CHUNK = 8192


@dataclass(frozen=True)
class SparseCode:
    """Support (selection order) and coefficients of one coded signal."""

    support: np.ndarray
    coefficients: np.ndarray
    dim: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.support] = self.coefficients
        return dense


@dataclass
class SparseCodeBatch:
    """Codes for a batch of signals, padded to the common support cap.

    ``supports[p, j]`` is the j-th atom selected for signal p (-1 padding
    past ``sizes[p]``). ``resid_sq`` holds the final squared residual per
    signal, which together with ``sizes`` records why coding stopped.
    """

    supports: np.ndarray
    coefficients: np.ndarray
    sizes: np.ndarray
    dim: int
    resid_sq: np.ndarray

    @property
    def count(self) -> int:
        return self.supports.shape[0]

    def code(self, p: int) -> SparseCode:
        s = int(self.sizes[p])
        return SparseCode(
            support=self.supports[p, :s].copy(),
            coefficients=self.coefficients[p, :s].copy(),
            dim=self.dim,
        )

    def to_dense(self) -> np.ndarray:
        """Dense coefficient matrix of shape (dim, count)."""
        dense = np.zeros((self.dim, self.count))
        cols = np.arange(self.count)
        for j in range(self.supports.shape[1]):
            used = self.supports[:, j] >= 0
            dense[self.supports[used, j], cols[used]] = self.coefficients[used, j]
        return dense

    def synthesize(self, dictionary: np.ndarray) -> np.ndarray:
        """Reconstruct the batch as dictionary @ codes, shape (n, count)."""
        n = dictionary.shape[0]
        out = np.empty((n, self.count))
        for lo in range(0, self.count, _CHUNK):
            hi = min(lo + _CHUNK, self.count)
            sup = self.supports[lo:hi]
            w = np.where(sup >= 0, self.coefficients[lo:hi], 0.0)
            atoms = dictionary[:, np.where(sup >= 0, sup, 0)]
            out[:, lo:hi] = np.einsum("nps,ps->np", atoms, w)
        return out


def _check_dictionary(dictionary, what="dictionary"):
    dictionary = np.asarray(dictionary, dtype=np.float64)
    if dictionary.ndim != 2 or dictionary.size == 0:
        raise ValueError(f"{what} must be a nonempty 2D matrix")
    norms = np.linalg.norm(dictionary, axis=0)
    worst = norms.max()
    if worst > 1.0 + NORM_TOL:
        raise ValueError(
            f"{what} has an atom of norm {worst:.12g}, above the unit-ball bound"
        )
    return dictionary


def _refit_active(X, D, supports, size, active):
    """Least-squares refit on each active signal's current support.

    Returns the coefficient block (n_active, size) and updated residuals.
    Uses batched normal equations; signals whose system is singular (or
    numerically degenerate) fall back to minimum-norm lstsq.
    """
    sup = supports[active, :size]
    atoms = np.swapaxes(D[:, sup], 0, 1)  # (n_active, n, size)
    xa = X[:, active].T  # (n_active, n)
    gram = np.einsum("pni,pnj->pij", atoms, atoms)
    rhs = np.einsum("pni,pn->pi", atoms, xa)
    try:
        coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        coef = np.full(rhs.shape, np.nan)
    bad = ~np.isfinite(coef).all(axis=1)
    if bad.any():
        for i in np.flatnonzero(bad):
            coef[i], *_ = np.linalg.lstsq(atoms[i], xa[i], rcond=None)[:1]
    resid = xa - np.einsum("pni,pi->pn", atoms, coef)
    return coef, resid, np.einsum("pn,pn->p", resid, resid)


def _omp_batch_correlation(X, D, s_eff, eps):
    n, P = X.shape
    K = D.shape[1]
    supports = np.full((P, s_eff), -1, dtype=np.int64)
    coefficients = np.zeros((P, s_eff))
    resid = X.copy()
    resid_sq = np.einsum("np,np->p", X, X)
    sizes = np.zeros(P, dtype=np.int64)
    active = resid_sq > eps
    for it in range(s_eff):
        if not active.any():
            break
        # einsum keeps per-column accumulation order fixed, so results do
        # not depend on how many signals happen to share the batch
        corr = np.abs(np.einsum("nk,np->kp", D, resid[:, active]))
        if it > 0:
            sel = supports[active, :it]
            np.put_along_axis(corr.T, sel, -1.0, axis=1)
        picks = np.argmax(corr, axis=0)
        supports[active, it] = picks
        coef, new_resid, new_sq = _refit_active(X, D, supports, it + 1, active)
        coefficients[active, : it + 1] = coef
        resid[:, active] = new_resid.T
        resid_sq[active] = new_sq
        sizes[active] = it + 1
        active = active & (resid_sq > eps)
    return supports, coefficients, sizes, resid_sq


def _omp_single_exact(x, D, s_eff, eps):
    """Literal greedy rule: per step, refit every candidate and keep the best."""
    K = D.shape[1]
    support: list[int] = []
    coef = np.zeros(0)
    resid_sq = float(x @ x)
    while resid_sq > eps and len(support) < s_eff:
        best_k = -1
        best_sq = np.inf
        best_coef = None
        for k in range(K):
            if k in support:
                continue
            trial = support + [k]
            A = D[:, trial]
            sol, *_ = np.linalg.lstsq(A, x, rcond=None)[:1]
            r = x - A @ sol
            rsq = float(r @ r)
            if rsq < best_sq:
                best_k, best_sq, best_coef = k, rsq, sol
        if best_k < 0:
            break
        support.append(best_k)
        coef = best_coef
        resid_sq = best_sq
    return np.asarray(support, dtype=np.int64), coef, resid_sq


def _omp_batch(X, D, s_max, eps, mode):
    if s_max < 0:
        raise ValueError("support cap must be nonnegative")
    if eps < 0:
        raise ValueError("error threshold must be nonnegative")
    if mode not in ("correlation", "exact_ls"):
        raise ValueError(f"unknown selection mode {mode!r}")
    n, P = X.shape
    K = D.shape[1]
    s_eff = min(s_max, K)
    if s_eff == 0 or P == 0:
        return SparseCodeBatch(
            supports=np.full((P, max(s_eff, 1)), -1, dtype=np.int64),
            coefficients=np.zeros((P, max(s_eff, 1))),
            sizes=np.zeros(P, dtype=np.int64),
            dim=K,
            resid_sq=np.einsum("np,np->p", X, X),
        )
    if mode == "correlation":
        supports, coefficients, sizes, resid_sq = _omp_batch_correlation(
            X, D, s_eff, eps
        )
    else:
        supports = np.full((P, s_eff), -1, dtype=np.int64)
        coefficients = np.zeros((P, s_eff))
        sizes = np.zeros(P, dtype=np.int64)
        resid_sq = np.zeros(P)
        for p in range(P):
            sup, coef, rsq = _omp_single_exact(X[:, p], D, s_eff, eps)
            sizes[p] = len(sup)
            supports[p, : len(sup)] = sup
            coefficients[p, : len(sup)] = coef
            resid_sq[p] = rsq
    return SparseCodeBatch(supports, coefficients, sizes, K, resid_sq)


def omp(
    signal: np.ndarray,
    dictionary: np.ndarray,
    s_max: int,
    eps: float = 0.0,
    mode: str = "correlation",
) -> SparseCode:
    """Greedily code one signal against a dictionary.

    Parameters
    ----------
    signal : length-n vector
    dictionary : (n, K) matrix with atom norms at most 1
    s_max : support size cap
    eps : squared-error stopping threshold
    mode : "correlation" or "exact_ls" atom selection

    Returns
    -------
    SparseCode; a zero signal yields an empty support.
    """
    D = _check_dictionary(dictionary)
    x = np.asarray(signal, dtype=np.float64).reshape(-1)
    if x.shape[0] != D.shape[0]:
        raise ValueError("signal length does not match the dictionary")
    batch = _omp_batch(x[:, None], D, s_max, eps, mode)
    return batch.code(0)


def joint_omp(
    x1: np.ndarray,
    x2: np.ndarray,
    psi_c: np.ndarray,
    phi_c: np.ndarray,
    s_c: int,
    eps_c: float = 0.0,
    mode: str = "correlation",
) -> SparseCode:
    """Code a signal pair against a coupled dictionary pair.

    Equivalent to ``omp`` on the stacked signal [x1; x2] and stacked
    dictionary [psi_c; phi_c]; the threshold applies to the sum of both
    squared residuals, and the stacked atom pairs must have joint norm at
    most 1.
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1)
    stacked = np.concatenate([x1, x2])
    D = _check_dictionary(np.vstack([psi_c, phi_c]), what="stacked dictionary pair")
    if stacked.shape[0] != D.shape[0]:
        raise ValueError("signal pair does not match the dictionary pair")
    batch = _omp_batch(stacked[:, None], D, s_c, eps_c, mode)
    return batch.code(0)


def batch_code(
    columns: np.ndarray,
    dictionary: np.ndarray,
    s_max: int,
    eps: float = 0.0,
    mode: str = "correlation",
) -> SparseCodeBatch:
    """Code every column of a signal matrix independently.

    Results are identical to coding each column with ``omp``; batching is
    a pure vectorization, so the output is independent of chunking or
    column order.
    """
    D = _check_dictionary(dictionary)
    X = np.asarray(columns, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != D.shape[0]:
        raise ValueError("signal matrix does not match the dictionary")
    return _omp_batch(X, D, s_max, eps, mode)


def batch_code_joint(
    cols1: np.ndarray,
    cols2: np.ndarray,
    psi_c: np.ndarray,
    phi_c: np.ndarray,
    s_c: int,
    eps_c: float = 0.0,
    mode: str = "correlation",
) -> SparseCodeBatch:
    """Jointly code paired signal columns against a coupled dictionary pair."""
    X1 = np.asarray(cols1, dtype=np.float64)
    X2 = np.asarray(cols2, dtype=np.float64)
    if X1.shape != X2.shape:
        raise ValueError("paired signal matrices must have equal shapes")
    D = _check_dictionary(np.vstack([psi_c, phi_c]), what="stacked dictionary pair")
    X = np.vstack([X1, X2])
    if X.shape[0] != D.shape[0]:
        raise ValueError("signal pair does not match the dictionary pair")
    return _omp_batch(X, D, s_c, eps_c, mode)
