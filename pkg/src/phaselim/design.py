"""Linear-algebra kernel: action sets, G-optimal designs, pseudo-inverse least squares.

Actions are plain 1-D float arrays (rows of an :class:`ActionSet` matrix).
Information matrices are plain ``(d, d)`` ndarrays.  The G-optimal solver is
Frank-Wolfe on the D-optimal objective (equivalent at the optimum by
Kiefer-Wolfowitz), with rank reduction so degenerate action sets are handled
by pseudo-inverse norms throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceError, ValidationError

__all__ = [
    "ActionSet",
    "Design",
    "uniform_circle",
    "information_matrix",
    "g_value",
    "solve_g_optimal",
    "least_squares",
    "pseudo_inverse",
]


@dataclass(frozen=True)
class ActionSet:
    """Ordered, finite collection of actions with stable integer ids.

    Parameters
    ----------
    matrix : ndarray, shape (k, d)
        One action per row.
    ids : ndarray of int, shape (k,), optional
        Stable ids; defaults to 0..k-1.
    """

    matrix: np.ndarray
    ids: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        matrix = np.ascontiguousarray(np.asarray(self.matrix, dtype=float))
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise ValidationError("action set must be a non-empty (k, d) matrix")
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("action coordinates must be finite")
        if np.unique(matrix, axis=0).shape[0] != matrix.shape[0]:
            raise ValidationError("action set contains duplicate coordinate vectors")
        ids = self.ids
        if ids is None:
            ids = np.arange(matrix.shape[0], dtype=np.int64)
        else:
            ids = np.asarray(ids, dtype=np.int64)
            if ids.shape != (matrix.shape[0],) or np.unique(ids).size != ids.size:
                raise ValidationError("ids must be unique and match the number of actions")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "ids", ids)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def subset(self, ids) -> "ActionSet":
        """Return the sub-collection with the given ids (order preserved)."""
        ids = np.asarray(ids, dtype=np.int64)
        pos = self.positions(ids)
        return ActionSet(self.matrix[pos], ids=ids)

    def positions(self, ids) -> np.ndarray:
        """Map action ids to row positions in ``matrix``."""
        lookup = {int(a): i for i, a in enumerate(self.ids)}
        try:
            return np.array([lookup[int(a)] for a in np.atleast_1d(ids)], dtype=np.int64)
        except KeyError as err:
            raise ConfigurationError(f"unknown action id {err.args[0]}") from None

    @classmethod
    def from_csv(cls, path) -> "ActionSet":
        """Load one action per row (d comma-separated coordinates)."""
        try:
            matrix = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
        except (OSError, ValueError) as err:
            raise ConfigurationError(f"cannot read actions CSV {path}: {err}") from None
        return cls(matrix)


@dataclass(frozen=True)
class Design:
    """Probability design over action ids (support entries only).

    ``ids`` and ``weights`` are aligned arrays; weights are nonnegative and
    sum to 1 within 1e-9.
    """

    ids: np.ndarray
    weights: np.ndarray
    g: float = field(default=np.nan)  # g-value certified by the solver, if any

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=float)
        if ids.shape != weights.shape or ids.ndim != 1:
            raise ValidationError("design ids and weights must be aligned 1-D arrays")
        if np.any(weights < 0):
            raise ValidationError("design weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValidationError("design weights must sum to 1 within 1e-9")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "weights", weights)

    def weight_map(self) -> dict:
        return {int(a): float(w) for a, w in zip(self.ids, self.weights)}

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.weights > 0))

    @classmethod
    def uniform(cls, action_set: ActionSet) -> "Design":
        k = action_set.k
        return cls(ids=action_set.ids.copy(), weights=np.full(k, 1.0 / k))


def uniform_circle(k: int) -> ActionSet:
    """k equally spaced unit-circle actions in d=2 (angle 2*pi*j/k)."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    angles = 2.0 * np.pi * np.arange(k) / k
    return ActionSet(np.column_stack([np.cos(angles), np.sin(angles)]))


def pseudo_inverse(M: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via eigendecomposition.

    Eigenvalues with ``|lam| <= d * eps_machine * max|lam|`` are treated as
    zero (standard numerical-rank convention).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError("pseudo_inverse expects a square matrix")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValidationError("pseudo_inverse expects a symmetric matrix")
    lam, U = np.linalg.eigh(0.5 * (M + M.T))
    cutoff = M.shape[0] * np.finfo(float).eps * np.max(np.abs(lam), initial=0.0)
    inv = np.where(np.abs(lam) <= cutoff, 0.0, np.divide(1.0, lam, where=np.abs(lam) > cutoff))
    return (U * inv) @ U.T


def information_matrix(design: Design, action_set: ActionSet) -> np.ndarray:
    """V(pi) = sum_x pi(x) x x^T over the design support."""
    pos = action_set.positions(design.ids)
    X = action_set.matrix[pos]
    return (X * design.weights[:, None]).T @ X


def g_value(design: Design, action_set: ActionSet) -> float:
    """max over x in the set of x^T V(pi)^dagger x (pseudo-inverse norm)."""
    V_inv = pseudo_inverse(information_matrix(design, action_set))
    X = action_set.matrix
    return float(np.max(np.einsum("ij,jk,ik->i", X, V_inv, X)))


def least_squares(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(X^T X)^dagger X^T y; zero component outside the row space of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise ValidationError("least_squares needs n_rows >= 1 and matching y")
    return pseudo_inverse(X.T @ X) @ (X.T @ y)


def _reduced_actions(matrix: np.ndarray):
    """Project actions onto an orthonormal basis of their span.

    Returns (B, rank) with B of shape (k, rank); rank may be 0 for all-zero
    sets.  Norms w.r.t. the information matrix are identical in the reduced
    coordinates, so the solver never has to touch a singular V.
    """
    _, s, Vt = np.linalg.svd(matrix, full_matrices=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > max(matrix.shape) * np.finfo(float).eps * smax))
    return matrix @ Vt[:rank].T, rank


def _g_norms(B: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x^T V(w)^{-1} x for every row of B; V built in reduced coordinates."""
    V = B.T @ (B * w[:, None])
    try:
        sol = np.linalg.solve(V, B.T)
    except np.linalg.LinAlgError:
        sol = np.linalg.pinv(V) @ B.T
    return np.einsum("ij,ji->i", B, sol)


def _g_of_support(B: np.ndarray, support: np.ndarray, weights: np.ndarray) -> float:
    """g-value over *all* reduced actions of the design (support, weights)."""
    rows = B[support]
    V = rows.T @ (rows * weights[:, None])
    try:
        sol = np.linalg.solve(V, B.T)
    except np.linalg.LinAlgError:
        sol = np.linalg.pinv(V) @ B.T
    return float(np.einsum("ij,ji->i", B, sol).max())


def _caratheodory_reduce(B: np.ndarray, w: np.ndarray, support: np.ndarray):
    """Shrink the support to <= r(r+1)/2 + 1 atoms preserving V(w) exactly.

    Works on the moment vectors [vech(b b^T); 1]; a null-space direction of
    those vectors moves weight between atoms without changing the information
    matrix or the total mass, so the g-value is untouched.
    """
    r = B.shape[1]
    q = r * (r + 1) // 2 + 1
    iu = np.triu_indices(r)
    support = np.asarray(support, dtype=np.int64)
    w = np.asarray(w, dtype=float)
    while support.size > q:
        head = np.arange(q + 1)
        rows = B[support[head]]
        outer = rows[:, :, None] * rows[:, None, :]
        M = np.vstack([outer[:, iu[0], iu[1]].T, np.ones((1, head.size))])
        # Null vector of the (q, q+1) moment system.
        v = np.linalg.svd(M)[2][-1]
        if v.max() < -v.min():
            v = -v
        head_w = w[head]
        ratios = np.where(v > 1e-14, head_w / np.where(v > 1e-14, v, 1.0), np.inf)
        jmin = int(np.argmin(ratios))
        head_w = np.maximum(head_w - ratios[jmin] * v, 0.0)
        head_w[jmin] = 0.0
        w = w.copy()
        w[head] = head_w
        keep = w > 0.0
        support, w = support[keep], w[keep]
    return support, w


def solve_g_optimal(action_set: ActionSet, tol: float = 0.01, max_iter: int = 10000) -> Design:
    """G-optimal design by Frank-Wolfe with exact line search.

    Runs on the span of the action set (rank r), so rank-deficient sets
    converge to g = r.  Stops once ``g <= (1 + tol) * r``; the returned
    design is pruned to support size <= d(d+1)/2.

    Raises
    ------
    ConvergenceError
        If the tolerance is not reached in ``max_iter`` iterations; the best
        design found is attached to the exception.
    """
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    k = action_set.k
    B, r = _reduced_actions(action_set.matrix)
    if r == 0:
        # All actions are the zero vector (at most one, since duplicates are
        # rejected): the only design is a point mass and g = 0.
        return Design(ids=action_set.ids[:1].copy(), weights=np.ones(1), g=0.0)

    w = np.full(k, 1.0 / k)
    target = (1.0 + tol) * r
    best_w, best_g = w.copy(), np.inf
    converged = False
    for _ in range(max_iter):
        norms = _g_norms(B, w)
        g = float(norms.max())
        if g < best_g:
            best_g, best_w = g, w.copy()
        if g <= target:
            converged = True
            break
        j = int(np.argmax(norms))
        gamma = (g - r) / (r * (g - 1.0))
        gamma = min(max(gamma, 0.0), 1.0)
        w *= 1.0 - gamma
        w[j] += gamma
    if not converged:
        best = _finalize_design(action_set, B, r, best_w, tol, enforce_tol=False)
        raise ConvergenceError(
            f"Frank-Wolfe did not reach g <= (1+tol)*{r} in {max_iter} iterations "
            f"(best g = {best_g:.6g})",
            best_design=best,
        )
    return _finalize_design(action_set, B, r, w, tol)


def _restricted_polish(B, r, support, weights, target, max_iter=500):
    """Re-optimize weights over a fixed support; None if tolerance unmet.

    Runs Frank-Wolfe on the rows ``B[support]`` only, but judges the result
    by the g-value over *all* rows of ``B``.  Returns the first weight vector
    achieving ``g <= target``, or None when the support cannot carry one.
    """
    rows = B[support]
    w = weights.copy()
    for _ in range(max_iter):
        V = rows.T @ (rows * w[:, None])
        try:
            sol = np.linalg.solve(V, B.T)
        except np.linalg.LinAlgError:
            return None
        g_full = float(np.einsum("ij,ji->i", B, sol).max())
        if g_full <= target:
            return w / w.sum()
        norms = np.einsum("ij,ji->i", rows, sol[:, support])
        g = float(norms.max())
        if g <= 1.0 + 1e-12:
            return None
        j = int(np.argmax(norms))
        gamma = (g - r) / (r * (g - 1.0))
        gamma = min(max(gamma, 0.0), 1.0)
        if gamma <= 0.0:
            return None
        w *= 1.0 - gamma
        w[j] += gamma
    return None


def _finalize_design(action_set, B, r, w, tol, enforce_tol=True):
    """Prune a converged weight vector down to the supported design."""
    target = (1.0 + tol) * r
    d = action_set.d
    bound = d * (d + 1) // 2

    support = np.flatnonzero(w > 0)
    weights = w[support]

    # Exact support reduction first (free: preserves V, hence g).
    if support.size > r * (r + 1) // 2 + 1:
        support, weights = _caratheodory_reduce(B, weights, support)
    weights = weights / weights.sum()

    # Thresholded pruning as a cleanup; restore if it breaks the tolerance.
    thr = 1e-6 / action_set.k
    mask = weights >= thr
    if mask.any() and not mask.all():
        cand_s, cand_w = support[mask], weights[mask]
        cand_w = cand_w / cand_w.sum()
        if not enforce_tol or _g_of_support(B, cand_s, cand_w) <= target:
            support, weights = cand_s, cand_w

    # The classical support bound may still be exceeded by one atom in the
    # full-rank case.  Dropping an atom perturbs V, so each candidate removal
    # is followed by a weight re-optimization restricted to the remaining
    # atoms; the first candidate (in ascending weight order) whose refit
    # stays within tolerance wins.
    while support.size > bound:
        chosen = None
        for j in np.argsort(weights, kind="stable"):
            cand_s = np.delete(support, j)
            cand_w = np.delete(weights, j)
            total = cand_w.sum()
            if total <= 0.0:
                continue
            refit = _restricted_polish(B, r, cand_s, cand_w / total, target)
            if refit is not None or not enforce_tol:
                chosen = (cand_s, refit if refit is not None else cand_w / total)
                break
        if chosen is None:
            break
        support, weights = chosen

    order = np.argsort(support)
    support, weights = support[order], weights[order]
    g = _g_of_support(B, support, weights)
    return Design(ids=action_set.ids[support], weights=weights, g=g)
