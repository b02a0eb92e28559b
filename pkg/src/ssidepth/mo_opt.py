"""Min-norm point in the convex hull of per-dataset gradients.

The negated min-norm point is a common descent direction for every
dataset loss; at a Pareto-stationary point it is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import DimensionError, InsufficientDataError


@dataclass(frozen=True)
class TaskGradient:
    dataset_id: Hashable
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64).ravel()
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for dataset {self.dataset_id!r}")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class SimplexWeights:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 1 or np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights are not on the simplex: {alpha}")
        object.__setattr__(self, "alpha", alpha)

    def __len__(self):
        return self.alpha.size

    def __iter__(self):
        return iter(self.alpha.tolist())


def _line_search(aa: float, ab: float, bb: float) -> float:
    """gamma in [0, 1] minimising |gamma*a + (1-gamma)*b|^2 from inner products."""
    denom = aa - 2.0 * ab + bb
    if denom < 1e-18:
        return 0.5
    return min(max((bb - ab) / denom, 0.0), 1.0)


def min_norm_2(g1, g2) -> SimplexWeights:
    """Closed-form min-norm weights (gamma, 1 - gamma) for two vectors."""
    g1 = np.asarray(g1, dtype=np.float64).ravel()
    g2 = np.asarray(g2, dtype=np.float64).ravel()
    if g1.shape != g2.shape:
        raise DimensionError(f"gradient lengths differ: {g1.size} vs {g2.size}")
    gamma = _line_search(float(g1 @ g1), float(g1 @ g2), float(g2 @ g2))
    return SimplexWeights(np.array([gamma, 1.0 - gamma]))


def _as_matrix(grads: Sequence) -> np.ndarray:
    if len(grads) == 0:
        raise InsufficientDataError("min-norm solve needs at least one gradient")
    rows = [g.g if isinstance(g, TaskGradient) else np.asarray(g, dtype=np.float64).ravel() for g in grads]
    if len({r.size for r in rows}) != 1:
        raise DimensionError("all task gradients must share one length")
    return np.vstack(rows)


def _affine_min_norm(gram: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Weights of the min-norm point in the affine hull of the supported vectors."""
    k = support.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = gram[np.ix_(support, support)]
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    # lstsq picks the symmetric solution when the supported vectors are dependent
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_fw(grads: Sequence, max_iter: int = 250, tol: float = 1e-8) -> SimplexWeights:
    """Min-norm point of the convex hull of ``grads`` (Wolfe's method).

    Major cycles are Frank-Wolfe steps: the vertex most aligned against the
    current point joins the support unless the duality gap is below ``tol``.
    Minor cycles move from the current point towards the min-norm point of
    the support's affine hull, stopping at the simplex boundary and dropping
    vertices whose weight reaches zero. Starting from uniform weights over
    every task keeps the result symmetric under task permutation.
    """
    mat = _as_matrix(grads)
    n = mat.shape[0]
    if n == 1:
        return SimplexWeights(np.ones(1))
    if n == 2:
        return min_norm_2(mat[0], mat[1])
    gram = mat @ mat.T
    alpha = np.full(n, 1.0 / n)
    support = np.arange(n)
    for _ in range(max_iter):
        # minor cycle
        target = np.zeros(n)
        target[support] = _affine_min_norm(gram, support)
        if np.all(target[support] > 0):
            alpha = target
        else:
            shrinking = support[target[support] <= 0]
            theta = np.min(alpha[shrinking] / (alpha[shrinking] - target[shrinking]))
            alpha = np.clip((1.0 - theta) * alpha + theta * target, 0.0, None)
            alpha[support[alpha[support] <= 1e-15]] = 0.0
            support = np.flatnonzero(alpha > 0)
            alpha /= alpha.sum()
            continue
        # major cycle
        g_alpha = gram @ alpha
        vertex = int(np.argmin(g_alpha))
        if float(alpha @ g_alpha) - float(g_alpha[vertex]) < tol or vertex in support:
            break
        support = np.append(support, vertex)
    alpha = np.clip(alpha, 0.0, None)
    return SimplexWeights(alpha / alpha.sum())


def combine(grads: Sequence, w: SimplexWeights) -> np.ndarray:
    """Weighted sum of the task gradients."""
    mat = _as_matrix(grads)
    if mat.shape[0] != len(w):
        raise DimensionError(f"{mat.shape[0]} gradients but {len(w)} weights")
    return w.alpha @ mat
