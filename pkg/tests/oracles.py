"""Brute-force reference implementations used as independent test oracles."""

import math

import numpy as np


def simplex_grid(n, step=0.01):
    """All weight vectors of length n (2 or 3) on a regular simplex grid."""
    k = int(round(1 / step))
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = np.arange(k + 1) / k
        return np.stack([a, 1 - a], 1)
    if n == 3:
        pts = [(i / k, j / k, (k - i - j) / k) for i in range(k + 1) for j in range(k + 1 - i)]
        return np.array(pts)
    raise ValueError("grid oracle supports n <= 3")


def grid_min_norm(mat, step=0.01):
    w = simplex_grid(mat.shape[0], step)
    pts = w @ mat
    return float((pts * pts).sum(1).min())


def whdr_loop(pred, annotations):
    """Pair-by-pair weighted disagreement percentage."""
    bad, total = [], []
    for a in annotations:
        p1, p2 = pred[a.y1][a.x1], pred[a.y2][a.x2]
        if a.label == "first_closer":
            agree = p1 > p2
        else:
            agree = p2 > p1
        if not agree:
            bad.append(a.weight)
        total.append(a.weight)
    return 100.0 * math.fsum(bad) / math.fsum(total)
