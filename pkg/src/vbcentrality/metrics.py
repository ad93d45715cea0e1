"""Rank agreement metrics: Kendall tau-b, Spearman, Pearson and top-K overlap."""

import math

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


def _pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValidationError("score vectors must have equal length")
    if len(x) < 2:
        raise ValidationError("need at least two scores")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("scores must be finite")
    return x, y


def _tied_pairs(sorted_values):
    """Number of tied pairs in an already sorted sequence."""
    total = 0
    run = 1
    for a, b in zip(sorted_values[:-1], sorted_values[1:]):
        if a == b:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def _merge_count(values):
    """Sort ``values`` (a list) and return the number of inversions."""
    n = len(values)
    if n < 2:
        return values, 0
    mid = n // 2
    left, inv_l = _merge_count(values[:mid])
    right, inv_r = _merge_count(values[mid:])
    merged = []
    swaps = inv_l + inv_r
    i = j = 0
    while i < len(left) and j < len(right):
        if right[j] < left[i]:
            merged.append(right[j])
            swaps += len(left) - i
            j += 1
        else:
            merged.append(left[i])
            i += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, swaps


def kendall_tau(x, y):
    """Kendall tau-b in O(n log n) (Knight's merge-sort counting).

    Raises :class:`ValidationError` when either vector is constant.
    """
    x, y = _pair(x, y)
    n = len(x)
    order = np.lexsort((y, x))
    xs = x[order].tolist()
    ys = y[order].tolist()
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(xs)
    # pairs tied on both x and y
    n3 = 0
    run = 1
    for k in range(1, n):
        if xs[k] == xs[k - 1] and ys[k] == ys[k - 1]:
            run += 1
        else:
            n3 += run * (run - 1) // 2
            run = 1
    n3 += run * (run - 1) // 2
    y_sorted, swaps = _merge_count(ys)
    n2 = _tied_pairs(y_sorted)
    d1, d2 = n0 - n1, n0 - n2
    if d1 == 0 or d2 == 0:
        raise ValidationError("Kendall tau is undefined for a constant vector")
    return (n0 - n1 - n2 + n3 - 2 * swaps) / math.sqrt(d1 * d2)


def kendall_tau_bruteforce(x, y):
    """O(n^2) tau-b over all pairs; reference for :func:`kendall_tau`."""
    x, y = _pair(x, y)
    conc = disc = only_x = only_y = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            dx = np.sign(x[i] - x[j])
            dy = np.sign(y[i] - y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                only_x += 1
            elif dy == 0:
                only_y += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    d1 = conc + disc + only_y
    d2 = conc + disc + only_x
    if d1 == 0 or d2 == 0:
        raise ValidationError("Kendall tau is undefined for a constant vector")
    return (conc - disc) / math.sqrt(d1 * d2)


def pearson_r(x, y):
    x, y = _pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(xc @ xc)
    sy = math.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise ValidationError("correlation is undefined for zero variance")
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def spearman_rho(x, y):
    """Pearson correlation of average ranks."""
    x, y = _pair(x, y)
    return pearson_r(rankdata(x), rankdata(y))


def top_k(scores, k):
    """Indices of the ``k`` largest scores; ties go to the lower node id."""
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:k]


def topk_overlap(candidate, reference, k=10):
    """Fraction of the top-``k`` reference nodes also in the candidate top-``k``."""
    candidate, reference = _pair(candidate, reference)
    if not 1 <= k <= len(candidate):
        raise ValidationError("k must lie in [1, n]")
    a = set(top_k(candidate, k).tolist())
    b = set(top_k(reference, k).tolist())
    return len(a & b) / k
