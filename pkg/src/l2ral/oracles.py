"""Slow, loop-based reference implementations used to cross-check the fast paths.

Nothing here imports the code it checks.
"""
from __future__ import annotations

import math


def ranks_by_counting(values):
    """0-based rank of each entry: how many entries precede it in stable order."""
    n = len(values)
    out = []
    for i in range(n):
        r = 0
        for j in range(n):
            if values[j] < values[i] or (values[j] == values[i] and j < i):
                r += 1
        out.append(r)
    return out


def spearman_bruteforce(a, b):
    ra, rb = ranks_by_counting(a), ranks_by_counting(b)
    d = len(a)
    ssd = 0
    for x, y in zip(ra, rb):
        ssd += (x - y) ** 2
    return 1.0 - 6.0 * ssd / (d * (d * d - 1))


def pearson_of_ranks(a, b):
    ra, rb = ranks_by_counting(a), ranks_by_counting(b)
    n = len(ra)
    ma, mb = sum(ra) / n, sum(rb) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = sum((x - ma) ** 2 for x in ra)
    vb = sum((y - mb) ** 2 for y in rb)
    return cov / math.sqrt(va * vb)


def pairwise_hinge_bruteforce(gt, pred, margin=1.0):
    total = 0.0
    pairs = len(gt) // 2
    for k in range(pairs):
        i, j = 2 * k, 2 * k + 1
        diff = gt[i] - gt[j]
        sign = int(diff > 0) - int(diff < 0)
        total += max(0.0, -sign * (pred[i] - pred[j]) + margin)
    return total / pairs


def kcenter_greedy_reference(candidate_points, labeled_points, budget):
    """Step-by-step greedy rule over lists of coordinate tuples.

    Returns positions into ``candidate_points`` (assumed in ascending index
    order). With no labeled points the first pick is position 0.
    """
    def dist(p, q):
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(p, q)))

    centers = list(labeled_points)
    chosen = []
    for _ in range(budget):
        best, best_score = None, None
        for pos, p in enumerate(candidate_points):
            if pos in chosen:
                continue
            score = min((dist(p, c) for c in centers), default=math.inf)
            if best is None or score > best_score:
                best, best_score = pos, score
        chosen.append(best)
        centers.append(candidate_points[best])
    return chosen


def entropy_reference(p):
    return -sum(x * math.log(x) for x in p if x > 0)
