"""Brute-force reference implementations written independently of the package."""

import numpy as np


def ggd_samples(rng, alpha, n):
    # |x|^alpha ~ Gamma(1/alpha) gives density proportional to exp(-|x|^alpha)
    mag = rng.gamma(1.0 / alpha, 1.0, n) ** (1.0 / alpha)
    return np.where(rng.random(n) < 0.5, -mag, mag)


def oracle_counts(pred, truth):
    tp = fp = fn = 0
    for p, g in zip(pred, truth):
        tp += p and g
        fp += p and not g
        fn += (not p) and g
    return tp, fp, fn


def oracle_dice(pred, truth):
    tp, fp, fn = oracle_counts(pred, truth)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def oracle_prf(pred, truth):
    tp, fp, fn = oracle_counts(pred, truth)
    if tp + fp == 0:
        p = 1.0 if fn == 0 else 0.0
    else:
        p = tp / (tp + fp)
    r = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def oracle_pr_auc(probs, truth):
    """Enumerate all 257 thresholds with plain loops, then integrate by trapezoid."""
    n_pos = sum(truth)
    points = []
    for k in range(257):
        t = k / 256
        tp = sum(1 for p, g in zip(probs, truth) if p >= t and g)
        fp = sum(1 for p, g in zip(probs, truth) if p >= t and not g)
        if tp > 0:
            points.append((tp / n_pos, tp / (tp + fp), -t))
    # recall ascending; among equal recall, higher threshold first
    points.sort(key=lambda q: (q[0], q[2]))
    curve = [(0.0, points[0][1])] + [(r, p) for r, p, _ in points] + [(1.0, n_pos / len(truth))]
    area = 0.0
    for (r0, p0), (r1, p1) in zip(curve, curve[1:]):
        area += (r1 - r0) * (p0 + p1) / 2
    return area
