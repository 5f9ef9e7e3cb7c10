"""
Correlation of two score vectors, e.g. per-class means of the judge model and of human raters.

Spearman's rho uses average ranks for ties. Kendall's tau is the tie-corrected tau-b. Sums are computed with exact
fractions and only the final square root is taken in floating point, so perfectly (anti-)correlated inputs give
exactly 1 (-1).
"""
from collections import namedtuple
from fractions import Fraction
from itertools import combinations
import math

import numpy as np
from scipy.stats import rankdata

from lodestar.utils.utils import LodestarError

Correlations = namedtuple('Correlations', ['pearson_r', 'spearman_rho', 'kendall_tau'])


class UndefinedCorrelationError(LodestarError):
    """Raised when a correlation is undefined because a vector has no variance."""


def _signed_sqrt(numerator, square_denominator):
    # sign(numerator) * sqrt(numerator**2 / square_denominator)
    ratio = Fraction(numerator) ** 2 / square_denominator
    return math.copysign(math.sqrt(ratio), numerator) if numerator else 0.0


def _sign(a, b):
    return (a > b) - (a < b)


def _check(x, y):
    if len(x) != len(y):
        raise ValueError(f'Vectors differ in length: {len(x)} != {len(y)}.')
    if len(x) < 3:
        raise ValueError(f'Correlations need at least 3 values, got {len(x)}.')
    if not (np.all(np.isfinite(np.asarray(x, dtype=float))) and np.all(np.isfinite(np.asarray(y, dtype=float)))):
        raise ValueError('Correlations need finite values.')


def pearson(x, y):
    """Pearson's r."""
    _check(x, y)
    fx, fy = [Fraction(value) for value in x], [Fraction(value) for value in y]
    mean_x, mean_y = sum(fx) / len(fx), sum(fy) / len(fy)
    dx, dy = [value - mean_x for value in fx], [value - mean_y for value in fy]
    var_x, var_y = sum(d * d for d in dx), sum(d * d for d in dy)
    if var_x == 0 or var_y == 0:
        raise UndefinedCorrelationError('Pearson correlation is undefined for a constant vector.')
    covariance = sum(a * b for a, b in zip(dx, dy))
    return _signed_sqrt(covariance, var_x * var_y)


def spearman(x, y):
    """Spearman's rho: Pearson's r of the average ranks."""
    _check(x, y)
    try:
        return pearson(list(rankdata(x, method='average')), list(rankdata(y, method='average')))
    except UndefinedCorrelationError:
        raise UndefinedCorrelationError('Spearman correlation is undefined for a constant vector.') from None


def kendall_tau_b(x, y):
    """Kendall's tau-b, counting concordant and discordant pairs explicitly."""
    _check(x, y)
    concordant = discordant = tied_x = tied_y = 0
    for i, j in combinations(range(len(x)), 2):
        sx, sy = _sign(x[i], x[j]), _sign(y[i], y[j])
        if sx == 0:
            tied_x += 1
        if sy == 0:
            tied_y += 1
        if sx != 0 and sy != 0:
            if sx == sy:
                concordant += 1
            else:
                discordant += 1
    pairs = len(x) * (len(x) - 1) // 2
    if tied_x == pairs or tied_y == pairs:
        raise UndefinedCorrelationError('Kendall correlation is undefined for a constant vector.')
    return _signed_sqrt(concordant - discordant, (pairs - tied_x) * (pairs - tied_y))


def correlations(x, y):
    """Return Pearson's r, Spearman's rho and Kendall's tau-b of two equally long vectors."""
    x, y = list(x), list(y)
    return Correlations(pearson(x, y), spearman(x, y), kendall_tau_b(x, y))
