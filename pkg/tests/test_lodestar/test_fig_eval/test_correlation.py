import numpy as np
import pytest
from scipy import stats

from lodestar.fig_eval import UndefinedCorrelationError, correlations, kendall_tau_b, pearson, spearman


def test_matches_scipy_on_random_vectors():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(3, 12))
        x = [int(v) for v in rng.integers(0, 6, size=n)]
        y = [int(v) for v in rng.integers(0, 6, size=n)]
        if len(set(x)) == 1 or len(set(y)) == 1:
            continue
        result = correlations(x, y)
        assert result.pearson_r == pytest.approx(stats.pearsonr(x, y).statistic)
        assert result.spearman_rho == pytest.approx(stats.spearmanr(x, y).statistic)
        assert result.kendall_tau == pytest.approx(stats.kendalltau(x, y).statistic)


@pytest.mark.parametrize('testdescr,y,expected', [
    ('linear', [3, 5, 7, 9, 11], 1.0),
    ('anti linear', [10, 8, 6, 4, 2], -1.0),
])
def test_perfect_linear_correlation_is_exact(y, expected, testdescr):
    x = [1, 2, 3, 4, 5]
    assert pearson(x, y) == expected
    assert spearman(x, y) == expected
    assert kendall_tau_b(x, y) == expected


def test_monotonic_correlation_is_exact_for_ranks():
    x = [0.1, 0.4, 0.5, 0.9]
    y = [v ** 3 for v in x]
    assert spearman(x, y) == 1.0
    assert kendall_tau_b(x, y) == 1.0
    assert pearson(x, y) < 1.0


def test_ties_use_average_ranks():
    x, y = [1, 2, 2, 3], [1, 3, 2, 4]
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic)
    assert kendall_tau_b(x, y) == pytest.approx(stats.kendalltau(x, y).statistic)


@pytest.mark.parametrize('function', [pearson, spearman, kendall_tau_b])
def test_constant_vector(function):
    with pytest.raises(UndefinedCorrelationError):
        function([1, 1, 1], [1, 2, 3])


@pytest.mark.parametrize('testdescr,x,y', [
    ('length mismatch', [1, 2, 3], [1, 2]),
    ('too short', [1, 2], [2, 1]),
    ('not finite', [1, 2, float('nan')], [1, 2, 3]),
])
def test_invalid_input(x, y, testdescr):
    with pytest.raises(ValueError):
        correlations(x, y)
