import numpy as np
import pytest
from scipy import stats


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def chi2_gof_pvalue(draws, log_pmf, support_start=0, min_expected=5.0, cap=None):
    """Goodness-of-fit p-value of integer draws against a log-PMF callable.

    Bins with expected count below ``min_expected`` are pooled into the tail
    cell together with all mass above ``cap``.
    """
    draws = np.asarray(draws)
    n = draws.size
    cap = int(cap if cap is not None else draws.max())
    values = np.arange(support_start, cap + 1)
    probs = np.exp([float(log_pmf(int(v))) for v in values])
    observed = np.bincount(
        np.clip(draws, support_start, cap + 1) - support_start,
        minlength=values.size + 1,
    )[: values.size + 1]
    expected = np.append(probs, max(1.0 - probs.sum(), 0.0)) * n
    obs_b, exp_b = [], []
    spill_o = spill_e = 0.0
    for o, e in zip(observed, expected):
        if e < min_expected:
            spill_o += o
            spill_e += e
        else:
            obs_b.append(o)
            exp_b.append(e)
    if spill_e > 0:
        obs_b.append(spill_o)
        exp_b.append(spill_e)
    obs_b = np.asarray(obs_b, dtype=float)
    exp_b = np.asarray(exp_b, dtype=float)
    exp_b *= obs_b.sum() / exp_b.sum()
    stat, p = stats.chisquare(obs_b, exp_b)
    return p


def chi2_two_sample_pvalue(counter_a, counter_b, min_total=10):
    """Two-sample chi-squared test over categorical keys (rare keys pooled)."""
    keys = set(counter_a) | set(counter_b)
    total_a = sum(counter_a.values())
    total_b = sum(counter_b.values())
    rows_a, rows_b = [], []
    pool_a = pool_b = 0
    for key in keys:
        a, b = counter_a.get(key, 0), counter_b.get(key, 0)
        if a + b < min_total:
            pool_a += a
            pool_b += b
        else:
            rows_a.append(a)
            rows_b.append(b)
    if pool_a + pool_b:
        rows_a.append(pool_a)
        rows_b.append(pool_b)
    a = np.asarray(rows_a, dtype=float)
    b = np.asarray(rows_b, dtype=float)
    ratio = np.sqrt(total_b / total_a)
    stat = float((((a * ratio - b / ratio) ** 2) / (a + b)).sum())
    dof = a.size - 1
    return stats.chi2.sf(stat, dof)
