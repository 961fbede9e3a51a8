"""Goodness-of-fit statistics used by the checks."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats as _st

__all__ = [
    "ks_statistic",
    "ks_two_sample",
    "ks_critical",
    "chi2_statistic",
    "chi2_critical",
    "poisson_chi2",
    "mean_stderr",
]


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F|."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_two_sample(a, b) -> float:
    return float(_st.ks_2samp(np.ravel(a), np.ravel(b)).statistic)


def ks_critical(n: int, alpha: float = 0.01) -> float:
    """Asymptotic critical value c(alpha)/sqrt(n); c(0.01) = 1.628."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c / math.sqrt(n)


def chi2_statistic(counts, expected) -> float:
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    if counts.shape != expected.shape:
        raise ValueError("counts and expected differ in shape")
    if np.any(expected <= 0):
        raise ValueError("expected counts must be positive")
    return float(np.sum((counts - expected) ** 2 / expected))


def chi2_critical(dof: int, alpha: float = 0.01) -> float:
    return float(_st.chi2.ppf(1.0 - alpha, dof))


def poisson_chi2(counts, mean: float, min_expected: float = 5.0):
    """Chi-square of integer counts against Poisson(mean), pooling sparse tails.

    Returns (statistic, degrees of freedom, p-value).
    """
    counts = np.asarray(counts, dtype=np.int64).ravel()
    n = counts.size
    kmax = int(max(counts.max(), _st.poisson.ppf(1 - 1e-12, mean))) + 1
    obs = np.bincount(counts, minlength=kmax + 1)[: kmax + 1].astype(float)
    pmf = _st.poisson.pmf(np.arange(kmax + 1), mean)
    pmf[-1] += _st.poisson.sf(kmax, mean)
    exp = n * pmf
    # pool bins from both ends until every bin has enough expectation
    bins_o, bins_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if bins_e:
            bins_o[-1] += acc_o
            bins_e[-1] += acc_e
        else:
            bins_o.append(acc_o)
            bins_e.append(acc_e)
    stat = chi2_statistic(bins_o, bins_e)
    dof = max(len(bins_o) - 1, 1)
    return stat, dof, float(_st.chi2.sf(stat, dof))


def mean_stderr(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")
