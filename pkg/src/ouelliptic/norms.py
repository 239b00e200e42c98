"""Self-normalized importance sampling under weighted Gaussian measures.

All integrals against the unnormalized measure e^{-U} d(gaussian) are
estimated as ratios of sample averages, so the unknown normalizing
constant cancels.  Standard errors come from the delta method applied to
the joint average (influence functions), which also covers ratios of two
such integrals over shared samples.
"""
from __future__ import annotations

import numpy as np


def sn_mean(values: np.ndarray, logw: np.ndarray) -> tuple[float, float]:
    """Mean of `values` under the self-normalized weights exp(logw)."""
    values = np.asarray(values, dtype=float)
    w = np.exp(logw - np.max(logw))
    est = float(np.sum(w * values) / np.sum(w))
    infl = w * (values - est) / w.mean()
    se = float(np.std(infl, ddof=1) / np.sqrt(values.size))
    return est, se


def sn_sqrt_ratio(num_sq: np.ndarray, den_sq: np.ndarray, logw: np.ndarray,
                  num_sq_var: np.ndarray | None = None) -> tuple[float, float]:
    """sqrt(E_nu[num_sq] / E_nu[den_sq]) with a delta-method standard error.

    num_sq and den_sq are per-sample squared integrand values on shared
    sample points.  When num_sq carries extra inner Monte Carlo noise,
    pass its per-sample variance in num_sq_var: the mean inner variance is
    subtracted from the numerator (debiasing the square) and propagated
    into the reported error.
    """
    num_sq = np.asarray(num_sq, dtype=float)
    den_sq = np.asarray(den_sq, dtype=float)
    w = np.exp(logw - np.max(logw))
    sw = np.sum(w)
    a = float(np.sum(w * num_sq) / sw)
    b = float(np.sum(w * den_sq) / sw)
    inner_se_a = 0.0
    if num_sq_var is not None:
        bias = float(np.sum(w * num_sq_var) / sw)
        a = a - bias
        inner_se_a = bias / np.sqrt(num_sq_var.size)
    a = max(a, 0.0)
    if b <= 0 or a == 0.0:
        return 0.0, np.inf
    q = num_sq.size
    wm = w.mean()
    infl_a = w * (num_sq - a) / wm
    infl_b = w * (den_sq - b) / wm
    var_a = np.var(infl_a, ddof=1) / q + inner_se_a ** 2
    var_b = np.var(infl_b, ddof=1) / q
    cov = float(np.cov(infl_a, infl_b, ddof=1)[0, 1]) / q
    ratio = np.sqrt(a / b)
    # var(log ratio)/4 propagated through the square root
    var_log = var_a / a ** 2 + var_b / b ** 2 - 2.0 * cov / (a * b)
    se = 0.5 * ratio * np.sqrt(max(var_log, 0.0))
    return float(ratio), float(se)


def sn_norm(values_sq: np.ndarray, logw: np.ndarray) -> tuple[float, float]:
    """L^2(nu) norm from per-sample squared values."""
    m, se = sn_mean(values_sq, logw)
    m = max(m, 0.0)
    if m == 0.0:
        return 0.0, np.sqrt(max(se, 0.0))
    return float(np.sqrt(m)), float(se / (2.0 * np.sqrt(m)))
