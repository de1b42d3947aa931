"""Pure numpy implementations of the hot loops.

Parameter vectors are laid out ``[a, b, alpha, beta]`` with an optional fifth
entry ``a2`` (quadratic mean term). The log-variance is clamped from below at
``log_var_floor``; the gradient is zero through the clamp.
"""

from __future__ import annotations

import numpy as np


def _mean_logvar(q, theta, log_var_floor):
    a, b, alpha, beta = theta[0], theta[1], theta[2], theta[3]
    mu = a * q + b
    if len(theta) > 4:
        mu = mu + theta[4] * q * q
    s = alpha * q + beta
    clamped = s < log_var_floor
    s = np.where(clamped, log_var_floor, s)
    return mu, s, clamped


def nll_and_grad(l, q, theta, log_var_floor):
    """Gaussian negative log-likelihood (without the 2*pi constant) and its gradient."""
    l = np.asarray(l, dtype=float)
    q = np.asarray(q, dtype=float)
    theta = np.asarray(theta, dtype=float)
    mu, s, clamped = _mean_logvar(q, theta, log_var_floor)
    r = l - mu
    w = np.exp(-s)
    rw = r * w
    half_r2w = 0.5 * r * rw
    value = 0.5 * s.sum() + half_r2w.sum()

    grad = np.empty(len(theta))
    grad[0] = -(rw * q).sum()
    grad[1] = -rw.sum()
    ds = np.where(clamped, 0.0, 0.5 - half_r2w)
    grad[2] = (ds * q).sum()
    grad[3] = ds.sum()
    if len(theta) > 4:
        grad[4] = -(rw * q * q).sum()
    return float(value), grad


def corrected_logits(l, q, theta_real, theta_fake, log_var_floor):
    """Log-likelihood ratio fake/real for each (logit, normalized quality) pair."""
    l = np.asarray(l, dtype=float)
    q = np.asarray(q, dtype=float)
    mu0, s0, _ = _mean_logvar(q, np.asarray(theta_real, dtype=float), log_var_floor)
    mu1, s1, _ = _mean_logvar(q, np.asarray(theta_fake, dtype=float), log_var_floor)
    d0 = l - mu0
    d1 = l - mu1
    return 0.5 * d0 * d0 * np.exp(-s0) - 0.5 * d1 * d1 * np.exp(-s1) + 0.5 * (s0 - s1)
