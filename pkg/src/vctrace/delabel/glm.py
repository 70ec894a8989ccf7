"""Pure-numpy negative-binomial GLM, Wald test, and BH adjustment.

Per gene the model is log mu_j = log s_j + b0 + b1*treated_j with NB
variance mu + alpha*mu^2. Dispersion alpha comes from a method-of-moments
estimate on size-factor-normalized counts pooled across the two
conditions (floored at 1e-8); the coefficients come from iteratively
reweighted least squares with working weights mu/(1+alpha*mu).

This module is also the reference implementation the compiled kernel is
checked against (kernels.py selects between them at import time).
"""

from __future__ import annotations

import math

import numpy as np

from vctrace.errors import NormalizationError

ALPHA_FLOOR = 1e-8
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
_ETA_CLIP = 30.0

STATUS_OK = 0
STATUS_ALL_ZERO = 1
STATUS_NON_CONVERGED = 2
STATUS_NAMES = {STATUS_OK: "ok", STATUS_ALL_ZERO: "all_zero", STATUS_NON_CONVERGED: "non_converged"}


def size_factors(counts: np.ndarray) -> np.ndarray:
    """DESeq-style median-of-ratios normalization factors per sample.

    Uses only genes with strictly positive counts in every sample; raises
    NormalizationError when no such gene exists.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or counts.size == 0:
        raise NormalizationError("counts matrix is empty")
    all_positive = np.all(counts > 0, axis=1)
    if not np.any(all_positive):
        raise NormalizationError(
            "no gene has strictly positive counts in all samples"
        )
    ref = counts[all_positive]
    log_geo_mean = np.mean(np.log(ref), axis=1, keepdims=True)
    ratios = np.exp(np.log(ref) - log_geo_mean)
    return np.median(ratios, axis=0)


def moment_dispersion(
    counts: np.ndarray, sf: np.ndarray, treated: np.ndarray
) -> np.ndarray:
    """Per-gene method-of-moments dispersion, pooled across conditions.

    Within each condition, Var(y/s) ~= mu*mean(1/s) + alpha*mu^2, so
    alpha_g = (v_g - m_g*mean(1/s)) / m_g^2; conditions pool with weights
    n_g - 1. Genes with no usable condition get the floor.
    """
    counts = np.asarray(counts, dtype=np.float64)
    sf = np.asarray(sf, dtype=np.float64)
    treated = np.asarray(treated, dtype=bool)
    norm = counts / sf[None, :]
    total_w = np.zeros(counts.shape[0])
    total = np.zeros(counts.shape[0])
    for mask in (treated, ~treated):
        n = int(mask.sum())
        if n < 2:
            continue
        group = norm[:, mask]
        m = group.mean(axis=1)
        v = group.var(axis=1, ddof=1)
        xi = float(np.mean(1.0 / sf[mask]))
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(m > 0, (v - xi * m) / np.square(np.where(m > 0, m, 1.0)), 0.0)
        w = np.where(m > 0, float(n - 1), 0.0)
        total += a * w
        total_w += w
    with np.errstate(invalid="ignore"):
        alpha = np.where(total_w > 0, total / np.where(total_w > 0, total_w, 1.0), 0.0)
    return np.maximum(alpha, ALPHA_FLOOR)


def nb_glm_fit_many(
    counts: np.ndarray, sf: np.ndarray, treated: np.ndarray
) -> dict[str, np.ndarray]:
    """Fit the two-coefficient NB GLM for every gene (vectorized IRLS).

    Returns arrays keyed beta0, beta1, se1, alpha, status, n_iter. Genes
    with all-zero counts get status all_zero and NaN estimates; genes that
    fail to converge in 100 iterations or hit a singular system get
    status non_converged (last iterate retained when finite).
    """
    counts = np.asarray(counts, dtype=np.float64)
    sf = np.asarray(sf, dtype=np.float64)
    treated = np.asarray(treated, dtype=bool)
    n_genes, n_samples = counts.shape
    if sf.shape != (n_samples,):
        raise ValueError("size factor length does not match sample count")
    if treated.shape != (n_samples,):
        raise ValueError("design length does not match sample count")
    if treated.sum() < 2 or (~treated).sum() < 2:
        raise ValueError("need at least 2 samples per condition")
    if np.any(sf <= 0):
        raise ValueError("size factors must be positive")

    alpha = moment_dispersion(counts, sf, treated)
    offset = np.log(sf)[None, :]
    t = treated.astype(np.float64)[None, :]

    beta0 = np.full(n_genes, np.nan)
    beta1 = np.full(n_genes, np.nan)
    se1 = np.full(n_genes, np.nan)
    status = np.full(n_genes, STATUS_OK, dtype=np.int64)
    n_iter = np.zeros(n_genes, dtype=np.int64)

    all_zero = np.all(counts == 0, axis=1)
    status[all_zero] = STATUS_ALL_ZERO
    active = ~all_zero
    if not np.any(active):
        return {
            "beta0": beta0, "beta1": beta1, "se1": se1,
            "alpha": alpha, "status": status, "n_iter": n_iter,
        }

    idx = np.where(active)[0]
    y = counts[idx]
    a = alpha[idx]
    # init from jittered observed counts so eta is finite everywhere
    mu = y + 0.5
    eta = np.log(mu)
    b0 = np.zeros(len(idx))
    b1 = np.zeros(len(idx))
    live = np.ones(len(idx), dtype=bool)
    iters = np.zeros(len(idx), dtype=np.int64)
    sw = np.full(len(idx), np.nan)
    det = np.full(len(idx), np.nan)

    for _ in range(IRLS_MAX_ITER):
        if not np.any(live):
            break
        w = mu / (1.0 + a[:, None] * mu)
        z = (eta - offset) + (y - mu) / mu
        s_w = w.sum(axis=1)
        s_wt = (w * t).sum(axis=1)
        s_wz = (w * z).sum(axis=1)
        s_wzt = (w * z * t).sum(axis=1)
        d = s_w * s_wt - s_wt * s_wt
        singular = live & ~(d > 0)
        if np.any(singular):
            status[idx[singular]] = STATUS_NON_CONVERGED
            live = live & ~singular
        with np.errstate(divide="ignore", invalid="ignore"):
            new_b0 = (s_wt * s_wz - s_wt * s_wzt) / d
            new_b1 = (s_w * s_wzt - s_wt * s_wz) / d
        delta = np.maximum(np.abs(new_b0 - b0), np.abs(new_b1 - b1))
        step = live
        b0 = np.where(step, new_b0, b0)
        b1 = np.where(step, new_b1, b1)
        sw = np.where(step, s_w, sw)
        det = np.where(step, d, det)
        iters = iters + step.astype(np.int64)
        eta_new = np.clip(offset + b0[:, None] + b1[:, None] * t, -_ETA_CLIP, _ETA_CLIP)
        eta = np.where(step[:, None], eta_new, eta)
        mu = np.exp(eta)
        live = live & ~(delta < IRLS_TOL)

    status[idx[live]] = STATUS_NON_CONVERGED

    beta0[idx] = b0
    beta1[idx] = b1
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(sw / det)
    se1[idx] = se
    n_iter[idx] = iters
    return {
        "beta0": beta0, "beta1": beta1, "se1": se1,
        "alpha": alpha, "status": status, "n_iter": n_iter,
    }


def wald_test(beta: float, se: float) -> tuple[float, float]:
    """Two-sided Wald test of beta = 0 against the standard normal."""
    if not se > 0:
        raise ValueError("standard error must be positive")
    z = beta / se
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return z, p


def wald_test_many(beta: np.ndarray, se: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized wald_test; NaN inputs propagate to NaN outputs."""
    beta = np.asarray(beta, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = beta / se
    z = np.where(se > 0, z, np.nan)
    p = np.array(
        [math.nan if math.isnan(v) else math.erfc(abs(v) / math.sqrt(2.0)) for v in z]
    )
    return z, p


def bh_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjustment, clipped to [0,1].

    adj_(i) = min over j >= i of p_(j) * m / j, mapped back to input
    order. Inputs outside [0,1] (or NaN) raise; exclude NA-status genes
    before calling.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("expected a 1-d vector of p-values")
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m, dtype=np.float64)
    out[order] = adjusted
    return out
