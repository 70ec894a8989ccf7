# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled NB-GLM kernel: per-gene moment dispersion + IRLS.

Mirrors vctrace.delabel.glm.nb_glm_fit_many; kernels.py picks whichever
is importable. Keep the two implementations in lockstep (the parity test
compares them on random matrices).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt

cnp.import_array()

cdef double ALPHA_FLOOR = 1e-8
cdef double IRLS_TOL = 1e-8
cdef int IRLS_MAX_ITER = 100
cdef double ETA_CLIP = 30.0

cdef long long STATUS_ALL_ZERO = 1
cdef long long STATUS_NON_CONVERGED = 2


def nb_glm_fit_many(counts_in, sf_in, treated_in):
    counts_arr = np.ascontiguousarray(counts_in, dtype=np.float64)
    sf_arr = np.ascontiguousarray(sf_in, dtype=np.float64)
    treated_arr = np.ascontiguousarray(treated_in, dtype=np.uint8)

    cdef double[:, ::1] counts = counts_arr
    cdef double[::1] sf = sf_arr
    cdef unsigned char[::1] treated = treated_arr

    cdef Py_ssize_t n_genes = counts.shape[0]
    cdef Py_ssize_t n_samples = counts.shape[1]
    if sf.shape[0] != n_samples or treated.shape[0] != n_samples:
        raise ValueError("size factor / design length does not match sample count")

    cdef Py_ssize_t n_treated = 0
    cdef Py_ssize_t j
    for j in range(n_samples):
        if treated[j]:
            n_treated += 1
        if sf[j] <= 0:
            raise ValueError("size factors must be positive")
    if n_treated < 2 or n_samples - n_treated < 2:
        raise ValueError("need at least 2 samples per condition")

    beta0_arr = np.full(n_genes, np.nan)
    beta1_arr = np.full(n_genes, np.nan)
    se1_arr = np.full(n_genes, np.nan)
    alpha_arr = np.empty(n_genes)
    status_arr = np.zeros(n_genes, dtype=np.int64)
    iter_arr = np.zeros(n_genes, dtype=np.int64)

    cdef double[::1] beta0 = beta0_arr
    cdef double[::1] beta1 = beta1_arr
    cdef double[::1] se1 = se1_arr
    cdef double[::1] alpha = alpha_arr
    cdef long long[::1] status = status_arr
    cdef long long[::1] n_iter = iter_arr

    cdef double xi_t = 0.0, xi_c = 0.0
    for j in range(n_samples):
        if treated[j]:
            xi_t += 1.0 / sf[j]
        else:
            xi_c += 1.0 / sf[j]
    xi_t /= n_treated
    xi_c /= (n_samples - n_treated)

    cdef double[::1] offset = np.log(sf_arr)
    cdef double[::1] mu = np.empty(n_samples)
    cdef double[::1] eta = np.empty(n_samples)

    cdef Py_ssize_t g, it
    cdef double m_t, m_c, v_t, v_c, acc, acc_w, a, y, d
    cdef double s_w, s_wt, s_wz, s_wzt, w, z, det, last_sw, last_det
    cdef double b0, b1, nb0, nb1, delta, e
    cdef bint all_zero, converged, singular

    for g in range(n_genes):
        # method-of-moments dispersion, pooled across conditions
        m_t = 0.0
        m_c = 0.0
        all_zero = True
        for j in range(n_samples):
            y = counts[g, j] / sf[j]
            if counts[g, j] != 0:
                all_zero = False
            if treated[j]:
                m_t += y
            else:
                m_c += y
        m_t /= n_treated
        m_c /= (n_samples - n_treated)
        v_t = 0.0
        v_c = 0.0
        for j in range(n_samples):
            y = counts[g, j] / sf[j]
            if treated[j]:
                v_t += (y - m_t) * (y - m_t)
            else:
                v_c += (y - m_c) * (y - m_c)
        v_t /= (n_treated - 1)
        v_c /= (n_samples - n_treated - 1)
        acc = 0.0
        acc_w = 0.0
        if m_t > 0:
            acc += (v_t - xi_t * m_t) / (m_t * m_t) * (n_treated - 1)
            acc_w += n_treated - 1
        if m_c > 0:
            acc += (v_c - xi_c * m_c) / (m_c * m_c) * (n_samples - n_treated - 1)
            acc_w += n_samples - n_treated - 1
        a = acc / acc_w if acc_w > 0 else 0.0
        if a < ALPHA_FLOOR:
            a = ALPHA_FLOOR
        alpha[g] = a

        if all_zero:
            status[g] = STATUS_ALL_ZERO
            continue

        for j in range(n_samples):
            mu[j] = counts[g, j] + 0.5
            eta[j] = log(mu[j])
        b0 = 0.0
        b1 = 0.0
        last_sw = np.nan
        last_det = np.nan
        converged = False
        singular = False
        for it in range(IRLS_MAX_ITER):
            s_w = 0.0
            s_wt = 0.0
            s_wz = 0.0
            s_wzt = 0.0
            for j in range(n_samples):
                w = mu[j] / (1.0 + a * mu[j])
                z = (eta[j] - offset[j]) + (counts[g, j] - mu[j]) / mu[j]
                s_w += w
                s_wz += w * z
                if treated[j]:
                    s_wt += w
                    s_wzt += w * z
            det = s_w * s_wt - s_wt * s_wt
            if not det > 0:
                singular = True
                break
            nb0 = (s_wt * s_wz - s_wt * s_wzt) / det
            nb1 = (s_w * s_wzt - s_wt * s_wz) / det
            delta = fabs(nb0 - b0)
            if fabs(nb1 - b1) > delta:
                delta = fabs(nb1 - b1)
            b0 = nb0
            b1 = nb1
            last_sw = s_w
            last_det = det
            n_iter[g] = it + 1
            for j in range(n_samples):
                e = offset[j] + b0 + (b1 if treated[j] else 0.0)
                if e > ETA_CLIP:
                    e = ETA_CLIP
                elif e < -ETA_CLIP:
                    e = -ETA_CLIP
                eta[j] = e
                mu[j] = exp(e)
            if delta < IRLS_TOL:
                converged = True
                break

        beta0[g] = b0
        beta1[g] = b1
        if last_det > 0:
            se1[g] = sqrt(last_sw / last_det)
        if singular or not converged:
            status[g] = STATUS_NON_CONVERGED

    return {
        "beta0": beta0_arr, "beta1": beta1_arr, "se1": se1_arr,
        "alpha": alpha_arr, "status": status_arr, "n_iter": iter_arr,
    }
