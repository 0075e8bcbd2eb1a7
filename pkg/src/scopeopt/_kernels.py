"""Compiled per-instance loss/gradient primitives and the hot inner loops.

Every path that needs a per-instance gradient (public ``loss_grad``, local
gradient sums, the SCOPE inner loop, SVRG, DisSVRG workers) goes through
``grad_into`` so that floating point results agree bit for bit across them.

Instance blocks are CSR-style: ``indptr``, ``indices``, ``values`` plus
``labels`` (+1/-1) and per-instance quadratic coefficients ``qa``, ``qb``
(only read by the quadratic kind).
"""

import math

import numpy as np
from numba import njit

LOGISTIC = 0
SMOOTHED_HINGE = 1
QUADRATIC = 2

# squared-norm ceiling for the divergence verdict (norm > 1e12)
DIVERGENCE_NORM_SQ = 1e24


@njit(cache=True, nogil=True)
def margin(u, indptr, indices, values, labels, i):
    m = 0.0
    for p in range(indptr[i], indptr[i + 1]):
        m += values[p] * u[indices[p]]
    return labels[i] * m


@njit(cache=True, nogil=True)
def margin_loss(kind, h, m):
    if kind == LOGISTIC:
        if m >= 0.0:
            return math.log1p(math.exp(-m))
        return -m + math.log1p(math.exp(m))
    # smoothed hinge
    if m >= 1.0:
        return 0.0
    if m > 1.0 - h:
        return (1.0 - m) * (1.0 - m) / (2.0 * h)
    return 1.0 - m - 0.5 * h


@njit(cache=True, nogil=True)
def margin_slope(kind, h, m):
    """Derivative of the margin loss with respect to the margin."""
    if kind == LOGISTIC:
        if m >= 0.0:
            e = math.exp(-m)
            return -e / (1.0 + e)
        return -1.0 / (1.0 + math.exp(m))
    if m >= 1.0:
        return 0.0
    if m > 1.0 - h:
        return -(1.0 - m) / h
    return -1.0


@njit(cache=True, nogil=True)
def margin_curvature(kind, h, m):
    if kind == LOGISTIC:
        if m >= 0.0:
            e = math.exp(-m)
            return e / ((1.0 + e) * (1.0 + e))
        e = math.exp(m)
        return e / ((1.0 + e) * (1.0 + e))
    if m >= 1.0 or m <= 1.0 - h:
        return 0.0
    return 1.0 / h


@njit(cache=True, nogil=True)
def loss_at(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i):
    reg = 0.0
    for j in range(u.shape[0]):
        reg += u[j] * u[j]
    reg *= 0.5 * lam
    if kind == QUADRATIC:
        r = u[0] - qb[i]
        return qa[i] * r * r + reg
    m = margin(u, indptr, indices, values, labels, i)
    return margin_loss(kind, h, m) + reg


@njit(cache=True, nogil=True)
def grad_into(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i, out):
    for j in range(u.shape[0]):
        out[j] = lam * u[j]
    if kind == QUADRATIC:
        out[0] += 2.0 * qa[i] * (u[0] - qb[i])
        return
    m = margin(u, indptr, indices, values, labels, i)
    s = margin_slope(kind, h, m) * labels[i]
    if s != 0.0:
        for p in range(indptr[i], indptr[i + 1]):
            out[indices[p]] += s * values[p]


@njit(cache=True, nogil=True)
def loss_values(kind, h, lam, u, indptr, indices, values, labels, qa, qb):
    n = labels.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = loss_at(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i)
    return out


@njit(cache=True, nogil=True)
def loss_sum(kind, h, lam, u, indptr, indices, values, labels, qa, qb):
    total = 0.0
    for i in range(labels.shape[0]):
        total += loss_at(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i)
    return total


@njit(cache=True, nogil=True)
def grad_sum(kind, h, lam, u, indptr, indices, values, labels, qa, qb):
    d = u.shape[0]
    acc = np.zeros(d)
    g = np.empty(d)
    for i in range(labels.shape[0]):
        grad_into(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i, g)
        for j in range(d):
            acc[j] += g[j]
    return acc


@njit(cache=True, nogil=True)
def grad_sum_subset(kind, h, lam, u, indptr, indices, values, labels, qa, qb, picks):
    d = u.shape[0]
    acc = np.zeros(d)
    g = np.empty(d)
    for r in range(picks.shape[0]):
        grad_into(kind, h, lam, u, indptr, indices, values, labels, qa, qb, picks[r], g)
        for j in range(d):
            acc[j] += g[j]
    return acc


@njit(cache=True, nogil=True)
def _blown_up(u):
    s = 0.0
    for j in range(u.shape[0]):
        s += u[j] * u[j]
    return not (s <= DIVERGENCE_NORM_SQ)


@njit(cache=True, nogil=True)
def scope_inner(kind, h, lam, w, zhat, eta, c, picks, average,
                indptr, indices, values, labels, qa, qb, trace):
    """Run the proximal local loop from ``u = w``.

    Update: u <- (1 - c*eta) * u - eta * (g_i(u) - g_i(w) + zhat).
    Returns (result, bad_step); bad_step is -1 unless an iterate blew up,
    in which case result is the offending iterate. ``trace`` receives
    u_1..u_M when it has M rows.
    """
    d = w.shape[0]
    u = w.copy()
    gu = np.empty(d)
    gw = np.empty(d)
    acc = np.zeros(d)
    shrink = 1.0 - c * eta
    record = trace.shape[0] == picks.shape[0]
    for m in range(picks.shape[0]):
        i = picks[m]
        grad_into(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i, gu)
        grad_into(kind, h, lam, w, indptr, indices, values, labels, qa, qb, i, gw)
        for j in range(d):
            u[j] = shrink * u[j] - eta * ((gu[j] - gw[j]) + zhat[j])
        if _blown_up(u):
            return u, m
        if record:
            for j in range(d):
                trace[m, j] = u[j]
        if average:
            for j in range(d):
                acc[j] += u[j]
    if average and picks.shape[0] > 0:
        for j in range(d):
            acc[j] /= picks.shape[0]
        return acc, -1
    return u, -1


@njit(cache=True, nogil=True)
def svrg_inner(kind, h, lam, u0, z, eta, picks, average,
               indptr, indices, values, labels, qa, qb):
    """Plain SVRG epoch: u <- u - eta * (g_i(u) - g_i(u0) + z)."""
    d = u0.shape[0]
    u = u0.copy()
    gu = np.empty(d)
    g0 = np.empty(d)
    acc = np.zeros(d)
    for m in range(picks.shape[0]):
        i = picks[m]
        grad_into(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i, gu)
        grad_into(kind, h, lam, u0, indptr, indices, values, labels, qa, qb, i, g0)
        for j in range(d):
            u[j] = u[j] - eta * ((gu[j] - g0[j]) + z[j])
        if _blown_up(u):
            return u, m
        if average:
            for j in range(d):
                acc[j] += u[j]
    if average and picks.shape[0] > 0:
        for j in range(d):
            acc[j] /= picks.shape[0]
        return acc, -1
    return u, -1


@njit(cache=True, nogil=True)
def local_directions(kind, h, lam, u, w, z, c, indptr, indices, values, labels, qa, qb):
    """Per-instance update directions v_i for every local instance (rows)."""
    n = labels.shape[0]
    d = u.shape[0]
    out = np.empty((n, d))
    gu = np.empty(d)
    gw = np.empty(d)
    for i in range(n):
        grad_into(kind, h, lam, u, indptr, indices, values, labels, qa, qb, i, gu)
        grad_into(kind, h, lam, w, indptr, indices, values, labels, qa, qb, i, gw)
        for j in range(d):
            out[i, j] = gu[j] - gw[j] + z[j] + c * (u[j] - w[j])
    return out
