"""Compiled inner loops for coordinate descent and histogram split search.

These kernels mirror the pure-numpy formulas used elsewhere in the package;
they exist because per-node/per-coordinate numpy dispatch dominates runtime
on panel-sized matrices. All loops are sequential and deterministic.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _log1pexp(m: float) -> float:
    # log(1 + exp(m)), stable for large |m|
    if m > 0.0:
        return m + math.log1p(math.exp(-m))
    return math.log1p(math.exp(m))


@njit(cache=True)
def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _data_loss(z, sign):
    total = 0.0
    for i in range(z.size):
        total += _log1pexp(-sign[i] * z[i])
    return total


@njit(cache=True)
def cd_fit(XT, y, C, is_l1, tol, max_epochs):
    """Cyclic proximal coordinate descent on the penalized logistic objective.

    XT is (p, n) C-contiguous (features by rows). Returns
    (w, b, n_epochs, converged). Every accepted step is checked against the
    full objective with step halving, so the objective never increases.
    """
    p, n = XT.shape
    w = np.zeros(p)
    b = 0.0
    z = np.zeros(n)
    sign = 2.0 * y - 1.0
    prob = np.empty(n)
    current_loss = _data_loss(z, sign)
    n_epochs = 0
    converged = False
    for epoch in range(max_epochs):
        n_epochs = epoch + 1
        max_change = 0.0
        for i in range(n):
            prob[i] = _sigmoid(z[i])
        for j in range(p):
            grad = 0.0
            curv = 0.0
            for i in range(n):
                xij = XT[j, i]
                grad += xij * (prob[i] - y[i])
                curv += prob[i] * (1.0 - prob[i]) * xij * xij
            grad *= C
            curv *= C
            if is_l1:
                if curv <= 0.0:
                    continue
                raw = w[j] * curv - grad
                shrunk = abs(raw) - 1.0
                target = (shrunk / curv if raw > 0.0 else -shrunk / curv) if shrunk > 0.0 else 0.0
            else:
                curv += 1.0
                target = w[j] - (grad + w[j]) / curv
            step = target - w[j]
            if step == 0.0:
                continue
            pen_before = abs(w[j]) if is_l1 else 0.5 * w[j] * w[j]
            before = C * current_loss + pen_before
            for _ in range(30):
                cand = w[j] + step
                cand_loss = 0.0
                for i in range(n):
                    zc = z[i] + step * XT[j, i]
                    cand_loss += _log1pexp(-sign[i] * zc)
                pen_after = abs(cand) if is_l1 else 0.5 * cand * cand
                if C * cand_loss + pen_after <= before + 1e-12:
                    for i in range(n):
                        z[i] += step * XT[j, i]
                        prob[i] = _sigmoid(z[i])
                    w[j] = cand
                    current_loss = cand_loss
                    if abs(step) > max_change:
                        max_change = abs(step)
                    break
                step *= 0.5
        # unpenalized intercept
        grad = 0.0
        curv = 0.0
        for i in range(n):
            grad += prob[i] - y[i]
            curv += prob[i] * (1.0 - prob[i])
        grad *= C
        curv *= C
        if curv > 0.0:
            step = -grad / curv
            for _ in range(30):
                cand_loss = 0.0
                for i in range(n):
                    cand_loss += _log1pexp(-sign[i] * (z[i] + step))
                if cand_loss <= current_loss + 1e-12:
                    for i in range(n):
                        z[i] += step
                        prob[i] = _sigmoid(z[i])
                    b += step
                    current_loss = cand_loss
                    if abs(step) > max_change:
                        max_change = abs(step)
                    break
                step *= 0.5
        if max_change < tol:
            converged = True
            break
    return w, b, n_epochs, converged


@njit(cache=True)
def scan_gini_hist(codes, rows, feats, y, min_leaf, n_values):
    """Best Gini split over candidate features of one node (histogram form).

    Thresholds are midpoints between adjacent occupied integer values; ties
    resolve to the lowest feature index, then the lowest threshold (features
    ascending, thresholds ascending, strictly-better acceptance).
    Returns (decrease, feature, threshold); feature -1 when nothing splits.
    """
    m = rows.size
    pos_total = 0.0
    for ri in range(m):
        pos_total += y[rows[ri]]
    parent = m - (pos_total * pos_total + (m - pos_total) * (m - pos_total)) / m
    best_score = 0.0
    best_feat = -1
    best_thr = 0.0
    cnt = np.zeros(n_values, np.float64)
    pos = np.zeros(n_values, np.float64)
    for fi in range(feats.size):
        f = feats[fi]
        vmin = n_values - 1
        vmax = 0
        for v in range(n_values):
            cnt[v] = 0.0
            pos[v] = 0.0
        for ri in range(m):
            v = codes[rows[ri], f]
            cnt[v] += 1.0
            pos[v] += y[rows[ri]]
            if v > vmax:
                vmax = v
            if v < vmin:
                vmin = v
        nl = 0.0
        pl = 0.0
        prev = -1
        for v in range(vmin, vmax + 1):
            if cnt[v] == 0.0:
                continue
            if prev >= 0 and nl >= min_leaf and (m - nl) >= min_leaf:
                nr = m - nl
                pr = pos_total - pl
                gl = nl - (pl * pl + (nl - pl) * (nl - pl)) / nl
                gr = nr - (pr * pr + (nr - pr) * (nr - pr)) / nr
                dec = (parent - gl - gr) / m
                if dec > best_score:
                    best_score = dec
                    best_feat = f
                    best_thr = (prev + v) / 2.0
            nl += cnt[v]
            pl += pos[v]
            prev = v
    return best_score, best_feat, best_thr


@njit(cache=True)
def scan_newton_hist(codes, rows, feats, grad, hess, lam, min_leaf, n_values):
    """Best second-order-gain split of one node (histogram form).

    Gain is GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam); tie handling as in
    scan_gini_hist. Returns (gain, feature, threshold).
    """
    m = rows.size
    g_total = 0.0
    h_total = 0.0
    for ri in range(m):
        g_total += grad[rows[ri]]
        h_total += hess[rows[ri]]
    base = g_total * g_total / (h_total + lam)
    best_score = 0.0
    best_feat = -1
    best_thr = 0.0
    cnt = np.zeros(n_values, np.float64)
    gs = np.zeros(n_values, np.float64)
    hs = np.zeros(n_values, np.float64)
    for fi in range(feats.size):
        f = feats[fi]
        vmin = n_values - 1
        vmax = 0
        for v in range(n_values):
            cnt[v] = 0.0
            gs[v] = 0.0
            hs[v] = 0.0
        for ri in range(m):
            v = codes[rows[ri], f]
            cnt[v] += 1.0
            gs[v] += grad[rows[ri]]
            hs[v] += hess[rows[ri]]
            if v > vmax:
                vmax = v
            if v < vmin:
                vmin = v
        nl = 0.0
        gl = 0.0
        hl = 0.0
        prev = -1
        for v in range(vmin, vmax + 1):
            if cnt[v] == 0.0:
                continue
            if prev >= 0 and nl >= min_leaf and (m - nl) >= min_leaf:
                gr = g_total - gl
                hr = h_total - hl
                gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - base
                if gain > best_score:
                    best_score = gain
                    best_feat = f
                    best_thr = (prev + v) / 2.0
            nl += cnt[v]
            gl += gs[v]
            hl += hs[v]
            prev = v
    return best_score, best_feat, best_thr
