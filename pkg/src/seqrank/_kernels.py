"""Compiled numerical core shared by the estimation and design solvers.

Everything here works on plain float64/int64 arrays so numba can JIT it:
score vectors are the K-1 free coordinates (item 1 is pinned at 0), rank
regions are described by their permutation (`order`, items by descending
score) plus the position of item 1 inside it, and pairs are given as the
parallel index arrays (pi, pj) in canonical i<j order.

Hot-loop functions take an explicit scratch workspace (``ws``, shape
(NSCRATCH, K)) so no allocation happens per iteration.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PROB_EPS = 1e-15
WEIGHT_FLOOR = 1e-12

# scratch rows used by project_region and the PGD drivers
NSCRATCH = 12
_ROW_P, _ROW_Q, _ROW_Y, _ROW_Z, _ROW_U, _ROW_FIT, _ROW_PM, _ROW_PC, \
    _ROW_GRAD, _ROW_GN, _ROW_CAND, _ROW_XN = range(NSCRATCH)


def make_scratch(n_items: int) -> np.ndarray:
    return np.empty((NSCRATCH, n_items), dtype=np.float64)


@njit(cache=True)
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def log_sigmoid(x):
    # log(sigmoid(x)) without cancellation on either tail
    if x >= 0.0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


@njit(cache=True)
def bernoulli_kl(p, q):
    pc = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
    qc = min(max(q, PROB_EPS), 1.0 - PROB_EPS)
    return pc * np.log(pc / qc) + (1.0 - pc) * np.log((1.0 - pc) / (1.0 - qc))


@njit(cache=True)
def _pava_nonincreasing(y, out, n, means, counts):
    """Least-squares fit of a non-increasing sequence to y[:n] (PAVA)."""
    if n == 0:
        return
    nb = 0
    for i in range(n):
        means[nb] = y[i]
        counts[nb] = 1.0
        nb += 1
        while nb > 1 and means[nb - 2] < means[nb - 1]:
            tot = means[nb - 2] * counts[nb - 2] + means[nb - 1] * counts[nb - 1]
            counts[nb - 2] += counts[nb - 1]
            means[nb - 2] = tot / counts[nb - 2]
            nb -= 1
    pos = 0
    for b in range(nb):
        c = int(counts[b])
        for _ in range(c):
            out[pos] = means[b]
            pos += 1


@njit(cache=True)
def _project_chain(x, order, pos1, delta, out, ws):
    """Exact projection of free coords x onto the ordering constraints.

    The chain theta_{order[k]} - theta_{order[k+1]} >= delta becomes, with
    u_k = theta_{order[k]} + k*delta, a non-increasing constraint on u with
    u fixed at position pos1 (item 1 sits there at score 0).  The fixed
    entry splits the fit into two independent bounded isotonic problems,
    each solved exactly by PAVA followed by a uniform-bound clip.
    """
    K = order.shape[0]
    u = ws[_ROW_U]
    fit = ws[_ROW_FIT]
    pm = ws[_ROW_PM]
    pc = ws[_ROW_PC]
    for k in range(K):
        it = order[k]
        th = 0.0 if it == 0 else x[it - 1]
        u[k] = th + k * delta
    bound = pos1 * delta
    if pos1 > 0:
        _pava_nonincreasing(u[:pos1], fit[:pos1], pos1, pm, pc)
        for k in range(pos1):
            if fit[k] < bound:
                fit[k] = bound
    fit[pos1] = bound
    if pos1 < K - 1:
        _pava_nonincreasing(u[pos1 + 1:], fit[pos1 + 1:], K - 1 - pos1, pm, pc)
        for k in range(pos1 + 1, K):
            if fit[k] > bound:
                fit[k] = bound
    for k in range(K):
        it = order[k]
        if it != 0:
            out[it - 1] = fit[k] - k * delta


@njit(cache=True)
def project_region_ws(x0, order, pos1, kappa, delta, out, ws):
    """Euclidean projection onto a rank region (chain + box) via Dykstra."""
    K = order.shape[0]
    n = K - 1
    p = ws[_ROW_P]
    q = ws[_ROW_Q]
    y = ws[_ROW_Y]
    z = ws[_ROW_Z]
    for i in range(n):
        out[i] = x0[i]
        p[i] = 0.0
        q[i] = 0.0
    for _ in range(2000):
        for i in range(n):
            z[i] = out[i] + p[i]
        _project_chain(z, order, pos1, delta, y, ws)
        for i in range(n):
            p[i] = z[i] - y[i]
        diff = 0.0
        for i in range(n):
            w = y[i] + q[i]
            v = w
            if v > kappa:
                v = kappa
            elif v < -kappa:
                v = -kappa
            q[i] = w - v
            d = abs(v - y[i])
            if d > diff:
                diff = d
            out[i] = v
        if diff <= 1e-13:
            break


@njit(cache=True)
def region_center(order, pos1, kappa, delta, out):
    """Evenly spaced interior point: descending scores with the gap halfway
    between the minimum separation and the widest even spacing."""
    K = order.shape[0]
    g = 0.5 * (delta + kappa / (K - 1))
    for k in range(K):
        it = order[k]
        if it != 0:
            out[it - 1] = (pos1 - k) * g


@njit(cache=True)
def pair_probs(x, pi, pj, out):
    """Win probabilities of the canonical pairs at free coords x."""
    for a in range(pi.shape[0]):
        i = pi[a]
        j = pj[a]
        ti = 0.0 if i == 0 else x[i - 1]
        tj = 0.0 if j == 0 else x[j - 1]
        out[a] = sigmoid(ti - tj)


@njit(cache=True)
def pair_kl_vector(p_theta, x, pi, pj, out):
    """Per-pair Bernoulli KL from the probabilities p_theta to those at x."""
    for a in range(pi.shape[0]):
        i = pi[a]
        j = pj[a]
        ti = 0.0 if i == 0 else x[i - 1]
        tj = 0.0 if j == 0 else x[j - 1]
        out[a] = bernoulli_kl(p_theta[a], sigmoid(ti - tj))


@njit(cache=True)
def weighted_kl_and_grad(x, p_theta, lam, pi, pj, grad):
    """Weighted-KL objective sum_a lam_a KL(p_a || q_a(x)) and its gradient."""
    n = grad.shape[0]
    for i in range(n):
        grad[i] = 0.0
    f = 0.0
    for a in range(pi.shape[0]):
        i = pi[a]
        j = pj[a]
        ti = 0.0 if i == 0 else x[i - 1]
        tj = 0.0 if j == 0 else x[j - 1]
        q = sigmoid(ti - tj)
        f += lam[a] * bernoulli_kl(p_theta[a], q)
        g = lam[a] * (q - p_theta[a])
        if i != 0:
            grad[i - 1] += g
        if j != 0:
            grad[j - 1] -= g
    return f


@njit(cache=True)
def pgd_inner_region(x0, p_theta, lam, pi, pj, order, pos1, kappa, delta,
                     tol, max_iter, xout, ws, step0):
    """Minimize the weighted KL over one rank region by projected gradient.

    The objective is convex with gradient Lipschitz constant <= 1/2 for
    simplex weights, so a step of 2.0 is always monotone; the step adapts
    from step0 (expand on success, halve on failure) because small
    selection weights make parts of the landscape nearly flat.  Returns
    (value, last accepted step) so callers can persist the step.
    """
    n = order.shape[0] - 1
    grad = ws[_ROW_GRAD]
    gn = ws[_ROW_GN]
    cand = ws[_ROW_CAND]
    xn = ws[_ROW_XN]
    project_region_ws(x0, order, pos1, kappa, delta, xout, ws)
    f = weighted_kl_and_grad(xout, p_theta, lam, pi, pj, grad)
    step = step0
    for _ in range(max_iter):
        accepted = False
        fn = f
        for _bt in range(60):
            for i in range(n):
                cand[i] = xout[i] - step * grad[i]
            project_region_ws(cand, order, pos1, kappa, delta, xn, ws)
            fn = weighted_kl_and_grad(xn, p_theta, lam, pi, pj, gn)
            if fn <= f + 1e-14:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        move = 0.0
        for i in range(n):
            d = abs(xn[i] - xout[i])
            if d > move:
                move = d
            xout[i] = xn[i]
            grad[i] = gn[i]
        f = fn
        if move <= tol * step:
            break
        step = min(step * 1.5, 1e3)
    return f, step


@njit(cache=True)
def loglik_and_grad(x, wins, pi, pj, grad):
    """BTL log-likelihood of the win-count matrix and gradient at x."""
    n = grad.shape[0]
    for i in range(n):
        grad[i] = 0.0
    ll = 0.0
    for a in range(pi.shape[0]):
        i = pi[a]
        j = pj[a]
        wij = wins[i, j]
        wji = wins[j, i]
        if wij == 0.0 and wji == 0.0:
            continue
        ti = 0.0 if i == 0 else x[i - 1]
        tj = 0.0 if j == 0 else x[j - 1]
        d = ti - tj
        ll += wij * log_sigmoid(d) + wji * log_sigmoid(-d)
        s = sigmoid(d)
        g = wij * (1.0 - s) - wji * s
        if i != 0:
            grad[i - 1] += g
        if j != 0:
            grad[j - 1] -= g
    return ll


@njit(cache=True)
def pgd_mle_region(x0, wins, n_total, pi, pj, order, pos1, kappa, delta,
                   tol, max_iter, xout, ws, step0):
    """Maximize the log-likelihood over one rank region by projected
    gradient ascent with backtracking (stops on projected-gradient norm).

    Returns (value, last accepted step)."""
    n = order.shape[0] - 1
    grad = ws[_ROW_GRAD]
    gn = ws[_ROW_GN]
    cand = ws[_ROW_CAND]
    xn = ws[_ROW_XN]
    project_region_ws(x0, order, pos1, kappa, delta, xout, ws)
    ll = loglik_and_grad(xout, wins, pi, pj, grad)
    step = step0 if step0 > 0.0 else 2.0 / max(n_total, 1.0)
    for _ in range(max_iter):
        accepted = False
        lln = ll
        for _bt in range(60):
            for i in range(n):
                cand[i] = xout[i] + step * grad[i]
            project_region_ws(cand, order, pos1, kappa, delta, xn, ws)
            lln = loglik_and_grad(xn, wins, pi, pj, gn)
            if lln >= ll - 1e-14:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        move = 0.0
        for i in range(n):
            d = abs(xn[i] - xout[i])
            if d > move:
                move = d
            xout[i] = xn[i]
            grad[i] = gn[i]
        ll = lln
        if move <= tol * step:
            break
        step = min(step * 1.5, 1e3)
    return ll, step


@njit(cache=True)
def pgd_mle_box(x0, wins, n_total, pi, pj, kappa, tol, max_iter, xout, ws):
    """Box-relaxed likelihood maximization (no separation constraints)."""
    n = x0.shape[0]
    grad = ws[_ROW_GRAD]
    gn = ws[_ROW_GN]
    xn = ws[_ROW_XN]
    for i in range(n):
        v = x0[i]
        if v > kappa:
            v = kappa
        elif v < -kappa:
            v = -kappa
        xout[i] = v
    ll = loglik_and_grad(xout, wins, pi, pj, grad)
    step = 2.0 / max(n_total, 1.0)
    for _ in range(max_iter):
        accepted = False
        lln = ll
        for _bt in range(60):
            for i in range(n):
                v = xout[i] + step * grad[i]
                if v > kappa:
                    v = kappa
                elif v < -kappa:
                    v = -kappa
                xn[i] = v
            lln = loglik_and_grad(xn, wins, pi, pj, gn)
            if lln >= ll - 1e-14:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        move = 0.0
        for i in range(n):
            d = abs(xn[i] - xout[i])
            if d > move:
                move = d
            xout[i] = xn[i]
            grad[i] = gn[i]
        ll = lln
        if move <= tol * step:
            break
        step = min(step * 1.5, 1e3)
    return ll


@njit(cache=True)
def solve_regions_mle(wins, n_total, pi, pj, orders, pos1s, kappa, delta,
                      warm, values, tol, max_iter, ws, steps):
    """Per-region constrained likelihood maxima; warm starts updated in place."""
    R = orders.shape[0]
    n = orders.shape[1] - 1
    xout = np.empty(n)
    for r in range(R):
        ll, st = pgd_mle_region(warm[r], wins, n_total, pi, pj, orders[r],
                                pos1s[r], kappa, delta, tol, max_iter,
                                xout, ws, steps[r])
        values[r] = ll
        steps[r] = st
        for i in range(n):
            warm[r, i] = xout[i]


@njit(cache=True)
def inner_min_regions(p_theta, lam, pi, pj, orders, pos1s, wrong_idx, kappa,
                      delta, warm, values, tol, max_iter, ws, steps):
    """Inner minimization across the given wrong-rank regions (warm started).

    Fills values[r] for each visited region and returns (best id, best value)."""
    n = orders.shape[1] - 1
    xout = np.empty(n)
    best_val = np.inf
    best_r = -1
    for w in range(wrong_idx.shape[0]):
        r = wrong_idx[w]
        val, st = pgd_inner_region(warm[r], p_theta, lam, pi, pj, orders[r],
                                   pos1s[r], kappa, delta, tol, max_iter,
                                   xout, ws, steps[r])
        steps[r] = st
        for i in range(n):
            warm[r, i] = xout[i]
        values[r] = val
        if val < best_val:
            best_val = val
            best_r = r
    return best_r, best_val


@njit(cache=True)
def _region_kl_bound(p_theta, ranks_r, pi, pj, kappa, delta):
    """Upper bound on any pair's KL over one region.

    Within a region the score gap of pair a keeps its sign and its
    magnitude lies between delta times the rank distance and the box span
    (kappa when item 1 is involved since it is pinned at 0); KL is convex
    in the win probability, so endpoint evaluations bound it.
    """
    bnd = 0.0
    for a in range(pi.shape[0]):
        ri = ranks_r[pi[a]]
        rj = ranks_r[pj[a]]
        s = 1.0 if ri < rj else -1.0
        dist = abs(ri - rj)
        span = kappa if pi[a] == 0 else 2.0 * kappa
        b1 = bernoulli_kl(p_theta[a], sigmoid(s * delta * dist))
        b2 = bernoulli_kl(p_theta[a], sigmoid(s * span))
        b = b1 if b1 > b2 else b2
        if b > bnd:
            bnd = b
    return bnd


@njit(cache=True)
def mirror_descent_kernel(p_theta, lam0, pi, pj, orders, pos1s, ranks,
                          wrong_idx, kappa, delta, warm, iters, c0,
                          inner_tol, inner_iter, final_tol, final_iter,
                          lam_hat, ws, steps):
    """Entropic mirror descent on the pair-selection simplex.

    Each iteration computes the inner minimizer over the wrong-rank regions,
    uses the per-pair KL vector there as a supergradient, and applies the
    closed-form multiplicative update with step c0/sqrt(t).  Region solves
    are skipped while a drift-certified lower bound keeps them above the
    incumbent, which never changes the computed minimum.

    Returns (value at averaged iterate, certified gap, best primal seen).
    """
    P = pi.shape[0]
    R = orders.shape[0]
    n = orders.shape[1] - 1
    nw = wrong_idx.shape[0]
    lam = np.empty(P)
    s = 0.0
    for a in range(P):
        v = lam0[a]
        if v < WEIGHT_FLOOR:
            v = WEIGHT_FLOOR
        lam[a] = v
        s += v
    for a in range(P):
        lam[a] /= s
    lam_sum = np.zeros(P)
    lam_old = np.empty(P)
    klvec = np.empty(P)
    klsum = np.zeros(P)
    xout = np.empty(n)

    # stale-value pruning state
    last_val = np.empty(R)
    drift_at = np.empty(R)
    klbnd = np.empty(R)
    for w in range(nw):
        r = wrong_idx[w]
        last_val[r] = -np.inf
        drift_at[r] = 0.0
        klbnd[r] = _region_kl_bound(p_theta, ranks[r], pi, pj, kappa, delta)
    cum_drift = 0.0
    prev_best = wrong_idx[0]

    best_primal = -np.inf
    dual_ub = np.inf
    for t in range(1, iters + 1):
        # fresh solve of the previous incumbent to anchor the pruning bound
        best_r = prev_best
        best_val, st = pgd_inner_region(warm[best_r], p_theta, lam, pi, pj,
                                        orders[best_r], pos1s[best_r], kappa,
                                        delta, inner_tol, inner_iter, xout,
                                        ws, steps[best_r])
        steps[best_r] = st
        for i in range(n):
            warm[best_r, i] = xout[i]
        last_val[best_r] = best_val
        drift_at[best_r] = cum_drift
        for w in range(nw):
            r = wrong_idx[w]
            if r == prev_best:
                continue
            lb = last_val[r] - klbnd[r] * (cum_drift - drift_at[r])
            if lb - 1e-8 >= best_val:
                continue
            val, st = pgd_inner_region(warm[r], p_theta, lam, pi, pj,
                                       orders[r], pos1s[r], kappa, delta,
                                       inner_tol, inner_iter, xout, ws,
                                       steps[r])
            steps[r] = st
            for i in range(n):
                warm[r, i] = xout[i]
            last_val[r] = val
            drift_at[r] = cum_drift
            if val < best_val:
                best_val = val
                best_r = r
        prev_best = best_r

        pair_kl_vector(p_theta, warm[best_r], pi, pj, klvec)
        v_t = 0.0
        u_t = -np.inf
        for a in range(P):
            v_t += lam[a] * klvec[a]
            klsum[a] += klvec[a]
            if klvec[a] > u_t:
                u_t = klvec[a]
        if v_t > best_primal:
            best_primal = v_t
        if u_t < dual_ub:
            dual_ub = u_t
        eta = c0 / np.sqrt(t)
        s = 0.0
        for a in range(P):
            v = lam[a]
            if v < WEIGHT_FLOOR:
                v = WEIGHT_FLOOR
            lam_old[a] = lam[a]
            v *= np.exp(eta * klvec[a])
            lam[a] = v
            s += v
        drift = P * WEIGHT_FLOOR  # covers the pre-update flooring
        for a in range(P):
            v = lam[a] / s
            drift += abs(v - lam_old[a])
            lam[a] = v
            lam_sum[a] += v
        cum_drift += drift
    for a in range(P):
        lam_hat[a] = lam_sum[a] / iters

    # averaged-linearization certificate: D <= max_a mean_t klvec_t[a]
    avg_ub = -np.inf
    for a in range(P):
        m = klsum[a] / iters
        if m > avg_ub:
            avg_ub = m
    if avg_ub < dual_ub:
        dual_ub = avg_ub

    _, value = inner_min_regions(p_theta, lam_hat, pi, pj, orders, pos1s,
                                 wrong_idx, kappa, delta, warm, last_val,
                                 final_tol, final_iter, ws, steps)
    if value > best_primal:
        best_primal = value
    gap = dual_ub - best_primal
    if gap < 0.0:
        gap = 0.0
    return value, gap, best_primal
