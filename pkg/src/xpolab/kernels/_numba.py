"""Loop kernels compiled with numba.

Same signatures and semantics as :mod:`xpolab.kernels._numpy`.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def path_logprob(logtable, states, actions):
    n, horizon = states.shape
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for h in range(horizon):
            acc += logtable[states[i, h], actions[i, h]]
        out[i] = acc
    return out


@njit(cache=True)
def class_path_logprob(logtables, states, actions):
    k = logtables.shape[0]
    n, horizon = states.shape
    out = np.zeros((k, n))
    for m in range(k):
        for i in range(n):
            acc = 0.0
            for h in range(horizon):
                acc += logtables[m, states[i, h], actions[i, h]]
            out[m, i] = acc
    return out


@njit(cache=True)
def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@njit(cache=True)
def sigmoid_gap_worst(x_bound, y_bound, n):
    xs = np.linspace(-x_bound, x_bound, n)
    ys = np.linspace(-y_bound, y_bound, n)
    scale = 8.0 * (x_bound + y_bound) * np.exp(2.0 * y_bound)
    cy = np.empty(n)
    for j in range(n):
        cy[j] = np.cosh(0.5 * ys[j])
    worst = -np.inf
    wx = 0.0
    wy = 0.0
    for i in range(n):
        cx = np.cosh(0.5 * xs[i])
        for j in range(n):
            d = abs(xs[i] - ys[j])
            if d == 0.0:
                continue
            # sigmoid(x) - sigmoid(y) without cancellation
            g = np.sinh(0.5 * d) / (2.0 * cx * cy[j])
            if g == 0.0:
                ratio = np.inf
            else:
                ratio = d / (scale * g)
            if ratio > worst:
                worst = ratio
                wx = xs[i]
                wy = ys[j]
    return worst, wx, wy


@njit(cache=True)
def _summand(num, denom_acc, vmax2, first):
    if first:
        if vmax2 <= 0.0:
            return 0.0 if num == 0.0 else 1.0
        return min(1.0, num / vmax2)
    denom = max(vmax2, denom_acc)
    if denom <= 0.0:
        return 0.0
    return num / denom


@njit(cache=True)
def sec_exhaustive(num, disc, vmax2, horizon):
    # odometer walk over all k**horizon sequences in lexicographic order
    k = num.shape[0]
    seq = np.zeros(horizon, dtype=np.int64)
    best_seq = np.zeros(horizon, dtype=np.int64)
    best = -np.inf
    acc = np.zeros((horizon + 1, k))
    partial = np.zeros(horizon + 1)
    depth = 0
    while True:
        # extend from `depth` to full length with the current digits
        for t in range(depth, horizon):
            m = seq[t]
            partial[t + 1] = partial[t] + _summand(num[m], acc[t, m], vmax2, t == 0)
            for j in range(k):
                acc[t + 1, j] = acc[t, j] + disc[j, m]
        if partial[horizon] > best:
            best = partial[horizon]
            best_seq[:] = seq
        # increment odometer
        t = horizon - 1
        while t >= 0 and seq[t] == k - 1:
            seq[t] = 0
            t -= 1
        if t < 0:
            break
        seq[t] += 1
        depth = t
    return best, best_seq


@njit(cache=True)
def _softplus(z):
    return max(z, 0.0) + np.log1p(np.exp(-abs(z)))


@njit(cache=True)
def loglinear_value_grad(
    theta, phi_idx, phi_val, logpref, beta, alpha,
    traj_s, traj_a, pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi,
):
    n_states, n_actions, width = phi_idx.shape
    dim = theta.shape[0]
    logpi = np.empty((n_states, n_actions))
    for s in range(n_states):
        top = -np.inf
        for a in range(n_actions):
            z = 0.0
            for k in range(width):
                z += phi_val[s, a, k] * theta[phi_idx[s, a, k]]
            z = logpref[s, a] + z / beta
            logpi[s, a] = z
            if z > top:
                top = z
        tot = 0.0
        for a in range(n_actions):
            tot += np.exp(logpi[s, a] - top)
        lse = top + np.log(tot)
        for a in range(n_actions):
            logpi[s, a] -= lse

    n_traj, horizon = traj_s.shape
    lr = np.zeros(n_traj)
    for i in range(n_traj):
        acc = 0.0
        for h in range(horizon):
            s = traj_s[i, h]
            a = traj_a[i, h]
            acc += logpi[s, a] - logpref[s, a]
        lr[i] = acc

    coef = np.zeros(n_traj)
    value = 0.0
    for q in range(pair_w.shape[0]):
        margin = beta * (lr[pair_p[q]] - lr[pair_m[q]])
        value += pair_w[q] * _softplus(-margin)
        dl = -pair_w[q] * _sigmoid(-margin) * beta
        coef[pair_p[q]] += dl
        coef[pair_m[q]] -= dl
    if alpha != 0.0:
        for q in range(opt_w.shape[0]):
            i = opt_i[q]
            raw = lr[i]
            clipped = min(max(raw, lo), hi)
            lpref = 0.0
            for h in range(horizon):
                lpref += logpref[traj_s[i, h], traj_a[i, h]]
            value += alpha * opt_w[q] * (clipped + lpref)
            if raw > lo and raw < hi:
                coef[i] += alpha * opt_w[q]

    # d/dtheta log pi(a|s) = (phi(s,a) - E_pi[phi(s,.)]) / beta; the expectation
    # is collected per state so the work stays proportional to the nonzeros
    grad = np.zeros(dim)
    visits = np.zeros(n_states)
    for i in range(n_traj):
        c = coef[i]
        if c == 0.0:
            continue
        for h in range(horizon):
            s = traj_s[i, h]
            a = traj_a[i, h]
            visits[s] += c
            for k in range(width):
                grad[phi_idx[s, a, k]] += c * phi_val[s, a, k]
    for s in range(n_states):
        w = visits[s]
        if w == 0.0:
            continue
        for a in range(n_actions):
            pw = w * np.exp(logpi[s, a])
            for k in range(width):
                grad[phi_idx[s, a, k]] -= pw * phi_val[s, a, k]
    for c in range(dim):
        grad[c] /= beta
    return value, grad


@njit(cache=True)
def _project(theta, radius):
    if radius <= 0.0 or not np.isfinite(radius):
        return theta
    norm = np.sqrt(np.dot(theta, theta))
    if norm > radius:
        return theta * (radius / norm)
    return theta


@njit(cache=True)
def loglinear_descent(
    theta0, phi_idx, phi_val, logpref, beta, alpha,
    traj_s, traj_a, pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi,
    step0, shrink, tol, max_iter, radius, step_max,
):
    theta = _project(theta0.astype(np.float64).copy(), radius)
    value, grad = loglinear_value_grad(
        theta, phi_idx, phi_val, logpref, beta, alpha, traj_s, traj_a,
        pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi)
    step = step0
    min_step = step0 * 1e-12
    n_iter = 0
    stall = 0
    station = np.inf
    trace = np.empty((max_iter + 1, 2))
    trace[0, 0] = value
    trace[0, 1] = np.sqrt(np.dot(grad, grad))
    while n_iter < max_iter:
        cand = _project(theta - step * grad, radius)
        station = np.sqrt(np.sum((theta - cand) ** 2)) / step
        if station <= tol:
            break
        cv, cg = loglinear_value_grad(
            cand, phi_idx, phi_val, logpref, beta, alpha, traj_s, traj_a,
            pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi)
        while cv > value and step > min_step:
            step *= shrink
            cand = _project(theta - step * grad, radius)
            cv, cg = loglinear_value_grad(
                cand, phi_idx, phi_val, logpref, beta, alpha, traj_s, traj_a,
                pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi)
        if cv > value:
            break
        n_iter += 1
        improved = value - cv
        theta = cand
        value = cv
        grad = cg
        trace[n_iter, 0] = value
        trace[n_iter, 1] = np.sqrt(np.dot(grad, grad))
        # the gradient floor is set by round-off, so also stop once the
        # objective has stopped moving at machine precision
        if improved <= 1e-15 * max(1.0, abs(value)):
            stall += 1
            if stall >= 2:
                break
        else:
            stall = 0
        step = min(step_max, step / shrink)
    return theta, value, n_iter, station, trace[: n_iter + 1]
