"""Pure-numpy implementations of the hot kernels.

Every function here has a loop twin in :mod:`xpolab.kernels._numba` with the
same signature and semantics. Results agree to floating-point round-off, not
bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def path_logprob(logtable, states, actions):
    """Sum ``logtable[s_h, a_h]`` along each row of ``states``/``actions``."""
    if states.shape[0] == 0:
        return np.zeros(0)
    return logtable[states, actions].sum(axis=1)


def class_path_logprob(logtables, states, actions):
    """Trajectory log-probabilities for a stack of policies, shape ``(K, N)``."""
    if states.shape[0] == 0:
        return np.zeros((logtables.shape[0], 0))
    return logtables[:, states, actions].sum(axis=2)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid_gap_worst(x_bound, y_bound, n):
    """Worst ratio ``|x-y| / (8(X+Y)e^{2Y}|s(x)-s(y)|)`` on an ``n x n`` grid.

    Returns ``(ratio, x, y)`` at the maximiser; pairs with ``x == y`` are
    skipped. Ties go to the first grid point in row-major order. The sigmoid
    gap is taken as ``sinh((x-y)/2) / (2 cosh(x/2) cosh(y/2))``, which does
    not cancel when ``x`` and ``y`` are a few ulps apart.
    """
    xs = np.linspace(-x_bound, x_bound, n)
    ys = np.linspace(-y_bound, y_bound, n)
    scale = 8.0 * (x_bound + y_bound) * np.exp(2.0 * y_bound)
    d = xs[:, None] - ys[None, :]
    diff = np.abs(d)
    sgap = np.abs(np.sinh(0.5 * d)) / (2.0 * np.cosh(0.5 * xs)[:, None] * np.cosh(0.5 * ys)[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff / (scale * sgap)
    ratio[diff == 0.0] = -np.inf
    flat = int(np.argmax(ratio))
    i, j = divmod(flat, n)
    return float(ratio[i, j]), float(xs[i]), float(ys[j])


def _summand(num, denom_acc, vmax2, first):
    if first:
        if vmax2 <= 0.0:
            return 0.0 if num == 0.0 else 1.0
        return min(1.0, num / vmax2)
    denom = max(vmax2, denom_acc)
    if denom <= 0.0:
        return 0.0
    return num / denom


def sec_exhaustive(num, disc, vmax2, horizon):
    """Maximise the SEC sum over all member sequences of length ``horizon``.

    ``num[k]`` is the squared on-policy discrepancy of member ``k``;
    ``disc[k, i]`` is the expected squared discrepancy of member ``k`` under
    member ``i``'s data. Returns ``(best_value, best_sequence)``; the
    lexicographically first maximiser wins ties.
    """
    k = num.shape[0]
    first = np.array([_summand(num[m], 0.0, vmax2, True) for m in range(k)])
    # frontier rows: one per prefix, in lexicographic order
    values = first.copy()
    acc = disc[:, :].T.copy()  # acc[row, m] = sum_{i in prefix} disc[m, i]
    seqs = np.arange(k)[:, None]
    for _ in range(1, horizon):
        denom = np.maximum(vmax2, acc)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(denom > 0.0, num[None, :] / denom, 0.0)
        values = (values[:, None] + step).reshape(-1)
        acc = (acc[:, None, :] + disc.T[None, :, :]).reshape(-1, k)
        seqs = np.concatenate(
            [np.repeat(seqs, k, axis=0), np.tile(np.arange(k), seqs.shape[0])[:, None]],
            axis=1,
        )
    best = int(np.argmax(values))
    return float(values[best]), seqs[best].copy()


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def loglinear_value_grad(
    theta, phi_idx, phi_val, logpref, beta, alpha,
    traj_s, traj_a, pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi,
):
    """XPO objective and gradient for a log-linear policy.

    Features come in padded sparse form: ``phi(s, a)[phi_idx[s, a, k]]`` is
    ``phi_val[s, a, k]`` (padding has value 0). Trajectories are rows of
    ``traj_s``/``traj_a``; pairs and the optimism set index into them with
    multiplicities ``pair_w``/``opt_w``.
    """
    logits = logpref + (phi_val * theta[phi_idx]).sum(axis=2) / beta
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    logpi = logits - lse[:, None]
    pi = np.exp(logpi)
    step_ratio = logpi - logpref

    lr = step_ratio[traj_s, traj_a].sum(axis=1)
    coef = np.zeros(traj_s.shape[0])
    value = 0.0
    if pair_w.shape[0]:
        margin = beta * (lr[pair_p] - lr[pair_m])
        value += float(np.dot(pair_w, _softplus(-margin)))
        # d/dm softplus(-m) = -sigmoid(-m)
        dl = -pair_w * _sigmoid(-margin) * beta
        np.add.at(coef, pair_p, dl)
        np.add.at(coef, pair_m, -dl)
    if opt_w.shape[0] and alpha != 0.0:
        raw = lr[opt_i]
        clipped = np.clip(raw, lo, hi)
        lpref = logpref[traj_s[opt_i], traj_a[opt_i]].sum(axis=1)
        value += alpha * float(np.dot(opt_w, clipped + lpref))
        live = (raw > lo) & (raw < hi)
        np.add.at(coef, opt_i, alpha * opt_w * live)

    grad = np.zeros(theta.shape[0])
    step_coef = np.broadcast_to(coef[:, None], traj_s.shape)
    np.add.at(grad, phi_idx[traj_s, traj_a], step_coef[..., None] * phi_val[traj_s, traj_a])
    visits = np.bincount(traj_s.ravel(), weights=step_coef.ravel(), minlength=pi.shape[0])
    np.add.at(grad, phi_idx, -(visits[:, None] * pi)[..., None] * phi_val)
    return value, grad / beta


def _project(theta, radius):
    if radius <= 0.0 or not np.isfinite(radius):
        return theta
    norm = float(np.sqrt(np.dot(theta, theta)))
    if norm > radius:
        return theta * (radius / norm)
    return theta


def loglinear_descent(
    theta0, phi_idx, phi_val, logpref, beta, alpha,
    traj_s, traj_a, pair_p, pair_m, pair_w, opt_i, opt_w, lo, hi,
    step0, shrink, tol, max_iter, radius, step_max,
):
    """Projected gradient descent with geometric backtracking on increase.

    After an accepted step the step size is divided by ``shrink`` again, up
    to ``step_max``; ``step_max == step0`` gives a fixed step that only
    shrinks while the objective would increase.

    Returns ``(theta, value, iterations, stationarity, trace)``; the final
    iterate is the best one since every accepted step decreases the value.
    ``trace`` holds ``(objective, gradient norm)`` per accepted iterate.
    """
    args = (phi_idx, phi_val, logpref, beta, alpha, traj_s, traj_a, pair_p, pair_m,
            pair_w, opt_i, opt_w, lo, hi)
    theta = _project(np.array(theta0, dtype=float), radius)
    value, grad = loglinear_value_grad(theta, *args)
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
        station = float(np.sqrt(np.sum((theta - cand) ** 2))) / step
        if station <= tol:
            break
        cv, cg = loglinear_value_grad(cand, *args)
        while cv > value and step > min_step:
            step *= shrink
            cand = _project(theta - step * grad, radius)
            cv, cg = loglinear_value_grad(cand, *args)
        if cv > value:
            break
        n_iter += 1
        improved = value - cv
        theta, value, grad = cand, cv, cg
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
