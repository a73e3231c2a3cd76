"""KL-regularised value machinery on a DCMDP.

Functions ``f`` over state-action pairs are plain ``(S, A)`` arrays. All soft
values are computed in log-space (max-subtracted log-sum-exp) because with
``beta`` around 1e-3 the exponents reach the hundreds.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dcmdp import DCMDP, PROB_TOL, TabularPolicy, Trajectory
from .errors import ValidationError

FIXED_POINT_TOL = 1e-9


def log_table_of(pi) -> np.ndarray:
    """Log-probabilities of a policy-like object (``TabularPolicy``, log-linear, raw array)."""
    if hasattr(pi, "log_table"):
        return np.asarray(pi.log_table)
    table = np.asarray(getattr(pi, "table", pi), dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(table)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta > 0 or not np.isfinite(beta):
        raise ValidationError(f"beta must be a positive finite number, got {beta!r}", "beta")
    return beta


def _lse_rows(z: np.ndarray) -> np.ndarray:
    top = np.max(z, axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return top[..., 0] + np.log(np.sum(np.exp(z - top), axis=-1))


def soft_values(f: np.ndarray, beta: float, pi_ref) -> np.ndarray:
    """``V_f(s) = beta * log sum_a pi_ref(a|s) exp(f(s,a)/beta)`` for every state."""
    beta = _check_beta(beta)
    return beta * _lse_rows(log_table_of(pi_ref) + np.asarray(f, dtype=float) / beta)


def soft_value(f: np.ndarray, s: int, beta: float, pi_ref) -> float:
    beta = _check_beta(beta)
    row = log_table_of(pi_ref)[s] + np.asarray(f, dtype=float)[s] / beta
    return float(beta * _lse_rows(row[None, :])[0])


def boltzmann_policy(f: np.ndarray, beta: float, pi_ref) -> TabularPolicy:
    """``pi_f(a|s) = pi_ref(a|s) exp((f(s,a) - V_f(s)) / beta)``, built in log-space."""
    beta = _check_beta(beta)
    logits = log_table_of(pi_ref) + np.asarray(f, dtype=float) / beta
    return TabularPolicy.from_log_table(logits - _lse_rows(logits)[:, None])


def bellman_op(mdp: DCMDP, f: np.ndarray, beta: float, pi_ref) -> np.ndarray:
    """KL-regularised Bellman backup ``r(s,a) + V_f(next(s,a))``; last layer gets ``r``."""
    v = soft_values(f, beta, pi_ref)
    out = np.array(mdp.reward, dtype=float)
    live = mdp.next_state >= 0
    out[live] += v[mdp.next_state[live]]
    return out


@dataclass(frozen=True, eq=False)
class SoftSolution:
    """Optimal KL-regularised ``Q``, ``V`` and policy for one ``(mdp, beta, pi_ref)``."""

    qstar: np.ndarray
    vstar: np.ndarray
    pistar: TabularPolicy
    beta: float

    def initial_value(self, mdp: DCMDP) -> float:
        """``E_{s1 ~ rho} V*(s1)``, which equals ``J_beta(pi*)``."""
        return float(np.dot(mdp.rho, np.where(mdp.rho > 0, self.vstar, 0.0)))

    def to_csv(self, sep: str = ",") -> str:
        buf = io.StringIO()
        buf.write(sep.join(["state", "action", "qstar", "vstar", "pistar"]) + "\n")
        S, A = self.qstar.shape
        for s in range(S):
            for a in range(A):
                buf.write(
                    sep.join([
                        str(s), str(a), repr(float(self.qstar[s, a])),
                        repr(float(self.vstar[s])), repr(float(self.pistar.table[s, a])),
                    ]) + "\n"
                )
        return buf.getvalue()


def solve_soft_dp(mdp: DCMDP, beta: float, pi_ref, allow_partial_support: bool = False) -> SoftSolution:
    """Backward induction for ``(Q*_beta, V*_beta, pi*_beta)``."""
    beta = _check_beta(beta)
    lref = log_table_of(pi_ref)
    if lref.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError("reference policy shape does not match the MDP", "pi_ref")
    if not allow_partial_support:
        zero = np.argwhere(~np.isfinite(lref))
        if zero.size:
            s, a = zero[0]
            raise ValidationError(
                "reference policy has zero mass here; pass allow_partial_support=True "
                "to accept it", f"pi_ref[{s}][{a}]",
            )
    S = mdp.n_states
    q = np.zeros((S, mdp.n_actions))
    v = np.zeros(S)
    for h in range(mdp.horizon - 1, -1, -1):
        ids = mdp.layers[h]
        qh = np.array(mdp.reward[ids], dtype=float)
        if h < mdp.horizon - 1:
            qh += v[mdp.next_state[ids]]
        q[ids] = qh
        v[ids] = beta * _lse_rows(lref[ids] + qh / beta)
    logits = lref + q / beta
    pistar = TabularPolicy.from_log_table(logits - v[:, None] / beta)

    resid = np.abs(bellman_op(mdp, q, beta, lref_policy(lref)) - q)
    if np.nanmax(resid) > FIXED_POINT_TOL * max(1.0, float(np.max(np.abs(q)))):
        raise ValidationError(f"soft DP fixed-point residual {np.nanmax(resid)!r} too large")
    if np.any(np.abs(pistar.table.sum(axis=1) - 1.0) > PROB_TOL):
        raise ValidationError("soft DP produced an unnormalised policy")
    return SoftSolution(q, v, pistar, beta)


class lref_policy:
    """Thin adapter so a bare log-table can be passed where a policy is expected."""

    __slots__ = ("log_table",)

    def __init__(self, log_table):
        self.log_table = log_table


class MCEstimate(NamedTuple):
    mean: float
    stderr: float
    n: int


def _step_terms(mdp: DCMDP, lpi: np.ndarray, lref: np.ndarray, beta: float) -> np.ndarray:
    # r - beta*log(pi/pi_ref), with 0 where pi has no mass and -inf on support violations
    with np.errstate(invalid="ignore"):
        term = mdp.reward - beta * (lpi - lref)
    term = np.where(np.isfinite(lpi), term, 0.0)
    term = np.where(np.isfinite(lpi) & ~np.isfinite(lref), -np.inf, term)
    return term


def policy_values(mdp: DCMDP, pi, beta: float, pi_ref) -> np.ndarray:
    """Regularised value ``V^pi_beta(s)`` of every state by backward evaluation."""
    beta = _check_beta(beta)
    lpi, lref = log_table_of(pi), log_table_of(pi_ref)
    p = np.exp(lpi)
    term = _step_terms(mdp, lpi, lref, beta)
    v = np.zeros(mdp.n_states)
    for h in range(mdp.horizon - 1, -1, -1):
        ids = mdp.layers[h]
        qh = term[ids].copy()
        if h < mdp.horizon - 1:
            cont = v[mdp.next_state[ids]]
            qh = qh + np.where(p[ids] > 0, cont, 0.0)
        with np.errstate(invalid="ignore"):
            v[ids] = np.sum(np.where(p[ids] > 0, p[ids] * qh, 0.0), axis=1)
    return v


def support_witness(mdp: DCMDP, pi, pi_ref) -> Trajectory | None:
    """A trajectory with ``d^pi > 0`` but ``pi_ref(tau) = 0``, or ``None``."""
    lpi, lref = log_table_of(pi), log_table_of(pi_ref)
    bad = np.isfinite(lpi) & ~np.isfinite(lref)
    if not bad.any():
        return None
    # forward sweep over states reachable under pi, remembering one parent edge
    parent = {int(s): None for s in np.flatnonzero(mdp.rho > 0)}
    frontier = sorted(parent)
    for h in range(mdp.horizon):
        for s in frontier:
            hits = np.flatnonzero(bad[s])
            if hits.size:
                return _witness_path(mdp, parent, s, int(hits[0]), lpi)
        nxt = []
        if h < mdp.horizon - 1:
            for s in frontier:
                for a in np.flatnonzero(np.isfinite(lpi[s])):
                    t = int(mdp.next_state[s, a])
                    if t not in parent:
                        parent[t] = (s, int(a))
                        nxt.append(t)
        frontier = sorted(nxt)
    return None


def _witness_path(mdp: DCMDP, parent, s, a, lpi) -> Trajectory:
    back = []
    cur = s
    while parent[cur] is not None:
        back.append(parent[cur])
        cur = parent[cur][0]
    prefix = [act for _, act in reversed(back)]
    # finish the episode with any supported action
    actions = prefix + [a]
    t = s
    while len(actions) < mdp.horizon:
        t = int(mdp.next_state[t, actions[-1]])
        actions.append(int(np.flatnonzero(np.isfinite(lpi[t]))[0]))
    return mdp.trajectory(cur, actions)


def _mc_returns(mdp: DCMDP, table, lpi, lref, beta, n, rng) -> np.ndarray:
    """``n`` episodes at once: one uniform per step, inverse-CDF action choice."""
    cdf_rho = np.cumsum(mdp.rho)
    s = np.minimum(np.searchsorted(cdf_rho, rng.random(n) * cdf_rho[-1], side="right"), mdp.n_states - 1)
    cdf = np.cumsum(table, axis=1)
    out = np.zeros(n)
    for h in range(mdp.horizon):
        c = cdf[s]
        a = (rng.random(n)[:, None] * c[:, -1:] >= c).sum(axis=1)
        a = np.minimum(a, mdp.n_actions - 1)
        with np.errstate(invalid="ignore"):
            out += mdp.reward[s, a] - beta * (lpi[s, a] - lref[s, a])
        if h < mdp.horizon - 1:
            s = mdp.next_state[s, a]
    return out


def j_beta(
    mdp: DCMDP,
    pi,
    beta: float,
    pi_ref,
    mode: str = "exact",
    n: int | None = None,
    rng: np.random.Generator | None = None,
    return_witness: bool = False,
):
    """KL-regularised objective ``E_pi[r(tau) - beta log(pi(tau)/pi_ref(tau))]``.

    ``mode="exact"`` evaluates the per-step form by backward recursion and
    returns a float (``-inf`` when ``pi`` leaves the support of ``pi_ref``;
    with ``return_witness=True`` a ``(value, witness_trajectory)`` tuple is
    returned instead). ``mode="monte_carlo"`` averages ``n`` rollouts drawn
    with ``rng`` and returns an :class:`MCEstimate`.
    """
    beta = _check_beta(beta)
    if mode == "exact":
        v = policy_values(mdp, pi, beta, pi_ref)
        init = mdp.rho > 0
        value = float(np.dot(mdp.rho[init], v[init]))
        if return_witness:
            witness = support_witness(mdp, pi, pi_ref) if value == -np.inf else None
            return value, witness
        return value
    if mode == "monte_carlo":
        if n is None or n < 2 or rng is None:
            raise ValidationError("monte_carlo mode needs n >= 2 and an rng", "mode")
        lpi, lref = log_table_of(pi), log_table_of(pi_ref)
        vals = _mc_returns(mdp, np.exp(lpi), lpi, lref, beta, n, rng)
        return MCEstimate(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n)), n)
    raise ValidationError(f"unknown mode {mode!r}", "mode")


def j_beta_by_enumeration(mdp: DCMDP, pi, beta: float, pi_ref) -> float:
    """Trajectory-sum form of ``J_beta`` over the canonical enumeration."""
    from . import kernels

    beta = _check_beta(beta)
    trajs = mdp.enumerate()
    lpi, lref = log_table_of(pi), log_table_of(pi_ref)
    lp = kernels.path_logprob(np.ascontiguousarray(lpi), trajs.states, trajs.actions)
    lr = kernels.path_logprob(np.ascontiguousarray(lref), trajs.states, trajs.actions)
    d = mdp.rho[trajs.initial_states] * np.exp(lp)
    live = d > 0
    if np.any(live & ~np.isfinite(lr)):
        return -np.inf
    return float(np.sum(d[live] * (trajs.rewards[live] - beta * (lp[live] - lr[live]))))


def kl_regret(mdp: DCMDP, pi, beta: float, pi_ref, solution: SoftSolution | None = None) -> float:
    """``J_beta(pi*_beta) - J_beta(pi)``."""
    if solution is None:
        solution = solve_soft_dp(mdp, beta, pi_ref)
    return solution.initial_value(mdp) - j_beta(mdp, pi, beta, pi_ref)
