"""Identity checks, complexity coefficients and the Online-DPO counterexample.

Everything here uses exact expectations over the canonical trajectory
enumeration, so it is meant for small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dcmdp import DCMDP, TabularPolicy, make_token_mdp
from .errors import ValidationError
from .policy import FinitePolicyClass, vmax_check
from .softdp import (
    _check_beta,
    bellman_op,
    boltzmann_policy,
    j_beta,
    log_table_of,
    soft_values,
    solve_soft_dp,
)

SEC_EXHAUSTIVE_CAP = 10**6


def _path_logprobs(mdp: DCMDP, policies) -> tuple[np.ndarray, object]:
    trajs = mdp.enumerate()
    tables = np.ascontiguousarray(np.stack([log_table_of(p) for p in policies]))
    return kernels.class_path_logprob(tables, trajs.states, trajs.actions), trajs


def _occupancies(mdp: DCMDP, policies) -> tuple[np.ndarray, object]:
    lp, trajs = _path_logprobs(mdp, policies)
    return mdp.rho[trajs.initial_states][None, :] * np.exp(lp), trajs


# -- coverability / concentrability ---------------------------------------------


@dataclass
class CoefficientReport:
    """Coverability and concentrability of a finite set of policies.

    ``mu`` is the optimal covering distribution over the canonical
    enumeration; ``cov_witness[i]`` is the policy attaining ``max_pi d^pi``
    on trajectory ``i``; ``conc_witness`` is ``(trajectory, policy)`` at the
    concentrability maximum (``None`` when it is undefined).
    """

    c_cov: float
    c_conc: float
    mu: np.ndarray
    cov_witness: np.ndarray
    conc_witness: tuple[int, int] | None = None
    lower_bound: bool = False
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "C_cov": self.c_cov,
            "C_conc": self.c_conc,
            "conc_witness": list(self.conc_witness) if self.conc_witness else None,
            "lower_bound": self.lower_bound,
        }


def coverability(mdp: DCMDP, policies, pi_ref=None, lower_bound: bool = False) -> CoefficientReport:
    """``C_cov = sum_tau max_pi d^pi(tau)``, attained by ``mu* ∝ max_pi d^pi``.

    Set ``lower_bound=True`` when ``policies`` is only a sample of a larger
    class; the flag is carried into the report.
    """
    policies = list(policies)
    if not policies:
        raise ValidationError("coverability needs at least one policy", "policies")
    d, _ = _occupancies(mdp, policies)
    top = d.max(axis=0)
    c_cov = float(top.sum())
    mu = top / c_cov
    c_conc, witness = (np.nan, None)
    if pi_ref is not None:
        c_conc, witness = _concentrability(mdp, policies, pi_ref)
    notes = ["closed form sum_tau max_pi d^pi(tau)"]
    if lower_bound:
        notes.append("computed on a finite sample of the class: lower bound")
    return CoefficientReport(c_cov, c_conc, mu, d.argmax(axis=0), witness, lower_bound, notes)


def _concentrability(mdp: DCMDP, policies, pi_ref) -> tuple[float, tuple[int, int] | None]:
    lp, trajs = _path_logprobs(mdp, policies)
    lref = kernels.path_logprob(np.ascontiguousarray(log_table_of(pi_ref)), trajs.states, trajs.actions)
    live = (mdp.rho[trajs.initial_states] > 0)[None, :] & np.isfinite(lp)
    if np.any(live & ~np.isfinite(lref)[None, :]):
        k, i = np.argwhere(live & ~np.isfinite(lref)[None, :])[0]
        return np.inf, (int(i), int(k))
    with np.errstate(invalid="ignore"):
        ratio = np.where(live, lp - lref[None, :], -np.inf)
    k, i = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return float(np.exp(ratio[k, i])), (int(i), int(k))


def concentrability(mdp: DCMDP, policies, pi_ref) -> float:
    """``max_{tau, pi} pi(tau) / pi_ref(tau)``; ``inf`` on a support violation."""
    return _concentrability(mdp, list(policies), pi_ref)[0]


# -- identities -------------------------------------------------------------------


def implicit_q_residual(mdp: DCMDP, f: np.ndarray, beta: float, pi_ref) -> float:
    """Max over trajectories of the implicit-Q identity residual.

    The identity is ``beta log(pi_f/pi_ref)(tau) = r(tau) - V_f(s1) +
    sum_h (f - T_beta f)(s_h, a_h)``; every term is evaluated independently
    and the largest absolute discrepancy is returned.
    """
    beta = _check_beta(beta)
    f = np.asarray(f, dtype=float)
    trajs = mdp.enumerate()
    pi_f = boltzmann_policy(f, beta, pi_ref)
    lref = np.ascontiguousarray(log_table_of(pi_ref))
    lhs = beta * (
        kernels.path_logprob(np.ascontiguousarray(pi_f.log_table), trajs.states, trajs.actions)
        - kernels.path_logprob(lref, trajs.states, trajs.actions)
    )
    err = f - bellman_op(mdp, f, beta, pi_ref)
    v = soft_values(f, beta, pi_ref)
    rhs = trajs.rewards - v[trajs.initial_states] + err[trajs.states, trajs.actions].sum(axis=1)
    return float(np.max(np.abs(lhs - rhs)))


def regret_decomposition_check(mdp: DCMDP, pi, nu, beta: float, pi_ref) -> tuple[float, float, float]:
    """Both sides of the central regret decomposition.

    ``lhs = J(pi*) - J(pi)`` and::

        rhs = E_nu[beta log pi] - E_nu[beta log pi*]
              + E_pi[beta log(pi/pi_ref) - r] - E_nu[beta log(pi/pi_ref) - r]
    """
    beta = _check_beta(beta)
    sol = solve_soft_dp(mdp, beta, pi_ref)
    lp, trajs = _path_logprobs(mdp, [pi, nu, sol.pistar, pi_ref])
    lpi, lnu, lstar, lref = lp
    rho = mdp.rho[trajs.initial_states]
    d_pi, d_nu = rho * np.exp(lpi), rho * np.exp(lnu)
    if np.any((d_pi > 0) & ~np.isfinite(lref)):
        raise ValidationError("pi is not absolutely continuous w.r.t. pi_ref", "pi")
    live_nu = d_nu > 0
    if np.any(live_nu & ~np.isfinite(lpi)):
        # E_nu[log pi] = -inf; the identity degenerates
        raise ValidationError("nu visits trajectories with pi(tau) = 0", "nu")
    lhs = sol.initial_value(mdp) - j_beta(mdp, pi, beta, pi_ref)

    def e(d, x):
        m = d > 0
        return float(np.sum(d[m] * x[m]))

    g = beta * (lpi - lref) - trajs.rewards
    rhs = (e(d_nu, beta * lpi) - e(d_nu, beta * lstar) + e(d_pi, g) - e(d_nu, g))
    return lhs, rhs, abs(lhs - rhs)


# -- SEC --------------------------------------------------------------------------


@dataclass
class SECReport:
    value: float
    sequence: tuple[int, ...]
    mode: str
    vmax: float
    lower_bound: bool = False
    notes: list[str] = field(default_factory=list)


def sec_terms(mdp: DCMDP, policies, beta: float, pi_ref) -> tuple[np.ndarray, np.ndarray]:
    """Per-member numerators and pairwise discrepancies for reference sampling.

    With ``g_k = beta log(pi_k/pi_ref) - r``::

        num[k]     = (E_{s1} E_{tau~pi_k, tau~~pi_ref | s1}[g_k(tau) - g_k(tau~)])**2
        disc[k, i] = E_{s1} E_{tau~pi_i, tau~~pi_ref | s1}[(g_k(tau) - g_k(tau~))**2]
    """
    beta = _check_beta(beta)
    policies = list(policies)
    lp, trajs = _path_logprobs(mdp, policies + [pi_ref])
    lref = lp[-1]
    lp = lp[:-1]
    K = len(policies)
    s1 = trajs.initial_states
    starts = np.flatnonzero(mdp.rho > 0)
    cond = np.exp(lp)  # pi(tau | s1)
    cref = np.exp(lref)
    with np.errstate(invalid="ignore"):
        g = beta * (lp - lref[None, :]) - trajs.rewards[None, :]
    # trajectories outside a policy's support carry zero weight
    g = np.where(np.isfinite(g), g, 0.0)
    num = np.zeros(K)
    disc = np.zeros((K, K))
    for s in starts:
        m = s1 == s
        w = mdp.rho[s]
        gk = g[:, m]  # (K, n_s)
        # first and second moments of g_k under pi_i | s and pi_ref | s
        m1 = cond[:, m] @ gk.T  # m1[i, k] = E_{pi_i|s}[g_k]
        m2 = cond[:, m] @ (gk ** 2).T
        r1 = gk @ cref[m]
        r2 = (gk ** 2) @ cref[m]
        num += w * (np.diag(m1) - r1)
        disc += w * (m2.T - 2.0 * m1.T * r1[:, None] + r2[:, None])
    return num ** 2, disc


def sec_estimate(
    mdp: DCMDP,
    policies,
    beta: float,
    pi_ref,
    T: int,
    mode: str = "exhaustive",
    sequence=None,
    vmax: float | None = None,
    n_random: int = 1000,
    rng: np.random.Generator | None = None,
) -> SECReport:
    """Sequential extrapolation coefficient under reference sampling.

    ``mode="exhaustive"`` maximises over all ``|Pi|**T`` member sequences
    (capped at 10**6; above the cap ``n_random`` random sequences plus
    ``sequence`` are scored and the result is flagged as a lower bound).
    ``mode="realized"`` scores ``sequence`` only. The first summand uses
    ``min(1, num / Vmax**2)``.
    """
    policies = list(policies)
    if T < 1:
        raise ValidationError("T must be at least 1", "T")
    if vmax is None:
        vmax = vmax_check(policies, beta, pi_ref, mdp)
    num, disc = sec_terms(mdp, policies, beta, pi_ref)
    vmax2 = float(vmax) ** 2
    notes = ["t=1 summand uses min(1, num/Vmax^2)"]
    if mode == "realized":
        if sequence is None or len(sequence) != T:
            raise ValidationError("realized mode needs a sequence of length T", "sequence")
        seq = tuple(int(k) for k in sequence)
        return SECReport(sec_sequence_value(num, disc, vmax2, seq), seq, mode, vmax, False, notes)
    if mode != "exhaustive":
        raise ValidationError(f"unknown mode {mode!r}", "mode")
    K = len(policies)
    if K ** T <= SEC_EXHAUSTIVE_CAP:
        best, seq = kernels.sec_exhaustive(num, disc, vmax2, T)
        return SECReport(float(best), tuple(int(k) for k in seq), mode, vmax, False, notes)
    rng = rng if rng is not None else np.random.default_rng(0)
    cands = [tuple(int(k) for k in rng.integers(K, size=T)) for _ in range(n_random)]
    if sequence is not None:
        cands.append(tuple(int(k) for k in sequence))
    vals = [sec_sequence_value(num, disc, vmax2, c) for c in cands]
    i = int(np.argmax(vals))
    notes.append(f"|Pi|^T above {SEC_EXHAUSTIVE_CAP}: sampled {len(cands)} sequences, lower bound")
    return SECReport(float(vals[i]), cands[i], "sampled", vmax, True, notes)


def sec_sequence_value(num, disc, vmax2: float, seq) -> float:
    total = 0.0
    acc = np.zeros(len(num))
    for t, k in enumerate(seq):
        if t == 0:
            total += (min(1.0, num[k] / vmax2) if vmax2 > 0 else float(num[k] > 0))
        else:
            denom = max(vmax2, acc[k])
            total += num[k] / denom if denom > 0 else 0.0
        acc += disc[:, k]
    return float(total)


# -- sigmoid gap -------------------------------------------------------------------


def sigmoid_gap_bound_check(X: float, Y: float, resolution: int = 1000) -> tuple[float, float, float]:
    """Worst ``|x-y| / (8(X+Y)e^{2Y}|sigmoid(x)-sigmoid(y)|)`` on a grid; returns ``(ratio, x, y)``."""
    if Y < 1:
        raise ValidationError("the bound is stated for Y >= 1", "Y")
    if X <= 0 or resolution < 2:
        raise ValidationError("need X > 0 and at least two grid points", "X")
    r, x, y = kernels.sigmoid_gap_worst(float(X), float(Y), int(resolution))
    return float(r), float(x), float(y)


# -- counterexample ------------------------------------------------------------------


def counterexample_instance(beta: float, c: float = 0.125) -> tuple[DCMDP, FinitePolicyClass]:
    """Two-armed bandit on which Online DPO can stay at ``pi_ref``.

    Arms ``a`` (reward 1) and ``b`` (reward 1/2); ``pi_ref = (eps, 1 - eps)``
    with ``eps = exp(-c / beta)``; the class is ``[pi_ref, pi*_beta]`` in that
    order and carries ``pi_ref`` as its reference.
    """
    if not 0 < beta < math.log(2) / 8:
        raise ValidationError(f"beta must lie in (0, log(2)/8), got {beta!r}", "beta")
    if not 0 < c <= 0.125:
        raise ValidationError(f"c must lie in (0, 1/8], got {c!r}", "c")
    if c / beta < math.log(2):
        raise ValidationError(f"eps = exp(-c/beta) = {math.exp(-c / beta):.4g} exceeds 1/2", "c")
    mdp = make_token_mdp(["x"], ["a", "b"], 1, {("x", (0,)): 1.0, ("x", (1,)): 0.5}, rmax=1.0)
    eps = math.exp(-c / beta)
    pi_ref = TabularPolicy.from_log_table(np.array([[-c / beta, math.log1p(-eps)]]))
    star = solve_soft_dp(mdp, beta, pi_ref).pistar
    return mdp, FinitePolicyClass([pi_ref, star], names=["pi_ref", "pi_star"], pi_ref=pi_ref)


def stuck_probability(beta: float, c: float, T: int) -> float:
    """Exact probability that Online DPO (``pi_ref``-first ties) never leaves ``pi_ref``.

    While stuck, each round samples two responses from ``pi_ref``; only a
    mixed pair moves the loss difference ``L(pi*) - L(pi_ref)``, by
    ``softplus(-1/2) - log 2`` if ``a`` wins and ``softplus(1/2) - log 2`` if
    ``b`` wins. The chain is tracked over the two win counts.
    """
    eps = math.exp(-c / beta)
    mixed = 2.0 * eps * (1.0 - eps)
    p_a = 1.0 / (1.0 + math.exp(-0.5))
    da = math.log1p(math.exp(-0.5)) - math.log(2.0)
    db = math.log1p(math.exp(0.5)) - math.log(2.0)
    probs = {(0, 0): 1.0}
    for _ in range(T):
        nxt: dict[tuple[int, int], float] = {}
        for (ka, kb), p in probs.items():
            for key, q in (((ka, kb), 1.0 - mixed), ((ka + 1, kb), mixed * p_a), ((ka, kb + 1), mixed * (1 - p_a))):
                if key[0] * da + key[1] * db >= 0.0:
                    nxt[key] = nxt.get(key, 0.0) + p * q
        probs = nxt
    return float(sum(probs.values()))
