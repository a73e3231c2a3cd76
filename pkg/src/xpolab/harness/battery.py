"""The diagnostics battery behind ``xpolab diagnose``."""

from __future__ import annotations

import math

import numpy as np

from ..dcmdp import TabularPolicy
from ..diagnostics import (
    coverability,
    implicit_q_residual,
    regret_decomposition_check,
    sec_estimate,
    sigmoid_gap_bound_check,
)
from ..policy import FinitePolicyClass, vmax_check
from ..rng import Streams
from ..softdp import bellman_op, j_beta, solve_soft_dp
from .instances import Instance

IDENTITY_TOL = 1e-8
FIXED_POINT_TOL = 1e-9
SEC_K = 64.0


def random_policy(rng, n_states, n_actions) -> TabularPolicy:
    return TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))


def _rec(check, passed, identity, **kw) -> dict:
    return {"check": check, "pass": bool(passed), "identity": identity, **kw}


def run_battery(inst: Instance, beta: float, members=None, n_random: int = 20, seed: int = 0,
                sec_T: int = 3, sigmoid_resolution: int = 1000) -> list[dict]:
    """One record per check. ``identity=True`` marks checks whose failure is a bug."""
    mdp, pi_ref = inst.mdp, inst.pi_ref
    rng = Streams(seed).get("diagnose")
    S, A = mdp.n_states, mdp.n_actions
    out = []

    sol = solve_soft_dp(mdp, beta, pi_ref)
    resid = float(np.max(np.abs(bellman_op(mdp, sol.qstar, beta, pi_ref) - sol.qstar)))
    out.append(_rec("soft_dp_fixed_point", resid <= FIXED_POINT_TOL, True, value=resid))

    jstar = sol.initial_value(mdp)
    gaps = [jstar - j_beta(mdp, random_policy(rng, S, A), beta, pi_ref) for _ in range(n_random)]
    out.append(_rec("soft_dp_optimality", min(gaps) >= -1e-9, True, value=min(gaps)))

    fs = [sol.qstar] + [rng.normal(0, 1, size=(S, A)) for _ in range(n_random)]
    worst = max(implicit_q_residual(mdp, f, beta, pi_ref) for f in fs)
    out.append(_rec("implicit_q_residual", worst <= IDENTITY_TOL, True, value=worst))

    worst, witness = 0.0, None
    for i in range(n_random):
        pi, nu = random_policy(rng, S, A), random_policy(rng, S, A)
        _, _, gap = regret_decomposition_check(mdp, pi, nu, beta, pi_ref)
        if gap > worst:
            worst, witness = gap, i
    out.append(_rec("regret_decomposition", worst <= IDENTITY_TOL, True, value=worst, witness=witness))

    if members is None:
        members = list(inst.finite_class) if inst.finite_class is not None else [pi_ref, sol.pistar]
    rep = coverability(mdp, members, pi_ref)
    trivial = float(A) ** mdp.horizon
    ok = rep.c_cov <= rep.c_conc * (1 + 1e-12) + 1e-12 and rep.c_cov <= trivial * (1 + 1e-12)
    out.append(_rec("coverability_bounds", ok, True, C_cov=rep.c_cov, C_conc=rep.c_conc,
                    trivial_bound=trivial, conc_witness=list(rep.conc_witness or [])))

    vmax = vmax_check(members, beta, pi_ref, mdp)
    out.append(_rec("vmax", math.isfinite(vmax), False, value=vmax))

    if len(members) ** sec_T <= 10**6 and vmax > 0:
        sec = sec_estimate(mdp, members, beta, pi_ref, sec_T, vmax=vmax)
        bound = SEC_K * rep.c_cov * (1 + math.log(sec_T))
        k_fit = sec.value / (rep.c_cov * (1 + math.log(sec_T)))
        out.append(_rec("sec_vs_coverability", sec.value <= bound, False, SEC=sec.value,
                        fitted_K=k_fit, flag=k_fit > SEC_K, sequence=list(sec.sequence)))

    ratio, x, y = sigmoid_gap_bound_check(1.0, 1.0, sigmoid_resolution)
    out.append(_rec("sigmoid_gap_bound", ratio <= 1.0, True, value=ratio, witness=[x, y]))
    return out


def coefficient_sweep(build, betas, c=None) -> list[dict]:
    """Coverability / concentrability of the instance's class across ``betas``."""
    out = []
    for b in betas:
        inst = build(b)
        cls: FinitePolicyClass = inst.finite_class
        rep = coverability(inst.mdp, list(cls), inst.pi_ref)
        out.append({"check": "coefficients", "beta": b, "C_cov": rep.c_cov, "C_conc": rep.c_conc,
                    "pass": True, "identity": False})
    return out
