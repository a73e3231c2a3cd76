"""Packaged experiments: the Online-DPO vs XPO comparison and cartesian sweeps."""

from __future__ import annotations

import dataclasses
import itertools
import math
import warnings

import numpy as np

from ..diagnostics import counterexample_instance, stuck_probability
from .config import ExperimentConfig
from .runner import _median, _mean, execute, prepare, run_seed

ESCAPE_REGRET = 0.01


def theorem_horizon(beta: float) -> float:
    """Largest T covered by the counterexample guarantee: ``exp(1/(8 beta)) / 2``."""
    return 0.5 * math.exp(1.0 / (8.0 * beta))


def counterexample_report(beta: float = 0.02, c: float = 0.125, T: int = 100, seeds=range(200),
                          escape: float = ESCAPE_REGRET) -> dict:
    """Online DPO and XPO side by side on the two-arm instance.

    XPO uses the theorem alpha with the coverability coefficient of the
    two-member class. A DPO run is stuck when every iterate is ``pi_ref``.
    """
    counterexample_instance(beta, c)  # range checks
    if T > theorem_horizon(beta):
        warnings.warn(f"T={T} exceeds exp(1/(8 beta))/2 = {theorem_horizon(beta):.4g}; "
                      "the failure guarantee no longer applies", stacklevel=2)
    seeds = [int(s) for s in seeds]
    base = dict(instance="prop31", instance_params={"beta": beta, "c": c}, beta=beta, T=T,
                seeds=seeds, tie_break="first")
    dpo_cfg = ExperimentConfig(algorithm="online_dpo", **base)
    xpo_cfg = ExperimentConfig(algorithm="xpo", alpha_from_theorem=True, coef="cov", **base)
    dpo_prep, xpo_prep = prepare(dpo_cfg), prepare(xpo_cfg)

    stuck, stuck_min_regret = [], []
    for s in seeds:
        rec = run_seed(dpo_cfg, dpo_prep, s)
        ids = [r.policy_id for r in rec.rows]
        if all(i == 0 for i in ids):
            stuck.append(s)
            stuck_min_regret.append(float(np.min(rec.regrets)))
    first_hit = []
    for s in seeds:
        rec = run_seed(xpo_cfg, xpo_prep, s)
        hits = np.flatnonzero(rec.regrets < escape)
        first_hit.append(int(hits[0]) if len(hits) else None)
    escaped = [t for t in first_hit if t is not None]
    eps = math.exp(-c / beta)
    n = len(seeds)
    frac = len(stuck) / n
    return {
        "beta": beta, "c": c, "T": T, "n_seeds": n, "eps": eps,
        "dpo_stuck_fraction": frac,
        "dpo_stuck_stderr": math.sqrt(frac * (1 - frac) / n),
        "bound_one_minus_2eps_T": (1 - 2 * eps) ** T,
        "exact_stuck_probability": stuck_probability(beta, c, T),
        "dpo_stuck_min_regret": min(stuck_min_regret) if stuck_min_regret else None,
        "xpo_alpha": xpo_prep.alpha,
        "xpo_escape_threshold": escape,
        "xpo_escape_fraction": len(escaped) / n,
        "xpo_median_escape_t": _median(escaped) if escaped else None,
        "xpo_mean_escape_t": _mean(escaped) if escaped else None,
        "xpo_first_hit": first_hit,
    }


def sweep_configs(base: ExperimentConfig, betas=None, alphas=None, cs=None, Ts=None) -> list[ExperimentConfig]:
    """Cartesian product over the given axes; ``None`` keeps the base value."""
    axes = {
        "beta": betas or [base.beta],
        "alpha": alphas or [base.alpha],
        "c": cs or [base.c],
        "T": Ts or [base.T],
    }
    out = []
    for combo in itertools.product(*axes.values()):
        kw = dict(zip(axes, combo))
        out.append(dataclasses.replace(base, **kw))
    return out


def loglog_slope(Ts, values) -> float | None:
    """Least-squares slope of log(value) on log(T); ``None`` with fewer than two usable points."""
    pts = [(math.log(t), math.log(v)) for t, v in zip(Ts, values) if t > 0 and v > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def run_sweep(base: ExperimentConfig, betas=None, alphas=None, cs=None, Ts=None) -> dict:
    rows = []
    for cfg in sweep_configs(base, betas, alphas, cs, Ts):
        out, summary = execute(cfg)
        rows.append({"beta": cfg.beta, "alpha": cfg.alpha, "c": cfg.c, "T": cfg.T,
                     "config_hash": cfg.config_hash(), "output": str(out),
                     "mean_final_regret": summary["mean_final_regret"]})
    fits = []
    keyf = lambda r: (r["beta"], r["alpha"], r["c"])  # noqa: E731
    for key, grp in itertools.groupby(sorted(rows, key=lambda r: (keyf(r), r["T"])), key=keyf):
        grp = list(grp)
        fits.append({"beta": key[0], "alpha": key[1], "c": key[2],
                     "slope": loglog_slope([g["T"] for g in grp], [g["mean_final_regret"] for g in grp])})
    return {"runs": rows, "fits": fits}
