"""Seeded batch execution and metric emission for one ExperimentConfig."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dcmdp import instance_hash, rollout, sample_initial_state
from ..diagnostics import coverability, sec_estimate
from ..errors import ValidationError
from ..objective import ObjectiveConfig
from ..policy import FinitePolicyClass, LogLinearClass, vmax_check
from ..preference import PreferenceDataset, label_pair
from ..rng import Streams
from ..softdp import j_beta, solve_soft_dp
from ..trainer import (
    IterationRow,
    RunRecord,
    SamplingStrategy,
    alpha_schedule,
    run_iterative_dpo,
    run_offline_dpo,
    run_online_dpo,
    run_xpo,
    select_final,
)
from .config import ExperimentConfig
from .instances import Instance, build_instance, policy_class

CLASS_SAMPLE = 64  # log-linear members sampled for coefficient estimates


@dataclass
class Prepared:
    inst: Instance
    pclass: object
    alpha: float
    alpha_info: dict


def _instance_params(cfg: ExperimentConfig) -> dict:
    params = dict(cfg.instance_params)
    # builtins whose classes depend on beta follow the run's beta unless pinned
    if cfg.instance in ("prop31", "random_tabular", "linear", "token"):
        params.setdefault("beta", cfg.beta)
    return params


def log_class_size(pclass, T: int) -> float:
    """``log |Pi|``; for a radius-``B`` log-linear class, ``d log(1 + 2BT)`` (a 1/T-cover)."""
    if isinstance(pclass, FinitePolicyClass):
        return math.log(len(pclass))
    if not math.isfinite(pclass.radius):
        raise ValidationError("an unbounded log-linear class has no finite cover; set radius", "radius")
    return pclass.dim * math.log(1.0 + 2.0 * pclass.radius * max(T, 1))


def _members(pclass, beta) -> tuple[list, bool]:
    if isinstance(pclass, FinitePolicyClass):
        return list(pclass), False
    thetas = pclass.sample_thetas(CLASS_SAMPLE, Streams(0).get("class-sample"))
    return [pclass.reference()] + [pclass.policy(t) for t in thetas], True


def resolve_alpha(cfg: ExperimentConfig, inst: Instance, pclass) -> tuple[float, dict]:
    if cfg.algorithm != "xpo":
        return 0.0, {"source": "none"}
    if not cfg.alpha_from_theorem:
        if cfg.alpha is None:
            raise ValidationError("xpo needs alpha or alpha_from_theorem", "alpha")
        return float(cfg.alpha), {"source": "manual"}
    mdp, beta = inst.mdp, cfg.beta
    vmax = vmax_check(pclass, beta, inst.pi_ref, mdp, rng=Streams(0).get("vmax"))
    members, sampled = _members(pclass, beta)
    if cfg.coef == "manual":
        coef = float(cfg.coef_value)
    elif cfg.coef == "cov":
        coef = coverability(mdp, members, lower_bound=sampled).c_cov
    else:
        coef = sec_estimate(mdp, members, beta, inst.pi_ref, max(cfg.T, 1), vmax=vmax,
                            rng=Streams(0).get("sec")).value
        coef = max(coef, 1e-12)
    logn = log_class_size(pclass, cfg.T)
    alpha = alpha_schedule(beta, vmax, mdp.rmax, max(cfg.T, 1), logn, cfg.delta, coef, cfg.c,
                           "sec" if cfg.coef == "sec" else "cov")
    info = {"source": "theorem", "vmax": vmax, "coef": cfg.coef, "coef_value": coef,
            "log_class_size": logn, "coef_from_sample": sampled}
    return alpha, info


def prepare(cfg: ExperimentConfig) -> Prepared:
    inst = build_instance(cfg.instance, _instance_params(cfg))
    pclass = policy_class(inst, cfg.policy_class, cfg.beta, cfg.radius)
    alpha, info = resolve_alpha(cfg, inst, pclass)
    return Prepared(inst, pclass, alpha, info)


def objective_config(cfg: ExperimentConfig, alpha: float) -> ObjectiveConfig:
    return ObjectiveConfig(
        beta=cfg.beta, alpha=alpha, clip=tuple(cfg.clip), step=cfg.step, max_step=cfg.max_step,
        shrink=cfg.shrink, tol=cfg.tol, max_iter=cfg.max_iter, restarts=cfg.restarts,
        tie_break=cfg.tie_break,
    )


def run_seed(cfg: ExperimentConfig, prep: Prepared, seed: int) -> RunRecord:
    inst, pclass = prep.inst, prep.pclass
    ocfg = objective_config(cfg, prep.alpha)
    meta = {"config_hash": cfg.config_hash()}
    if cfg.algorithm == "xpo":
        return run_xpo(inst.mdp, pclass, cfg.beta, prep.alpha, cfg.T, SamplingStrategy(cfg.strategy),
                       seed, inst.pi_ref, ocfg, meta)
    if cfg.algorithm == "online_dpo":
        return run_online_dpo(inst.mdp, pclass, cfg.beta, cfg.T, seed, inst.pi_ref, cfg.second, ocfg, meta)
    if cfg.algorithm == "iterative_dpo":
        return run_iterative_dpo(inst.mdp, pclass, cfg.beta, cfg.T, cfg.batch_size, seed, inst.pi_ref,
                                 ocfg, meta)
    return _offline_record(cfg, prep, ocfg, seed, meta)


def _offline_record(cfg, prep: Prepared, ocfg, seed, meta) -> RunRecord:
    """Offline DPO on ``T`` pairs drawn from ``pi_ref x pi_ref``."""
    mdp, pi_ref = prep.inst.mdp, prep.inst.pi_ref
    if cfg.T < 1:
        raise ValidationError("offline DPO needs T >= 1 pairs", "T")
    streams = Streams(seed)
    ep, lab = streams.get("episode", 0), streams.get("label", 0)
    data = PreferenceDataset()
    for _ in range(cfg.T):
        s1 = sample_initial_state(mdp, ep)
        data.append(label_pair(mdp, rollout(mdp, pi_ref, ep, s1), rollout(mdp, pi_ref, ep, s1), lab))
    pi = run_offline_dpo(mdp, prep.pclass, cfg.beta, data, pi_ref, ocfg, seed)
    jstar = solve_soft_dp(mdp, cfg.beta, pi_ref).initial_value(mdp)
    header = {"algorithm": "offline_dpo", "seed": int(seed), "instance_hash": instance_hash(mdp),
              "beta": cfg.beta, "alpha": 0.0, "T": cfg.T}
    header.update(meta)
    rec = RunRecord(header, dataset=data, context={"mdp": mdp, "pi_ref": pi_ref, "beta": cfg.beta})
    for t, p in enumerate([pi_ref, pi]):
        j = j_beta(mdp, p, cfg.beta, pi_ref)
        pid = prep.pclass.index_of(p) if isinstance(prep.pclass, FinitePolicyClass) else t
        rec.policies.append(p)
        rec.rows.append(IterationRow(t, j, jstar - j, None, 0 if t == 0 else len(data), 0.0, pid,
                                     t > 0 or pid is not None))
    select_final(rec)
    return rec


# -- per-seed execution (worker side) ------------------------------------------


def _seed_payload(args) -> dict:
    cfg_doc, seed = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    return _payload(cfg, prepare(cfg), seed)


def _payload(cfg: ExperimentConfig, prep: Prepared, seed: int) -> dict:
    rec = run_seed(cfg, prep, seed)
    return {
        "seed": seed,
        "run": rec.to_jsonl(),
        "preferences": rec.dataset.to_jsonl(prep.inst.mdp),
        "snapshots": rec.snapshots(),
    }


def execute(cfg: ExperimentConfig) -> tuple[Path, dict]:
    """Run every seed and write the per-seed files plus the aggregates."""
    prep = prepare(cfg)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    doc = cfg.to_dict()
    jobs = [(doc, s) for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            payloads = list(pool.map(_seed_payload, jobs))
    else:
        payloads = [_payload(cfg, prep, s) for s in cfg.seeds]
    # single-threaded finaliser: files written in seed order
    (out / "config.json").write_text(json.dumps(cfg.hashed_part(), indent=1, sort_keys=True) + "\n")
    (out / "alpha.json").write_text(json.dumps({"alpha": prep.alpha, **prep.alpha_info},
                                               indent=1, sort_keys=True) + "\n")
    for p in payloads:
        d = out / f"seed_{p['seed']:05d}"
        d.mkdir(exist_ok=True)
        (d / "run.jsonl").write_text(p["run"])
        (d / "preferences.jsonl").write_text(p["preferences"])
        (d / "snapshots.csv").write_text(p["snapshots"])
    summary = write_summaries(out, [p["run"] for p in payloads])
    return out, summary


# -- aggregates ------------------------------------------------------------------


def parse_run(text: str) -> tuple[dict, list[dict]]:
    lines = text.splitlines()
    header = json.loads(lines[0])["header"]
    return header, [json.loads(l) for l in lines[1:]]


def _csv(rows: list[list], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def summarize_runs(texts: list[str]) -> dict:
    """Aggregates computed from serialised records only (so any reader can redo them)."""
    parsed = [parse_run(t) for t in texts]
    regrets = np.array([[r["regret"] for r in rows] for _, rows in parsed])
    best = np.minimum.accumulate(regrets, axis=1)
    finals = [rows[h["selected"]]["regret"] for h, rows in parsed]
    # a run is stuck when every iterate is the initial policy
    stuck = [all(r["policy_id"] == rows[0]["policy_id"] for r in rows) for _, rows in parsed]
    return {
        "regret": regrets,
        "best": best,
        "finals": finals,
        "selected": [h["selected"] for h, _ in parsed],
        "seeds": [h["seed"] for h, _ in parsed],
        "stuck": stuck,
    }


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def _quantile(xs, q: float) -> float:
    # linear interpolation between order statistics at h = (n - 1) q
    xs = sorted(xs)
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    if lo + 1 >= len(xs):
        return float(xs[-1])
    return float(xs[lo] + (h - lo) * (xs[lo + 1] - xs[lo]))


def _median(xs) -> float:
    xs = sorted(xs)
    n = len(xs)
    mid = n // 2
    return float(xs[mid]) if n % 2 else (xs[mid - 1] + xs[mid]) / 2.0


def write_summaries(out: Path, texts: list[str]) -> dict:
    agg = summarize_runs(texts)
    reg, best = agg["regret"].tolist(), agg["best"].tolist()
    T1 = len(reg[0])
    rows = []
    for t in range(T1):
        col = [r[t] for r in reg]
        rows.append([t, _mean(col), _median(col), _quantile(col, 0.1), _quantile(col, 0.9),
                     _mean(b[t] for b in best)])
    (out / "summary.csv").write_text(_csv(rows, ["t", "mean_regret", "median_regret", "q10_regret",
                                                 "q90_regret", "mean_best_regret"]))
    (out / "plot_regret.csv").write_text(_csv([[r[0], r[1]] for r in rows], ["t", "mean_regret"]))
    ll = []
    for t in range(1, T1):
        m = rows[t][5]
        ll.append([t, math.log(t), m, math.log(m) if m > 0 else float("-inf")])
    (out / "plot_loglog.csv").write_text(_csv(ll, ["t", "log_t", "mean_best_regret", "log_mean_best_regret"]))
    finals = [[s, sel, f] for s, sel, f in zip(agg["seeds"], agg["selected"], agg["finals"])]
    (out / "finals.csv").write_text(_csv(finals, ["seed", "selected_t", "final_regret"]))
    summary = {
        "n_seeds": len(texts),
        "T": T1 - 1,
        "mean_final_regret": _mean(agg["finals"]),
        "median_final_regret": _median(agg["finals"]),
        "stuck_fraction": _mean(float(x) for x in agg["stuck"]),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary
