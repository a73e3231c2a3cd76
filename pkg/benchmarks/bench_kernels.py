"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both backends are imported directly, so ``XPOLAB_DISABLE_NUMBA`` does not
matter here. The first numba call (compilation) is excluded from timings.
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from xpolab.kernels import _numba, _numpy, sparse_features
from xpolab.diagnostics import sec_terms
from xpolab.harness.instances import linear, random_tabular
from xpolab.objective import DataAccumulator
from xpolab.preference import label_pair
from xpolab.dcmdp import rollout, sample_initial_state


def _descent_case(n_pairs: int, seed: int = 0):
    inst = linear(d=6, horizon=3, states=5, actions=4, seed=seed)
    mdp, ref = inst.mdp, inst.pi_ref
    rng = np.random.default_rng(seed)
    acc = DataAccumulator(mdp.horizon)
    for _ in range(n_pairs):
        s1 = sample_initial_state(mdp, rng)
        a, b = rollout(mdp, ref, rng, s1), rollout(mdp, ref, rng, s1)
        acc.add_pair(label_pair(mdp, a, b, rng))
        acc.add_opt(b)
    d = acc.compile()
    beta = 0.5
    args = (*sparse_features(inst.features), ref.log_table, beta, 0.1, d.states, d.actions,
            d.pair_p, d.pair_m, d.pair_w, d.opt_i, d.opt_w, -500.0, 500.0)
    return args, inst.features.shape[2]


def cases():
    args, dim = _descent_case(200)
    theta = np.random.default_rng(1).normal(size=dim)
    inst = random_tabular(states=4, actions=3, horizon=3, seed=2, beta=0.5)
    num, disc = sec_terms(inst.mdp, list(inst.finite_class), 0.5, inst.pi_ref)
    tables = inst.finite_class.log_tables
    trajs = inst.mdp.enumerate()
    return {
        "loglinear_value_grad": lambda k: k.loglinear_value_grad(theta, *args),
        "loglinear_descent": lambda k: k.loglinear_descent(np.zeros(dim), *args, 0.05, 0.5, 1e-8, 500,
                                                           -1.0, 3.2),
        "sec_exhaustive(T=6)": lambda k: k.sec_exhaustive(num, disc, 1.0, 6),
        "sigmoid_gap_worst(500)": lambda k: k.sigmoid_gap_worst(5.0, 1.0, 500),
        "class_path_logprob": lambda k: k.class_path_logprob(tables, trajs.states, trajs.actions),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=3)
    ap.add_argument("--json", help="also write results here")
    ns = ap.parse_args(argv)

    results = []
    for name, fn in cases().items():
        fn(_numba)  # compile
        row = {"kernel": name}
        for label, mod in (("numpy", _numpy), ("numba", _numba)):
            t = timeit.repeat(lambda: fn(mod), repeat=ns.repeat, number=ns.number)
            row[label + "_ms"] = 1e3 * min(t) / ns.number
        row["speedup"] = row["numpy_ms"] / row["numba_ms"]
        results.append(row)
        print(f"{name:<26} numpy {row['numpy_ms']:9.3f} ms   numba {row['numba_ms']:9.3f} ms"
              f"   x{row['speedup']:.1f}")
    if ns.json:
        with open(ns.json, "w") as fh:
            json.dump(results, fh, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
