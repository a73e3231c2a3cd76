"""Command-line entry point: ``xpolab run | diagnose | counterexample | sweep``.

Exit codes: 0 success, 1 validation error, 2 identity check failed,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import fields

from ..errors import ValidationError
from .battery import coefficient_sweep, run_battery
from .config import ALGORITHMS, COEFS, ExperimentConfig, parse_seeds
from .experiments import counterexample_report, run_sweep
from .instances import build_instance, policy_class, prop31
from .runner import _members

EXIT_OK, EXIT_VALIDATION, EXIT_IDENTITY, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1 with a JSON message, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "validation", "path": "argv", "message": message}), file=sys.stderr)
        sys.exit(EXIT_VALIDATION)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k, json.loads(v)
    except json.JSONDecodeError:
        return k, v


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags given explicitly override it")
    p.add_argument("--instance")
    p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                   help="instance builder parameter (repeatable)")
    p.add_argument("--algo", "--algorithm", dest="algorithm", choices=ALGORITHMS)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-from-theorem", action="store_true", default=None)
    p.add_argument("--c", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--coef", choices=COEFS)
    p.add_argument("--coef-value", type=float)
    p.add_argument("--T", "-T", dest="T", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--strategy", choices=("reference", "historical"))
    p.add_argument("--second", choices=("policy", "reference"))
    p.add_argument("--policy-class", choices=("finite", "loglinear"))
    p.add_argument("--radius", type=float)
    p.add_argument("--clip", type=_floats, metavar="LO,HI")
    p.add_argument("--step", type=float)
    p.add_argument("--max-step", type=float)
    p.add_argument("--shrink", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--tie-break", choices=("first", "last", "random"))
    p.add_argument("--seeds", type=parse_seeds, help='e.g. "0..199" or "0,3,7"')
    p.add_argument("--workers", type=int)
    p.add_argument("--output-root", help="defaults to $XPOLAB_OUTPUT_ROOT, then ./xpolab-out")


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    doc = {}
    if ns.config:
        doc = ExperimentConfig.load(ns.config).to_dict()
    names = {f.name for f in fields(ExperimentConfig)}
    for k, v in vars(ns).items():
        if k in names and v is not None:
            doc[k] = v
    if ns.param:
        doc["instance_params"] = {**doc.get("instance_params", {}), **dict(ns.param)}
    return ExperimentConfig.from_dict(doc)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_run(ns) -> int:
    from .runner import execute

    cfg = config_from_args(ns)
    out, summary = execute(cfg)
    _emit({"output": str(out), "config_hash": cfg.config_hash(), **summary})
    return EXIT_OK


def cmd_diagnose(ns) -> int:
    inst = build_instance(ns.instance, dict(ns.param) | ({"beta": ns.beta} if ns.instance in
                                                         ("prop31", "random_tabular", "linear", "token")
                                                         and "beta" not in dict(ns.param) else {}))
    members = None
    if ns.policy_class == "loglinear":
        members, _ = _members(policy_class(inst, "loglinear", ns.beta, ns.radius), ns.beta)
    records = run_battery(inst, ns.beta, members=members, n_random=ns.n_random, seed=ns.seed,
                          sec_T=ns.sec_T)
    if ns.beta_sweep:
        params = dict(ns.param)
        records += coefficient_sweep(lambda b: prop31(b, params.get("c", 0.125)), ns.beta_sweep)
    for r in records:
        _emit(r)
    failed = [r["check"] for r in records if r["identity"] and not r["pass"]]
    if failed:
        print(f"identity checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_IDENTITY
    return EXIT_OK


def cmd_counterexample(ns) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = counterexample_report(ns.beta, ns.c, ns.T, ns.seeds)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if ns.json:
        _emit(rep)
        return EXIT_OK
    rows = [
        ("online_dpo stuck fraction", rep["dpo_stuck_fraction"]),
        ("  stderr", rep["dpo_stuck_stderr"]),
        ("  (1-2eps)^T", rep["bound_one_minus_2eps_T"]),
        ("  exact stuck probability", rep["exact_stuck_probability"]),
        ("  min regret of stuck runs", rep["dpo_stuck_min_regret"]),
        ("xpo alpha", rep["xpo_alpha"]),
        (f"xpo fraction reaching regret<{rep['xpo_escape_threshold']}", rep["xpo_escape_fraction"]),
        ("  median first iteration", rep["xpo_median_escape_t"]),
        ("  mean first iteration", rep["xpo_mean_escape_t"]),
    ]
    print(f"beta={rep['beta']} c={rep['c']} T={rep['T']} seeds={rep['n_seeds']} eps={rep['eps']:.4g}")
    for name, v in rows:
        print(f"{name:<40}\t{'-' if v is None else format(v, '.6g')}")
    return EXIT_OK


def cmd_sweep(ns) -> int:
    base = config_from_args(ns)
    res = run_sweep(base, ns.betas, ns.alphas, ns.cs, ns.Ts)
    for r in res["runs"]:
        _emit({"kind": "run", **r})
    for f in res["fits"]:
        _emit({"kind": "fit", **f})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="xpolab", description="KL-regularised preference RL laboratory")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one configuration over its seeds")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", help="identity checks and complexity coefficients")
    p.add_argument("--instance", default="random_tabular")
    p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--policy-class", choices=("finite", "loglinear"), default="finite")
    p.add_argument("--radius", type=float)
    p.add_argument("--n-random", type=int, default=20)
    p.add_argument("--sec-T", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta-sweep", type=_floats, metavar="B1,B2,...",
                   help="also report coverability/concentrability of the two-arm class per beta")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("counterexample", help="Online DPO vs XPO on the two-arm failure instance")
    p.add_argument("--beta", type=float, default=0.02)
    p.add_argument("--c", type=float, default=0.125)
    p.add_argument("--T", "-T", dest="T", type=int, default=100)
    p.add_argument("--seeds", type=parse_seeds, default=list(range(200)))
    p.add_argument("--json", action="store_true", help="print one JSON record instead of a table")
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("sweep", help="cartesian product over beta / alpha / c / T")
    _add_config_flags(p)
    p.add_argument("--betas", type=_floats)
    p.add_argument("--alphas", type=_floats)
    p.add_argument("--cs", type=_floats)
    p.add_argument("--Ts", type=_ints)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except ValidationError as exc:
        print(json.dumps({"error": "validation", "path": exc.path, "message": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
