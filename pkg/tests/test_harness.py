"""Config hashing, the runner's on-disk layout, the reader and the CLI."""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from xpolab.dcmdp import dump_instance, instance_to_dict
from xpolab.errors import ValidationError
from xpolab.harness import cli, reader
from xpolab.harness.config import OUTPUT_ENV, ExperimentConfig, parse_seeds
from xpolab.harness.instances import random_tabular
from xpolab.harness.runner import execute


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _run_cli(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- config ------------------------------------------------------------------------


def test_hash_ignores_key_order_and_run_location():
    doc = {"algorithm": "online_dpo", "beta": 0.05, "T": 20, "instance_params": {"c": 0.1, "beta": 0.05}}
    a = ExperimentConfig.from_dict(doc)
    b = ExperimentConfig.from_dict(dict(reversed(list(doc.items()))))
    assert a.config_hash() == b.config_hash()
    c = ExperimentConfig.from_dict({**doc, "seeds": [4, 5], "output_root": "/elsewhere", "workers": 3})
    assert c.config_hash() == a.config_hash()
    assert ExperimentConfig.from_dict({**doc, "T": 21}).config_hash() != a.config_hash()


def test_unknown_field_is_rejected_with_its_name():
    with pytest.raises(ValidationError) as exc:
        ExperimentConfig.from_dict({"beta": 0.1, "bogus": 1})
    assert exc.value.path == "bogus"


@pytest.mark.parametrize("field,value", [("beta", 0.0), ("delta", 1.0), ("T", -1), ("batch_size", 0),
                                         ("clip", (1.0, -1.0)), ("algorithm", "ppo"), ("seeds", [])])
def test_invalid_values_name_the_field(field, value):
    with pytest.raises(ValidationError) as exc:
        ExperimentConfig.from_dict({field: value})
    assert exc.value.path == field


def test_parse_seeds():
    assert parse_seeds("0..3,10") == [0, 1, 2, 3, 10]
    assert parse_seeds("7") == [7]
    for bad in ("a..b", "3..1", ""):
        with pytest.raises(ValidationError):
            parse_seeds(bad)


def test_output_root_env(tmp_path, monkeypatch):
    cfg = ExperimentConfig()
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert cfg.output_dir() == tmp_path / "env" / cfg.config_hash()
    cfg.output_root = str(tmp_path / "flag")
    assert cfg.output_dir().parent == tmp_path / "flag"


# -- run ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def dpo_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("out")
    code = cli.main(["run", "--instance", "prop31", "--algo", "online_dpo", "--beta", "0.02", "--T", "100",
                     "--seeds", "0..19", "--output-root", str(root)])
    assert code == 0
    (out,) = [p for p in root.iterdir() if p.is_dir()]
    return out


def test_run_writes_the_documented_files(dpo_run):
    for name in ("config.json", "alpha.json", "summary.csv", "summary.json", "plot_regret.csv",
                 "plot_loglog.csv", "finals.csv"):
        assert (dpo_run / name).is_file(), name
    seeds = sorted(p.name for p in dpo_run.glob("seed_*"))
    assert seeds == [f"seed_{s:05d}" for s in range(20)]
    for d in dpo_run.glob("seed_*"):
        assert {p.name for p in d.iterdir()} == {"run.jsonl", "preferences.jsonl", "snapshots.csv"}
    summary = json.loads((dpo_run / "summary.json").read_text())
    assert summary["n_seeds"] == 20 and summary["T"] == 100
    assert 0.0 <= summary["stuck_fraction"] <= 1.0
    lines = (dpo_run / "seed_00000" / "run.jsonl").read_text().splitlines()
    assert len(lines) == 102  # header + T + 1 iterates
    assert json.loads(lines[0])["header"]["algorithm"] == "online_dpo"


def test_reader_agrees_with_writer(dpo_run, capsys):
    assert reader.recompute(dpo_run) == reader.read_summary(dpo_run)
    assert reader.main([str(dpo_run)]) == 0
    assert "matches" in capsys.readouterr().out


def test_reader_flags_tampering(dpo_run, tmp_path):
    import shutil

    copy = tmp_path / "copy"
    shutil.copytree(dpo_run, copy)
    text = (copy / "summary.csv").read_text().splitlines()
    cells = text[1].split(",")
    cells[1] = repr(float(cells[1]) + 1e-3)
    text[1] = ",".join(cells)
    (copy / "summary.csv").write_text("\n".join(text) + "\n")
    assert reader.main([str(copy)]) == 2


def test_rerun_is_byte_identical_with_and_without_workers(tmp_path):
    base = dict(instance="random_tabular", instance_params={"seed": 3}, algorithm="xpo", beta=0.3,
                alpha=0.05, T=8, seeds=[0, 1, 2])
    trees = []
    for i, workers in enumerate((1, 1, 2)):
        out, _ = execute(ExperimentConfig(**base, workers=workers, output_root=str(tmp_path / str(i))))
        trees.append(_tree(out))
    assert trees[0] == trees[1] == trees[2]


def test_theorem_alpha_is_recorded(tmp_path, capsys):
    code, out, _ = _run_cli(["run", "--instance", "prop31", "--algo", "xpo", "--alpha-from-theorem",
                             "--T", "5", "--seeds", "0", "--output-root", str(tmp_path)], capsys)
    assert code == 0
    info = json.loads((Path(json.loads(out)["output"]) / "alpha.json").read_text())
    assert info["source"] == "theorem" and info["alpha"] > 0


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": "prop31", "algorithm": "online_dpo", "T": 50, "seeds": [0]}))
    code, out, _ = _run_cli(["run", "--config", str(cfg), "--T", "4", "--output-root", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads(out)["T"] == 4


# -- diagnose ----------------------------------------------------------------------


def test_diagnose_random_tabular_passes(capsys):
    code, out, _ = _run_cli(["diagnose", "--instance", "random_tabular", "--param", "seed=2"], capsys)
    assert code == 0
    checks = {json.loads(l)["check"] for l in out.splitlines()}
    assert {"implicit_q_residual", "regret_decomposition", "coverability_bounds", "sigmoid_gap_bound"} <= checks


def test_diagnose_beta_sweep(capsys):
    code, out, _ = _run_cli(["diagnose", "--instance", "prop31", "--beta", "0.05",
                             "--beta-sweep", "0.08,0.05,0.03,0.02"], capsys)
    assert code == 0
    recs = [json.loads(l) for l in out.splitlines()]
    coef = [r for r in recs if r["check"] == "coefficients"]
    assert [r["beta"] for r in coef] == [0.08, 0.05, 0.03, 0.02]
    assert all(r["C_cov"] <= 2 + 1e-12 for r in coef)
    conc = [r["C_conc"] for r in coef]
    assert all(b > a for a, b in zip(conc, conc[1:]))


def test_corrupted_instance_file_exits_1_with_path(tmp_path, capsys):
    doc = instance_to_dict(random_tabular(seed=0).mdp)
    doc["next"][1][0] = 99
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = _run_cli(["diagnose", "--instance", str(bad)], capsys)
    assert code == 1
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["error"] == "validation" and msg["path"].startswith("next[1]")


def test_instance_file_roundtrip_through_cli(tmp_path, capsys):
    path = tmp_path / "ok.json"
    dump_instance(random_tabular(seed=1).mdp, path)
    code, _, _ = _run_cli(["diagnose", "--instance", str(path), "--n-random", "3"], capsys)
    assert code == 0


def test_identity_failure_exits_2(monkeypatch, capsys):
    def broken(*a, **k):
        return [{"check": "implicit_q_residual", "pass": False, "identity": True, "value": 1.0}]

    monkeypatch.setattr(cli, "run_battery", broken)
    code, _, err = _run_cli(["diagnose"], capsys)
    assert code == 2 and "implicit_q_residual" in err


def test_runtime_failure_exits_3(monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "run_battery", boom)
    code, _, err = _run_cli(["diagnose"], capsys)
    assert code == 3 and json.loads(err)["type"] == "RuntimeError"


# -- counterexample / sweep --------------------------------------------------------


def test_counterexample_rejects_out_of_range_beta(capsys):
    code, _, err = _run_cli(["counterexample", "--beta", "0.2", "--seeds", "0"], capsys)
    assert code == 1
    assert json.loads(err)["error"] == "validation"


def test_counterexample_json_and_horizon_warning(capsys):
    code, out, err = _run_cli(["counterexample", "--T", "300", "--seeds", "0..3", "--json"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["n_seeds"] == 4 and rep["T"] == 300
    assert "warning" in err


def test_sweep_emits_runs_and_fit(tmp_path, capsys):
    code, out, _ = _run_cli(["sweep", "--instance", "prop31", "--algo", "xpo", "--alpha-from-theorem",
                             "--cs", "0.5,1", "--Ts", "4,8", "--seeds", "0,1",
                             "--output-root", str(tmp_path)], capsys)
    assert code == 0
    recs = [json.loads(l) for l in out.splitlines()]
    assert sum(r["kind"] == "run" for r in recs) == 4
    assert sum(r["kind"] == "fit" for r in recs) == 2


def test_bad_flag_is_a_validation_error():
    res = subprocess.run([sys.executable, "-m", "xpolab", "run", "--seeds", "a..b"], capture_output=True, text=True)
    assert res.returncode == 1
    assert json.loads(res.stderr.strip().splitlines()[-1])["path"] == "argv"


def test_bandit_builder():
    from xpolab.harness.instances import bandit

    inst = bandit(contexts=3, arms=4, gap_lo=0.1, gap_hi=0.9, seed=1)
    assert inst.features.shape == (3, 4, 12)
    r = inst.mdp.reward
    assert np.all(r[:, 0] == 1.0)
    assert np.all(np.diff(r, axis=1) <= 0)  # arms sorted by gap within a context
    assert np.allclose(np.sort(1 - r[:, 1:].ravel()), np.geomspace(0.1, 0.9, 9))
    np.testing.assert_allclose(inst.pi_ref.table.sum(axis=1), 1.0)
    assert np.all(np.diff(inst.pi_ref.table, axis=1) >= 0)  # reference leans toward bad arms
    one = bandit(contexts=1, arms=3, gap_lo=0.01, gap_hi=0.04)
    np.testing.assert_allclose(one.mdp.reward[0], [1.0, 0.99, 0.96])
    for bad in ({"arms": 1}, {"contexts": 0}, {"gap_lo": 0.5, "gap_hi": 0.1}):
        with pytest.raises(ValidationError):
            bandit(**bad)
