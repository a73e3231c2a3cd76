"""Experiment configuration and its stable hash."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ValidationError
from ..objective import TIE_BREAKS
from ..trainer import STRATEGIES

ALGORITHMS = ("xpo", "online_dpo", "iterative_dpo", "offline_dpo")
COEFS = ("cov", "sec", "manual")
OUTPUT_ENV = "XPOLAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "xpolab-out"

# fields that say where/how to run, not what to run
_NOT_HASHED = ("seeds", "output_root", "workers")


@dataclass
class ExperimentConfig:
    instance: str = "prop31"
    instance_params: dict = field(default_factory=dict)
    algorithm: str = "xpo"
    beta: float = 0.02
    alpha: float | None = None
    alpha_from_theorem: bool = False
    c: float = 1.0
    delta: float = 0.05
    coef: str = "cov"
    coef_value: float | None = None
    T: int = 100
    batch_size: int = 1
    strategy: str = "reference"
    second: str = "policy"
    policy_class: str = "finite"
    radius: float | None = None
    clip: tuple = (-500.0, 500.0)
    step: float | None = None
    max_step: float | None = None
    shrink: float = 0.5
    tol: float = 1e-8
    max_iter: int = 2000
    restarts: int = 3
    tie_break: str = "first"
    seeds: list = field(default_factory=lambda: [0])
    workers: int = 1
    output_root: str | None = None

    def __post_init__(self):
        self.clip = tuple(float(x) for x in self.clip)
        self.seeds = [int(s) for s in self.seeds]
        self.validate()

    def validate(self) -> None:
        def bad(name, msg):
            raise ValidationError(msg, name)

        if self.algorithm not in ALGORITHMS:
            bad("algorithm", f"must be one of {ALGORITHMS}")
        if not self.beta > 0:
            bad("beta", "must be positive")
        if self.alpha is not None and not self.alpha >= 0:
            bad("alpha", "must be non-negative")
        if self.coef not in COEFS:
            bad("coef", f"must be one of {COEFS}")
        if self.coef == "manual" and self.alpha_from_theorem and not (self.coef_value or 0) > 0:
            bad("coef_value", "manual coefficient needs a positive coef_value")
        if not 0 < self.delta < 1:
            bad("delta", "must lie in (0, 1)")
        if self.T < 0:
            bad("T", "must be non-negative")
        if self.batch_size < 1:
            bad("batch_size", "must be at least 1")
        if self.strategy not in STRATEGIES or self.strategy == "fixed":
            bad("strategy", "must be 'reference' or 'historical' from the command line")
        if self.second not in ("policy", "reference"):
            bad("second", "must be 'policy' or 'reference'")
        if self.policy_class not in ("finite", "loglinear"):
            bad("policy_class", "must be 'finite' or 'loglinear'")
        if self.tie_break not in TIE_BREAKS:
            bad("tie_break", f"must be one of {TIE_BREAKS}")
        if not self.seeds:
            bad("seeds", "need at least one seed")
        if len(self.clip) != 2 or self.clip[0] > self.clip[1]:
            bad("clip", "must be an increasing pair")
        if self.workers < 1:
            bad("workers", "must be at least 1")

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clip"] = list(self.clip)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object", "$")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ValidationError(f"unknown field(s) {extra}", extra[0])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ValidationError(str(exc), "$") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"not valid JSON ({exc.msg} at line {exc.lineno})", str(path)) from None
        return cls.from_dict(doc)

    def hashed_part(self) -> dict:
        d = self.to_dict()
        for k in _NOT_HASHED:
            d.pop(k, None)
        return d

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of the run-defining fields (key order irrelevant)."""
        blob = json.dumps(self.hashed_part(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def output_dir(self) -> Path:
        root = self.output_root or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_ROOT
        return Path(root) / self.config_hash()


def parse_seeds(text: str) -> list[int]:
    """``"0..199"`` (inclusive), ``"0,3,5"`` or a mix such as ``"0..3,10"``."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValidationError(f"empty seed range {part!r}", "seeds")
            out.extend(range(lo, hi + 1))
        elif re.fullmatch(r"-?\d+", part):
            out.append(int(part))
        else:
            raise ValidationError(f"cannot parse seed spec {part!r}", "seeds")
    if not out:
        raise ValidationError("no seeds given", "seeds")
    return out
