"""Bradley-Terry labelling and preference datasets."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .dcmdp import DCMDP, Trajectory
from .errors import EnumerationCapError, ValidationError


def bt_prob(r_tau: float, r_tautilde: float) -> float:
    """``P(tau > tautilde) = sigmoid(r_tau - r_tautilde)``.

    The negative branch is computed as the complement of the positive one, so
    ``bt_prob(a, b) + bt_prob(b, a) == 1.0`` holds exactly in floating point.
    """
    d = float(r_tau) - float(r_tautilde)
    if d < 0:
        return 1.0 - bt_prob(r_tautilde, r_tau)
    return 1.0 / (1.0 + math.exp(-d))


@dataclass(frozen=True)
class PreferencePair:
    """A labelled comparison. ``raw_draw`` is 1 iff the first-sampled trajectory won."""

    tau_plus: Trajectory
    tau_minus: Trajectory
    initial_state: int
    raw_draw: int
    p_win: float = 0.5
    iteration: int = 0

    def __post_init__(self):
        if not (self.tau_plus.initial_state == self.tau_minus.initial_state == self.initial_state):
            raise ValidationError("both trajectories must start from the pair's initial state")


def label_pair(
    mdp: DCMDP,
    tau: Trajectory,
    tau_tilde: Trajectory,
    rng: np.random.Generator,
    iteration: int = 0,
) -> PreferencePair:
    """Draw ``y ~ Bernoulli(sigmoid(r(tau) - r(tau_tilde)))`` and order the pair.

    Identical trajectories are kept as a (degenerate) pair.
    """
    if tau.initial_state != tau_tilde.initial_state:
        raise ValidationError(
            f"initial states differ ({tau.initial_state} vs {tau_tilde.initial_state})",
            "tau_tilde",
        )
    p = bt_prob(tau.total_reward, tau_tilde.total_reward)
    y = int(rng.random() < p)
    plus, minus = (tau, tau_tilde) if y else (tau_tilde, tau)
    return PreferencePair(plus, minus, tau.initial_state, y, p, iteration)


@dataclass
class PreferenceDataset:
    """Append-only, ordered collection of :class:`PreferencePair`."""

    pairs: list[PreferencePair] = field(default_factory=list)

    def append(self, pair: PreferencePair) -> None:
        self.pairs.append(pair)

    def extend(self, pairs) -> None:
        for p in pairs:
            self.append(p)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[PreferencePair]:
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def log_records(self, mdp: DCMDP | None = None) -> list[dict]:
        """One record per pair; trajectories by canonical id when enumeration is possible."""
        by_id = mdp is not None
        if by_id:
            try:
                mdp.enumerate()
            except EnumerationCapError:
                by_id = False
        out = []
        for p in self.pairs:
            if by_id:
                tp, tm = mdp.trajectory_id(p.tau_plus), mdp.trajectory_id(p.tau_minus)
            else:
                tp, tm = list(p.tau_plus.actions), list(p.tau_minus.actions)
            out.append({
                "iteration": p.iteration,
                "s1_id": p.initial_state,
                "tau_plus_id": tp,
                "tau_minus_id": tm,
                "raw_draw": p.raw_draw,
                "p_win": p.p_win,
            })
        return out

    def to_jsonl(self, mdp: DCMDP | None = None) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log_records(mdp))
