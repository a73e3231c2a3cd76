"""Deterministic contextual MDPs: construction, trajectories, and occupancies.

States and actions carry dense integer ids. A :class:`DCMDP` is layered: the
state ids of layer ``h`` only transition into layer ``h + 1`` and the initial
distribution lives on layer 0. Trajectories are enumerated in a canonical
order (initial-state position, then action indices, lexicographically), so
the position of a trajectory in :meth:`DCMDP.enumerate` is its id.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import EnumerationCapError, InadmissibleTrajectoryError, ValidationError

PROB_TOL = 1e-12
AGG_TOL = 1e-10
DEFAULT_ENUMERATION_CAP = 10**7


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """An admissible sequence of ``(state, action)`` steps."""

    states: tuple[int, ...]
    actions: tuple[int, ...]
    total_reward: float

    @property
    def initial_state(self) -> int:
        return self.states[0]

    @property
    def steps(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.states, self.actions))

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Column-oriented batch of trajectories (one row per trajectory)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    @property
    def initial_states(self) -> np.ndarray:
        return self.states[:, 0]

    def __len__(self) -> int:
        return self.states.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(
            tuple(int(s) for s in self.states[i]),
            tuple(int(a) for a in self.actions[i]),
            float(self.rewards[i]),
        )

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """A per-state distribution over actions, stored with its log-table.

    Build from probabilities with ``TabularPolicy(table)`` or, when the
    policy is naturally expressed in log-space, with :meth:`from_log_table`;
    the latter keeps log-probabilities exact for tiny masses.
    """

    table: np.ndarray
    log_table: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim != 2:
            raise ValidationError("policy table must be 2-D (states x actions)", "table")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise ValidationError("policy probabilities must be finite and non-negative", "table")
        sums = table.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            s = int(bad[0])
            raise ValidationError(f"row sums to {sums[s]!r}, not 1", f"table[{s}]")
        if self.log_table is None:
            with np.errstate(divide="ignore"):
                log_table = np.log(table)
        else:
            log_table = np.asarray(self.log_table, dtype=float)
            if log_table.shape != table.shape:
                raise ValidationError("log_table shape mismatch", "log_table")
        object.__setattr__(self, "table", _frozen(table))
        object.__setattr__(self, "log_table", _frozen(log_table))

    @classmethod
    def from_log_table(cls, log_table: np.ndarray) -> "TabularPolicy":
        log_table = np.asarray(log_table, dtype=float)
        return cls(np.exp(log_table), log_table)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, choice: Sequence[int], n_actions: int) -> "TabularPolicy":
        table = np.zeros((len(choice), n_actions))
        table[np.arange(len(choice)), np.asarray(choice)] = 1.0
        return cls(table)

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape


@dataclass(frozen=True, eq=False)
class DCMDP:
    """Layered MDP with a stochastic initial state and deterministic transitions.

    Parameters
    ----------
    horizon : int
        Number of decision steps ``H``.
    layers : sequence of int arrays
        State ids of each layer; layers are disjoint and cover ``0..S-1``.
    n_actions : int
        Size of the (shared) action set.
    rho : array, shape (S,)
        Initial distribution; zero outside layer 0.
    next_state : int array, shape (S, A)
        Successor ids; ``-1`` on the last layer.
    reward : array, shape (S, A)
    rmax : float
        Upper bound on any trajectory's total reward.
    """

    horizon: int
    layers: tuple
    n_actions: int
    rho: np.ndarray
    next_state: np.ndarray
    reward: np.ndarray
    rmax: float
    features: np.ndarray | None = None
    state_labels: tuple | None = None
    action_labels: tuple | None = None
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        H = int(self.horizon)
        if H < 1:
            raise ValidationError("horizon must be a positive integer", "horizon")
        layers = tuple(_frozen(np.asarray(l, dtype=np.int64).reshape(-1)) for l in self.layers)
        if len(layers) != H:
            raise ValidationError(f"expected {H} layers, got {len(layers)}", "layers")
        A = int(self.n_actions)
        if A < 1:
            raise ValidationError("need at least one action", "actions")
        all_ids = np.concatenate(layers) if layers else np.zeros(0, dtype=np.int64)
        S = int(all_ids.size)
        layer_of = np.full(S, -1, dtype=np.int64)
        for h, l in enumerate(layers):
            if l.size == 0:
                raise ValidationError("layer is empty", f"layers[{h}]")
            for s in l:
                if s < 0 or s >= S:
                    raise ValidationError(f"state id {s} out of range 0..{S - 1}", f"layers[{h}]")
                if layer_of[s] != -1:
                    raise ValidationError(
                        f"state {s} already in layer {layer_of[s]}; layers must be disjoint",
                        f"layers[{h}]",
                    )
                layer_of[s] = h

        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != (S,):
            raise ValidationError(f"expected shape ({S},), got {rho.shape}", "rho")
        if not np.all(np.isfinite(rho)) or np.any(rho < 0):
            raise ValidationError("probabilities must be finite and non-negative", "rho")
        off = np.flatnonzero((rho > 0) & (layer_of != 0))
        if off.size:
            raise ValidationError(f"state {off[0]} has mass but is not in the first layer", "rho")
        if abs(rho.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"sums to {rho.sum()!r}, not 1", "rho")

        nxt = np.asarray(self.next_state, dtype=np.int64)
        if nxt.shape != (S, A):
            raise ValidationError(f"expected shape ({S}, {A}), got {nxt.shape}", "next")
        last = layer_of == H - 1
        stray = np.argwhere(last[:, None] & (nxt != -1))
        if stray.size:
            s, a = stray[0]
            raise ValidationError("last-layer states have no successor", f"next[{s}][{a}]")
        safe = np.where((nxt >= 0) & (nxt < S), nxt, 0)
        wrong = (~last)[:, None] & ((nxt < 0) | (nxt >= S) | (layer_of[safe] != layer_of[:, None] + 1))
        bad = np.argwhere(wrong)
        if bad.size:
            s, a = bad[0]
            raise ValidationError(
                f"successor {nxt[s, a]} is not in layer {layer_of[s] + 1}", f"next[{s}][{a}]"
            )

        reward = np.asarray(self.reward, dtype=float)
        if reward.shape != (S, A):
            raise ValidationError(f"expected shape ({S}, {A}), got {reward.shape}", "reward")
        if not np.all(np.isfinite(reward)):
            raise ValidationError("rewards must be finite", "reward")
        rmax = float(self.rmax)
        if not np.isfinite(rmax) or rmax < 0:
            raise ValidationError("rmax must be finite and >= 0", "rmax")

        if self.features is not None:
            feats = np.asarray(self.features, dtype=float)
            if feats.ndim != 3 or feats.shape[:2] != (S, A):
                raise ValidationError("features must have shape (S, A, d)", "features")
            object.__setattr__(self, "features", _frozen(feats))

        object.__setattr__(self, "horizon", H)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "n_actions", A)
        object.__setattr__(self, "rho", _frozen(rho))
        object.__setattr__(self, "next_state", _frozen(nxt))
        object.__setattr__(self, "reward", _frozen(reward))
        object.__setattr__(self, "rmax", rmax)
        object.__setattr__(self, "layer_of", _frozen(layer_of))

        lo, lo_path = self._extreme_total(np.min)
        hi, hi_path = self._extreme_total(np.max)
        if lo < -PROB_TOL:
            raise ValidationError(
                f"trajectory {lo_path} has total reward {lo!r} < 0", "reward"
            )
        if hi > rmax + PROB_TOL:
            raise ValidationError(
                f"trajectory {hi_path} has total reward {hi!r} > rmax={rmax!r}", "reward"
            )

    # -- structure ---------------------------------------------------------

    @property
    def n_states(self) -> int:
        return int(self.layer_of.size)

    @property
    def initial_states(self) -> np.ndarray:
        return self.layers[0]

    @property
    def n_trajectories(self) -> int:
        return int(self.layers[0].size) * self.n_actions**self.horizon

    def _extreme_total(self, pick) -> tuple[float, list]:
        return _extreme_total(self.horizon, self.layers, self.next_state, self.reward, pick)

    # -- trajectories --------------------------------------------------------

    def trajectory(self, s1: int, actions: Sequence[int]) -> Trajectory:
        """Follow the dynamics from ``s1`` under a fixed action sequence."""
        if len(actions) != self.horizon:
            raise ValidationError(f"need {self.horizon} actions, got {len(actions)}", "actions")
        if self.layer_of[s1] != 0:
            raise ValidationError(f"state {s1} is not an initial state", "s1")
        states = []
        total = 0.0
        s = int(s1)
        for h, a in enumerate(actions):
            a = int(a)
            if not 0 <= a < self.n_actions:
                raise InadmissibleTrajectoryError(f"action {a} out of range", h)
            states.append(s)
            total += self.reward[s, a]
            if h < self.horizon - 1:
                s = int(self.next_state[s, a])
        return Trajectory(tuple(states), tuple(int(a) for a in actions), float(total))

    def check_admissible(self, states: Sequence[int], actions: Sequence[int]) -> None:
        if len(states) != self.horizon or len(actions) != self.horizon:
            raise InadmissibleTrajectoryError(
                f"length {len(states)} does not match horizon {self.horizon}",
                min(len(states), self.horizon) - 1 if len(states) else 0,
            )
        if self.layer_of[states[0]] != 0:
            raise InadmissibleTrajectoryError(f"state {states[0]} is not initial", 0)
        for h in range(self.horizon):
            if not 0 <= actions[h] < self.n_actions:
                raise InadmissibleTrajectoryError(f"action {actions[h]} out of range", h)
            if h + 1 < self.horizon and self.next_state[states[h], actions[h]] != states[h + 1]:
                raise InadmissibleTrajectoryError(
                    f"next({states[h]}, {actions[h]}) = "
                    f"{self.next_state[states[h], actions[h]]}, not {states[h + 1]}",
                    h + 1,
                )

    def trajectory_id(self, tau: Trajectory) -> int:
        """Position of ``tau`` in the canonical enumeration (no enumeration needed)."""
        hits = np.flatnonzero(self.layers[0] == tau.states[0])
        if hits.size == 0:
            raise InadmissibleTrajectoryError(f"state {tau.states[0]} is not initial", 0)
        idx = int(hits[0])
        for a in tau.actions:
            idx = idx * self.n_actions + int(a)
        return idx

    def enumerate(self, cap: int | None = None) -> TrajectorySet:
        """All admissible trajectories in canonical order."""
        cap = self.enumeration_cap if cap is None else cap
        n = self.n_trajectories
        if n > cap:
            raise EnumerationCapError(
                f"{n} trajectories exceed the enumeration cap {cap}; "
                "use Monte Carlo mode (mode='monte_carlo') instead"
            )
        cached = self.__dict__.get("_enum_cache")
        if cached is not None:
            return cached
        H, A = self.horizon, self.n_actions
        first = self.layers[0]
        per = A**H
        # action index i -> base-A digits, most significant first
        codes = np.arange(per, dtype=np.int64)
        acts = np.empty((per, H), dtype=np.int64)
        for h in range(H - 1, -1, -1):
            acts[:, h] = codes % A
            codes //= A
        actions = np.tile(acts, (first.size, 1))
        states = np.empty_like(actions)
        states[:, 0] = np.repeat(first, per)
        for h in range(1, H):
            states[:, h] = self.next_state[states[:, h - 1], actions[:, h - 1]]
        rewards = self.reward[states, actions].sum(axis=1)
        out = TrajectorySet(_frozen(states), _frozen(actions), _frozen(rewards))
        object.__setattr__(self, "_enum_cache", out)
        return out


def _extreme_total(horizon, layers, next_state, reward, pick) -> tuple[float, list]:
    """Smallest/largest total reward (``pick`` = ``np.min``/``np.max``) and a witness path."""
    S = next_state.shape[0]
    togo = np.zeros(S)
    choice = np.zeros(S, dtype=np.int64)
    for h in range(horizon - 1, -1, -1):
        ids = np.asarray(layers[h])
        q = reward[ids].copy()
        if h < horizon - 1:
            q += togo[next_state[ids]]
        best = pick(q, axis=1)
        togo[ids] = best
        choice[ids] = np.argmax(q == best[:, None], axis=1)
    first = np.asarray(layers[0])
    k = int(np.argmax(togo[first] == pick(togo[first])))
    s = int(first[k])
    path = []
    for h in range(horizon):
        a = int(choice[s])
        path.append((s, a))
        if h < horizon - 1:
            s = int(next_state[s, a])
    return float(pick(togo[first])), path


# -- operations ---------------------------------------------------------------


def trajectory_reward(mdp: DCMDP, tau: Trajectory) -> float:
    """Total reward of an admissible trajectory."""
    mdp.check_admissible(tau.states, tau.actions)
    return float(sum(mdp.reward[s, a] for s, a in zip(tau.states, tau.actions)))


def _policy_table(pi) -> np.ndarray:
    return pi.table if hasattr(pi, "table") else np.asarray(pi, dtype=float)


def sample_initial_state(mdp: DCMDP, rng: np.random.Generator) -> int:
    cdf = np.cumsum(mdp.rho)
    return int(min(np.searchsorted(cdf, rng.random(), side="right"), mdp.n_states - 1))


def rollout(mdp: DCMDP, pi, rng: np.random.Generator, s1: int | None = None) -> Trajectory:
    """Sample one episode: ``s1 ~ rho`` (unless given), ``a_h ~ pi(.|s_h)``."""
    table = _policy_table(pi)
    if s1 is None:
        s1 = sample_initial_state(mdp, rng)
    s = int(s1)
    states, actions = [], []
    total = 0.0
    for h in range(mdp.horizon):
        row = table[s]
        mass = row.sum()
        if not mass > 0:
            raise ValidationError(f"policy has no mass at state {s}", f"policy[{s}]")
        u = rng.random() * mass
        a = int(np.searchsorted(np.cumsum(row), u, side="right"))
        a = min(a, mdp.n_actions - 1)
        while row[a] == 0.0:  # u landed on the upper edge of a zero tail
            a -= 1
        states.append(s)
        actions.append(a)
        total += mdp.reward[s, a]
        if h < mdp.horizon - 1:
            s = int(mdp.next_state[s, a])
    return Trajectory(tuple(states), tuple(actions), float(total))


def enumerate_trajectories(mdp: DCMDP, cap: int | None = None) -> TrajectorySet:
    return mdp.enumerate(cap)


def occupancy(mdp: DCMDP, pi) -> np.ndarray:
    """``d^pi`` over the canonical enumeration (aligned with ``mdp.enumerate()``)."""
    trajs = mdp.enumerate()
    log_table = pi.log_table if hasattr(pi, "log_table") else None
    if log_table is None:
        with np.errstate(divide="ignore"):
            log_table = np.log(_policy_table(pi))
    lp = kernels.path_logprob(np.ascontiguousarray(log_table), trajs.states, trajs.actions)
    d = mdp.rho[trajs.initial_states] * np.exp(lp)
    return d


# -- instance builders ---------------------------------------------------------


def make_token_mdp(
    prompts: Sequence[Hashable],
    vocab: Sequence[Hashable],
    horizon: int,
    reward: Callable[[Hashable, tuple, int], float] | Mapping[tuple, float],
    rho: Sequence[float] | None = None,
    rmax: float | None = None,
) -> DCMDP:
    """Token-level MDP: states are ``(prompt, prefix)`` and actions append a token.

    ``reward`` is either a callable ``(prompt, prefix, token_index) -> float``
    or a terminal-only mapping ``{(prompt, full_token_index_tuple): value}``
    (missing sequences score 0). ``rmax`` defaults to the largest trajectory
    total.
    """
    V = len(vocab)
    P = len(prompts)
    if P == 0 or V == 0:
        raise ValidationError("need at least one prompt and one token")
    if rho is None:
        rho = [1.0 / P] * P
    if len(rho) != P:
        raise ValidationError("rho must have one entry per prompt", "rho")
    if isinstance(reward, Mapping):
        table = dict(reward)

        def reward_fn(prompt, prefix, tok):
            if len(prefix) + 1 < horizon:
                return 0.0
            return float(table.get((prompt, prefix + (tok,)), 0.0))
    else:
        reward_fn = reward

    ids: dict[tuple, int] = {}
    labels: list[tuple] = []
    layers: list[list[int]] = []
    for h in range(horizon):
        layer = []
        for p in range(P):
            for prefix in itertools.product(range(V), repeat=h):
                key = (p, prefix)
                ids[key] = len(labels)
                labels.append((prompts[p], tuple(vocab[t] for t in prefix)))
                layer.append(ids[key])
        layers.append(layer)
    S = len(labels)
    nxt = np.full((S, V), -1, dtype=np.int64)
    rew = np.zeros((S, V))
    rho_full = np.zeros(S)
    for (p, prefix), s in ids.items():
        if not prefix:
            rho_full[s] = rho[p]
        for tok in range(V):
            rew[s, tok] = float(reward_fn(prompts[p], prefix, tok))
            if len(prefix) + 1 < horizon:
                nxt[s, tok] = ids[(p, prefix + (tok,))]
    if rmax is None:
        rmax = max(0.0, _extreme_total(horizon, layers, nxt, rew, np.max)[0])
    return DCMDP(
        horizon, layers, V, rho_full, nxt, rew, float(rmax),
        state_labels=tuple(labels), action_labels=tuple(vocab),
    )


def make_linear_dcmdp(
    features: np.ndarray,
    vartheta: np.ndarray,
    layers: Sequence[Sequence[int]],
    next_state: np.ndarray,
    rho: np.ndarray,
    rmax: float,
) -> DCMDP:
    """DCMDP whose reward is ``<phi(s, a), vartheta>`` with stored features."""
    feats = np.asarray(features, dtype=float)
    theta = np.asarray(vartheta, dtype=float)
    norms = np.linalg.norm(feats, axis=2)
    if np.any(norms > 1.0 + PROB_TOL):
        s, a = np.unravel_index(int(np.argmax(norms)), norms.shape)
        raise ValidationError(f"feature norm {norms[s, a]!r} exceeds 1", f"features[{s}][{a}]")
    if np.linalg.norm(theta) > 1.0 + PROB_TOL:
        raise ValidationError(f"norm {np.linalg.norm(theta)!r} exceeds 1", "vartheta")
    reward = feats @ theta
    return DCMDP(
        len(layers), tuple(layers), feats.shape[1], rho, next_state, reward, rmax, features=feats
    )


# -- instance files -------------------------------------------------------------


def instance_to_dict(mdp: DCMDP) -> dict:
    S, A = mdp.n_states, mdp.n_actions
    doc = {
        "horizon": mdp.horizon,
        "layers": [[int(s) for s in l] for l in mdp.layers],
        "actions": list(mdp.action_labels) if mdp.action_labels else A,
        "rho": {str(s): float(mdp.rho[s]) for s in range(S) if mdp.rho[s] > 0},
        "next": [
            [s, a, int(mdp.next_state[s, a])]
            for s in range(S) for a in range(A) if mdp.next_state[s, a] >= 0
        ],
        "reward": [
            [s, a, float(mdp.reward[s, a])]
            for s in range(S) for a in range(A) if mdp.reward[s, a] != 0.0
        ],
        "rmax": mdp.rmax,
    }
    if mdp.features is not None:
        doc["features"] = mdp.features.tolist()
    return doc


def instance_from_dict(doc: Mapping) -> DCMDP:
    """Parse an instance document, reporting the first problem with its path."""
    if not isinstance(doc, Mapping):
        raise ValidationError("instance document must be an object", "$")
    for key in ("horizon", "layers", "actions", "rho", "next", "reward", "rmax"):
        if key not in doc:
            raise ValidationError("missing required field", key)
    horizon = doc["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ValidationError("must be an integer", "horizon")
    layers = doc["layers"]
    if not isinstance(layers, list) or not all(isinstance(l, list) for l in layers):
        raise ValidationError("must be a list of lists of state ids", "layers")
    for h, l in enumerate(layers):
        for i, s in enumerate(l):
            if not isinstance(s, int) or isinstance(s, bool):
                raise ValidationError("state id must be an integer", f"layers[{h}][{i}]")
    S = sum(len(l) for l in layers)
    actions = doc["actions"]
    if isinstance(actions, int) and not isinstance(actions, bool):
        A, action_labels = actions, None
    elif isinstance(actions, list):
        A, action_labels = len(actions), tuple(actions)
    else:
        raise ValidationError("must be a count or a list of labels", "actions")

    def sid(x, path):
        if not isinstance(x, int) or isinstance(x, bool) or not 0 <= x < S:
            raise ValidationError(f"{x!r} is not a state id in 0..{S - 1}", path)
        return x

    def aid(x, path):
        if not isinstance(x, int) or isinstance(x, bool) or not 0 <= x < A:
            raise ValidationError(f"{x!r} is not an action id in 0..{A - 1}", path)
        return x

    def num(x, path):
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            raise ValidationError(f"{x!r} is not a number", path)
        return float(x)

    rho = np.zeros(S)
    if not isinstance(doc["rho"], Mapping):
        raise ValidationError("must map state id -> probability", "rho")
    for k, v in doc["rho"].items():
        try:
            s = int(k)
        except (TypeError, ValueError):
            raise ValidationError(f"key {k!r} is not a state id", "rho") from None
        rho[sid(s, f"rho[{k}]")] = num(v, f"rho[{k}]")
    nxt = np.full((S, A), -1, dtype=np.int64)
    for i, row in enumerate(doc["next"]):
        if not isinstance(row, list) or len(row) != 3:
            raise ValidationError("expected [state, action, next_state]", f"next[{i}]")
        s, a = sid(row[0], f"next[{i}][0]"), aid(row[1], f"next[{i}][1]")
        nxt[s, a] = sid(row[2], f"next[{i}][2]")
    rew = np.zeros((S, A))
    for i, row in enumerate(doc["reward"]):
        if not isinstance(row, list) or len(row) != 3:
            raise ValidationError("expected [state, action, reward]", f"reward[{i}]")
        s, a = sid(row[0], f"reward[{i}][0]"), aid(row[1], f"reward[{i}][1]")
        rew[s, a] = num(row[2], f"reward[{i}][2]")
    feats = doc.get("features")
    if feats is not None:
        feats = np.asarray(feats, dtype=float)
    return DCMDP(
        horizon, layers, A, rho, nxt, rew, num(doc["rmax"], "rmax"),
        features=feats, action_labels=action_labels,
    )


def load_instance(path: str | Path) -> DCMDP:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON ({exc.msg} at line {exc.lineno})", str(path)) from None
    return instance_from_dict(doc)


def dump_instance(mdp: DCMDP, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(mdp), indent=1, sort_keys=True) + "\n")


def instance_hash(mdp: DCMDP) -> str:
    doc = instance_to_dict(mdp)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
