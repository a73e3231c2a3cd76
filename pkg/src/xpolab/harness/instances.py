"""Builtin instance registry.

Each builder returns an :class:`Instance` bundling the DCMDP, the reference
policy and a default policy class. Builders take only JSON-friendly keyword
parameters so they can be named from a config file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..dcmdp import DCMDP, TabularPolicy, load_instance, make_linear_dcmdp, make_token_mdp
from ..diagnostics import counterexample_instance
from ..errors import ValidationError
from ..policy import FinitePolicyClass, LogLinearClass
from ..softdp import boltzmann_policy, solve_soft_dp


@dataclass
class Instance:
    name: str
    mdp: DCMDP
    pi_ref: TabularPolicy
    params: dict = field(default_factory=dict)
    finite_class: FinitePolicyClass | None = None
    features: np.ndarray | None = None


def _random_layers(rng, sizes, n_actions):
    layers, start = [], 0
    for n in sizes:
        layers.append(list(range(start, start + n)))
        start += n
    nxt = np.full((start, n_actions), -1, dtype=np.int64)
    for h in range(len(sizes) - 1):
        for s in layers[h]:
            nxt[s] = rng.choice(layers[h + 1], size=n_actions)
    return layers, nxt


def _random_ref(rng, n_states, n_actions, floor=0.2):
    # Dirichlet rows mixed with uniform keep full support with a margin
    rows = rng.dirichlet(np.ones(n_actions), size=n_states)
    table = (1 - floor) * rows + floor / n_actions
    return TabularPolicy(table / table.sum(axis=1, keepdims=True))


def random_tabular(states: int = 3, actions: int = 2, horizon: int = 3, seed: int = 0,
                   beta: float = 0.5) -> Instance:
    """Layered instance with up to ``states`` states per layer and rewards in ``[0, 1/H]``."""
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, states + 1)) for _ in range(horizon)]
    layers, nxt = _random_layers(rng, sizes, actions)
    S = sum(sizes)
    reward = rng.uniform(0, 1.0 / horizon, size=(S, actions))
    rho = np.zeros(S)
    rho[layers[0]] = rng.dirichlet(np.ones(sizes[0]))
    mdp = DCMDP(horizon, layers, actions, rho, nxt, reward, 1.0)
    pi_ref = _random_ref(rng, S, actions)
    return Instance("random_tabular", mdp, pi_ref,
                    dict(states=states, actions=actions, horizon=horizon, seed=seed, beta=beta),
                    _boltzmann_class(mdp, pi_ref, beta, rng))


def linear(d: int = 4, horizon: int = 2, seed: int = 0, states: int = 3, actions: int = 3,
           beta: float = 0.5) -> Instance:
    """Linear-reward instance: non-negative unit-ball features and parameter."""
    rng = np.random.default_rng(seed)
    layers, nxt = _random_layers(rng, [states] * horizon, actions)
    S = states * horizon
    feats = rng.uniform(0, 1, size=(S, actions, d))
    feats /= np.maximum(1.0, np.linalg.norm(feats, axis=2, keepdims=True))
    vartheta = rng.uniform(0, 1, size=d)
    vartheta /= max(1.0, float(np.linalg.norm(vartheta)))
    rho = np.zeros(S)
    rho[layers[0]] = 1.0 / states
    mdp = make_linear_dcmdp(feats, vartheta, layers, nxt, rho, float(horizon))
    pi_ref = _random_ref(rng, S, actions)
    return Instance("linear", mdp, pi_ref, dict(d=d, horizon=horizon, seed=seed, states=states,
                                                actions=actions, beta=beta),
                    _boltzmann_class(mdp, pi_ref, beta, rng), features=feats)


def token(vocab: int = 2, horizon: int = 2, prompts: int = 2, seed: int = 0, beta: float = 0.5) -> Instance:
    """Token-level instance with terminal rewards in ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    import itertools

    rewards = {
        (p, seq): float(rng.uniform())
        for p in range(prompts)
        for seq in itertools.product(range(vocab), repeat=horizon)
    }
    mdp = make_token_mdp(list(range(prompts)), [f"t{i}" for i in range(vocab)], horizon, rewards,
                         rmax=1.0)
    pi_ref = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
    return Instance("token", mdp, pi_ref, dict(vocab=vocab, horizon=horizon, prompts=prompts,
                                               seed=seed, beta=beta),
                    _boltzmann_class(mdp, pi_ref, beta, rng))


def prop31(beta: float = 0.02, c: float = 0.125) -> Instance:
    mdp, cls = counterexample_instance(beta, c)
    return Instance("prop31", mdp, cls.pi_ref, dict(beta=beta, c=c), cls)


def bandit(contexts: int = 16, arms: int = 4, gap_lo: float = 0.02, gap_hi: float = 0.8, skew: float = 2.0,
           seed: int = 0) -> Instance:
    """Contextual bandit with geometrically spread gaps and a reference tilted to bad arms.

    In every context arm 0 has reward 1 and the other arms ``1 - g``. The
    ``contexts * (arms - 1)`` gaps are a geometric grid from ``gap_lo`` to
    ``gap_hi`` dealt to contexts at random (``seed``), sorted within each
    context. Spreading the gaps over decades keeps some arm near the
    statistical resolution ``1/sqrt(T)`` for a wide range of ``T``; several
    contexts make regret an average, so no single lucky iterate is much
    better than its neighbours. ``pi_ref ∝ exp(-skew * r)`` per context.
    Features are one-hot in (context, arm).
    """
    if contexts < 1:
        raise ValidationError("need at least one context", "contexts")
    if arms < 2:
        raise ValidationError("a bandit needs at least two arms", "arms")
    if not 0 < gap_lo <= gap_hi <= 1:
        raise ValidationError("gaps must satisfy 0 < gap_lo <= gap_hi <= 1", "gap_lo")
    gaps = np.geomspace(gap_lo, gap_hi, contexts * (arms - 1))
    np.random.default_rng(seed).shuffle(gaps)
    gaps = np.sort(gaps.reshape(contexts, arms - 1), axis=1)
    r = 1.0 - np.concatenate([np.zeros((contexts, 1)), gaps], axis=1)
    names = [f"ctx{m}" for m in range(contexts)]
    mdp = make_token_mdp(names, [f"arm{i}" for i in range(arms)], 1,
                         {(names[m], (i,)): float(r[m, i]) for m in range(contexts) for i in range(arms)},
                         rmax=1.0)
    pref = np.exp(-skew * r)
    pref /= pref.sum(axis=1, keepdims=True)
    d = contexts * arms
    return Instance("bandit", mdp, TabularPolicy(pref),
                    dict(contexts=contexts, arms=arms, gap_lo=gap_lo, gap_hi=gap_hi, skew=skew, seed=seed),
                    features=np.eye(d).reshape(contexts, arms, d))


def _boltzmann_class(mdp, pi_ref, beta, rng, size: int = 4) -> FinitePolicyClass:
    """``[pi_ref, pi*_beta]`` plus Boltzmann policies of random reward perturbations."""
    members = [pi_ref, solve_soft_dp(mdp, beta, pi_ref).pistar]
    for _ in range(size - 2):
        f = solve_soft_dp(mdp, beta, pi_ref).qstar + rng.normal(0, 0.3, size=pi_ref.shape)
        members.append(boltzmann_policy(f, beta, pi_ref))
    names = ["pi_ref", "pi_star"] + [f"pi_f{i}" for i in range(size - 2)]
    return FinitePolicyClass(members, names=names, pi_ref=pi_ref)


BUILDERS: dict[str, Callable[..., Instance]] = {
    "prop31": prop31,
    "random_tabular": random_tabular,
    "linear": linear,
    "token": token,
    "bandit": bandit,
}


def one_hot_features(mdp: DCMDP) -> np.ndarray:
    S, A = mdp.n_states, mdp.n_actions
    return np.eye(S * A).reshape(S, A, S * A)


def build_instance(ref: str, params: dict | None = None) -> Instance:
    """Builtin name or path to an instance JSON file (uniform reference policy)."""
    params = dict(params or {})
    if ref in BUILDERS:
        try:
            return BUILDERS[ref](**params)
        except TypeError as exc:
            raise ValidationError(str(exc), "instance_params") from None
    path = Path(ref)
    if not path.exists():
        raise ValidationError(f"unknown instance {ref!r}; builtins are {sorted(BUILDERS)}", "instance")
    mdp = load_instance(path)
    return Instance(path.stem, mdp, TabularPolicy.uniform(mdp.n_states, mdp.n_actions), params,
                    features=mdp.features)


def policy_class(inst: Instance, kind: str, beta: float, radius: float | None = None):
    """``"finite"`` uses the instance's class; ``"loglinear"`` its features (one-hot by default)."""
    if kind == "finite":
        if inst.finite_class is None:
            raise ValidationError(f"instance {inst.name!r} has no finite class", "policy_class")
        return inst.finite_class
    if kind == "loglinear":
        phi = inst.features if inst.features is not None else one_hot_features(inst.mdp)
        if radius is None:
            radius = math.sqrt(phi.shape[2])
        return LogLinearClass(phi, beta, inst.pi_ref, radius=float(radius))
    raise ValidationError(f"unknown policy class {kind!r}", "policy_class")
