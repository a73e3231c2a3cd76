"""Training loops: offline / online / iterative DPO and XPO.

All loops share :func:`_loop`. Randomness comes from :class:`~xpolab.rng.Streams`
with one generator per ``(purpose, iteration)``:

``episode``
    initial state and both responses, drawn in that order for each pair;
``label``
    the Bradley-Terry coin;
``restart``
    random starting points of the log-linear minimiser;
``opt``
    fresh optimism samples (fixed strategy with ``fresh=True``).

Because XPO with ``alpha=0`` and reference sampling consumes exactly the same
draws as Online DPO with reference sampling, the two produce identical records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dcmdp import DCMDP, instance_hash, rollout, sample_initial_state
from .errors import MinimizerError, ValidationError
from .objective import DataAccumulator, ObjectiveConfig, minimize
from .policy import FinitePolicyClass, LogLinearClass, format_snapshots
from .preference import PreferenceDataset, label_pair
from .rng import Streams
from .softdp import j_beta, solve_soft_dp

STRATEGIES = ("reference", "fixed", "historical")


@dataclass(frozen=True)
class SamplingStrategy:
    """Where the second response ``tau~`` comes from.

    ``reference``: ``pi_ref``. ``fixed``: a given policy; with ``fresh=True``
    the optimism set is ``t`` new samples from it at every iteration instead
    of the accumulated responses. ``historical``: a uniformly chosen past
    iterate, with the optimism set made of the on-policy samples ``tau``.
    """

    variant: str = "reference"
    policy: object = None
    fresh: bool = False

    def __post_init__(self):
        if self.variant not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.variant!r}; expected one of {STRATEGIES}", "strategy")
        if self.variant == "fixed" and self.policy is None:
            raise ValidationError("the fixed strategy needs a sampling policy", "strategy")


@dataclass(frozen=True)
class IterationRow:
    t: int
    j_beta: float
    regret: float
    objective: float | None
    n_pref: int
    alpha: float
    policy_id: int | None = None
    in_class: bool = True

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "J_beta": self.j_beta,
            "regret": self.regret,
            "objective": self.objective,
            "n_pref": self.n_pref,
            "alpha": self.alpha,
            "policy_id": self.policy_id,
        }


@dataclass
class RunRecord:
    """Per-iteration trace of one training run.

    ``policies[t]`` is the iterate evaluated in ``rows[t]``; ``policies[0]``
    is the reference initialisation.
    """

    header: dict
    rows: list[IterationRow] = field(default_factory=list)
    policies: list = field(default_factory=list)
    dataset: PreferenceDataset = field(default_factory=PreferenceDataset)
    selected: int | None = None
    selection_rule: str = "exact"
    context: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def regrets(self) -> np.ndarray:
        return np.array([r.regret for r in self.rows])

    @property
    def final_policy(self):
        return self.policies[self.selected] if self.selected is not None else None

    def rows_jsonl(self) -> str:
        return "".join(json.dumps(r.as_dict(), sort_keys=True) + "\n" for r in self.rows)

    def to_jsonl(self) -> str:
        head = dict(self.header)
        head["selected"] = self.selected
        head["selection_rule"] = self.selection_rule
        return json.dumps({"header": head}, sort_keys=True) + "\n" + self.rows_jsonl()

    def snapshots(self) -> str:
        """``(iteration, theta)`` rows for log-linear runs, ``(iteration, member)`` otherwise."""
        rows = []
        for t, (pi, row) in enumerate(zip(self.policies, self.rows)):
            if hasattr(pi, "theta"):
                rows.append((t, pi.theta))
            else:
                rows.append((t, np.array([-1 if row.policy_id is None else row.policy_id])))
        return format_snapshots(rows)


def alpha_schedule(
    beta: float,
    vmax: float,
    rmax: float,
    T: int,
    log_class_size: float,
    delta: float = 0.05,
    coef: float = 1.0,
    c: float = 1.0,
    variant: str = "cov",
) -> float:
    """Theoretical optimism coefficient.

    ``variant="cov"``::

        c * beta / ((vmax + rmax) e^{2 rmax}) * sqrt(log(|Pi| T / delta) / (T * coef))

    with ``coef`` the coverability coefficient; ``variant="sec"`` multiplies
    the numerator under the root by ``log T`` and takes ``coef`` to be the
    SEC.
    """
    for name, v in (("beta", beta), ("T", T), ("delta", delta), ("coef", coef), ("c", c)):
        if not v > 0:
            raise ValidationError(f"{name} must be positive, got {v!r}", name)
    if vmax + rmax <= 0:
        raise ValidationError("vmax + rmax must be positive", "vmax")
    log_term = log_class_size + math.log(T) - math.log(delta)
    if variant == "sec":
        log_term *= math.log(T)
    elif variant != "cov":
        raise ValidationError(f"unknown variant {variant!r}", "variant")
    return c * beta / ((vmax + rmax) * math.exp(2.0 * rmax)) * math.sqrt(log_term / (T * coef))


def _resolve_ref(policy_class, pi_ref):
    if pi_ref is None:
        if getattr(policy_class, "pi_ref", None) is not None:
            return policy_class.pi_ref
        raise ValidationError("a finite class needs an explicit reference policy", "pi_ref")
    return pi_ref


def _initial(policy_class, pi_ref):
    if isinstance(policy_class, LogLinearClass):
        return policy_class.reference(), 0, True
    if isinstance(policy_class, FinitePolicyClass):
        k = policy_class.index_of(pi_ref)
        return (pi_ref if k is None else policy_class[k]), k, k is not None
    raise ValidationError(f"unsupported policy class {type(policy_class).__name__}", "policy_class")


def _loop(
    mdp: DCMDP,
    policy_class,
    pi_ref,
    config: ObjectiveConfig,
    T: int,
    seed: int,
    second: str,
    strategy: SamplingStrategy | None,
    batch: int,
    algorithm: str,
    meta: dict | None = None,
) -> RunRecord:
    if T < 0:
        raise ValidationError("T must be non-negative", "T")
    if batch < 1:
        raise ValidationError("batch size must be at least 1", "batch_size")
    beta, alpha = config.beta, config.alpha
    pi_ref = _resolve_ref(policy_class, pi_ref)
    streams = Streams(seed)
    sol = solve_soft_dp(mdp, beta, pi_ref)
    jstar = sol.initial_value(mdp)

    def row(t, pi, objective, n_pref, pid, in_class):
        j = j_beta(mdp, pi, beta, pi_ref)
        return IterationRow(t, j, jstar - j, objective, n_pref, alpha, pid, in_class)

    current, pid, in_class = _initial(policy_class, pi_ref)
    header = {
        "algorithm": algorithm,
        "seed": int(seed),
        "instance_hash": instance_hash(mdp),
        "beta": beta,
        "alpha": alpha,
        "T": T,
        "batch_size": batch,
        "sampling": second if strategy is None else strategy.variant,
        "tie_break": config.tie_break,
    }
    header.update(meta or {})
    rec = RunRecord(header, context={"mdp": mdp, "pi_ref": pi_ref, "beta": beta, "jstar": jstar})
    rec.policies.append(current)
    rec.rows.append(row(0, current, None, 0, pid, in_class))

    acc = DataAccumulator(mdp.horizon)
    history = [current]
    theta = getattr(current, "theta", None)
    fresh = strategy is not None and strategy.variant == "fixed" and strategy.fresh
    for t in range(1, T + 1):
        ep = streams.get("episode", t)
        lab = streams.get("label", t)
        for _ in range(batch):
            s1 = sample_initial_state(mdp, ep)
            tau = rollout(mdp, current, ep, s1)
            if second == "policy":
                other = rollout(mdp, current, ep, s1)
            elif second == "reference":
                other = rollout(mdp, pi_ref, ep, s1)
            elif second == "fixed":
                other = rollout(mdp, strategy.policy, ep, s1)
            elif second == "historical":
                other = rollout(mdp, history[int(ep.integers(len(history)))], ep, s1)
            else:
                raise ValidationError(f"unknown sampling mode {second!r}", "sampling")
            pair = label_pair(mdp, tau, other, lab, iteration=t)
            rec.dataset.append(pair)
            acc.add_pair(pair)
            if strategy is not None and not fresh:
                acc.add_opt(tau if strategy.variant == "historical" else other)
        if fresh:
            step_acc = DataAccumulator(mdp.horizon)
            for p in rec.dataset:
                step_acc.add_pair(p)
            og = streams.get("opt", t)
            for _ in range(t):
                step_acc.add_opt(rollout(mdp, strategy.policy, og))
            data = step_acc.compile()
        else:
            data = acc.compile()
        try:
            res = minimize(data, policy_class, config, pi_ref=pi_ref,
                           rng=streams.get("restart", t), warm_start=theta)
        except MinimizerError as exc:
            raise MinimizerError(str(exc), iteration=t) from None
        current = res.policy
        theta = getattr(current, "theta", None)
        history.append(current)
        rec.policies.append(current)
        pid = res.index if res.index is not None else t
        rec.rows.append(row(t, current, res.value, len(rec.dataset), pid, True))
    select_final(rec)
    return rec


def run_xpo(
    mdp: DCMDP,
    policy_class,
    beta: float,
    alpha: float,
    T: int,
    strategy: SamplingStrategy | str = "reference",
    seed: int = 0,
    pi_ref=None,
    config: ObjectiveConfig | None = None,
    meta: dict | None = None,
) -> RunRecord:
    """Optimistic preference optimisation with reference, fixed or historical sampling."""
    if isinstance(strategy, str):
        strategy = SamplingStrategy(strategy)
    config = _config(config, beta, alpha)
    return _loop(mdp, policy_class, pi_ref, config, T, seed, strategy.variant, strategy, 1, "xpo", meta)


def run_online_dpo(
    mdp: DCMDP,
    policy_class,
    beta: float,
    T: int,
    seed: int = 0,
    pi_ref=None,
    second: str = "policy",
    config: ObjectiveConfig | None = None,
    meta: dict | None = None,
) -> RunRecord:
    """Online DPO; ``second="reference"`` draws the second response from ``pi_ref``."""
    if second not in ("policy", "reference"):
        raise ValidationError("second must be 'policy' or 'reference'", "second")
    config = _config(config, beta, 0.0)
    return _loop(mdp, policy_class, pi_ref, config, T, seed, second, None, 1, "online_dpo", meta)


def run_iterative_dpo(
    mdp: DCMDP,
    policy_class,
    beta: float,
    T_outer: int,
    batch_size: int,
    seed: int = 0,
    pi_ref=None,
    config: ObjectiveConfig | None = None,
    meta: dict | None = None,
) -> RunRecord:
    """Online DPO that collects ``batch_size`` on-policy pairs per update."""
    config = _config(config, beta, 0.0)
    return _loop(mdp, policy_class, pi_ref, config, T_outer, seed, "policy", None, batch_size,
                 "iterative_dpo", meta)


def run_offline_dpo(mdp: DCMDP, policy_class, beta: float, d_pref, pi_ref=None,
                    config: ObjectiveConfig | None = None, seed: int = 0):
    """One DPO minimisation on a fixed dataset; returns the minimising policy."""
    pairs = list(d_pref)
    if not pairs:
        raise ValidationError("the preference dataset is empty", "d_pref")
    config = _config(config, beta, 0.0)
    pi_ref = _resolve_ref(policy_class, pi_ref)
    acc = DataAccumulator(mdp.horizon)
    for p in pairs:
        acc.add_pair(p)
    return minimize(acc.compile(), policy_class, config, pi_ref=pi_ref,
                    rng=Streams(seed).get("restart", 0)).policy


def _config(config, beta, alpha) -> ObjectiveConfig:
    if config is None:
        return ObjectiveConfig(beta=beta, alpha=alpha)
    if config.beta != beta or config.alpha != alpha:
        from dataclasses import replace

        return replace(config, beta=beta, alpha=alpha)
    return config


def select_final(record: RunRecord, mode: str = "exact", n: int | None = None,
                 rng: np.random.Generator | None = None) -> int:
    """Pick ``argmax_t J_beta(pi^(t))`` (earliest on ties); stores and returns the index.

    ``mode="validation"`` replaces exact values by ``n``-episode Monte Carlo
    estimates drawn from ``rng``. Iterates flagged outside the class are skipped.
    """
    cands = [i for i, r in enumerate(record.rows) if r.in_class]
    if not cands:
        cands = list(range(len(record.rows)))
    if mode == "exact":
        scores = [record.rows[i].j_beta for i in cands]
    elif mode == "validation":
        if n is None or rng is None:
            raise ValidationError("validation selection needs n and rng", "mode")
        ctx = record.context
        scores = [
            j_beta(ctx["mdp"], record.policies[i], ctx["beta"], ctx["pi_ref"],
                   mode="monte_carlo", n=n, rng=rng).mean
            for i in cands
        ]
    else:
        raise ValidationError(f"unknown selection mode {mode!r}", "mode")
    best = cands[int(np.argmax(scores))]  # argmax returns the first maximiser
    record.selected = best
    record.selection_rule = mode if mode == "exact" else f"validation({n})"
    return best
