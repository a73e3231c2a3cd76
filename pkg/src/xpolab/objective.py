"""DPO loss, the optimistic XPO objective, gradients and minimisers.

Datasets are compiled to a compact form before evaluation: unique
trajectories become rows of ``states``/``actions`` and pairs / optimism
samples become index arrays with multiplicities. This keeps per-iteration
cost proportional to the number of *distinct* trajectories seen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .dcmdp import Trajectory
from .errors import MinimizerError, ValidationError
from .policy import DEFAULT_CLIP, FinitePolicyClass, LogLinearClass, LogLinearPolicy
from .preference import PreferencePair
from .softdp import log_table_of

TIE_BREAKS = ("first", "last", "random")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Objective coefficients and minimiser settings.

    ``step=None`` means ``0.1 * beta``. ``max_step=None`` keeps the step
    fixed (it only shrinks on an increase and recovers afterwards); a larger
    value lets it grow geometrically after accepted steps. ``restarts`` counts starting points
    beyond the warm start: the origin first, then random points on the ball.
    """

    beta: float
    alpha: float = 0.0
    clip: tuple[float, float] = DEFAULT_CLIP
    step: float | None = None
    max_step: float | None = None
    shrink: float = 0.5
    tol: float = 1e-8
    max_iter: int = 2000
    restarts: int = 3
    tie_break: str = "first"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta!r}", "beta")
        if not self.alpha >= 0:
            raise ValidationError(f"alpha must be non-negative, got {self.alpha!r}", "alpha")
        if self.clip[0] > self.clip[1]:
            raise ValidationError("clip bounds are reversed", "clip")
        if self.tie_break not in TIE_BREAKS:
            raise ValidationError(f"tie_break must be one of {TIE_BREAKS}", "tie_break")
        if not 0 < self.shrink < 1:
            raise ValidationError("shrink must lie in (0, 1)", "shrink")

    @property
    def step_size(self) -> float:
        return 0.1 * self.beta if self.step is None else float(self.step)

    @property
    def step_ceiling(self) -> float:
        return self.step_size if self.max_step is None else max(float(self.max_step), self.step_size)


class DataAccumulator:
    """Incrementally built compact dataset (insertion-ordered, deterministic)."""

    def __init__(self, horizon: int):
        self.horizon = horizon
        self._ids: dict[tuple, int] = {}
        self._states: list[tuple] = []
        self._actions: list[tuple] = []
        self._pairs: dict[tuple[int, int], int] = {}
        self._opt: dict[int, int] = {}
        self.n_pairs = 0
        self.n_opt = 0

    def _row(self, tau: Trajectory) -> int:
        key = (tau.states, tau.actions)
        i = self._ids.get(key)
        if i is None:
            i = self._ids[key] = len(self._states)
            self._states.append(tau.states)
            self._actions.append(tau.actions)
        return i

    def add_pair(self, pair: PreferencePair) -> None:
        k = (self._row(pair.tau_plus), self._row(pair.tau_minus))
        self._pairs[k] = self._pairs.get(k, 0) + 1
        self.n_pairs += 1

    def add_opt(self, tau: Trajectory) -> None:
        i = self._row(tau)
        self._opt[i] = self._opt.get(i, 0) + 1
        self.n_opt += 1

    def compile(self) -> "CompiledData":
        H = self.horizon
        st = np.array(self._states, dtype=np.int64).reshape(-1, H)
        ac = np.array(self._actions, dtype=np.int64).reshape(-1, H)
        keys = list(self._pairs)
        pp = np.array([k[0] for k in keys], dtype=np.int64)
        pm = np.array([k[1] for k in keys], dtype=np.int64)
        pw = np.array([self._pairs[k] for k in keys], dtype=float)
        oi = np.array(list(self._opt), dtype=np.int64)
        ow = np.array([self._opt[i] for i in self._opt], dtype=float)
        return CompiledData(st, ac, pp, pm, pw, oi, ow)


@dataclass(frozen=True, eq=False)
class CompiledData:
    states: np.ndarray
    actions: np.ndarray
    pair_p: np.ndarray
    pair_m: np.ndarray
    pair_w: np.ndarray
    opt_i: np.ndarray
    opt_w: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.pair_w.sum())


def compile_data(pairs: Iterable[PreferencePair], d_opt: Iterable[Trajectory] = ()) -> CompiledData:
    pairs = list(pairs)
    d_opt = list(d_opt)
    if pairs:
        H = len(pairs[0].tau_plus)
    elif d_opt:
        H = len(d_opt[0])
    else:
        H = 1
    acc = DataAccumulator(H)
    for p in pairs:
        acc.add_pair(p)
    for tau in d_opt:
        acc.add_opt(tau)
    return acc.compile()


def _softplus(z):
    return np.logaddexp(0.0, z)


def _class_values(log_tables: np.ndarray, log_ref: np.ndarray, beta: float, alpha: float,
                  data: CompiledData, clip) -> np.ndarray:
    """Objective value of every member of a stack of policies, shape ``(K,)``."""
    lref_tab = np.ascontiguousarray(log_ref)
    lp = kernels.class_path_logprob(np.ascontiguousarray(log_tables), data.states, data.actions)
    lref = kernels.path_logprob(lref_tab, data.states, data.actions)
    with np.errstate(invalid="ignore"):
        lr = lp - lref[None, :]
        out = np.zeros(log_tables.shape[0])
        if data.pair_w.size:
            margin = beta * (lr[:, data.pair_p] - lr[:, data.pair_m])
            # an undefined margin only arises from -inf - -inf; the pair's loss is then +inf
            terms = np.where(np.isnan(margin), np.inf, _softplus(-margin))
            out += terms @ data.pair_w
        if alpha != 0.0 and data.opt_w.size:
            lo, hi = clip
            clipped = np.clip(np.nan_to_num(lr[:, data.opt_i], nan=lo), lo, hi)
            out += alpha * ((clipped + lref[data.opt_i][None, :]) @ data.opt_w)
    # pi must be absolutely continuous w.r.t. pi_ref, otherwise the loss is +inf
    viol = np.any(np.isfinite(log_tables) & ~np.isfinite(log_ref)[None], axis=(1, 2))
    out[viol] = np.inf
    return out


def _as_data(d_pref, d_opt) -> CompiledData:
    if isinstance(d_pref, CompiledData):
        return d_pref
    return compile_data(d_pref, d_opt if d_opt is not None else ())


def dpo_loss(pi, pi_ref, beta: float, d_pref) -> float:
    """``sum -log sigmoid(beta * (lr(tau+) - lr(tau-)))`` with unclipped log-ratios.

    Returns ``+inf`` if ``pi`` puts mass where ``pi_ref`` does not.
    """
    data = _as_data(d_pref, ())
    if data.pair_w.size == 0:
        raise ValidationError("the preference dataset is empty", "d_pref")
    return float(_class_values(log_table_of(pi)[None], log_table_of(pi_ref), beta, 0.0, data, DEFAULT_CLIP)[0])


def xpo_objective(pi, pi_ref, beta: float, alpha: float, d_pref, d_opt=(), clip=DEFAULT_CLIP) -> float:
    """``alpha * sum_{D_opt} [clip(lr) + log pi_ref] + dpo_loss``."""
    data = _as_data(d_pref, d_opt)
    return float(_class_values(log_table_of(pi)[None], log_table_of(pi_ref), beta, alpha, data, clip)[0])


def _kernel_args(cls_phi, logpref, data: CompiledData):
    idx, val = kernels.sparse_features(cls_phi)
    return (idx, val, np.ascontiguousarray(logpref)), (
        data.states, data.actions, data.pair_p, data.pair_m, data.pair_w, data.opt_i, data.opt_w,
    )


def objective_value_grad(pi: LogLinearPolicy, beta: float, alpha: float, d_pref, d_opt=(),
                         clip=DEFAULT_CLIP) -> tuple[float, np.ndarray]:
    data = _as_data(d_pref, d_opt)
    feats, rest = _kernel_args(pi.phi, pi.pi_ref.log_table, data)
    v, g = kernels.loglinear_value_grad(
        np.asarray(pi.theta, dtype=float), *feats, float(beta), float(alpha), *rest,
        float(clip[0]), float(clip[1]))
    return float(v), np.asarray(g)


def objective_gradient(pi: LogLinearPolicy, pi_ref, beta: float, alpha: float, d_pref, d_opt=(),
                       clip=DEFAULT_CLIP) -> np.ndarray:
    """Gradient of :func:`xpo_objective` in ``theta`` for a log-linear policy.

    Clamped optimism terms contribute nothing. ``pi_ref`` must be the
    reference the policy was built on.
    """
    if not np.array_equal(log_table_of(pi_ref), pi.pi_ref.log_table):
        raise ValidationError("pi_ref differs from the policy's own reference", "pi_ref")
    return objective_value_grad(pi, beta, alpha, d_pref, d_opt, clip)[1]


@dataclass
class MinimizeResult:
    policy: object
    value: float
    index: int | None = None  # class index for finite classes
    values: np.ndarray | None = None  # all member values (finite)
    restart_values: list = field(default_factory=list)
    n_iter: int = 0
    trace: list = field(default_factory=list)  # (objective, gradient norm) per accepted step


def minimize(
    data: CompiledData,
    policy_class,
    config: ObjectiveConfig,
    pi_ref=None,
    rng: np.random.Generator | None = None,
    warm_start: np.ndarray | None = None,
    trace: bool = False,
) -> MinimizeResult:
    """``argmin_{pi in Pi}`` of the XPO objective (DPO when ``alpha == 0``).

    Finite classes are solved exactly; ties follow ``config.tie_break``
    (``"random"`` needs ``rng``). Log-linear classes run projected gradient
    descent from the warm start, the origin and ``restarts - 1`` random
    points, keeping the lowest objective (earliest start on ties).
    """
    if isinstance(policy_class, FinitePolicyClass):
        pi_ref = pi_ref if pi_ref is not None else policy_class.pi_ref
        if pi_ref is None:
            raise ValidationError("a finite class needs an explicit reference policy", "pi_ref")
        return _minimize_finite(data, policy_class, log_table_of(pi_ref), config, rng)
    if isinstance(policy_class, LogLinearClass):
        return _minimize_loglinear(data, policy_class, config, rng, warm_start, trace)
    raise ValidationError(f"unsupported policy class {type(policy_class).__name__}", "policy_class")


def _minimize_finite(data, cls: FinitePolicyClass, ref, config, rng) -> MinimizeResult:
    vals = _class_values(cls.log_tables, ref, config.beta, config.alpha, data, config.clip)
    if not np.any(np.isfinite(vals)):
        raise MinimizerError("every class member has an infinite objective")
    best = vals.min()
    ties = np.flatnonzero(vals == best)
    if config.tie_break == "first":
        k = int(ties[0])
    elif config.tie_break == "last":
        k = int(ties[-1])
    else:
        if rng is None:
            raise ValidationError("tie_break='random' needs an rng", "tie_break")
        k = int(ties[rng.integers(len(ties))]) if len(ties) > 1 else int(ties[0])
    return MinimizeResult(cls[k], float(best), k, vals)


def _starts(cls: LogLinearClass, config, rng, warm_start):
    d = cls.dim
    starts = [np.zeros(d) if warm_start is None else np.asarray(warm_start, dtype=float)]
    if config.restarts >= 1 and warm_start is not None:
        starts.append(np.zeros(d))
    n_random = config.restarts - 1 if warm_start is not None else config.restarts
    if n_random > 0:
        if rng is None:
            raise ValidationError("random restarts need an rng", "rng")
        scale = cls.radius / np.sqrt(d) if np.isfinite(cls.radius) else 1.0
        starts.extend(rng.standard_normal((n_random, d)) * scale)
    return starts


def _minimize_loglinear(data, cls: LogLinearClass, config, rng, warm_start, trace) -> MinimizeResult:
    feats, rest = _kernel_args(cls.phi, cls.pi_ref.log_table, data)
    args = (*feats, float(config.beta), float(config.alpha), *rest,
            float(config.clip[0]), float(config.clip[1]))
    radius = float(cls.radius) if np.isfinite(cls.radius) else -1.0
    best = None
    rvals = []
    rows = []
    for x0 in _starts(cls, config, rng, warm_start):
        theta, value, n_iter, station, steps = kernels.loglinear_descent(
            np.ascontiguousarray(x0, dtype=float), *args,
            config.step_size, config.shrink, config.tol, int(config.max_iter), radius,
            config.step_ceiling)
        rvals.append(float(value))
        if trace:
            rows.extend((float(v), float(g)) for v, g in steps)
        if not np.isfinite(value):
            continue
        if best is None or value < best[1]:
            best = (np.array(theta), float(value), int(n_iter))
    if best is None:
        raise MinimizerError("no restart reached a finite objective")
    return MinimizeResult(cls.policy(best[0]), best[1], None, None, rvals, best[2], rows)
