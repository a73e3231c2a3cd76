"""Policy classes: explicit finite sets and log-linear families.

A log-linear policy is ``pi_theta(a|s) ∝ pi_ref(a|s) exp(<phi(s,a), theta> / beta)``,
i.e. the Boltzmann policy of ``f = phi @ theta``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .dcmdp import DCMDP, TabularPolicy, Trajectory
from .errors import ValidationError
from .softdp import _check_beta, _lse_rows, log_table_of

DEFAULT_CLIP = (-500.0, 500.0)


def log_prob(pi, tau: Trajectory) -> float:
    """``sum_h log pi(a_h|s_h)``; ``-inf`` if any factor is zero."""
    lt = log_table_of(pi)
    return float(np.sum(lt[list(tau.states), list(tau.actions)]))


def log_ratio(pi, pi_ref, tau: Trajectory, clip: tuple[float, float] | None = DEFAULT_CLIP) -> float:
    """``log pi(tau) - log pi_ref(tau)``, clamped to ``clip`` unless ``clip is None``."""
    st, ac = list(tau.states), list(tau.actions)
    with np.errstate(invalid="ignore"):
        r = float(np.sum(log_table_of(pi)[st, ac] - log_table_of(pi_ref)[st, ac]))
    if clip is not None:
        lo, hi = clip
        r = min(max(r, lo), hi)
    return r


@dataclass(frozen=True, eq=False)
class LogLinearPolicy:
    """One member of a log-linear class.

    Parameters
    ----------
    phi : array, shape (S, A, d)
    theta : array, shape (d,)
    beta : float
    pi_ref : TabularPolicy
    """

    phi: np.ndarray
    theta: np.ndarray
    beta: float
    pi_ref: TabularPolicy

    def __post_init__(self):
        _check_beta(self.beta)
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.phi.shape[2],):
            raise ValidationError(f"theta has shape {theta.shape}, expected ({self.phi.shape[2]},)", "theta")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        logits = self.pi_ref.log_table + self.f / self.beta
        lt = logits - _lse_rows(logits)[:, None]
        lt.setflags(write=False)
        object.__setattr__(self, "log_table", lt)

    @property
    def f(self) -> np.ndarray:
        return self.phi @ self.theta

    @property
    def table(self) -> np.ndarray:
        return np.exp(self.log_table)

    def as_tabular(self) -> TabularPolicy:
        return TabularPolicy.from_log_table(self.log_table)


@dataclass(frozen=True, eq=False)
class LogLinearClass:
    """The family ``{pi_theta : ||theta|| <= radius}`` over a fixed feature map."""

    phi: np.ndarray
    beta: float
    pi_ref: TabularPolicy
    radius: float = np.inf

    def __post_init__(self):
        phi = np.ascontiguousarray(self.phi, dtype=float)
        if phi.ndim != 3 or phi.shape[:2] != self.pi_ref.shape:
            raise ValidationError("features must have shape (S, A, d) matching pi_ref", "phi")
        object.__setattr__(self, "phi", phi)
        _check_beta(self.beta)

    @property
    def dim(self) -> int:
        return self.phi.shape[2]

    def policy(self, theta) -> LogLinearPolicy:
        return LogLinearPolicy(self.phi, theta, self.beta, self.pi_ref)

    def reference(self) -> LogLinearPolicy:
        return self.policy(np.zeros(self.dim))

    def sample_thetas(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` parameter vectors drawn uniformly from the radius ball (unit ball if unbounded)."""
        r = self.radius if np.isfinite(self.radius) else 1.0
        z = rng.standard_normal((n, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return z * (r * rng.random(n) ** (1.0 / self.dim))[:, None]


class FinitePolicyClass:
    """An explicit, indexed list of tabular policies.

    ``pi_ref`` optionally records the reference policy the class is meant to
    be used with; trainers fall back to it when no reference is passed.
    """

    def __init__(self, policies: Sequence, names: Sequence[str] | None = None, pi_ref=None):
        if len(policies) == 0:
            raise ValidationError("a finite policy class needs at least one member", "policies")
        self.policies = [p if hasattr(p, "log_table") else TabularPolicy(p) for p in policies]
        shapes = {p.log_table.shape for p in self.policies}
        if len(shapes) != 1:
            raise ValidationError("all members must share a (states, actions) shape", "policies")
        self.names = list(names) if names is not None else [f"pi{i}" for i in range(len(policies))]
        self.log_tables = np.ascontiguousarray(np.stack([p.log_table for p in self.policies]))
        self.pi_ref = pi_ref

    def __len__(self) -> int:
        return len(self.policies)

    def __getitem__(self, i: int):
        return self.policies[i]

    def __iter__(self):
        return iter(self.policies)

    def index_of(self, pi) -> int | None:
        lt = log_table_of(pi)
        for i, p in enumerate(self.policies):
            if np.array_equal(p.log_table, lt):
                return i
        return None


def vmax_check(
    policy_class,
    beta: float,
    pi_ref,
    mdp: DCMDP,
    n_samples: int = 1000,
    rng: np.random.Generator | None = None,
    extra_thetas: Iterable | None = None,
) -> float:
    """Empirical ``Vmax = beta * max |log(pi(tau)/pi_ref(tau))|`` over reachable trajectories.

    For a :class:`LogLinearClass` the maximum runs over ``n_samples`` parameter
    vectors from the ball plus ``extra_thetas`` (e.g. optimiser iterates), so
    the value is a lower bound on the class-wide constant. Returns ``inf`` on
    a support violation.
    """
    beta = _check_beta(beta)
    if isinstance(policy_class, LogLinearClass):
        rng = rng if rng is not None else np.random.default_rng(0)
        thetas = [policy_class.sample_thetas(n_samples, rng)]
        if extra_thetas is not None:
            extra = np.asarray(list(extra_thetas), dtype=float).reshape(-1, policy_class.dim)
            thetas.append(extra)
        tables = np.stack([policy_class.policy(t).log_table for t in np.concatenate(thetas)])
    else:
        tables = np.stack([log_table_of(p) for p in policy_class])
    trajs = mdp.enumerate()
    live = mdp.rho[trajs.initial_states] > 0
    st, ac = trajs.states[live], trajs.actions[live]
    lp = kernels.class_path_logprob(np.ascontiguousarray(tables), st, ac)
    lref = kernels.path_logprob(np.ascontiguousarray(log_table_of(pi_ref)), st, ac)
    reach = np.isfinite(lp)
    if np.any(reach & ~np.isfinite(lref)[None, :]):
        return np.inf
    if not reach.any():
        return 0.0
    with np.errstate(invalid="ignore"):
        gap = np.abs(lp - lref[None, :])
    return float(beta * np.max(gap[reach]))


def grad_log_prob(pi: LogLinearPolicy, tau: Trajectory) -> np.ndarray:
    """``sum_h (phi(s_h, a_h) - E_{a ~ pi(.|s_h)} phi(s_h, a)) / beta``."""
    st, ac = list(tau.states), list(tau.actions)
    p = np.exp(pi.log_table[st])
    ebar = np.einsum("ha,had->hd", p, pi.phi[st])
    return (pi.phi[st, ac] - ebar).sum(axis=0) / pi.beta


def format_snapshots(rows: Iterable[tuple[int, np.ndarray]], sep: str = ",") -> str:
    """Parameter snapshots as ``iteration, theta_0, ..., theta_{d-1}`` rows."""
    buf = io.StringIO()
    for it, theta in rows:
        buf.write(sep.join([str(int(it))] + [repr(float(x)) for x in np.ravel(theta)]) + "\n")
    return buf.getvalue()
