import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from xpolab.dcmdp import DCMDP, TabularPolicy, make_linear_dcmdp
from xpolab.diagnostics import concentrability, counterexample_instance
from xpolab.harness.instances import linear, one_hot_features, random_tabular
from xpolab.policy import (
    FinitePolicyClass,
    LogLinearClass,
    LogLinearPolicy,
    format_snapshots,
    grad_log_prob,
    log_prob,
    log_ratio,
    vmax_check,
)
from xpolab.softdp import boltzmann_policy, solve_soft_dp


def test_log_prob_deterministic_own_trajectory():
    inst = random_tabular(states=3, actions=2, horizon=3, seed=0)
    pi = TabularPolicy.deterministic([1] * inst.mdp.n_states, 2)
    tau = inst.mdp.trajectory(inst.mdp.layers[0][0], [1, 1, 1])
    assert log_prob(pi, tau) == 0.0
    assert log_prob(pi, inst.mdp.trajectory(inst.mdp.layers[0][0], [0, 1, 1])) == -math.inf


def test_log_prob_uniform():
    inst = random_tabular(states=2, actions=2, horizon=3, seed=1)
    pi = TabularPolicy.uniform(inst.mdp.n_states, 2)
    for tau in inst.mdp.enumerate():
        assert log_prob(pi, tau) == pytest.approx(3 * math.log(0.5), abs=1e-15)
    assert round(3 * math.log(0.5), 4) == -2.0794


def test_log_prob_normalises_per_initial_state():
    inst = random_tabular(states=3, actions=3, horizon=3, seed=2)
    pi = inst.finite_class[2]
    tot = {}
    for tau in inst.mdp.enumerate():
        tot[tau.initial_state] = tot.get(tau.initial_state, 0.0) + math.exp(log_prob(pi, tau))
    for v in tot.values():
        assert abs(v - 1) <= 1e-10


def test_log_ratio_reference_and_clip():
    inst = random_tabular(states=2, actions=2, horizon=2, seed=3)
    tau = inst.mdp.enumerate()[0]
    assert log_ratio(inst.pi_ref, inst.pi_ref, tau) == 0.0
    # pi(tau)/pi_ref(tau) = e^700 on a one-step instance
    mdp = DCMDP(1, [[0]], 2, [1.0], [[-1, -1]], [[0.0, 0.0]], 1.0)
    ref = TabularPolicy.from_log_table(np.array([[-700.0, math.log1p(-math.exp(-700))]]))
    pi = TabularPolicy(np.array([[1.0, 0.0]]))
    a = mdp.trajectory(0, [0])
    assert log_ratio(pi, ref, a, clip=None) == pytest.approx(700.0, rel=1e-12)
    assert log_ratio(pi, ref, a) == 500.0
    assert log_ratio(pi, ref, a, clip=(-1, 2)) == 2.0


def test_log_ratio_bounded_by_vmax():
    inst = random_tabular(states=3, actions=3, horizon=3, seed=4, beta=0.3)
    beta = 0.3
    vmax = vmax_check(inst.finite_class, beta, inst.pi_ref, inst.mdp)
    for pi in inst.finite_class:
        for tau in inst.mdp.enumerate():
            assert abs(log_ratio(pi, inst.pi_ref, tau)) <= vmax / beta * (1 + 1e-12)


# -- vmax ------------------------------------------------------------------------------


def test_vmax_reference_only():
    inst = random_tabular(seed=0)
    assert vmax_check([inst.pi_ref], 0.5, inst.pi_ref, inst.mdp) == 0.0


def test_vmax_counterexample_direct():
    beta = 0.02
    mdp, cls = counterexample_instance(beta)
    star = cls[1]
    direct = beta * max(abs(math.log(star.table[0, a] / cls.pi_ref.table[0, a])) for a in range(2))
    assert vmax_check(cls, beta, cls.pi_ref, mdp) == pytest.approx(direct, rel=1e-12)
    assert direct < 1.0  # O(1) in the instance scale
    # concentrability sees only the over-weighted side of the ratio
    upper = max(math.log(star.table[0, a] / cls.pi_ref.table[0, a]) for a in range(2))
    c_conc = concentrability(mdp, list(cls), cls.pi_ref)
    assert c_conc == pytest.approx(math.exp(upper), rel=1e-9)
    assert c_conc <= math.exp(direct / beta)


def test_conc_equals_exp_vmax_when_upper_side_dominates():
    # mass moved onto a rare arm: |log ratio| peaks on the up-weighted side
    mdp, _ = counterexample_instance(0.05)
    ref = TabularPolicy(np.array([[0.1, 0.9]]))
    for beta in (0.5, 1.0, 2.0):
        pi = boltzmann_policy(np.array([[1.0, 0.0]]), beta, ref)
        vmax = vmax_check([ref, pi], beta, ref, mdp)
        assert concentrability(mdp, [ref, pi], ref) == pytest.approx(math.exp(vmax / beta), rel=1e-12)


def test_vmax_scaling_in_beta():
    inst = random_tabular(states=3, actions=3, horizon=3, seed=5)
    f = np.random.default_rng(0).normal(size=(inst.mdp.n_states, 3))

    def max_abs_lr(g, beta):
        pi = boltzmann_policy(g, beta, inst.pi_ref)
        return vmax_check([pi], beta, inst.pi_ref, inst.mdp) / beta

    # (2f, 2 beta) is the same policy, so the log ratios coincide and Vmax doubles
    assert max_abs_lr(2 * f, 0.8) == pytest.approx(max_abs_lr(f, 0.4), rel=1e-12)
    # with f held fixed the halving is only asymptotic in beta
    assert max_abs_lr(f, 2e3) * 2 == pytest.approx(max_abs_lr(f, 1e3), rel=1e-3)
    assert max_abs_lr(f, 0.8) * 2 != pytest.approx(max_abs_lr(f, 0.4), rel=1e-3)


def test_vmax_support_violation_is_infinite():
    inst = random_tabular(states=2, actions=2, horizon=2, seed=6)
    ref = TabularPolicy(np.tile([1.0, 0.0], (inst.mdp.n_states, 1)))
    assert vmax_check([TabularPolicy.uniform(inst.mdp.n_states, 2)], 0.5, ref, inst.mdp) == math.inf


def test_vmax_loglinear_sampled():
    inst = linear(d=3, seed=0)
    cls = LogLinearClass(inst.features, 0.5, inst.pi_ref, radius=1.0)
    v = vmax_check(cls, 0.5, inst.pi_ref, inst.mdp, n_samples=200, rng=np.random.default_rng(0))
    members = [cls.policy(t) for t in cls.sample_thetas(50, np.random.default_rng(1))]
    assert v > 0
    assert vmax_check(members, 0.5, inst.pi_ref, inst.mdp) <= v * 1.5


# -- log-linear policies ------------------------------------------------------------------


@given(st.integers(0, 10**6))
def test_loglinear_equals_boltzmann(seed):
    rng = np.random.default_rng(seed)
    inst = linear(d=4, seed=seed % 50)
    beta = float(rng.uniform(0.05, 2))
    theta = rng.normal(size=4)
    pi = LogLinearPolicy(inst.features, theta, beta, inst.pi_ref)
    ref = boltzmann_policy(inst.features @ theta, beta, inst.pi_ref)
    assert np.max(np.abs(pi.table - ref.table)) <= 1e-12
    assert np.all(np.abs(pi.table.sum(axis=1) - 1) <= 1e-12)


def test_realizability_one_hot():
    rng = np.random.default_rng(3)
    S, A = 4, 2
    layers, nxt = [[0], [1, 2, 3]], np.array([[1, 2], [-1, -1], [-1, -1], [-1, -1]])
    feats = np.eye(S * A).reshape(S, A, S * A)
    vt = rng.uniform(0, 1, S * A)
    vt /= np.linalg.norm(vt)
    mdp = make_linear_dcmdp(feats, vt, layers, nxt, [1, 0, 0, 0], 2.0)
    ref = TabularPolicy(rng.dirichlet(np.ones(A), size=S))
    beta = 0.3
    sol = solve_soft_dp(mdp, beta, ref)
    theta_star = sol.qstar.ravel()
    pi = LogLinearPolicy(feats, theta_star, beta, ref)
    assert np.max(np.abs(pi.table - sol.pistar.table)) <= 1e-9


def test_class_sampling_within_radius():
    inst = linear(d=5, seed=1)
    cls = LogLinearClass(inst.features, 0.5, inst.pi_ref, radius=2.0)
    th = cls.sample_thetas(500, np.random.default_rng(0))
    assert np.all(np.linalg.norm(th, axis=1) <= 2.0 + 1e-12)
    assert cls.reference().table == pytest.approx(inst.pi_ref.table)


# -- gradients ------------------------------------------------------------------------


def test_grad_single_action_is_zero():
    mdp = DCMDP(2, [[0], [1]], 1, [1, 0], [[1], [-1]], [[0.2], [0.3]], 1.0)
    phi = np.random.default_rng(0).normal(size=(2, 1, 3)) * 0.3
    pi = LogLinearPolicy(phi, np.ones(3), 0.5, TabularPolicy.uniform(2, 1))
    np.testing.assert_array_equal(grad_log_prob(pi, mdp.trajectory(0, [0, 0])), 0.0)


def test_grad_one_hot_at_zero():
    inst = random_tabular(states=2, actions=3, horizon=1, seed=0)
    mdp = inst.mdp
    phi = one_hot_features(mdp)
    beta = 0.4
    pi = LogLinearPolicy(phi, np.zeros(phi.shape[2]), beta, TabularPolicy.uniform(mdp.n_states, 3))
    s = mdp.layers[0][0]
    g = grad_log_prob(pi, mdp.trajectory(s, [1]))
    assert g[s * 3 + 1] == pytest.approx((1 - 1 / 3) / beta, rel=1e-14)
    assert g[s * 3 + 0] == pytest.approx(-1 / 3 / beta, rel=1e-14)


def test_grad_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for seed in range(4):
        inst = linear(d=4, horizon=3, seed=seed)
        beta = float(rng.uniform(0.2, 2))
        trajs = inst.mdp.enumerate()
        for _ in range(50):
            theta = rng.normal(size=4)
            tau = trajs[int(rng.integers(len(trajs)))]

            def f(th):
                return log_prob(LogLinearPolicy(inst.features, th, beta, inst.pi_ref), tau)

            g = grad_log_prob(LogLinearPolicy(inst.features, theta, beta, inst.pi_ref), tau)
            worst = max(worst, oracles.rel_err(g, oracles.central_diff(f, theta)))
    assert worst <= 1e-5


# -- finite classes and snapshots -------------------------------------------------------


def test_finite_class_indexing():
    inst = random_tabular(seed=3)
    cls = inst.finite_class
    assert len(cls) == 4
    assert cls.index_of(cls[2]) == 2
    assert cls.index_of(TabularPolicy.uniform(inst.mdp.n_states, inst.mdp.n_actions)) is None
    assert cls.log_tables.shape == (4, inst.mdp.n_states, inst.mdp.n_actions)
    with pytest.raises(Exception):
        FinitePolicyClass([])


def test_snapshot_format():
    text = format_snapshots([(0, np.array([0.0, 1.5])), (3, np.array([-2.0, 0.25]))])
    assert text == "0,0.0,1.5\n3,-2.0,0.25\n"
