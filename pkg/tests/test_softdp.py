import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import random_policy
from xpolab.dcmdp import DCMDP, TabularPolicy
from xpolab.diagnostics import counterexample_instance
from xpolab.errors import ValidationError
from xpolab.harness.instances import random_tabular
from xpolab.softdp import (
    bellman_op,
    boltzmann_policy,
    j_beta,
    j_beta_by_enumeration,
    kl_regret,
    soft_value,
    soft_values,
    solve_soft_dp,
)


# -- soft_value ------------------------------------------------------------------------


@pytest.mark.parametrize("beta", [1e-3, 0.5, 7.0])
def test_soft_value_constant(beta):
    ref = TabularPolicy(np.array([[0.2, 0.3, 0.5]]))
    assert soft_value(np.full((1, 3), 0.7), 0, beta, ref) == pytest.approx(0.7, abs=1e-12)


def test_soft_value_large_beta_is_mean():
    rng = np.random.default_rng(0)
    ref = TabularPolicy(rng.dirichlet(np.ones(4), size=3))
    f = rng.uniform(-1, 1, size=(3, 4))
    v = soft_values(f, 1e6, ref)
    np.testing.assert_allclose(v, (ref.table * f).sum(axis=1), atol=1e-5)


def test_soft_value_spot():
    # log((1 + e) / 2)
    v = soft_value(np.array([[0.0, 1.0]]), 0, 1.0, TabularPolicy.uniform(1, 2))
    assert v == pytest.approx(math.log((1 + math.e) / 2), abs=1e-15)
    assert round(v, 6) == 0.620115


def test_soft_value_no_overflow_small_beta():
    f = np.array([[1.0, 0.5]])
    v = soft_value(f, 0, 1e-3, TabularPolicy.uniform(1, 2))
    assert v == pytest.approx(1.0 + 1e-3 * math.log(0.5), abs=1e-12)


def test_soft_value_rejects_beta():
    for b in (0.0, -1.0):
        with pytest.raises(ValidationError):
            soft_value(np.zeros((1, 2)), 0, b, TabularPolicy.uniform(1, 2))


@given(st.integers(0, 10**6), st.floats(0.05, 5.0))
def test_soft_value_variational(seed, beta):
    rng = np.random.default_rng(seed)
    ref = TabularPolicy(rng.dirichlet(np.ones(3), size=2))
    f = rng.normal(size=(2, 3))
    v = soft_values(f, beta, ref)
    for s in range(2):
        for _ in range(25):
            q = rng.dirichlet(np.ones(3))
            lower = float(np.sum(q * (f[s] - beta * np.log(q / ref.table[s]))))
            assert v[s] >= lower - 1e-12


@given(st.integers(0, 10**6), st.floats(-50, 50))
def test_shift_covariance(seed, c):
    rng = np.random.default_rng(seed)
    ref = TabularPolicy(rng.dirichlet(np.ones(4), size=3))
    f = rng.normal(size=(3, 4))
    beta = 0.3
    np.testing.assert_allclose(soft_values(f + c, beta, ref), soft_values(f, beta, ref) + c, atol=1e-12)
    diff = np.abs(boltzmann_policy(f + c, beta, ref).table - boltzmann_policy(f, beta, ref).table)
    assert diff.max() <= 1e-12


# -- boltzmann_policy --------------------------------------------------------------------


def test_boltzmann_constant_is_reference():
    ref = TabularPolicy(np.array([[0.1, 0.9], [0.6, 0.4]]))
    np.testing.assert_allclose(boltzmann_policy(np.full((2, 2), 3.0), 0.2, ref).table, ref.table,
                               atol=1e-15)


def test_boltzmann_spot():
    pi = boltzmann_policy(np.array([[0.0, 1.0]]), 1.0, TabularPolicy.uniform(1, 2))
    e = math.e
    np.testing.assert_allclose(pi.table[0], [1 / (1 + e), e / (1 + e)], atol=1e-15)


def test_boltzmann_small_beta_concentrates():
    rng = np.random.default_rng(1)
    ref = TabularPolicy(rng.dirichlet(np.ones(3), size=4))
    f = np.array([[0.0, 0.1, -0.5]] * 4)
    pi = boltzmann_policy(f, 1e-4, ref)
    assert np.all(1.0 - pi.table[:, 1] <= 1e-3)


def test_boltzmann_rows_normalised_and_maximising():
    rng = np.random.default_rng(2)
    ref = TabularPolicy(rng.dirichlet(np.ones(3), size=5))
    f = rng.normal(size=(5, 3))
    beta = 0.4
    pi = boltzmann_policy(f, beta, ref)
    assert np.all(np.abs(pi.table.sum(axis=1) - 1) <= 1e-12)

    def score(q, s):
        return float(np.sum(q * (f[s] - beta * np.log(q / ref.table[s]))))

    for s in range(5):
        best = score(pi.table[s], s)
        for _ in range(50):
            q = np.clip(pi.table[s] + rng.normal(0, 0.05, 3), 1e-9, None)
            q /= q.sum()
            assert score(q, s) <= best + 1e-9


# -- bellman_op / solve_soft_dp ------------------------------------------------------------


def test_bellman_horizon_one_is_reward():
    inst = random_tabular(states=3, actions=3, horizon=1, seed=0)
    f = np.random.default_rng(0).normal(size=(inst.mdp.n_states, 3))
    np.testing.assert_array_equal(bellman_op(inst.mdp, f, 0.5, inst.pi_ref), inst.mdp.reward)


def test_bellman_zero_function():
    inst = random_tabular(states=3, actions=2, horizon=3, seed=4)
    np.testing.assert_allclose(bellman_op(inst.mdp, np.zeros((inst.mdp.n_states, 2)), 0.3, inst.pi_ref),
                               inst.mdp.reward, atol=1e-15)


def test_fixed_point_residual():
    inst = random_tabular(states=4, actions=3, horizon=3, seed=9)
    sol = solve_soft_dp(inst.mdp, 0.2, inst.pi_ref)
    assert np.max(np.abs(bellman_op(inst.mdp, sol.qstar, 0.2, inst.pi_ref) - sol.qstar)) <= 1e-9
    np.testing.assert_allclose(sol.vstar, soft_values(sol.qstar, 0.2, inst.pi_ref), atol=1e-9)
    assert np.all(np.abs(sol.pistar.table.sum(axis=1) - 1) <= 1e-12)


def test_single_action_mdp():
    mdp = DCMDP(3, [[0], [1], [2]], 1, [1, 0, 0], [[1], [2], [-1]], [[0.1], [0.2], [0.3]], 1.0)
    sol = solve_soft_dp(mdp, 0.5, TabularPolicy.uniform(3, 1))
    assert sol.initial_value(mdp) == pytest.approx(0.6, abs=1e-15)
    np.testing.assert_array_equal(sol.pistar.table, 1.0)


def test_counterexample_closed_form():
    beta, c = 0.05, 0.125
    mdp, cls = counterexample_instance(beta, c)
    eps = math.exp(-2.5)
    sol = solve_soft_dp(mdp, beta, cls.pi_ref)
    a = eps * math.exp(1 / beta)
    b = (1 - eps) * math.exp(0.5 / beta)
    assert sol.pistar.table[0, 0] == pytest.approx(a / (a + b), rel=1e-12)


def test_zero_reference_mass_rejected():
    inst = random_tabular(states=2, actions=2, horizon=2, seed=0)
    tab = inst.pi_ref.table.copy()
    s = inst.mdp.layers[1][0]
    tab[s] = [1.0, 0.0]
    with pytest.raises(ValidationError) as ei:
        solve_soft_dp(inst.mdp, 0.3, TabularPolicy(tab))
    assert ei.value.path == f"pi_ref[{s}][1]"


def test_optimality_spot_check(rng):
    for seed in range(5):
        inst = random_tabular(states=4, actions=3, horizon=3, seed=seed)
        sol = solve_soft_dp(inst.mdp, 0.25, inst.pi_ref)
        top = j_beta(inst.mdp, sol.pistar, 0.25, inst.pi_ref)
        for _ in range(100):
            assert top >= j_beta(inst.mdp, random_policy(rng, inst.mdp), 0.25, inst.pi_ref) - 1e-9


def test_soft_solution_csv():
    inst = random_tabular(states=2, actions=2, horizon=2, seed=1)
    sol = solve_soft_dp(inst.mdp, 0.5, inst.pi_ref)
    lines = sol.to_csv().strip().splitlines()
    assert lines[0] == "state,action,qstar,vstar,pistar"
    assert len(lines) == 1 + inst.mdp.n_states * 2


# -- j_beta / kl_regret -------------------------------------------------------------------


def test_j_beta_reference_is_expected_reward():
    inst = random_tabular(states=3, actions=3, horizon=3, seed=6)
    d = np.array(oracles.occupancy(inst.mdp, inst.pi_ref))
    r = np.array([t[3] for t in oracles.trajectories(inst.mdp)])
    assert j_beta(inst.mdp, inst.pi_ref, 0.7, inst.pi_ref) == pytest.approx(float(d @ r), abs=1e-12)


def test_j_beta_forms_agree_with_oracle(rng):
    for seed in range(6):
        inst = random_tabular(states=3, actions=3, horizon=3, seed=seed)
        pi = random_policy(rng, inst.mdp)
        exact = j_beta(inst.mdp, pi, 0.3, inst.pi_ref)
        assert exact == pytest.approx(j_beta_by_enumeration(inst.mdp, pi, 0.3, inst.pi_ref), abs=1e-12)
        assert exact == pytest.approx(oracles.j_beta(inst.mdp, pi, 0.3, inst.pi_ref), abs=1e-12)


def test_j_beta_beta_range(rng):
    inst = random_tabular(states=3, actions=2, horizon=2, seed=3)
    with pytest.raises(ValidationError):
        j_beta(inst.mdp, inst.pi_ref, 0.0, inst.pi_ref)
    pi = random_policy(rng, inst.mdp)
    plain = float(np.dot(np.array(oracles.occupancy(inst.mdp, pi)),
                         [t[3] for t in oracles.trajectories(inst.mdp)]))
    assert abs(j_beta(inst.mdp, pi, 1e-9, inst.pi_ref) - plain) <= 1e-6 * inst.mdp.rmax


def test_j_beta_support_violation_sentinel():
    inst = random_tabular(states=2, actions=2, horizon=2, seed=2)
    ref = TabularPolicy(np.tile([1.0, 0.0], (inst.mdp.n_states, 1)))
    pi = TabularPolicy.uniform(inst.mdp.n_states, 2)
    val, witness = j_beta(inst.mdp, pi, 0.5, ref, return_witness=True)
    assert val == -math.inf
    assert witness is not None and 1 in witness.actions


def test_j_beta_monte_carlo():
    inst = random_tabular(states=3, actions=2, horizon=3, seed=1)
    pi = inst.finite_class[2]
    est = j_beta(inst.mdp, pi, 0.4, inst.pi_ref, mode="monte_carlo", n=20_000,
                 rng=np.random.default_rng(0))
    exact = j_beta(inst.mdp, pi, 0.4, inst.pi_ref)
    assert abs(est.mean - exact) <= 4 * est.stderr
    with pytest.raises(ValidationError):
        j_beta(inst.mdp, pi, 0.4, inst.pi_ref, mode="monte_carlo")


def test_counterexample_value_gap():
    mdp, cls = counterexample_instance(0.05, 0.125)
    sol = solve_soft_dp(mdp, 0.05, cls.pi_ref)
    gap = j_beta(mdp, sol.pistar, 0.05, cls.pi_ref) - j_beta(mdp, cls.pi_ref, 0.05, cls.pi_ref)
    assert gap >= 1 / 8


def test_regret_of_optimum_is_zero():
    inst = random_tabular(states=4, actions=3, horizon=3, seed=12)
    sol = solve_soft_dp(inst.mdp, 0.15, inst.pi_ref)
    assert abs(kl_regret(inst.mdp, sol.pistar, 0.15, inst.pi_ref)) <= 1e-9


def test_regret_of_reference_counterexample():
    mdp, cls = counterexample_instance(0.02, 0.125)
    assert kl_regret(mdp, cls.pi_ref, 0.02, cls.pi_ref) >= 0.125


def test_regret_uniform_recomputed():
    inst = random_tabular(states=3, actions=3, horizon=3, seed=21)
    uni = TabularPolicy.uniform(inst.mdp.n_states, 3)
    sol = solve_soft_dp(inst.mdp, 0.5, inst.pi_ref)
    expected = (oracles.j_beta(inst.mdp, sol.pistar, 0.5, inst.pi_ref)
                - oracles.j_beta(inst.mdp, uni, 0.5, inst.pi_ref))
    assert kl_regret(inst.mdp, uni, 0.5, inst.pi_ref) == pytest.approx(expected, abs=1e-10)


@given(st.integers(0, 10**6))
def test_regret_non_negative(seed):
    rng = np.random.default_rng(seed)
    inst = random_tabular(states=3, actions=int(rng.integers(2, 4)), horizon=int(rng.integers(1, 4)),
                          seed=seed)
    assert kl_regret(inst.mdp, random_policy(rng, inst.mdp), 0.3, inst.pi_ref) >= -1e-9


def test_implicit_reward_identity_optimal():
    inst = random_tabular(states=4, actions=3, horizon=3, seed=13)
    beta = 0.2
    sol = solve_soft_dp(inst.mdp, beta, inst.pi_ref)
    for s1, st_, ac, r in oracles.trajectories(inst.mdp):
        lr = math.log(oracles.traj_prob(sol.pistar, st_, ac) / oracles.traj_prob(inst.pi_ref, st_, ac))
        assert abs(beta * lr - r + sol.vstar[s1]) <= 1e-8
