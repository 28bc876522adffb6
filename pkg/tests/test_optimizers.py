import copy

import numpy as np
import pytest

from proxvr.errors import ParameterDomainError
from proxvr.optimizers import (
    MethodConfig,
    init_state,
    lsvrg_step,
    lsvrp_step,
    run,
    sgd_step,
    sppm_step,
    svrg_run,
    svrg_step,
)
from proxvr.problems import (
    QuadraticProblem,
    compute_stats,
    generate_quadratic,
    grad_component,
    grad_full,
)
from proxvr.prox import QuadraticProxCache
from proxvr.theory import theoretical_stepsize

from helpers import exact_zero_mean_problem


@pytest.fixture(scope="module")
def small_problem():
    return generate_quadratic(6, 8, 10.0, seed=42)


@pytest.fixture(scope="module")
def small_stats(small_problem):
    return compute_stats(small_problem)


def peek_index(problem, state):
    """Component index the next step will draw, read off a cloned stream."""
    return int(copy.deepcopy(state.rng).integers(problem.n))


class TestMethodConfig:
    def test_rejects_unknown_method(self):
        with pytest.raises(ParameterDomainError):
            MethodConfig("adam", 0.1)

    def test_refresh_probability_required(self):
        with pytest.raises(ParameterDomainError):
            MethodConfig("lsvrp", 0.1)
        with pytest.raises(ParameterDomainError):
            MethodConfig("lsvrg", 0.1, p=1.5)

    def test_svrg_needs_period(self):
        with pytest.raises(ParameterDomainError):
            MethodConfig("svrg", 0.1)


class TestSgd:
    def test_single_component_contracts(self):
        problem = generate_quadratic(1, 5, 4.0, seed=1)
        stats = compute_stats(problem)
        gamma = 0.9 * 2.0 / stats.l_max
        state = init_state(problem, np.ones(5), rng=0, with_reference=False)
        for _ in range(10):
            new = sgd_step(problem, state, gamma)
            assert np.linalg.norm(new.x - stats.x_star) <= np.linalg.norm(
                state.x - stats.x_star
            ) * (1 + 1e-12)
            state = new

    def test_leaves_minimiser_without_variance_reduction(self, small_problem, small_stats):
        state = init_state(
            small_problem, small_stats.x_star, rng=3, with_reference=False
        )
        i = peek_index(small_problem, state)
        new = sgd_step(small_problem, state, 0.5)
        assert np.linalg.norm(new.x - small_stats.x_star) > 1e-6
        # the step is exactly -gamma * g_i(x_star)
        expected = state.x - 0.5 * grad_component(small_problem, i, state.x)
        assert np.array_equal(new.x, expected)

    def test_identity_hessians_hand_value(self):
        mats = np.stack([np.eye(3)] * 4)
        rng = np.random.default_rng(7)
        offs = rng.standard_normal((4, 3))
        offs -= offs.mean(axis=0)
        problem = QuadraticProblem(matrices=mats, offsets=offs)
        state = init_state(problem, np.zeros(3), rng=11, with_reference=False)
        i = peek_index(problem, state)
        new = sgd_step(problem, state, 0.5)
        assert np.allclose(new.x, -0.5 * problem.offsets[i], atol=1e-16)

    def test_counter_increments(self, small_problem):
        state = init_state(small_problem, np.zeros(8), rng=0, with_reference=False)
        state = sgd_step(small_problem, state, 0.1)
        assert state.k == 1


class TestSvrg:
    def test_single_component_is_gradient_descent(self):
        problem = generate_quadratic(1, 6, 5.0, seed=2)
        gamma, K = 0.05, 30
        iterates = svrg_run(problem, np.ones(6), None, gamma, m=7, K=K, rng=5)
        x = np.ones(6)
        for k in range(K):
            x = x - gamma * grad_full(problem, x)
            assert np.array_equal(iterates[k + 1], x)

    def test_unit_period_is_gradient_descent(self, small_problem):
        # exact in real arithmetic; the estimator associativity leaves
        # rounding-level residue when the cancellation is g_i(x) - g_i(w)
        gamma, K = 0.02, 25
        iterates = svrg_run(small_problem, np.ones(8), None, gamma, m=1, K=K, rng=9)
        x = np.ones(8)
        for k in range(K):
            x = x - gamma * grad_full(small_problem, x)
            np.testing.assert_allclose(iterates[k + 1], x, rtol=1e-12, atol=1e-14)

    def test_reference_moves_only_on_period(self, small_problem):
        state = init_state(small_problem, np.ones(8), rng=1)
        m = 4
        for k in range(1, 9):
            prev_w = state.w
            state = svrg_step(small_problem, state, 0.01, m)
            if k % m == 0:
                assert np.array_equal(state.w, state.x)
            else:
                assert state.w is prev_w

    def test_frozen_reference_at_minimiser_gives_exact_zero_update(self):
        # offsets cancel in exact pairs, so x_star and grad_full(x_star)
        # are exact zeros and the estimator vanishes bitwise
        problem = exact_zero_mean_problem(n=4, d=5, seed=8)
        stats = compute_stats(problem)
        assert np.all(stats.x_star == 0.0)
        state = init_state(problem, stats.x_star, stats.x_star, rng=2)
        for _ in range(5):
            state = svrg_step(problem, state, 0.3, m=10**9)
            assert np.all(state.x == 0.0)


class TestLsvrg:
    def test_refresh_probability_one_tracks_iterate(self, small_problem):
        state = init_state(small_problem, np.ones(8), rng=4)
        for _ in range(5):
            state = lsvrg_step(small_problem, state, 0.01, p=1.0)
            assert np.array_equal(state.w, state.x)

    def test_coin_sequence_reproducible(self, small_problem):
        runs = []
        for _ in range(2):
            state = init_state(small_problem, np.ones(8), rng=77)
            refreshes = []
            for _ in range(20):
                prev_w = state.w
                state = lsvrg_step(small_problem, state, 0.01, p=0.5)
                refreshes.append(state.w is not prev_w)
            runs.append(refreshes)
        assert runs[0] == runs[1]

    def test_estimator_unbiased_over_indices(self, small_problem):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(8)
        w = rng.standard_normal(8)
        full_w = grad_full(small_problem, w)
        directions = [
            grad_component(small_problem, i, x)
            + (full_w - grad_component(small_problem, i, w))
            for i in range(small_problem.n)
        ]
        target = grad_full(small_problem, x)
        assert np.abs(np.mean(directions, axis=0) - target).max() <= 1e-12 * max(
            1.0, np.abs(target).max()
        )

    def test_cache_coherent_along_run(self, small_problem):
        state = init_state(small_problem, np.ones(8), rng=6)
        for _ in range(30):
            state = lsvrg_step(small_problem, state, 0.01, p=0.3)
            expected = grad_full(small_problem, state.w)
            assert np.abs(state.full_grad_at_w - expected).max() <= 1e-12


class TestSppm:
    def test_prox_hand_value(self):
        problem = QuadraticProblem(
            matrices=np.array([np.eye(2)]), offsets=np.zeros((1, 2))
        )
        state = init_state(
            problem, np.array([2.0, 0.0]), rng=0, with_reference=False
        )
        new = sppm_step(problem, state, 1.0)
        assert np.allclose(new.x, [1.0, 0.0], atol=1e-14)

    def test_single_component_contraction_factor(self):
        problem = generate_quadratic(1, 4, 6.0, seed=3)
        stats = compute_stats(problem)
        gamma = 0.8
        state = init_state(problem, np.full(4, 3.0), rng=1, with_reference=False)
        for _ in range(8):
            new = sppm_step(problem, state, gamma)
            lhs = np.linalg.norm(new.x - stats.x_star)
            rhs = np.linalg.norm(state.x - stats.x_star) / (1 + gamma * stats.mu)
            assert lhs <= rhs * (1 + 1e-12)
            state = new

    def test_implicit_identity(self, small_problem):
        gamma = 0.4
        state = init_state(small_problem, np.ones(8), rng=12, with_reference=False)
        for _ in range(20):
            i = peek_index(small_problem, state)
            new = sppm_step(small_problem, state, gamma)
            residual = np.linalg.norm(
                new.x + gamma * grad_component(small_problem, i, new.x) - state.x
            )
            assert residual <= 1e-10 * (1 + np.linalg.norm(state.x))
            state = new

    def test_cache_gamma_mismatch_rejected(self, small_problem):
        cache = QuadraticProxCache(small_problem, 0.5)
        state = init_state(small_problem, np.ones(8), rng=0, with_reference=False)
        with pytest.raises(ParameterDomainError):
            sppm_step(small_problem, state, 0.25, prox=cache)


class TestLsvrp:
    def test_single_component_reduces_to_sppm(self):
        problem = generate_quadratic(1, 5, 7.0, seed=4)
        gamma = 0.3
        a = init_state(problem, np.ones(5), rng=21)
        b = init_state(problem, np.ones(5), rng=21, with_reference=False)
        for _ in range(15):
            a = lsvrp_step(problem, a, gamma, p=0.5)
            b = sppm_step(problem, b, gamma)
            assert np.linalg.norm(a.x - b.x) <= 1e-9

    def test_fixed_point_exact_instance(self):
        problem = exact_zero_mean_problem(n=4, d=6, seed=5)
        stats = compute_stats(problem)
        state = init_state(problem, stats.x_star, rng=3)
        for _ in range(20):
            state = lsvrp_step(problem, state, 0.7, p=0.25)
            assert np.linalg.norm(state.x - stats.x_star) <= 1e-12

    def test_fixed_point_generated_instance(self, small_problem, small_stats):
        state = init_state(small_problem, small_stats.x_star, rng=8)
        gamma = theoretical_stepsize(np.sqrt(small_stats.delta_sq), 0.2)
        for _ in range(100):
            state = lsvrp_step(small_problem, state, gamma, p=0.2)
            assert (
                float((state.x - small_stats.x_star) @ (state.x - small_stats.x_star))
                <= 1e-18
            )

    def test_implicit_identity_on_random_steps(self, small_problem):
        gamma = 0.2
        state = init_state(small_problem, 2.0 * np.ones(8), rng=13)
        for _ in range(100):
            i = peek_index(small_problem, state)
            shift = grad_component(small_problem, i, state.w) - state.full_grad_at_w
            new = lsvrp_step(small_problem, state, gamma, p=0.3)
            # x' = x - gamma * (g_i(x') - g_i(w) + g(w)), i.e. the prox
            # fixed-point identity at the shifted anchor
            residual = np.linalg.norm(
                new.x
                + gamma * grad_component(small_problem, i, new.x)
                - (state.x + gamma * shift)
            )
            assert residual <= 1e-10 * (1 + np.linalg.norm(state.x))
            state = new

    def test_cache_coherent_along_run(self, small_problem):
        state = init_state(small_problem, np.ones(8), rng=14)
        for _ in range(30):
            state = lsvrp_step(small_problem, state, 0.05, p=0.4)
            expected = grad_full(small_problem, state.w)
            assert np.abs(state.full_grad_at_w - expected).max() <= 1e-12


class TestReductionLaws:
    def test_explicit_methods_collapse_to_gradient_descent(self):
        problem = generate_quadratic(1, 7, 9.0, seed=6)
        stats = compute_stats(problem)
        gamma, K = 0.04, 40
        x0 = np.full(7, 2.0)
        lsvrg = run(
            problem, MethodConfig("lsvrg", gamma, p=0.5), x0, K=K, seed=33,
            stats=stats,
        )
        svrg = run(
            problem, MethodConfig("svrg", gamma, m=5), x0, K=K, seed=33,
            stats=stats,
        )
        x = x0.copy()
        gd_sq = [float((x - stats.x_star) @ (x - stats.x_star))]
        for _ in range(K):
            x = x - gamma * grad_full(problem, x)
            gd_sq.append(float((x - stats.x_star) @ (x - stats.x_star)))
        assert np.array_equal(lsvrg.sq_dist, svrg.sq_dist)
        assert np.array_equal(lsvrg.sq_dist, np.array(gd_sq))

    def test_proximal_methods_collapse_to_proximal_point(self):
        problem = generate_quadratic(1, 7, 9.0, seed=6)
        stats = compute_stats(problem)
        gamma, K = 0.3, 40
        x0 = np.full(7, 2.0)
        lsvrp = run(
            problem, MethodConfig("lsvrp", gamma, p=0.5), x0, K=K, seed=34,
            stats=stats,
        )
        sppm = run(
            problem, MethodConfig("sppm", gamma), x0, K=K, seed=34, stats=stats
        )
        assert np.abs(lsvrp.sq_dist - sppm.sq_dist).max() <= 1e-9


class TestRun:
    def test_initial_entry_is_exact(self, small_problem, small_stats):
        x0 = np.full(8, 1.5)
        record = run(
            small_problem, MethodConfig("sgd", 0.01), x0, K=1, seed=0,
            stats=small_stats,
        )
        expected = float(
            (x0 - small_stats.x_star) @ (x0 - small_stats.x_star)
        )
        assert record.sq_dist[0] == expected

    def test_same_seed_bitwise_identical(self, small_problem, small_stats):
        config = MethodConfig("lsvrp", 0.05, p=0.2)
        x0 = np.ones(8)
        first = run(small_problem, config, x0, K=60, seed=99, stats=small_stats)
        second = run(small_problem, config, x0, K=60, seed=99, stats=small_stats)
        assert np.array_equal(first.sq_dist, second.sq_dist)

    def test_lsvrp_converges_with_closed_form_stepsize(self, small_problem, small_stats):
        p = 1.0 / small_problem.n
        gamma = theoretical_stepsize(np.sqrt(small_stats.delta_sq), p)
        record = run(
            small_problem, MethodConfig("lsvrp", gamma, p=p), np.full(8, 5.0),
            K=600, seed=44, stats=small_stats,
        )
        assert np.isfinite(record.sq_dist).all()
        assert record.sq_dist[-1] <= 1e-3 * record.sq_dist[0]

    def test_record_selectors(self, small_problem, small_stats):
        record = run(
            small_problem, MethodConfig("lsvrp", 0.05, p=0.3), np.ones(8),
            K=10, seed=1, stats=small_stats,
            record=("sq_dist", "lyapunov", "f_gap", "iterates"),
        )
        assert record.sq_dist.shape == (11,)
        assert record.lyapunov.shape == (11,)
        assert record.f_gap.shape == (11,)
        assert record.iterates.shape == (11, 8)
        # the certificate value dominates the squared distance
        assert np.all(record.lyapunov >= record.sq_dist - 1e-15)
        assert record.f_gap.min() >= -1e-10

    def test_lyapunov_needs_probability(self, small_problem, small_stats):
        with pytest.raises(ParameterDomainError):
            run(
                small_problem, MethodConfig("sppm", 0.05), np.ones(8), K=5,
                seed=0, stats=small_stats, record=("sq_dist", "lyapunov"),
            )

    def test_rejects_bad_inputs(self, small_problem):
        with pytest.raises(ParameterDomainError):
            run(small_problem, MethodConfig("sgd", 0.1), np.ones(8), K=0, seed=0)
        with pytest.raises(ParameterDomainError):
            run(
                small_problem, MethodConfig("sgd", 0.1), np.ones(3), K=5, seed=0
            )
        with pytest.raises(ParameterDomainError):
            run(
                small_problem, MethodConfig("sgd", 0.1), np.ones(8), K=5,
                seed=0, record=("nonsense",),
            )
