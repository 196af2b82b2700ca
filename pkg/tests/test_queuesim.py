"""Integer queue simulation, multiplier identification, and diagnostics."""

import numpy as np
import pytest

from dualsched import (ArrivalProcess, BlockPolicy, ConfigError,
                       ConstantPolicy, ContractViolation, MyopicPolicy,
                       PerturbationStream, QueueState, queue_continuity_check,
                       queue_step, run_dual_ascent, run_network_sim,
                       stability_metric)

from conftest import make_ap_rule, make_ap_spec, make_ap_stream


def zero_arrival_instance():
    spec = make_ap_spec(mean=(0.0, 0.0, 0.0, 0.0), slater=None)
    stream = PerturbationStream.constant([0.0, 0.0, 0.0, 0.0])
    return spec, stream


def balanced_instance():
    """Gentler weights so queues equilibrate within a few thousand slots."""
    spec = make_ap_spec(weights=(1.0, 1.0))
    return spec, make_ap_stream()


class TestQueueState:

    def test_integer_enforced(self):
        with pytest.raises(ContractViolation):
            QueueState(np.array([1.0, 0.5]))
        with pytest.raises(ContractViolation):
            QueueState(np.array([-1, 0]))
        state = QueueState(np.array([2.0, 3.0]))
        assert state.Q.dtype == np.int64

    def test_empty_factory(self):
        state = QueueState.empty(4)
        np.testing.assert_array_equal(state.Q, np.zeros(4, dtype=np.int64))


class TestQueueStep:

    def test_mixed_increment(self):
        state = QueueState(np.array([3, 0]))
        A = np.array([[1.0], [1.0]])
        nxt = queue_step(state, A, [1.0], [-2, 1])
        np.testing.assert_array_equal(nxt.Q, [2, 2])

    def test_empty_absorbing(self):
        state = QueueState.empty(3)
        nxt = queue_step(state, np.zeros((3, 1)), [0.0], [-1, 0, -5])
        np.testing.assert_array_equal(nxt.Q, [0, 0, 0])

    def test_ap_transmit_step(self, ap_spec):
        state = QueueState(np.array([0, 0, 5, 0]))
        nxt = queue_step(state, ap_spec.A, [1.0, 0.0], [1, 0, -1, -1])
        np.testing.assert_array_equal(nxt.Q, [0, 0, 5, 0])

    def test_non_integer_increment_rejected(self, ap_spec):
        state = QueueState.empty(4)
        with pytest.raises(ContractViolation):
            queue_step(state, ap_spec.A, [0.5, 0.0], [0, 0, 0, 0])


class TestArrivalProcess:

    def test_integer_draws(self, ap_stream):
        proc = ArrivalProcess(ap_stream)
        rng = np.random.default_rng(0)
        draws = np.array([proc.sample(rng, k) for k in range(200)])
        assert draws.dtype == np.int64
        assert set(np.unique(draws[:, 0])) <= {0, 1}
        np.testing.assert_array_equal(draws[:, 2], -1)

    def test_fractional_constant_rejected(self):
        with pytest.raises(ContractViolation):
            ArrivalProcess(PerturbationStream.constant([0.25]))


class TestRunNetworkSim:

    def test_empty_system_stays_empty(self):
        spec, stream = zero_arrival_instance()
        sim = run_network_sim(spec, stream, alpha=0.01, iters=200,
                              policy=MyopicPolicy(), seed=0)
        assert np.all(sim.queues == 0)
        assert np.all(sim.actions == 0)  # the f-minimizing zero action
        np.testing.assert_array_equal(sim.lambdas, 0.0)

    def test_queues_integer_and_nonnegative(self, ap_spec):
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=1500, policy=MyopicPolicy(), seed=1)
        assert sim.queues.dtype == np.int64
        assert np.all(sim.queues >= 0)
        assert sim.queues.shape == (1501, 4)

    def test_determinism_and_seed_sensitivity(self, ap_spec):
        kw = dict(alpha=0.01, iters=400, policy=MyopicPolicy())
        a = run_network_sim(ap_spec, make_ap_stream(), seed=5, **kw)
        b = run_network_sim(ap_spec, make_ap_stream(), seed=5, **kw)
        c = run_network_sim(ap_spec, make_ap_stream(), seed=6, **kw)
        np.testing.assert_array_equal(a.queues, b.queues)
        np.testing.assert_array_equal(a.xs, b.xs)
        assert not np.array_equal(a.queues, c.queues)

    def test_multiplier_identification_scaling(self, ap_spec):
        """The mu recursion reproduces alpha * Q bitwise for dyadic alpha."""
        alpha = 1.0 / 128.0
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=alpha,
                              iters=600, policy=MyopicPolicy(), seed=2)
        pts = ap_spec.actions.points
        mu = alpha * sim.queues[0].astype(float)
        for k in range(sim.iters):
            incr = ap_spec.A @ pts[int(sim.actions[k])] + sim.deltas[k]
            mu = np.maximum(mu + alpha * incr, 0.0)
            assert np.array_equal(mu, alpha * sim.queues[k + 1])

    def test_reference_matches_dual_ascent_delegation(self, ap_spec):
        policy = BlockPolicy(T=3, rule=make_ap_rule())
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=300, policy=policy, seed=9)
        res = run_dual_ascent(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=300,
                              eps_source="from-queue-identification",
                              policy=policy, seed=9)
        np.testing.assert_array_equal(res.trajectory.lambdas, sim.lambdas)
        np.testing.assert_array_equal(res.trajectory.eps_norms,
                                      sim.eps_norms)
        gaps = np.linalg.norm(sim.lambdas[:-1] - sim.mus[:-1], axis=1)
        np.testing.assert_allclose(sim.eps_norms, gaps, atol=1e-12)

    def test_block_capacity_precondition(self, ap_spec):
        with pytest.raises(ConfigError):
            run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                            iters=100, policy=BlockPolicy(T=1,
                                                          rule=make_ap_rule()),
                            seed=0)
        # T = 3 gives capacity exactly 7/9, which the instance uses.
        run_network_sim(ap_spec, make_ap_stream(), alpha=0.01, iters=27,
                        policy=BlockPolicy(T=3, rule=make_ap_rule()), seed=0)

    def test_block_rule_respected_in_emitted_schedule(self, ap_spec):
        rule = make_ap_rule()
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=900, policy=BlockPolicy(T=3, rule=rule),
                              seed=3)
        acts = sim.actions
        for a, b in zip(acts, acts[1:]):
            assert rule.ok(int(a), int(b))

    def test_fractional_action_points_rejected(self):
        bad = make_ap_spec()
        bad.actions.points[1, 0] = 0.5
        with pytest.raises(ContractViolation):
            run_network_sim(bad, make_ap_stream(), alpha=0.01, iters=10,
                            policy=MyopicPolicy(), seed=0)

    def test_input_validation(self, ap_spec):
        with pytest.raises(ContractViolation):
            run_network_sim(ap_spec, make_ap_stream(), alpha=0.0, iters=10,
                            policy=MyopicPolicy())
        with pytest.raises(ContractViolation):
            run_network_sim(ap_spec, make_ap_stream(), alpha=0.01, iters=0,
                            policy=MyopicPolicy())
        with pytest.raises(ContractViolation):
            run_network_sim(ap_spec, make_ap_stream(b1=0.3), alpha=0.01,
                            iters=10, policy=MyopicPolicy())


class TestContinuity:

    def test_exact_tracking_zero_psi(self):
        spec, stream = zero_arrival_instance()
        sim = run_network_sim(spec, stream, alpha=0.01, iters=300,
                              policy=MyopicPolicy(), seed=0)
        report = queue_continuity_check(sim, psi=0.0)
        assert report.ok
        assert report.max_gap == 0.0

    def test_certified_bound_holds_myopic(self, ap_spec):
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=2000, policy=MyopicPolicy(), seed=7)
        report = queue_continuity_check(sim)
        assert report.ok
        assert report.violations == 0
        assert report.max_ratio <= 1.0

    def test_adversarial_constant_action_flagged(self, ap_spec):
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=2000, policy=ConstantPolicy(0), seed=7)
        report = queue_continuity_check(sim)
        assert not report.ok
        assert not np.isfinite(report.psi_x)
        assert report.growth_ratio > 1.0

    def test_explicit_psi_violation_reported(self, ap_spec):
        sim = run_network_sim(ap_spec, make_ap_stream(), alpha=0.01,
                              iters=1000, policy=ConstantPolicy(0), seed=7)
        report = queue_continuity_check(sim, psi=0.5)
        assert not report.ok
        assert report.violations > 0
        assert report.first_violation is not None


class TestStability:

    def test_empty_system(self):
        spec, stream = zero_arrival_instance()
        sim = run_network_sim(spec, stream, alpha=0.01, iters=300,
                              policy=MyopicPolicy(), seed=0)
        report = stability_metric(sim)
        assert report.stable
        assert report.slope == 0.0
        np.testing.assert_array_equal(report.averages, 0.0)

    def test_balanced_instance_stable(self):
        spec, stream = balanced_instance()
        sim = run_network_sim(spec, stream, alpha=0.01, iters=4000,
                              policy=BlockPolicy(T=3, rule=make_ap_rule()),
                              seed=11)
        report = stability_metric(sim)
        assert report.stable
        assert report.averages[-1].sum() < 200.0

    def test_overload_flagged(self):
        spec = make_ap_spec(mean=(0.9, 0.9, -1.0, -1.0), slater=None)
        stream = make_ap_stream(b1=0.9, b2=0.9)
        sim = run_network_sim(spec, stream, alpha=0.01, iters=4000,
                              policy=MyopicPolicy(), seed=11)
        report = stability_metric(sim)
        assert not report.stable
        assert report.slope > report.slope_tol
