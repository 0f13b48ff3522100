"""KKT halfspace inference tests: Theorem-2 bounds, pruning, product space."""

import warnings

import numpy as np
import pytest

from riskirl import lp
from riskirl.costs import ControlBounds, CostOracle, FeatureCostModel
from riskirl.envelopes import RiskEnvelope, hausdorff, intersect_halfspace
from riskirl.errors import InconsistentDemonstrationWarning
from riskirl.lq import (
    lq_expert_demo,
    lq_feature_cost_model,
    lq_true_weights,
    sample_lq_system,
    weighted_cost_oracle,
)
from riskirl.planning import solve_product_forward, solve_static_forward
from riskirl.static_inference import (
    Demonstration,
    ProductPolytope,
    _kkt_lp,
    kkt_halfspace,
    kkt_halfspace_product,
    prune_envelope,
    prune_envelope_trace,
    prune_product,
    recover_weights_and_envelope,
    saturation_sets,
)

from test_planning import scalar_quadratic_cost


class TestSaturationSets:
    def setup_method(self):
        self.bounds = ControlBounds(lower=[-1.0, -1.0], upper=[1.0, 1.0])

    def test_interior_empty(self):
        demo = Demonstration(state=[0.0], control=[0.2, -0.3])
        jp, jm = saturation_sets(demo, self.bounds)
        assert jp == set() and jm == set()

    def test_fully_saturated_above(self):
        demo = Demonstration(state=[0.0], control=[1.0, 1.0])
        jp, jm = saturation_sets(demo, self.bounds)
        assert jp == {0, 1} and jm == set()

    def test_tolerance_lower(self):
        demo = Demonstration(state=[0.0], control=[-1.0 + 5e-7, 0.0])
        jp, jm = saturation_sets(demo, self.bounds, tol=1e-6)
        assert jm == {0} and jp == set()


class TestKktHalfspace:
    def test_scalar_symmetric_instance(self):
        # expert envelope {(0.5, 0.5)} acting at the exact optimum u* = 0;
        # the 1e-3 control grid confirms u* = 0 for this envelope
        cost = scalar_quadratic_cost()
        grid = np.arange(-2.0, 2.0 + 1e-9, 1e-3)
        vals = [0.5 * (u - 1) ** 2 + 0.5 * (u + 1) ** 2 for u in grid]
        assert abs(grid[int(np.argmin(vals))]) < 1e-9
        demo = Demonstration(state=[0.0], control=[0.0])
        bounds = ControlBounds(lower=[-2.0], upper=[2.0])
        normal, offset = kkt_halfspace(demo, cost, RiskEnvelope.simplex(2), bounds)
        np.testing.assert_allclose(normal, [1.0, 1.0])
        assert offset >= 1.0 - 1e-9
        assert normal @ np.array([0.5, 0.5]) <= offset + 1e-9

    def test_risk_neutral_expert_point_in_halfspace(self):
        rng = np.random.default_rng(2)
        sys = sample_lq_system(8, n=3, m=2, L=3, n_envelope_samples=1)
        p = sys.true_envelope.vertices[0]
        bounds = ControlBounds.box(2, 10.0)
        cost = sys.cost_oracle()
        for _ in range(5):
            x = rng.standard_normal(3)
            u, _ = solve_static_forward(x, sys.true_envelope, cost, bounds)
            normal, offset = kkt_halfspace(Demonstration(x, u), cost, RiskEnvelope.simplex(3), bounds)
            assert normal @ p <= offset + 1e-7

    def test_saturated_case_sigma_positive(self):
        # bounds force u* = u+ = -0.5 under the worst-case envelope; the LP's
        # sigma+ multiplier is strictly positive at the optimum
        cost = scalar_quadratic_cost()
        bounds = ControlBounds(lower=[-2.0], upper=[-0.5])
        grid = np.arange(-2.0, -0.5 + 1e-9, 1e-3)
        vals = [max((u - 1) ** 2, (u + 1) ** 2) for u in grid]
        assert grid[int(np.argmin(vals))] == pytest.approx(-0.5, abs=1e-9)
        demo = Demonstration(state=[0.0], control=[-0.5])
        jp, jm = saturation_sets(demo, bounds)
        assert jp == {0}
        g = cost.eval(demo.state, demo.control)
        grad = cost.grad_u(demo.state, demo.control)
        problem = _kkt_lp(g, grad, jp, jm, RiskEnvelope.simplex(2).halfspaces, 1e-6)
        sol = lp.solve(problem)
        assert sol.status == lp.OPTIMAL
        sigma_plus = sol.primal[2]
        assert sigma_plus > 0.1
        assert sol.value == pytest.approx(2.25, abs=1e-6)

    def test_remark2_tightening(self):
        sys = sample_lq_system(4, n=3, m=2, L=3, n_envelope_samples=4)
        bounds = ControlBounds.box(2, 10.0)
        cost = sys.cost_oracle()
        demos = lq_expert_demo(sys, 6, 8, bounds=bounds)
        env = RiskEnvelope.simplex(3)
        for d in demos:
            _, tau_full = kkt_halfspace(d, cost, RiskEnvelope.simplex(3), bounds)
            normal, tau_tight = kkt_halfspace(d, cost, env, bounds)
            assert tau_tight <= tau_full + 1e-9
            env = intersect_halfspace(env, normal, tau_tight)


class TestPruneEnvelope:
    def test_zero_demos_full_simplex(self):
        env = prune_envelope([], cost=None, bounds=None, dim=3)
        assert env.same_set(RiskEnvelope.simplex(3))

    def test_containment_and_nesting(self):
        for seed in (0, 1, 2):
            sys = sample_lq_system(seed, n=3, m=2, L=3, n_envelope_samples=4)
            bounds = ControlBounds.box(2, 10.0)
            demos = lq_expert_demo(sys, seed + 50, 10, bounds=bounds)
            trace = prune_envelope_trace(demos, sys.cost_oracle(), bounds)
            for step, env in enumerate(trace):
                assert env.contains_all(sys.true_envelope.vertices, tol=1e-6), f"containment broke at step {step}"
            for prev, nxt in zip(trace, trace[1:]):
                assert prev.contains_all(nxt.vertices, tol=1e-7)

    def test_inconsistent_demo_skipped_with_warning(self):
        # interior control with strictly positive cost gradient in every
        # mode: no simplex point satisfies stationarity
        def _eval(x, u):
            return np.array([u[0], 2.0 * u[0]])

        def _grad(x, u):
            return np.array([[1.0], [2.0]])

        cost = CostOracle(eval=_eval, grad_u=_grad)
        bounds = ControlBounds(lower=[-1.0], upper=[1.0])
        demos = [Demonstration(state=[0.0], control=[0.0])]
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            env = prune_envelope(demos, cost, bounds, dim=2)
        assert any(issubclass(w.category, InconsistentDemonstrationWarning) for w in rec)
        assert env.same_set(RiskEnvelope.simplex(2))

    def test_lq_pruning_tightens(self):
        sys = sample_lq_system(7, n=3, m=2, L=3, n_envelope_samples=4)
        bounds = ControlBounds.box(2, 10.0)
        demos = lq_expert_demo(sys, 77, 25, bounds=bounds)
        trace = prune_envelope_trace(demos, sys.cost_oracle(), bounds)
        dists = [hausdorff(env, sys.true_envelope) for env in trace]
        # monotone approach (nesting + containment imply non-increase)
        for a, b in zip(dists, dists[1:]):
            assert b <= a + 1e-9
        assert dists[-1] < 0.75 * dists[0]


class TestProductSpace:
    def test_h1_degenerates_to_known_cost(self):
        sys = sample_lq_system(5, n=3, m=2, L=2, n_envelope_samples=3)
        model, F = lq_feature_cost_model(sys, 6, H=1)
        cost = weighted_cost_oracle(sys, F, [1.0])
        bounds = ControlBounds.box(2, 10.0)
        x = np.random.default_rng(1).standard_normal(3)
        u, _ = solve_static_forward(x, sys.true_envelope, cost, bounds)
        demo = Demonstration(x, u)
        n1, t1 = kkt_halfspace(demo, cost, RiskEnvelope.simplex(2), bounds)
        n2, t2 = kkt_halfspace_product(demo, model, ProductPolytope.unit(2, 1), bounds)
        np.testing.assert_allclose(n1, n2, rtol=1e-12)
        assert t1 == pytest.approx(t2, rel=1e-8)

    def test_toy_bound_contains_generating_product(self):
        # tiny L=2, H=2 instance: expert with singleton envelope {v*} and
        # weights c*; tau' must upper-bound the true z* . normal
        rng = np.random.default_rng(14)
        for trial in range(5):
            sys = sample_lq_system(20 + trial, n=3, m=1, L=2, n_envelope_samples=1)
            model, F = lq_feature_cost_model(sys, 30 + trial, H=2)
            c_star = lq_true_weights(40 + trial, H=2)
            v_star = sys.true_envelope.vertices[0]
            cost = weighted_cost_oracle(sys, F, c_star)
            bounds = ControlBounds.box(1, 10.0)
            x = rng.standard_normal(3)
            u, _ = solve_static_forward(x, sys.true_envelope, cost, bounds)
            demo = Demonstration(x, u)
            normal, tau = kkt_halfspace_product(demo, model, ProductPolytope.unit(2, 2), bounds)
            z_true = np.outer(v_star, c_star).reshape(-1)
            assert normal @ z_true <= tau + 1e-7

    def test_box_and_sum_active_at_vertices(self):
        pz = ProductPolytope.unit(2, 2)
        for v in pz.envelope.vertices:
            assert abs(v.sum() - 1.0) <= 1e-9
            assert np.all(v >= -1e-9) and np.all(v <= 1.0 + 1e-9)

    def test_dimension_cap(self):
        with pytest.raises(ValueError, match="cap"):
            ProductPolytope.unit(4, 4)

    def test_recover_rank_one_vertex(self):
        v = np.array([0.3, 0.7])
        c = np.array([0.25, 0.75])
        z = np.outer(v, c)
        pz = ProductPolytope(L=2, H=2, envelope=RiskEnvelope.singleton(z.reshape(-1)))
        weights, env, qualities = recover_weights_and_envelope(pz)
        np.testing.assert_allclose(weights[0], c, atol=1e-12)
        np.testing.assert_allclose(env.vertices[0], v, atol=1e-12)
        assert qualities[0] == pytest.approx(0.0, abs=1e-12)

    def test_recovered_weights_in_simplex(self):
        rng = np.random.default_rng(33)
        pz = ProductPolytope.unit(2, 2)
        for _ in range(3):
            a = rng.normal(size=4)
            b = a @ rng.dirichlet(np.ones(4)) + 0.05
            try:
                pz = pz.cut(a, b)
            except Exception:
                continue
        weights, env, _ = recover_weights_and_envelope(pz)
        for w in weights:
            assert np.all(w >= -1e-9)
            assert w.sum() == pytest.approx(1.0, abs=1e-9)

    def test_product_forward_matches_known_cost_on_rank_one(self):
        sys = sample_lq_system(9, n=3, m=2, L=2, n_envelope_samples=1)
        model, F = lq_feature_cost_model(sys, 10, H=2)
        c_star = lq_true_weights(11, H=2)
        v_star = sys.true_envelope.vertices[0]
        z = np.outer(v_star, c_star)
        pz = ProductPolytope(L=2, H=2, envelope=RiskEnvelope.singleton(z.reshape(-1)))
        bounds = ControlBounds.box(2, 10.0)
        x = np.random.default_rng(12).standard_normal(3)
        u1, t1 = solve_product_forward(x, pz, model, bounds)
        cost = weighted_cost_oracle(sys, F, c_star)
        u2, t2 = solve_static_forward(x, RiskEnvelope.singleton(v_star), cost, bounds)
        np.testing.assert_allclose(u1, u2, atol=1e-5)
        assert t1 == pytest.approx(t2, abs=1e-7)


class TestUnknownCostRecoverySmall:
    def test_small_recovery_run(self):
        sys = sample_lq_system(13, n=3, m=2, L=2, n_envelope_samples=3)
        model, F = lq_feature_cost_model(sys, 14, H=2)
        c_star = lq_true_weights(15, H=2)
        cost = weighted_cost_oracle(sys, F, c_star)
        bounds = ControlBounds.box(2, 10.0)
        rng = np.random.default_rng(16)
        demos = []
        for _ in range(40):
            x = rng.standard_normal(3)
            u, _ = solve_static_forward(x, sys.true_envelope, cost, bounds)
            demos.append(Demonstration(x, u))
        pz = prune_product(demos, model, bounds, L=2, H=2)
        weights, env, qualities = recover_weights_and_envelope(pz)
        mean_w = np.mean(weights, axis=0)
        assert np.abs(mean_w - c_star).max() < 0.25
        # containment of the generating products
        for v in sys.true_envelope.vertices:
            z = np.outer(v, c_star).reshape(-1)
            assert pz.envelope.contains(z, tol=1e-6)
