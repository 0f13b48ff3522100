"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Seeds are fixed; every expected value is either exact, derived from an
independent oracle in this run, or a seeded ground-truth comparison.
"""

import time

import numpy as np
import pytest

from riskirl.costs import ControlBounds, CostOracle
from riskirl.envelopes import (
    Pmf,
    RiskEnvelope,
    SemiParametricCrm,
    cvar_envelope,
    evaluate_crm,
    hausdorff,
    intersect_halfspace,
)
from riskirl.errors import EmptyEnvelopeError
from riskirl.likelihood import (
    FeatureTree,
    TrajectorySegment,
    likelihood_gradient,
    log_likelihood,
    nearest_action,
    rn_pinned_offsets,
)
from riskirl.planning import (
    ActionLibrary,
    GameHistory,
    ScenarioConfig,
    boltzmann,
    exact_bellman,
    soft_bellman,
    solve_static_forward,
)
from riskirl.static_inference import Demonstration, prune_envelope_trace

from oracles import cvar_tail_expectation
from toys import ToyScenario, random_library, tree_policy_enumeration


def report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


def random_cut_envelope(rng, L):
    env = RiskEnvelope.simplex(L)
    for _ in range(int(rng.integers(0, 4))):
        a = rng.normal(size=L)
        b = a @ rng.dirichlet(np.ones(L)) + abs(rng.normal()) * 0.2
        try:
            env = intersect_halfspace(env, a, b)
        except EmptyEnvelopeError:
            pass
    return env


class TestCriterion1Coherence:
    def test_axioms_on_random_instances(self):
        t0 = time.monotonic()
        rng = np.random.default_rng(101)
        envs = {L: [random_cut_envelope(rng, L) for _ in range(20)] for L in (2, 3, 4)}
        worst = 0.0
        for _ in range(1000):
            L = int(rng.choice([2, 3, 4]))
            env = envs[L][int(rng.integers(20))]
            z = rng.normal(scale=2.0, size=L)
            z2 = rng.normal(scale=2.0, size=L)
            a = float(rng.uniform(0, 4))
            lam = float(rng.uniform(0, 4))
            rho = lambda v: evaluate_crm(env, v)[0]
            r_z = rho(z)
            worst = max(worst, r_z - rho(z + np.abs(z2)))                     # monotonicity
            worst = max(worst, abs(rho(z + a) - r_z - a))                     # translation
            worst = max(worst, abs(rho(lam * z) - lam * r_z))                 # homogeneity
            worst = max(worst, rho(z + z2) - r_z - rho(z2))                   # subadditivity
        elapsed = time.monotonic() - t0
        report(1, worst <= 1e-9 and elapsed < 10.0, f"worst axiom violation {worst:.2e}, {elapsed:.1f}s")


class TestCriterion2CvarOracle:
    def test_dual_envelope_matches_tail_expectation(self):
        t0 = time.monotonic()
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(500):
            L = int(rng.integers(2, 7))
            p = rng.dirichlet(np.ones(L) * rng.uniform(0.5, 3.0))
            alpha = float(rng.uniform(0.02, 1.0))
            z = rng.normal(scale=5.0, size=L)
            got, _ = evaluate_crm(cvar_envelope(Pmf(p), alpha), z)
            want = cvar_tail_expectation(p, alpha, z)
            worst = max(worst, abs(got - want))
        elapsed = time.monotonic() - t0
        report(2, worst <= 1e-9 and elapsed < 5.0, f"max |diff| {worst:.2e}, {elapsed:.1f}s")


class TestCriterion3LqKnownCost:
    def test_convergence_containment_nesting(self):
        from riskirl.bench import run_lq_benchmark

        t0 = time.monotonic()
        rep = run_lq_benchmark(seed=2, demo_counts=(1, 5, 10, 15, 20))
        elapsed = time.monotonic() - t0
        m = rep.metrics
        ratio = m["final_ratio"]
        mse_ratio = m["test_mse"][-1] / m["test_mse"][0]
        ok = (
            ratio <= 0.1
            and mse_ratio <= 0.10
            and m["containment_all_steps"]
            and m["nesting_all_steps"]
            and elapsed < 120.0
        )
        report(3, ok, f"hausdorff ratio {ratio:.4f}, MSE ratio {mse_ratio:.5f}, containment {m['containment_all_steps']}, nesting {m['nesting_all_steps']}, {elapsed:.0f}s")


def scalar_lq_cost(a, b, r=0.3):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def _eval(x, u):
        return r * u[0] ** 2 + (a * x[0] + b * u[0]) ** 2

    def _grad(x, u):
        return (2 * r * u[0] + 2 * b * (a * x[0] + b * u[0]))[:, None]

    def _hess(x, u):
        return (2 * r + 2 * b ** 2)[:, None, None]

    return CostOracle(eval=_eval, grad_u=_grad, hess_u=_hess)


class TestCriterion4Theorem3Empirical:
    def test_action_convergence_on_dense_states(self):
        t0 = time.monotonic()
        rng = np.random.default_rng(0)
        a = rng.normal(size=3)
        b = rng.normal(size=3)
        cost = scalar_lq_cost(a, b)
        truth = RiskEnvelope.from_points(rng.dirichlet(np.ones(3), size=3))
        bounds = ControlBounds(lower=[-10.0], upper=[10.0])
        demo_rng = np.random.default_rng(100)
        demos = []
        for _ in range(500):
            x = demo_rng.uniform(0.5, 2.0, size=1)
            u, _ = solve_static_forward(x, truth, cost, bounds)
            demos.append(Demonstration(x, u))
        trace = prune_envelope_trace(demos, cost, bounds)
        grid = np.linspace(0.5, 2.0, 100)

        def max_err(env):
            worst = 0.0
            for xg in grid:
                u_o, _ = solve_static_forward(np.array([xg]), env, cost, bounds)
                u_t, _ = solve_static_forward(np.array([xg]), truth, cost, bounds)
                worst = max(worst, abs(u_o[0] - u_t[0]))
            return worst

        initial = max_err(RiskEnvelope.simplex(3))
        final = max_err(trace[500])
        elapsed = time.monotonic() - t0
        ok = final < 1e-3 and initial > 1e-3 and elapsed < 120.0
        report(4, ok, f"max grid action error {initial:.4f} -> {final:.2e} at 500 demos, {elapsed:.0f}s")


class TestCriterion6GradientCorrectness:
    def test_analytic_matches_central_differences(self):
        t0 = time.monotonic()
        seed = 14
        rng = np.random.default_rng(seed)
        scen = ToyScenario(L=2, H=2, N=3, n_d=1, seed=seed)
        cfg = ScenarioConfig(L=2, pmf=Pmf([0.5, 0.5]), N=3, n_d=1, T=2, beta=1.5)
        lib = random_library(rng, 2, 2, 3, 1)
        normals = SemiParametricCrm.basis_normals(2)
        segments = [
            TrajectorySegment(int(rng.integers(2)), 0, lib.first_stage[int(rng.integers(2))], rng.normal(size=2))
            for _ in range(6)
        ]
        tree = FeatureTree.build(scen, cfg, lib, segments)
        h = 1e-5
        checked = 0
        attempts = 0
        worst = 0.0
        while checked < 10 and attempts < 60:
            attempts += 1
            upper = rng.uniform(0.55, 0.8, size=2)
            lower = rng.uniform(0.02, 0.1, size=2)
            r = np.concatenate([1.0 - upper, lower])
            c = rng.dirichlet(np.ones(2)) + 0.05
            stats = {}
            gr, gc = likelihood_gradient(r, c, segments, cfg, normals, lib, scen, tree=tree, stats=stats)
            if stats.get("ties", 0):
                continue  # flagged degeneracy: skip per the criterion
            fd = []
            for j in range(4):
                e = np.zeros(4)
                e[j] = h
                fd.append((log_likelihood(r + e, c, segments, cfg, normals, lib, scen, tree=tree)
                           - log_likelihood(r - e, c, segments, cfg, normals, lib, scen, tree=tree)) / (2 * h))
            for j in range(2):
                e = np.zeros(2)
                e[j] = h
                fd.append((log_likelihood(r, c + e, segments, cfg, normals, lib, scen, tree=tree)
                           - log_likelihood(r, c - e, segments, cfg, normals, lib, scen, tree=tree)) / (2 * h))
            analytic = np.concatenate([gr, gc])
            rel = np.linalg.norm(analytic - np.array(fd)) / max(1.0, np.linalg.norm(analytic))
            worst = max(worst, rel)
            checked += 1
        elapsed = time.monotonic() - t0
        ok = checked == 10 and worst <= 1e-5 and elapsed < 60.0
        report(6, ok, f"{checked} points, worst relative error {worst:.2e}, {elapsed:.0f}s")


class TestCriterion7BellmanOracle:
    def test_exact_matches_policy_enumeration(self):
        t0 = time.monotonic()
        rng = np.random.default_rng(777)
        worst = 0.0
        for trial in range(50):
            L = int(rng.integers(2, 4))
            T = int(rng.integers(1, 3))
            k1 = int(rng.integers(1, 4))
            k2 = int(rng.integers(1, 4))
            scen = ToyScenario(L=L, H=2, N=3, n_d=1, seed=1000 + trial)
            cfg = ScenarioConfig(L=L, pmf=Pmf(np.full(L, 1.0 / L)), N=3, n_d=1, T=T)
            lib = random_library(rng, k1, k2, 3, 1)
            env = random_cut_envelope(rng, L)
            w = rng.dirichlet(np.ones(2))
            x = rng.normal(size=2)
            w_prev = int(rng.integers(L))
            tau_map, _ = exact_bellman(x, w_prev, lib, cfg, env, scen, w)
            got = tau_map[GameHistory((), (w_prev,))]
            ref = tree_policy_enumeration(scen, cfg, lib, list(env.halfspaces), x, w_prev, w)
            worst = max(worst, float(np.abs(got - ref).max()))
        soft_worst = 0.0
        for trial in range(10):
            scen = ToyScenario(L=2, H=2, N=3, n_d=1, seed=2000 + trial)
            cfg = ScenarioConfig(L=2, pmf=Pmf([0.5, 0.5]), N=3, n_d=1, T=2)
            lib = random_library(rng, 2, 2, 3, 1)
            crm = SemiParametricCrm(normals=SemiParametricCrm.basis_normals(2), offsets=np.array([0.3, 0.35, 0.1, 0.05]))
            w = rng.dirichlet(np.ones(2))
            x = rng.normal(size=2)
            soft = soft_bellman(x, 0, lib, cfg, crm, scen, w, beta=1e4)
            tau_map, _ = exact_bellman(x, 0, lib, cfg, crm.envelope(), scen, w)
            soft_worst = max(soft_worst, float(np.abs(soft - tau_map[GameHistory((), (0,))]).max()))
        elapsed = time.monotonic() - t0
        ok = worst <= 1e-9 and soft_worst <= 1e-3 and elapsed < 60.0
        report(7, ok, f"exact worst {worst:.2e}, soft-vs-exact worst {soft_worst:.2e}, {elapsed:.0f}s")


class TestCriterion8RnEquivalence:
    def test_pinned_envelope_equals_independent_rn(self):
        t0 = time.monotonic()
        worst = 0.0
        for trial in range(20):
            rng = np.random.default_rng(3000 + trial)
            L = int(rng.integers(2, 4))
            p = rng.dirichlet(np.ones(L) * 3)
            scen = ToyScenario(L=L, H=2, N=3, n_d=1, seed=3000 + trial)
            cfg = ScenarioConfig(L=L, pmf=Pmf(p), N=3, n_d=1, T=2, beta=float(rng.uniform(0.5, 3.0)))
            lib = random_library(rng, int(rng.integers(2, 4)), 2, 3, 1)
            normals = SemiParametricCrm.basis_normals(L)
            segments = [
                TrajectorySegment(int(rng.integers(L)), 0, lib.first_stage[int(rng.integers(lib.first_stage.shape[0]))], rng.normal(size=2))
                for _ in range(5)
            ]
            c = rng.dirichlet(np.ones(2))
            ll = log_likelihood(rn_pinned_offsets(Pmf(p)), c, segments, cfg, normals, lib, scen)

            def rn_values(x, w_prev):
                def rec(t, state, prev):
                    acts = lib.stage(t)
                    out = np.empty(len(acts))
                    for k in range(len(acts)):
                        phi, nxt = scen.stage_features(state, acts[k], prev)
                        costs = np.asarray(phi) @ c
                        if t == cfg.T - 1:
                            out[k] = p @ costs
                        else:
                            tails = np.empty(cfg.L)
                            for j in range(cfg.L):
                                sub = rec(t + 1, nxt[j], j)
                                wgt = np.exp(-cfg.beta * (sub - sub.min()))
                                wgt /= wgt.sum()
                                tails[j] = wgt @ sub
                            out[k] = p @ (costs + tails)
                    return out

                return rec(0, x, w_prev)

            total = 0.0
            for seg in segments:
                vals = rn_values(seg.start_state, seg.prev_mode)
                k = nearest_action(seg.observed_action, lib)
                g = cfg.beta * vals
                total += -g[k] + g.min() - np.log(np.exp(-(g - g.min())).sum())
            worst = max(worst, abs(ll - total / len(segments)))
        elapsed = time.monotonic() - t0
        ok = worst <= 1e-9 and elapsed < 30.0
        report(8, ok, f"worst |RS_pinned - RN| {worst:.2e}, {elapsed:.0f}s")
