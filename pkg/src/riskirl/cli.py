"""Command-line driver for simulation, inference, planning, and benchmarks.

Exit codes: 0 success, 2 success with inconsistent-demonstration warnings,
1 fault.
"""

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import serialize
from .bench import PROFILES, driving_config, profile_offsets, run_driving_benchmark, run_lq_benchmark
from .costs import ControlBounds
from .driving import DrivingScenario, default_action_library, synthetic_expert_run
from .envelopes import SemiParametricCrm
from .errors import InconsistentDemonstrationWarning, RiskIrlError
from .likelihood import FeatureTree, FitHyperparams, cluster_actions, fit, soft_tree_values
from .lq import lq_expert_demo, sample_lq_system
from .planning import boltzmann, solve_static_forward
from .serialize import FittedModel
from .static_inference import prune_envelope, prune_product, recover_weights_and_envelope


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_state(text):
    return np.array([float(t) for t in text.replace(",", " ").split()])


def cmd_simulate(args):
    out = _out_dir(args)
    if args.scenario == "lq":
        system = sample_lq_system(args.seed)
        demos = lq_expert_demo(system, args.seed + 1, args.count)
        path = out / "demos.json"
        serialize.save_demos(demos, path)
        print(f"wrote {len(demos)} LQ demonstrations to {path}")
    else:
        cfg = driving_config(beta=args.beta)
        r = profile_offsets(args.profile, cfg.pmf)
        crm = SemiParametricCrm(normals=SemiParametricCrm.basis_normals(cfg.L), offsets=r)
        from .bench import DRIVING_TRUE_WEIGHTS

        segments = synthetic_expert_run(cfg, crm, DRIVING_TRUE_WEIGHTS, args.count, args.seed)
        path = out / "segments.json"
        serialize.save_segments(segments, path)
        from .driving import DEFAULT_MANEUVER_PARAMS

        serialize.save_json({**cfg.to_dict(), "maneuver_params": dict(DEFAULT_MANEUVER_PARAMS)}, out / "scenario.json")
        print(f"wrote {len(segments)} driving segments to {path}")
    return 0


def cmd_infer_single(args):
    out = _out_dir(args)
    demos = serialize.load_demos(Path(args.demos))
    system = sample_lq_system(args.seed)
    bounds = ControlBounds.box(system.m, 10.0)
    if args.cost_mode == "known":
        env = prune_envelope(demos, system.cost_oracle(), bounds)
        path = out / "envelope.json"
        serialize.save_envelope(env, path)
        print(f"pruned envelope with {len(env.vertices)} vertices -> {path}")
    else:
        from .lq import lq_feature_cost_model

        model, _ = lq_feature_cost_model(system, args.seed + 7, H=3)
        pz = prune_product(demos, model, bounds, L=system.L, H=3)
        weights, env, qualities = recover_weights_and_envelope(pz)
        serialize.save_envelope(env, out / "envelope.json")
        serialize.save_json(
            {
                "weight_estimates": [w.tolist() for w in weights],
                "mean_weights": np.mean(weights, axis=0).tolist(),
                "rank_one_qualities": qualities,
            },
            out / "weights.json",
        )
        print(f"recovered {len(weights)} weight estimates; mean quality {np.mean(qualities):.4f}")
    return 0


def cmd_infer_multi(args):
    out = _out_dir(args)
    segments = serialize.load_segments(Path(args.data))
    if args.config is None:
        cfg = driving_config(beta=args.beta)
        scenario = DrivingScenario(cfg)
    else:
        from .driving import scenario_from_config

        d = serialize.load_json(Path(args.config))
        if args.beta is not None:
            d["beta"] = args.beta
        scenario = scenario_from_config(d)
        cfg = scenario.cfg
    if args.library == "kmeans":
        raw = np.array([s.observed_action for s in segments])
        lib = cluster_actions(raw, k_first=15, k_later=5, seed=args.seed, bounds=scenario.bounds)
    elif args.library == "default":
        lib = default_action_library(cfg)
    else:
        lib = serialize.load_library(Path(args.library))
    normals = SemiParametricCrm.basis_normals(cfg.L)
    hyper = FitHyperparams(step_r=0.03, step_c=0.5, max_iters=args.iters, grad_tol=1e-7, seed=args.seed)
    init_c = np.full(6, 1.0 / 6.0)
    r_star, c_star, trace = fit(segments, normals, lib, cfg, hyper, np.zeros(2 * cfg.L), init_c, scenario=scenario)
    model = FittedModel(normals=normals, offsets=r_star, weights=c_star, beta=cfg.beta, config=cfg)
    serialize.save_model(model, out / "model.json")
    serialize.save_library(lib, out / "library.json")
    serialize.write_csv(
        out / "fit_trace.csv",
        ["iteration", "loglik", "best_loglik", "grad_norm"],
        [[i, it["loglik"], it["best_loglik"], it["grad_norm"]] for i, it in enumerate(trace.iterations)],
    )
    print(f"fitted model -> {out / 'model.json'} (final loglik {trace.iterations[-1]['loglik']:.6f})")
    return 0


def _load_cfg(path, beta=None):
    from .planning import ScenarioConfig

    cfg = ScenarioConfig.from_dict(serialize.load_json(Path(path)))
    if beta is not None:
        d = cfg.to_dict()
        d["beta"] = beta
        cfg = ScenarioConfig.from_dict(d)
    return cfg


def cmd_forward(args):
    if args.scenario == "lq":
        system = sample_lq_system(args.seed)
        env = serialize.load_envelope(Path(args.envelope)) if args.envelope else system.true_envelope
        x = _parse_state(args.state)
        u, tau = solve_static_forward(x, env, system.cost_oracle(), ControlBounds.box(system.m, 10.0))
        print("u_star:", " ".join(f"{v:.6f}" for v in u))
        print(f"tau_star: {tau:.6f}")
    else:
        model = serialize.load_model(Path(args.model))
        cfg = model.config
        scenario = DrivingScenario(cfg)
        lib = serialize.load_library(Path(args.library)) if args.library else default_action_library(cfg)
        x = _parse_state(args.state)
        from .likelihood import TrajectorySegment

        seg = TrajectorySegment(prev_mode=args.prev_mode, realized_mode=0, observed_action=lib.first_stage[0], start_state=x)
        tree = FeatureTree.build(scenario, cfg, lib, [seg])
        values = soft_tree_values(tree, model.crm(), model.weights, model.beta)[0]
        probs = boltzmann(values, model.beta)
        best = int(np.argmin(values))
        print(f"best action index: {best}")
        print("values:", " ".join(f"{v:.4f}" for v in values))
        print("boltzmann:", " ".join(f"{p:.4f}" for p in probs))
    return 0


def cmd_eval(args):
    out = _out_dir(args)
    model = serialize.load_model(Path(args.model))
    segments = serialize.load_segments(Path(args.data))
    cfg = model.config
    scenario = DrivingScenario(cfg)
    lib = serialize.load_library(Path(args.library)) if args.library else default_action_library(cfg)
    from .bench import eval_error_metric

    errors = eval_error_metric(model, segments, lib, cfg, scenario)
    rows = [[s] + [errors[k][s] for k in ("dx_rel", "dy_rel", "dvx_rel", "dvy_rel")] for s in range(len(segments))]
    serialize.write_csv(out / "errors.csv", ["segment", "dx_rel", "dy_rel", "dvx_rel", "dvy_rel"], rows)
    from . import plots

    plots.save_curves(
        out / "errors.png",
        list(range(len(segments))),
        {k: errors[k] for k in ("dx_rel", "dvx_rel")},
        "segment",
        "expected L2 error",
        title="Per-segment prediction errors",
    )
    means = {k: float(np.mean(v)) for k, v in errors.items()}
    serialize.save_json(means, out / "errors_summary.json")
    print("mean errors:", " ".join(f"{k}={v:.4f}" for k, v in means.items()))
    return 0


def cmd_bench_lq(args):
    counts = tuple(int(c) for c in args.counts.split(","))
    report = run_lq_benchmark(args.seed, demo_counts=counts, out_dir=_out_dir(args))
    m = report.metrics
    print(f"hausdorff ratio at {counts[-1]} demos: {m['final_ratio']:.4f}")
    print(f"containment: {m['containment_all_steps']}, nesting: {m['nesting_all_steps']}")
    print(f"report -> {Path(args.out) / 'bench_lq_report.json'}")
    return 0


def cmd_bench_driving(args):
    report = run_driving_benchmark(args.seed, args.profile, out_dir=_out_dir(args), iters=args.iters, beta=args.beta)
    m = report.metrics
    print(f"held-out loglik: RS {m['loglik']['rs_test']:.4f} vs RN {m['loglik']['rn_test']:.4f}")
    print("mean improvement (%):", {k: round(v, 2) for k, v in m["mean_improvement_pct"].items()})
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="riskirl", description="Risk-sensitive IRL with coherent risk envelopes")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="emit a synthetic dataset")
    sp.add_argument("--scenario", choices=("lq", "driving"), default="driving")
    sp.add_argument("--profile", choices=PROFILES, default="risk-averse")
    sp.add_argument("--count", type=int, default=40)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("infer-single", help="Algorithm-1 envelope pruning (LQ scenario)")
    sp.add_argument("--demos", required=True)
    sp.add_argument("--cost-mode", choices=("known", "features"), default="known")
    sp.set_defaults(func=cmd_infer_single)

    sp = sub.add_parser("infer-multi", help="semi-parametric maximum-likelihood fit")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--library", default="default", help="'default', 'kmeans', or a library JSON path")
    sp.set_defaults(func=cmd_infer_multi)

    sp = sub.add_parser("forward", help="plan from a state")
    sp.add_argument("--scenario", choices=("lq", "driving"), default="lq")
    sp.add_argument("--state", required=True)
    sp.add_argument("--envelope", default=None)
    sp.add_argument("--model", default=None)
    sp.add_argument("--library", default=None)
    sp.add_argument("--prev-mode", type=int, default=0)
    sp.set_defaults(func=cmd_forward)

    sp = sub.add_parser("eval", help="per-segment expected trajectory errors")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--library", default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench-lq", help="LQ known-cost benchmark")
    sp.add_argument("--counts", default="1,5,10,15,20")
    sp.set_defaults(func=cmd_bench_lq)

    sp = sub.add_parser("bench-driving", help="synthetic driving benchmark (RS vs RN)")
    sp.add_argument("--profile", choices=PROFILES, default="risk-averse")
    sp.set_defaults(func=cmd_bench_driving)

    for name, sp_ in sub.choices.items():
        sp_.add_argument("--seed", type=int, default=0)
        sp_.add_argument("--out", default="out")
        sp_.add_argument("--beta", type=float, default=8.0)
        sp_.add_argument("--iters", type=int, default=40)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as recorded:
        warnings.simplefilter("always")
        try:
            code = args.func(args)
        except RiskIrlError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    inconsistent = [w for w in recorded if issubclass(w.category, InconsistentDemonstrationWarning)]
    for w in inconsistent:
        print(f"warning: {w.message}", file=sys.stderr)
    if code == 0 and inconsistent:
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
