"""Command-line harness: exact solves, gain evaluation, optimizer runs with
experiment presets, the gradient-estimation error study, and inequality
certification over sampled gains.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 certificate violation. Every run is reproducible from its configuration
and seed; CSV outputs are byte-identical across re-runs, including under
parallel rollout execution.
"""

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import descent, ops, rollout
from .problem import (PRESETS, Gain, LqrmProblem, NoiseSpec,
                      ProblemFormatError, load_gain, load_problem, validate)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CERTIFICATE = 4

UNSTABLE_MARKER = "MS_UNSTABLE"

OPTIMIZE_PRESETS = ("suspension-noise-aware", "suspension-noise-ignorant",
                    "network-three-methods")

CERT_TOLS = {
    "gradient_domination": lambda cost: -1e-8 * abs(cost),
    "almost_smoothness": lambda cost: 1e-7 * (1.0 + abs(cost)),
    "cost_bounds": lambda cost: -1e-9 * abs(cost),
    "trace_bound_rel": 1e-9,
}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    """Stable shortest-roundtrip float formatting for CSV cells."""
    if x is None:
        return UNSTABLE_MARKER
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not np.isfinite(x):
        return UNSTABLE_MARKER
    return repr(x)


def _sanitize(obj):
    """Make a JSON-serializable copy with no NaN/inf leaking into reports."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else UNSTABLE_MARKER
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(_sanitize(data), fh, indent=1)
        fh.write("\n")


def _environment() -> dict:
    return {"python": platform.python_version(),
            "numpy": np.__version__,
            "platform": platform.platform(),
            "rollout_backend": rollout.active_backend()}


def _load_problem_arg(args) -> LqrmProblem:
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; "
                              f"available: {sorted(PRESETS)}")
        return PRESETS[args.preset]()
    if getattr(args, "problem", None):
        prob = load_problem(args.problem)
        violations = validate(prob)
        if violations:
            raise ConfigError("invalid problem: " + "; ".join(violations))
        return prob
    raise ConfigError("one of --problem or --preset is required")


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_trace_csv(path, trace) -> None:
    """Fixed schema: iteration,cost,grad_norm,eta,rho."""
    lines = ["iteration,cost,grad_norm,eta,rho"]
    for pt in trace.points:
        lines.append(",".join([str(pt.iteration), _fmt(pt.cost),
                               _fmt(pt.grad_norm), _fmt(pt.eta), _fmt(pt.rho)]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_gains_json(path, trace) -> None:
    data = {"method": trace.method, "termination": trace.termination,
            "gains": [{"iteration": pt.iteration, "K": pt.K.tolist()}
                      for pt in trace.points]}
    _write_json(path, data)


def initial_gain_10x(problem, riccati, seed: int, factor: float = 10.0) -> Gain:
    """Perturb K* along a seeded random direction, scaled by bisection so the
    cost is `factor` times optimal (to 0.1% relative)."""
    rng = np.random.default_rng(seed)
    D = rng.standard_normal(riccati.K_star.shape)
    D /= np.linalg.norm(D)
    target = factor * np.trace(riccati.P_star @ problem.Sigma0)

    def cost_at(s):
        ev = ops.evaluate(problem, riccati.K_star + s * D)
        return ev.cost if ev.stable else np.inf

    hi = 1.0
    while cost_at(hi) < target:
        hi *= 2.0
        if hi > 1e6:
            raise ops.NumericalError("could not bracket the 10x-cost gain")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = cost_at(mid)
        if c < target:
            lo = mid
        else:
            hi = mid
        if c != np.inf and abs(c - target) <= 1e-3 * target:
            return Gain(riccati.K_star + mid * D, label=f"{factor:g}x-suboptimal")
    return Gain(riccati.K_star + lo * D, label=f"{factor:g}x-suboptimal")


def sample_stabilizing_gains(problem, n_gains: int, seed: int,
                             riccati=None) -> list:
    """Rejection-sample stabilizing gains around K* and K = 0."""
    if riccati is None:
        riccati = ops.riccati_value_iteration(problem)
    rng = np.random.default_rng(seed)
    centers = [riccati.K_star]
    if ops.is_ms_stabilizing(problem, np.zeros_like(riccati.K_star)):
        centers.append(np.zeros_like(riccati.K_star))
    gains = []
    attempts = 0
    while len(gains) < n_gains and attempts < 200 * max(n_gains, 1):
        center = centers[attempts % len(centers)]
        scale = rng.uniform(0.01, 0.5)
        K = center + scale * rng.standard_normal(center.shape)
        attempts += 1
        if ops.is_ms_stabilizing(problem, K):
            gains.append(K)
    if len(gains) < n_gains:
        raise ops.NumericalError(
            f"could only sample {len(gains)} of {n_gains} stabilizing gains")
    return gains


def cmd_solve(args) -> int:
    problem = _load_problem_arg(args)
    sol = ops.riccati_value_iteration(problem, tol=args.tol,
                                      max_iter=args.max_iter)
    cost = float(np.trace(sol.P_star @ problem.Sigma0))
    out = _out_dir(args)
    report = {"P_star": sol.P_star.tolist(), "K_star": sol.K_star.tolist(),
              "iterations": sol.iterations, "gare_residual": sol.residual,
              "rho_F_Kstar": sol.rho, "optimal_cost": cost,
              "environment": _environment()}
    _write_json(out / "solution.json", report)
    print(f"GARE solved in {sol.iterations} iterations: residual "
          f"{sol.residual:.3e}, rho(F_K*) {sol.rho:.6f}, C(K*) {cost:.6g}")
    print(f"wrote {out / 'solution.json'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    problem = _load_problem_arg(args)
    gain = load_gain(args.gain)
    ev = ops.evaluate(problem, gain.K)
    out = _out_dir(args)
    report = {"stable": ev.stable, "rho": ev.rho, "environment": _environment()}
    if ev.stable:
        report.update({"cost": ev.cost, "grad_norm": ev.grad_norm,
                       "P": ev.P.tolist(), "Sigma": ev.Sigma.tolist(),
                       "RK": ev.RK.tolist(), "EK": ev.EK.tolist(),
                       "grad": ev.grad.tolist()})
        print(f"stable=true rho={ev.rho:.6f} cost={ev.cost:.6g} "
              f"grad_norm={ev.grad_norm:.3e}")
    else:
        report["cost"] = UNSTABLE_MARKER
        print(f"stable=false rho={ev.rho:.6f} cost={UNSTABLE_MARKER}")
    _write_json(out / "evaluation.json", report)
    return EXIT_OK


def _step_policy_from(args) -> descent.StepPolicy:
    if args.line_search:
        return descent.StepPolicy(kind="backtracking", alpha=args.ls_alpha,
                                  beta=args.ls_beta)
    if args.eta is not None:
        return descent.StepPolicy(kind="constant", eta=args.eta)
    return descent.StepPolicy(kind="backtracking", alpha=args.ls_alpha,
                              beta=args.ls_beta)


def _run_single_optimize(problem, K0, args, out, tag="trace") -> dict:
    policy = _step_policy_from(args)
    stop = (args.grad_tol, args.max_iter)
    t0 = time.perf_counter()
    if args.method == "gd-free":
        spec = NoiseSpec(kind=args.noise_kind, x0_mode=args.x0_mode)
        trace = rollout.optimize_model_free(
            problem, K0, policy, (args.samples, args.horizon, args.radius),
            stop, master_seed=args.seed, noise_spec=spec, workers=args.workers,
            sample_check="off" if args.unchecked_samples else "auto")
    else:
        trace = descent.optimize(problem, K0, args.method, policy, stop)
    wall = time.perf_counter() - t0
    csv_path = out / f"{tag}.csv"
    write_trace_csv(csv_path, trace)
    write_gains_json(out / f"{tag}_gains.json", trace)
    riccati = ops.riccati_value_iteration(problem)
    copt = float(np.trace(riccati.P_star @ problem.Sigma0))
    final_cost = trace.final.cost
    rel = None if final_cost is None else (final_cost - copt) / copt
    return {"trace_csv": str(csv_path), "final_cost": final_cost,
            "relative_suboptimality": rel, "iterations": len(trace.points) - 1,
            "termination": trace.termination, "wall_time_s": wall}


def _suspension_preset(args, out, noise_aware: bool) -> dict:
    # Fixed reproduction parameters: descend until the gradient norm falls
    # below a small threshold (1e-3 suffices for <1e-6 relative cost error).
    from .problem import make_suspension
    problem = make_suspension()
    riccati = ops.riccati_value_iteration(problem)
    K0 = initial_gain_10x(problem, riccati, seed=args.seed)
    train_problem = problem if noise_aware else problem.with_zero_noise()
    policy = descent.StepPolicy(kind="backtracking", alpha=args.ls_alpha,
                                beta=args.ls_beta)
    t0 = time.perf_counter()
    trace = descent.optimize(train_problem, K0.K, "gd", policy,
                             (1e-3, 2000 if noise_aware else 1000))
    wall = time.perf_counter() - t0
    tag = "trace" if noise_aware else "trace_train"
    write_trace_csv(out / f"{tag}.csv", trace)
    write_gains_json(out / f"{tag}_gains.json", trace)
    copt = float(np.trace(riccati.P_star @ problem.Sigma0))
    summary = {"wall_time_s": wall, "termination": trace.termination,
               "iterations": len(trace.points) - 1}
    if noise_aware:
        rel = (trace.final.cost - copt) / copt
        summary.update({"trace_csv": str(out / "trace.csv"),
                        "final_cost": trace.final.cost,
                        "relative_suboptimality": rel})
    else:
        # Evaluation transfer: each training iterate is scored on the noisy
        # problem; mean-square unstable iterates carry the marker.
        eval_trace = descent.DescentTrace(method="gd-noise-ignorant-eval")
        for pt in trace.points:
            ev = ops.evaluate(problem, pt.K)
            eval_trace.append(descent.TracePoint(
                pt.iteration, pt.K, ev.cost if ev.stable else None,
                pt.grad_norm, pt.eta, ev.rho))
        eval_trace.termination = trace.termination
        write_trace_csv(out / "trace_lqrm_eval.csv", eval_trace)
        n_unstable = sum(1 for pt in eval_trace.points if pt.cost is None)
        final = eval_trace.final.cost
        summary.update({
            "trace_csv": str(out / "trace_lqrm_eval.csv"),
            "train_trace_csv": str(out / "trace_train.csv"),
            "n_ms_unstable_iterates": n_unstable,
            "final_cost": final if final is not None else UNSTABLE_MARKER,
            "relative_suboptimality":
                None if final is None else (final - copt) / copt})
    return summary


def _network_three_methods(args, out) -> dict:
    from .problem import make_diffusion_network
    problem = make_diffusion_network()
    K0 = np.zeros((problem.m, problem.n))
    riccati = ops.riccati_value_iteration(problem)
    copt = float(np.trace(riccati.P_star @ problem.Sigma0))
    summary = {}
    for method in ("gd", "npg", "gn"):
        # Gauss-Newton uses its optimal constant step 1/2; the others use
        # backtracking. Fixed 20 iterations for overlay plotting.
        if method == "gn":
            policy = descent.StepPolicy(kind="constant", eta=0.5)
        else:
            policy = descent.StepPolicy(kind="backtracking",
                                        alpha=args.ls_alpha, beta=args.ls_beta)
        t0 = time.perf_counter()
        trace = descent.optimize(problem, K0, method, policy, (0.0, 20))
        wall = time.perf_counter() - t0
        write_trace_csv(out / f"trace_{method}.csv", trace)
        write_gains_json(out / f"trace_{method}_gains.json", trace)
        rel = (trace.final.cost - copt) / copt
        summary[method] = {"trace_csv": str(out / f"trace_{method}.csv"),
                           "final_cost": trace.final.cost,
                           "relative_suboptimality": rel,
                           "iterations": len(trace.points) - 1,
                           "termination": trace.termination,
                           "wall_time_s": wall}
    return summary


def cmd_optimize(args) -> int:
    out = _out_dir(args)
    config_echo = {k: v for k, v in vars(args).items()
                   if k not in ("func",) and v is not None}
    if args.experiment:
        if args.experiment == "suspension-noise-aware":
            summary = _suspension_preset(args, out, noise_aware=True)
        elif args.experiment == "suspension-noise-ignorant":
            summary = _suspension_preset(args, out, noise_aware=False)
        elif args.experiment == "network-three-methods":
            summary = _network_three_methods(args, out)
        else:
            raise ConfigError(f"unknown experiment preset {args.experiment!r}; "
                              f"available: {OPTIMIZE_PRESETS}")
    else:
        problem = _load_problem_arg(args)
        if args.gain:
            K0 = load_gain(args.gain).K
        else:
            K0 = np.zeros((problem.m, problem.n))
            if not ops.is_ms_stabilizing(problem, K0):
                raise ConfigError("K = 0 is not stabilizing for this problem; "
                                  "supply an initial gain with --gain")
        summary = _run_single_optimize(problem, K0, args, out)
    report = {"config": config_echo, "summary": summary,
              "environment": _environment()}
    _write_json(out / "report.json", report)
    print(json.dumps(_sanitize(summary), indent=1))
    print(f"wrote {out / 'report.json'}")
    term = summary.get("termination")
    if not args.experiment and term in ("no_productive_step", "lost_stability"):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_gradexp(args) -> int:
    from .problem import make_gradient_estimation_example
    problem = make_gradient_estimation_example()
    out = _out_dir(args)
    n_max = args.samples_max if not args.long_run else max(args.samples_max, 10**8)
    # half-decade grid from 100 up to n_max
    exps = np.arange(2.0, np.log10(n_max) + 1e-9, 0.5)
    grid = sorted({int(round(10.0 ** e)) for e in exps} | {int(n_max)})
    spec = NoiseSpec(kind="gaussian", x0_mode="sphere")
    rows = []
    sidecar = {"horizon": args.horizon, "radius": args.radius,
               "replicas": args.replicas, "seed": args.seed,
               "environment": _environment()}
    for flag, prob in (
            (0, problem.with_zero_noise()),
            (1, problem)):
        K0 = np.zeros((problem.m, problem.n))
        # The study's operating point (r = 0.2 around K = 0) necessarily
        # perturbs across the mean-square stability boundary; finite-horizon
        # costs stay finite, so the sweep runs unchecked like the original
        # protocol.
        ns, errs, bias = rollout.gradient_error_sweep(
            prob, K0, grid, ell=args.horizon, r=args.radius,
            replicas=args.replicas, noise_spec=spec,
            master_seed=rollout.child_seed(args.seed, flag),
            workers=args.workers, check="off")
        rows.extend((int(n), float(e), flag) for n, e in zip(ns, errs))
        sidecar[f"smoothing_bias_flag{flag}"] = bias
    lines = ["n_sample,rel_err,noise_flag"]
    lines.extend(f"{n},{_fmt(e)},{f}" for n, e, f in rows)
    csv_path = out / "gradexp.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    _write_json(out / "gradexp_meta.json", sidecar)
    print(f"wrote {csv_path} ({len(rows)} rows, n_sample up to {n_max})")
    return EXIT_OK


def cmd_certify(args) -> int:
    problem = _load_problem_arg(args)
    out = _out_dir(args)
    if args.gains == 0:
        print("warning: n_gains = 0, certification is vacuous")
        _write_json(out / "certificates.json",
                    {"n_gains": 0, "vacuous": True, "violations": 0})
        return EXIT_OK
    riccati = ops.riccati_value_iteration(problem)
    kstar_eval = ops.evaluate(problem, riccati.K_star)
    gains = sample_stabilizing_gains(problem, args.gains, args.seed, riccati)
    records = {"gradient_domination": [], "almost_smoothness": [],
               "cost_bound_P": [], "cost_bound_Sigma": [], "trace_bound": []}
    violations = 0
    for idx, K in enumerate(gains):
        ev = ops.evaluate(problem, K)
        margin = ops.certify_gradient_domination(problem, K, kstar_eval)
        records["gradient_domination"].append(margin)
        if margin < CERT_TOLS["gradient_domination"](ev.cost):
            violations += 1
        Kp = gains[(idx + 1) % len(gains)]
        resid = ops.certify_almost_smoothness(problem, K, Kp)
        records["almost_smoothness"].append(resid)
        if resid > CERT_TOLS["almost_smoothness"](ev.cost):
            violations += 1
        s1, s2 = ops.certify_cost_bounds(problem, K)
        records["cost_bound_P"].append(s1)
        records["cost_bound_Sigma"].append(s2)
        if s1 < CERT_TOLS["cost_bounds"](ev.cost) or \
           s2 < CERT_TOLS["cost_bounds"](ev.cost):
            violations += 1
        tr = ops.certify_trace_bound(problem, K)
        records["trace_bound"].append(tr)
        if tr < -CERT_TOLS["trace_bound_rel"] * float(np.trace(ev.Sigma)):
            violations += 1
    bundle = descent.compute_bounds(problem, gains[0], kstar_eval)
    bundle_ok = all(v > 0 for v in
                    (bundle.h_B, bundle.h_Delta, bundle.c_pg, bundle.c_npg))
    if not bundle_ok:
        violations += 1
    summary = {
        "n_gains": len(gains),
        "violations": violations,
        "min_gradient_domination_margin": min(records["gradient_domination"]),
        "max_almost_smoothness_residual": max(records["almost_smoothness"]),
        "min_cost_bound_P_slack": min(records["cost_bound_P"]),
        "min_cost_bound_Sigma_slack": min(records["cost_bound_Sigma"]),
        "min_trace_bound_slack": min(records["trace_bound"]),
        "bound_bundle_positive": bundle_ok,
        "environment": _environment(),
    }
    _write_json(out / "certificates.json", summary)
    for key in ("min_gradient_domination_margin",
                "max_almost_smoothness_residual", "min_cost_bound_P_slack",
                "min_cost_bound_Sigma_slack", "min_trace_bound_slack"):
        print(f"{key}: {summary[key]:.3e}")
    if violations:
        print(f"CERTIFICATE VIOLATIONS: {violations}")
        return EXIT_CERTIFICATE
    print(f"all certificates passed on {len(gains)} gains")
    return EXIT_OK


def _add_problem_args(sp):
    sp.add_argument("--problem", help="problem JSON file")
    sp.add_argument("--preset", help=f"problem preset: {sorted(PRESETS)}")
    sp.add_argument("--out", help="output directory (default: cwd)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mnlqr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve the generalized Riccati equation")
    _add_problem_args(sp)
    sp.add_argument("--tol", type=float, default=1e-14)
    sp.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("eval", help="evaluate a gain on a problem")
    _add_problem_args(sp)
    sp.add_argument("--gain", required=True, help="gain JSON file")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("optimize", help="run a policy optimizer")
    _add_problem_args(sp)
    sp.add_argument("--config", help="JSON config file (flags override it)")
    sp.add_argument("--experiment", help=f"experiment preset: {OPTIMIZE_PRESETS}")
    sp.add_argument("--method", default="gd", choices=["gd", "npg", "gn", "gd-free"])
    sp.add_argument("--gain", help="initial gain JSON file (default: K = 0)")
    sp.add_argument("--eta", type=float, help="constant step size")
    sp.add_argument("--line-search", action="store_true", dest="line_search")
    sp.add_argument("--ls-alpha", type=float, default=0.01, dest="ls_alpha")
    sp.add_argument("--ls-beta", type=float, default=0.5, dest="ls_beta")
    sp.add_argument("--grad-tol", type=float, default=1e-6, dest="grad_tol")
    sp.add_argument("--max-iter", type=int, default=10_000, dest="max_iter")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--horizon", type=int, default=20)
    sp.add_argument("--radius", type=float, default=0.1)
    sp.add_argument("--noise-kind", default="uniform", dest="noise_kind",
                    choices=["uniform", "truncated-gaussian", "gaussian"])
    sp.add_argument("--x0-mode", default="sphere", dest="x0_mode",
                    choices=["sphere", "gaussian"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--unchecked-samples", action="store_true",
                    dest="unchecked_samples",
                    help="skip the mean-square stability check of sampled "
                         "gains (finite-horizon costs remain finite)")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("gradexp", help="gradient estimation error study")
    sp.add_argument("--out", help="output directory (default: cwd)")
    sp.add_argument("--samples-max", type=int, default=1_000_000,
                    dest="samples_max")
    sp.add_argument("--horizon", type=int, default=40)
    sp.add_argument("--radius", type=float, default=0.2)
    sp.add_argument("--replicas", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--long-run", action="store_true", dest="long_run",
                    help="extend the sweep to 1e8 rollouts (slow)")
    sp.set_defaults(func=cmd_gradexp)

    sp = sub.add_parser("certify", help="run inequality certificates on "
                                        "sampled stabilizing gains")
    _add_problem_args(sp)
    sp.add_argument("--gains", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_certify)
    return ap


def _apply_config_file(args) -> None:
    """Merge a JSON config file under explicit command-line flags."""
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON at line {exc.lineno} "
                          f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    parser_defaults = build_parser()
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"{args.config}: unknown config key {key!r}")
        # flags given on the command line win; detect by comparing to defaults
        if getattr(args, attr) == _default_for(parser_defaults, args.command, attr):
            setattr(args, attr, value)


def _default_for(parser, command, attr):
    sub = next(a for a in parser._actions
               if isinstance(a, argparse._SubParsersAction))
    cmd_parser = sub.choices[command]
    return cmd_parser.get_default(attr)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        _apply_config_file(args)
        return args.func(args)
    except (ops.MeanSquareUnstableError, ops.NotStabilizableError,
            ops.NumericalError, rollout.BatchRejectedError,
            descent.NoProductiveStepError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ProblemFormatError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
