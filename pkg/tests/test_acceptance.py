"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import json

import numpy as np
from mnlqr import cli, descent, make_random, ops, rollout

import reference_lqr as ref



def report(num, ok, detail):
    print(f"\nACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {detail}")


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 7))
    prob = make_random(n, m, p=2, q=1, seed=seed,
                       spectral_target=float(rng.uniform(0.3, 0.85)))
    for scale in (0.2, 0.05, 0.01, 0.0):
        K = scale * rng.standard_normal((m, n))
        if ops.is_ms_stabilizing(prob, K):
            return prob, K
    return prob, np.zeros((m, n))


def test_criterion_01_solver_property_suite():
    """Lyapunov residuals, duality, and finite-difference gradients on 50
    random stabilizing instances with n, m <= 6."""
    worst = {"lyap": 0.0, "dual": 0.0, "grad": 0.0}
    h = 1e-6
    for seed in range(50):
        prob, K = _random_instance(seed)
        ev = ops.evaluate(prob, K)
        F = ops.closed_loop_operator(prob, K)
        QK = ops.state_cost_matrix(prob, K)
        n = prob.n
        r1 = np.linalg.norm(ev.P - QK - ops.unvec(F.T @ ops.vec(ev.P), n)) \
            / np.linalg.norm(QK)
        r2 = np.linalg.norm(ev.Sigma - prob.Sigma0
                            - ops.unvec(F @ ops.vec(ev.Sigma), n)) \
            / np.linalg.norm(prob.Sigma0)
        worst["lyap"] = max(worst["lyap"], r1, r2)
        dual = abs(np.trace(QK @ ev.Sigma) - np.trace(ev.P @ prob.Sigma0)) \
            / abs(ev.cost)
        worst["dual"] = max(worst["dual"], dual)
        fd = np.zeros_like(K)
        for i in range(K.shape[0]):
            for j in range(K.shape[1]):
                E = np.zeros_like(K)
                E[i, j] = h
                fd[i, j] = (ops.evaluate(prob, K + E).cost
                            - ops.evaluate(prob, K - E).cost) / (2 * h)
        gerr = np.linalg.norm(fd - ev.grad) / np.linalg.norm(ev.grad)
        worst["grad"] = max(worst["grad"], gerr)
    ok = worst["lyap"] <= 1e-9 and worst["dual"] <= 1e-8 and \
        worst["grad"] <= 1e-5
    report(1, ok, f"worst Lyapunov residual {worst['lyap']:.2e} (<=1e-9), "
                  f"duality {worst['dual']:.2e} (<=1e-8), "
                  f"FD gradient {worst['grad']:.2e} (<=1e-5) over 50 instances")
    assert worst["lyap"] <= 1e-9
    assert worst["dual"] <= 1e-8
    assert worst["grad"] <= 1e-5


def test_criterion_02_gare_fixed_point(suspension, diffusion):
    results = []
    for name, prob in (("suspension", suspension), ("diffusion", diffusion)):
        sol = ops.riccati_value_iteration(prob, tol=1e-14)
        ev = ops.evaluate(prob, sol.K_star)
        gtol = 1e-6 * (1 + np.linalg.norm(sol.K_star))
        results.append((name, sol.residual, ev.grad_norm, gtol))
    ok = all(r <= 1e-10 and g <= gt for _, r, g, gt in results)
    report(2, ok, "; ".join(f"{n}: residual {r:.2e} (<=1e-10), "
                            f"|grad(K*)| {g:.2e} (<={gt:.2e})"
                            for n, r, g, gt in results))
    for _, r, g, gt in results:
        assert r <= 1e-10
        assert g <= gt


def test_criterion_03_deterministic_reduction():
    prob = make_random(4, 2, 0, 0, seed=77, spectral_target=0.8)
    K0 = np.zeros((2, 4))
    tol = 1e-10

    sol = ops.riccati_value_iteration(prob, tol=1e-14)
    P_ref, K_ref = ref.dlqr(prob.A, prob.B, prob.Q, prob.R)
    errs = {
        "P*": np.linalg.norm(sol.P_star - P_ref) / (1 + np.linalg.norm(P_ref)),
        "K*": np.linalg.norm(sol.K_star - K_ref) / (1 + np.linalg.norm(K_ref)),
    }
    ev = ops.evaluate(prob, K0)
    c_ref = ref.cost(prob.A, prob.B, prob.Q, prob.R, prob.Sigma0, K0)
    g_ref = ref.gradient(prob.A, prob.B, prob.Q, prob.R, prob.Sigma0, K0)
    errs["C"] = abs(ev.cost - c_ref) / (1 + abs(c_ref))
    errs["grad"] = np.linalg.norm(ev.grad - g_ref) / (1 + np.linalg.norm(g_ref))
    bundle = descent.compute_bounds(prob, K0)
    pg_ref, npg_ref = ref.step_bounds(prob.A, prob.B, prob.Q, prob.R,
                                      prob.Sigma0, K0)
    errs["c_pg"] = abs(bundle.c_pg - pg_ref) / (1 + abs(pg_ref))
    errs["c_npg"] = abs(bundle.c_npg - npg_ref) / (1 + abs(npg_ref))
    ok = all(v <= tol for v in errs.values())
    report(3, ok, "zero-noise mismatch vs reference LQR path: " +
           ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + " (<=1e-10)")
    for k, v in errs.items():
        assert v <= tol, k


def test_criterion_04_theorem_rate_certification(diffusion,
                                                 diffusion_kstar_eval):
    copt = diffusion_kstar_eval.cost
    nSst = np.linalg.norm(diffusion_kstar_eval.Sigma, 2)
    sigR = float(np.linalg.eigvalsh(diffusion.R).min())
    sig0 = float(np.linalg.eigvalsh(diffusion.Sigma0).min())
    K0 = np.zeros((4, 4))
    bundle = descent.compute_bounds(diffusion, K0, diffusion_kstar_eval)
    cases = {
        "gn": (0.5, 1 - 2 * 0.5 * sig0 / nSst),
        "npg": (bundle.c_npg, 1 - 2 * bundle.c_npg * sigR * sig0 / nSst),
        "gd": (bundle.c_pg, 1 - 2 * bundle.c_pg * sigR * sig0 ** 2 / nSst),
    }
    details = []
    all_ok = True
    for method, (eta, bound) in cases.items():
        trace = descent.optimize(diffusion, K0, method,
                                 descent.StepPolicy(kind="constant", eta=eta),
                                 (1e-9, 100))
        costs = trace.costs()
        assert all(c is not None for c in costs)
        monotone = all(b < a for a, b in zip(costs, costs[1:]))
        worst = -np.inf
        for a, b in zip(costs, costs[1:]):
            if a - copt > 1e-13 * copt:
                worst = max(worst, (b - copt) / (a - copt) - bound)
        ok = monotone and worst <= 1e-8
        all_ok &= ok
        details.append(f"{method}: eta={eta:.3e}, worst ratio excess "
                       f"{worst:.2e} (<=1e-8), monotone={monotone}")
        assert monotone
        assert worst <= 1e-8
    report(4, all_ok, "; ".join(details))


def test_criterion_05_policy_iteration_identity(diffusion, diffusion_riccati):
    from conftest import stabilizing_gains_near
    gains = stabilizing_gains_near(diffusion, diffusion_riccati.K_star, 20,
                                   seed=55)
    worst = 0.0
    for K in gains:
        ev = ops.evaluate(diffusion, K)
        Kn, _ = descent.step_gauss_newton(diffusion, K, 0.5)
        pi = descent.policy_iteration_gain(diffusion, ev.P)
        worst = max(worst, np.linalg.norm(Kn - pi) / (1 + np.linalg.norm(pi)))
    ok = worst <= 1e-10
    report(5, ok, f"GN(eta=1/2) vs policy-iteration update: worst relative "
                  f"difference {worst:.2e} (<=1e-10) over 20 gains")
    assert worst <= 1e-10


def test_criterion_06_certificates_via_cli(tmp_path):
    results = []
    for preset in ("network", "suspension", "gradest"):
        out = tmp_path / preset
        rc = cli.main(["certify", "--preset", preset, "--gains", "100",
                       "--seed", "3", "--out", str(out)])
        rep = json.loads((out / "certificates.json").read_text())
        results.append((preset, rc, rep["violations"]))
    ok = all(rc == 0 and v == 0 for _, rc, v in results)
    report(6, ok, "; ".join(f"{p}: exit {rc}, {v} violations on 100 gains"
                            for p, rc, v in results))
    for _, rc, v in results:
        assert rc == 0
        assert v == 0


def test_criterion_07_suspension_robustness(tmp_path):
    aware = tmp_path / "aware"
    rc1 = cli.main(["optimize", "--experiment", "suspension-noise-aware",
                    "--out", str(aware), "--seed", "0"])
    rep1 = json.loads((aware / "report.json").read_text())
    rel = rep1["summary"]["relative_suboptimality"]

    aware_costs = [float(ln.split(",")[1]) for ln in
                   (aware / "trace.csv").read_text().splitlines()[1:]]
    # monotone up to the Armijo acceptance slack (1e-12 relative)
    monotone = all(b <= a + 5e-12 * (1 + abs(a))
                   for a, b in zip(aware_costs, aware_costs[1:]))

    ignorant = tmp_path / "ignorant"
    rc2 = cli.main(["optimize", "--experiment", "suspension-noise-ignorant",
                    "--out", str(ignorant), "--seed", "0"])
    rep2 = json.loads((ignorant / "report.json").read_text())
    n_unstable = rep2["summary"]["n_ms_unstable_iterates"]
    csv = (ignorant / "trace_lqrm_eval.csv").read_text()

    ok = rc1 == 0 and rel < 1e-6 and monotone and rc2 == 0 \
        and n_unstable >= 1 and "MS_UNSTABLE" in csv
    report(7, ok, f"noise-aware relative suboptimality {rel:.2e} (<1e-6), "
                  f"monotone trace={monotone}; noise-ignorant: {n_unstable} "
                  f"mean-square unstable iterates on the noisy problem, "
                  f"marker in CSV")
    assert rc1 == 0 and rc2 == 0
    assert rel < 1e-6
    assert monotone
    assert n_unstable >= 1
    assert "MS_UNSTABLE" in csv


def test_criterion_08_gradient_estimation_scaling(tmp_path):
    """Reduced-scale reproduction of the gradient-estimation error study.

    Known limitation (see decisions ledger): at the study's pinned operating
    point the multiplicative-noise cost distribution is heavy-tailed enough
    that the noisy curve at 1e6 samples still sits far above the 10% error
    line, so the extrapolated sample-ratio sub-check cannot land in its
    window at reduced scale (and the noisy slope is seed-sensitive near the
    window edge). The sub-checks are asserted as specified regardless.
    """
    rc = cli.main(["gradexp", "--samples-max", "1000000", "--replicas", "10",
                   "--seed", "0", "--workers", "2", "--out", str(tmp_path)])
    assert rc == 0
    rows = [ln.split(",") for ln in
            (tmp_path / "gradexp.csv").read_text().splitlines()[1:]]
    data = {0: [], 1: []}
    for n, e, f in rows:
        data[int(f)].append((int(n), float(e)))
    fits = {}
    for flag in (0, 1):
        pts = [(n, e) for n, e in data[flag] if n >= 1000]
        lg = np.log10([n for n, _ in pts])
        le = np.log10([e for _, e in pts])
        a, b = np.polyfit(lg, le, 1)
        n10 = 10 ** ((np.log10(0.1) - b) / a)
        fits[flag] = (a, n10)
    slope_ok = all(-0.6 <= fits[f][0] <= -0.4 for f in (0, 1))
    matched = [(e0, e1) for (n0, e0), (n1, e1)
               in zip(data[0], data[1]) if n0 >= 1000]
    dominance_ok = all(e1 > e0 for e0, e1 in matched)
    ratio = fits[1][1] / fits[0][1]
    ratio_ok = 50.0 <= ratio <= 800.0
    ok = slope_ok and dominance_ok and ratio_ok
    report(8, ok, f"slopes: clean {fits[0][0]:.3f}, noisy {fits[1][0]:.3f} "
                  f"(window [-0.6,-0.4]); noisy>clean pointwise: "
                  f"{dominance_ok}; clean 10%-error crossing at "
                  f"n={fits[0][1]:.2e} (nominal 5e5); extrapolated 10%-error "
                  f"sample ratio {ratio:.1f} (window [50, 800], 200x nominal)")
    assert dominance_ok
    assert slope_ok, f"slopes {fits[0][0]:.3f}/{fits[1][0]:.3f} outside window"
    assert ratio_ok, f"ratio {ratio:.1f} outside [50, 800]"


def test_criterion_09_model_free_convergence(diffusion, diffusion_kstar_eval):
    copt = diffusion_kstar_eval.cost
    policy = descent.StepPolicy(kind="backtracking", alpha=0.01, beta=0.5)
    successes = 0
    rels = []
    for seed in range(5):
        trace = rollout.optimize_model_free(
            diffusion, np.zeros((4, 4)), policy, (100_000, 20, 0.1),
            (1e-12, 20), master_seed=seed, workers=2, sample_check="off")
        final = trace.final.cost
        rel = np.inf if final is None else (final - copt) / copt
        rels.append(rel)
        if rel <= 0.05:
            successes += 1
    ok = successes >= 4
    report(9, ok, f"{successes}/5 seeds reached <=5% relative suboptimality "
                  f"(values: {', '.join(f'{r:.3%}' for r in rels)})")
    assert successes >= 4


def test_criterion_10_determinism(tmp_path):
    checks = []

    # model-based experiment preset, re-run
    for run in ("a", "b"):
        cli.main(["optimize", "--experiment", "network-three-methods",
                  "--out", str(tmp_path / f"three_{run}")])
    checks.append(all(
        (tmp_path / "three_a" / f"trace_{m}.csv").read_bytes()
        == (tmp_path / "three_b" / f"trace_{m}.csv").read_bytes()
        for m in ("gd", "npg", "gn")))

    # model-free run, serial vs parallel rollout execution
    args = ["optimize", "--preset", "network", "--method", "gd-free",
            "--samples", "20000", "--horizon", "15", "--radius", "0.004",
            "--max-iter", "4", "--grad-tol", "1e-12", "--seed", "11",
            "--line-search"]
    cli.main(args + ["--out", str(tmp_path / "mf_a"), "--workers", "1"])
    cli.main(args + ["--out", str(tmp_path / "mf_b"), "--workers", "2"])
    checks.append((tmp_path / "mf_a" / "trace.csv").read_bytes()
                  == (tmp_path / "mf_b" / "trace.csv").read_bytes())

    # gradient-estimation study, re-run under different worker counts
    for run, workers in (("a", "1"), ("b", "2")):
        cli.main(["gradexp", "--samples-max", "3000", "--replicas", "2",
                  "--horizon", "10", "--seed", "5", "--workers", workers,
                  "--out", str(tmp_path / f"ge_{run}")])
    checks.append((tmp_path / "ge_a" / "gradexp.csv").read_bytes()
                  == (tmp_path / "ge_b" / "gradexp.csv").read_bytes())

    ok = all(checks)
    report(10, ok, f"byte-identical CSVs: three-methods rerun {checks[0]}, "
                   f"model-free serial-vs-parallel {checks[1]}, "
                   f"gradexp rerun {checks[2]}")
    assert all(checks)
