"""Command-line front end: generation, runs, grid reproduction, checks.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 missing
input file, 4 malformed manifest or container.  Usage errors are raised
before any output file is opened, so they never leave partial products.
The worker-count default can be set with the environment variable
``PROXVR_THREADS``; the ``--threads`` flag overrides it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from proxvr import harness, theory
from proxvr.errors import (
    ManifestError,
    NumericalFailure,
    ParameterDomainError,
)
from proxvr.optimizers import MethodConfig
from proxvr.problems import (
    check_hessian_similarity,
    compute_stats,
    generate_quadratic,
    load_problem,
    save_problem,
)
from proxvr.prox import verify_prox_contraction

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_MALFORMED = 4


def _default_threads() -> int:
    env = os.environ.get("PROXVR_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxvr",
        description="Variance-reduced stochastic proximal methods on "
        "synthetic quadratic finite sums.",
        epilog="exit codes: 0 ok, 1 verification failure, 2 usage error, "
        "3 missing file, 4 malformed manifest/container",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem container")
    gen.add_argument("--n", type=int, required=True, help="number of components")
    gen.add_argument("--d", type=int, default=100, help="dimension (default 100)")
    gen.add_argument("--s", type=float, required=True, help="eigenvalue ceiling >= 1")
    gen.add_argument("--seed", type=int, required=True, help="64-bit seed")
    gen.add_argument("--out", required=True, help="output .npz path")

    run_p = sub.add_parser("run", help="average a method over repeated runs")
    run_p.add_argument("--problem", required=True, help="problem container (.npz)")
    run_p.add_argument(
        "--method", required=True, choices=["sgd", "svrg", "lsvrg", "sppm", "lsvrp"]
    )
    gamma_group = run_p.add_mutually_exclusive_group(required=True)
    gamma_group.add_argument("--gamma", type=float, help="explicit stepsize")
    gamma_group.add_argument(
        "--gamma-theory",
        action="store_true",
        help="closed-form stepsize from the realized dissimilarity",
    )
    run_p.add_argument("--p", type=float, help="refresh probability (default 1/n)")
    run_p.add_argument("--m", type=int, help="svrg reference period (default n)")
    run_p.add_argument("--K", type=int, default=1000, help="iterations (default 1000)")
    run_p.add_argument("--repeats", type=int, default=1, help="repeats (default 1)")
    run_p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    run_p.add_argument(
        "--record",
        default="sq_dist",
        help="comma-separated metrics: sq_dist[,lyapunov][,f_gap]",
    )
    run_p.add_argument("--x0-radius", type=float, default=10.0)
    run_p.add_argument("--out", required=True, help="trajectory CSV path")

    grid = sub.add_parser("grid", help="run an experiment grid")
    source = grid.add_mutually_exclusive_group(required=True)
    source.add_argument("--manifest", help="grid manifest JSON")
    source.add_argument(
        "--scale", choices=["desk", "full"], help="built-in grid preset"
    )
    grid.add_argument("--seed", type=int, default=0, help="base seed for --scale")
    grid.add_argument("--out-dir", required=True, help="output directory")
    grid.add_argument(
        "--threads", type=int, default=None,
        help="worker cap (default: PROXVR_THREADS or 1)",
    )

    rates = sub.add_parser("rates", help="recompute rate fits from trajectories")
    rates.add_argument(
        "--in", dest="input", required=True,
        help="trajectory CSV or a directory of trajectory_*.csv files",
    )
    rates.add_argument("--out", required=True, help="output CSV path")

    verify = sub.add_parser("verify", help="run the invariant suites on a problem")
    verify.add_argument("--problem", required=True, help="problem container (.npz)")
    verify.add_argument(
        "--trials", type=int, default=1000, help="sampling trials (default 1000)"
    )
    return parser


def _cmd_gen(args: argparse.Namespace) -> int:
    problem = generate_quadratic(args.n, args.d, args.s, args.seed)
    stats = compute_stats(problem)
    save_problem(args.out, problem, s=args.s, seed=args.seed)
    print(
        f"wrote {args.out}: n={problem.n} d={problem.d} s={args.s:g} "
        f"seed={args.seed} delta_sq={stats.delta_sq:.6g} mu={stats.mu:.6g}"
    )
    return EXIT_OK


def _load_problem_checked(path: str):
    """Load a container, mapping malformed contents to the malformed-input
    exit code rather than the usage one."""
    try:
        return load_problem(path)
    except ParameterDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_MALFORMED) from exc


def _cmd_run(args: argparse.Namespace) -> int:
    problem, _meta = _load_problem_checked(args.problem)
    stats = compute_stats(problem)
    p = args.p if args.p is not None else 1.0 / problem.n
    if args.gamma_theory:
        delta = math.sqrt(stats.delta_sq)
        if delta > 0.0:
            gamma = theory.theoretical_stepsize(delta, p)
        else:
            gamma = theory.fallback_stepsize(stats.mu, p)
            print("warning: zero dissimilarity, using fallback stepsize p/(3*mu)")
    else:
        gamma = args.gamma

    record = tuple(part.strip() for part in args.record.split(",") if part.strip())
    bad = set(record) - {"sq_dist", "lyapunov", "f_gap"}
    if bad:
        raise ParameterDomainError(f"unknown --record metrics: {sorted(bad)}")
    if "sq_dist" not in record:
        record = ("sq_dist",) + record
    if "lyapunov" in record and args.method not in ("lsvrg", "lsvrp"):
        raise ParameterDomainError(
            "--record lyapunov needs a method with a refresh probability"
        )

    m = args.m if args.m is not None else problem.n
    method = MethodConfig(args.method, gamma, p=p, m=m)
    config = harness.RunConfig(
        n=problem.n, s=1.0, seed=args.seed, d=problem.d, p=p,
        K=args.K, repeats=args.repeats, gamma_policy="explicit", gamma=gamma,
        x0_radius=args.x0_radius,
    )
    x0 = harness.default_x0(stats, config)
    metrics = harness.averaged_metrics(
        problem, stats, method, x0, args.K, args.repeats, args.seed, record=record
    )
    means = {name: values.mean(axis=0) for name, values in metrics.items()}
    harness.write_trajectory_csv(
        args.out,
        means["sq_dist"],
        lyapunov=means.get("lyapunov"),
        f_gap=means.get("f_gap"),
    )
    print(f"method={args.method} gamma={gamma!r} p={p:.6g} K={args.K} "
          f"repeats={args.repeats} -> {args.out}")
    return EXIT_OK


def _cmd_grid(args: argparse.Namespace) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise ParameterDomainError("--threads must be >= 1")
    if args.manifest is not None:
        manifest_path = Path(args.manifest)
        if not manifest_path.exists():
            raise FileNotFoundError(f"manifest {args.manifest!r} does not exist")
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {args.manifest!r} is not valid JSON: {exc}")
    else:
        manifest = harness.build_manifest(args.scale, args.seed)
    # Validate before creating any output.
    harness.load_manifest(manifest)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = harness.run_manifest(manifest, threads=threads)

    for cell in result.cells:
        name = f"trajectory_n{cell.config.n}_s{cell.config.s:g}.csv"
        harness.write_trajectory_csv(out_dir / name, cell.mean_sq_dist)
    if result.reports:
        harness.write_rates_csv(out_dir / "rates.csv", result.reports)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if result.failures:
        failures = [vars(f) for f in result.failures]
        (out_dir / "failures.json").write_text(json.dumps(failures, indent=2) + "\n")
        for failure in result.failures:
            print(
                f"cell n={failure.n} s={failure.s:g} failed: {failure.message}",
                file=sys.stderr,
            )
    for report in result.reports:
        print(
            f"cell n={report.n} s={report.s:g}: delta_sq={report.delta_sq:.6g} "
            f"gamma={report.gamma:.6g} rho_emp={report.rho_emp:.6f} "
            f"rho_theory={report.rho_theory:.6f} margin={report.margin:+.6f}"
        )
    if not result.reports:
        print("all cells failed", file=sys.stderr)
        return EXIT_VERIFICATION
    return EXIT_OK


def _cmd_rates(args: argparse.Namespace) -> int:
    source = Path(args.input)
    if not source.exists():
        raise FileNotFoundError(f"input {args.input!r} does not exist")
    files = (
        sorted(source.glob("trajectory_*.csv")) if source.is_dir() else [source]
    )
    if not files:
        raise ParameterDomainError(f"no trajectory_*.csv files in {args.input!r}")
    rows = []
    for path in files:
        data = harness.read_trajectory_csv(path)
        fit = harness.fit_rate(data["mean_sq_dist"])
        rows.append((path.name, fit))
    with open(args.out, "w", newline="") as fh:
        fh.write("file,slope,rho_emp,rho_alt,r_squared,n_points\n")
        for name, fit in rows:
            fh.write(
                f"{name},{fit.slope:.17g},{fit.rho_emp:.17g},"
                f"{fit.rho_alt:.17g},{fit.r_squared:.17g},{fit.n_points}\n"
            )
    for name, fit in rows:
        print(f"{name}: slope={fit.slope:.6g} rho_emp={fit.rho_emp:.6f} "
              f"r_squared={fit.r_squared:.6f}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    problem, _meta = _load_problem_checked(args.problem)
    stats = compute_stats(problem)
    trials = args.trials
    delta = math.sqrt(stats.delta_sq)
    p_run = 1.0 / problem.n
    if delta > 0.0:
        gamma = theory.theoretical_stepsize(delta, p_run)
    else:
        gamma = theory.fallback_stepsize(stats.mu, p_run)
    print(f"problem: n={problem.n} d={problem.d} delta_sq={stats.delta_sq:.6g} "
          f"mu={stats.mu:.6g} gamma={gamma:.6g}")

    failures = 0

    def report(name: str, check) -> None:
        nonlocal failures
        try:
            detail = check()
        except (NumericalFailure, ParameterDomainError) as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}{f' ({detail})' if detail else ''}")

    def similarity_suite() -> str:
        ratio = check_hessian_similarity(problem, stats, trials=trials, seed=0)
        return f"max ratio {ratio:.6g} <= delta_sq {stats.delta_sq:.6g}"

    def contraction_suite() -> str:
        pairs = max(1, trials // problem.n)
        worst_margin = np.inf
        for i in range(problem.n):
            mu_i = float(np.linalg.eigvalsh(problem.matrices[i])[0])
            ratio = verify_prox_contraction(
                problem.matrices[i], problem.offsets[i], gamma, mu_i,
                pairs=pairs, seed=i,
            )
            worst_margin = min(worst_margin, 1.0 / (1.0 + gamma * mu_i) - ratio)
        return f"smallest bound margin {worst_margin:.3e} over {problem.n} components"

    def certificate_suite() -> str:
        checked = 0
        for p in (0.01, 0.1, 0.5, 1.0):
            gamma_p = (
                theory.theoretical_stepsize(delta, p)
                if delta > 0.0
                else theory.fallback_stepsize(stats.mu, p)
            )
            for mu_gamma in (0.0, 0.1, 1.0, 10.0):
                mu = mu_gamma / gamma_p
                params = theory.certificate_recipe(delta, mu, gamma_p, p)
                verdict = theory.certificate_conditions(params)
                if not verdict.all_ok():
                    raise NumericalFailure(
                        f"certificate inequalities {tuple(verdict)} failed at "
                        f"p={p}, mu*gamma={mu_gamma}"
                    )
                checked += 1
        return f"{checked} (p, mu*gamma) points"

    report("hessian-similarity sampler", similarity_suite)
    report("prox contraction bound", contraction_suite)
    report("contraction certificate grid", certificate_suite)
    return EXIT_VERIFICATION if failures else EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "run": _cmd_run,
    "grid": _cmd_grid,
    "rates": _cmd_rates,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ManifestError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except ParameterDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
