"""Command-line experiment runner.

Exit codes: 0 success, 1 configuration error or failed validation,
2 runtime error during a run, 3 certification failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    average_estimate_metrics,
    bound_report,
    centralized_reference,
    cumulative_average_time,
    feasibility_bound,
    fmt,
    grid_gap,
    metacontrol_certify,
)
from .baseline import run_scenario_baseline, sample_scenarios
from .config import ConfigError, ExperimentConfig, load_config
from .graph import GraphError, TimeVaryingGraph, build_graph, validate_graph
from .problem import (
    ProblemError,
    SipProblem,
    TerminalSetConstraint,
    catalog_build,
    check_constraint,
    check_objective,
    estimate_g0,
)
from .solver import RunResult, SolverConfig, SolverError, run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CERT = 0, 1, 2, 3
COMPARE_HEADER = ("method", "k", "objective", "violation", "cum_avg_time_ns")


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *lines: str):
        if not self.quiet:
            for line in lines:
                print(line)


def build_setup(cfg: ExperimentConfig) -> tuple[SipProblem, TimeVaryingGraph, SolverConfig]:
    """Resolve config into live objects; every failure surfaces as ConfigError."""
    try:
        problem = catalog_build(cfg.problem_name, cfg.problem_params)
    except ProblemError as e:
        raise ConfigError(f"config.problem: {e}") from None
    g = cfg.graph
    try:
        if g.kind == "custom":
            graph = TimeVaryingGraph.from_matrices([np.array(m, dtype=float) for m in g.matrices],
                                                   eta=g.eta, B=g.B or 1)
        else:
            graph = build_graph(g.kind, g.V, B=g.B, eta=g.eta, self_weight=g.self_weight, seed=g.seed)
    except GraphError as e:
        raise ConfigError(f"config.graph: {e}") from None
    if graph.V != problem.V:
        raise ConfigError(f"config.graph.V: {cfg.problem_name} has {problem.V} local objectives, "
                          f"but the graph has {graph.V} nodes")
    try:
        scfg = SolverConfig(**cfg.solver, timing=cfg.timing == "wall")
    except ValueError as e:
        raise ConfigError(f"config.solver: {e}") from None
    return problem, graph, scfg


def _require_valid_graph(graph: TimeVaryingGraph, cfg: ExperimentConfig, K: int):
    horizon = max(graph.B, min(cfg.analysis.validate_horizon, K))
    rep = validate_graph(graph, horizon)
    if not rep.passed:
        bad = rep.first_failure()
        raise ConfigError(
            f"config.graph: schedule fails validation at round {bad.round} (row residual "
            f"{bad.max_row_residual:.3g}, column residual {bad.max_col_residual:.3g}, "
            f"min positive entry {bad.min_pos_entry:.3g}, window connected {bad.window_connected})")


def _out_dir(cfg: ExperimentConfig) -> Path:
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _vec(x: np.ndarray) -> str:
    if x.size <= 4:
        return "(" + ", ".join(fmt(v) for v in x) + ")"
    return f"[{x.size}-vector, norm {fmt(float(np.linalg.norm(x)))}]"


def _summary_lines(problem: SipProblem, res: RunResult, method: str) -> list[str]:
    m = res.metrics
    lines = [f"[{method}]"]
    for i in range(problem.V):
        lines.append(f"node {i}: F(x_bar) = {fmt(m.F_bar[i])}  violation(x_bar) = "
                     f"{fmt(m.violation_bar[i])}  x_bar = {_vec(m.x_bar[i])}")
    lines += [
        f"rows = {m.K * m.V}",
        f"total_inner_steps = {int(m.inner_steps.sum())}",
        f"max_inner_steps = {int(m.inner_steps.max())}",
        f"initial_repair_steps = {int(res.repair_steps.sum())}",
        f"final_max_consensus_err = {fmt(float(m.consensus_err[-1].max()))}",
        f"max_stored_violation = {fmt(float(m.violation.max()))}",
    ]
    if problem.known_optimum is not None:
        val, pt = problem.known_optimum
        lines.append(f"max |F(x_bar) - F*| = {fmt(float(np.abs(m.F_bar - val).max()))}")
        lines.append(f"max ||x_bar - x*|| = {fmt(float(np.linalg.norm(m.x_bar - pt, axis=1).max()))}")
    return lines


def _observed_lines(problem: SipProblem, res: RunResult, report) -> list[str]:
    m = res.metrics
    K = m.K
    eps_next = res.config.c_eps / np.sqrt(np.arange(2, K + 2))
    slack = m.violation - eps_next[:, None] - grid_gap(problem.constraint)
    return [
        "[observed]",
        f"max_inner_steps = {int(m.inner_steps.max())}",
        f"max_consensus_err_minus_b_k = {fmt(float((m.max_consensus() - report.b).max()))}",
        f"max_stored_violation_minus_eps_next = {fmt(float(slack.max()))}",
        f"max_violation_x_bar = {fmt(float(m.violation_bar.max()))}",
        f"max_F_x_bar = {fmt(float(m.F_bar.max()))}",
    ]


def cmd_run(cfg: ExperimentConfig, say: _Out) -> int:
    problem, graph, scfg = build_setup(cfg)
    _require_valid_graph(graph, cfg, scfg.K)
    out = _out_dir(cfg)
    results = [("dagd", run(problem, graph, scfg, run_id=cfg.run_id))]
    if cfg.baseline is not None:
        for N in cfg.baseline.N:
            scen = sample_scenarios(problem.constraint.index_set, N, cfg.baseline.seed)
            results.append((f"dsa-{N}", run_scenario_baseline(problem, graph, scfg, scen,
                                                             run_id=cfg.run_id)))
    with open(out / "run.csv", "w", newline="") as fh:
        for j, (_, res) in enumerate(results):
            res.metrics.write_csv(fh, header=j == 0)

    main = results[0][1]
    report = bound_report(problem, graph, scfg, main.iterates[0])
    (out / "bounds.txt").write_text(report.to_text() + "\n".join(_observed_lines(problem, main, report)) + "\n")

    lines = [f"run_id = {cfg.run_id}", f"problem = {problem.name}", f"graph = {graph.kind} (V={graph.V})",
             f"K = {scfg.K}"]
    for method, res in results:
        lines += _summary_lines(problem, res, method)

    if isinstance(problem.constraint, TerminalSetConstraint):
        u = main.x_bar[0]
        (out / "controls.txt").write_text("".join(fmt(v) + "\n" for v in u))
        tol = cfg.analysis.certify_tolerance
        tol = feasibility_bound(scfg.K, problem.D) if tol is None else tol
        cert = metacontrol_certify(u, problem, cfg.analysis.certify_samples, cfg.analysis.certify_seed, tol)
        (out / "certification.csv").write_text(cert.to_csv())
        lines.append(cert.summary())
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    say(*lines, f"wrote {out}/run.csv, bounds.txt, summary.txt")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, say: _Out) -> int:
    problem, graph, scfg = build_setup(cfg)
    ok = True
    horizon = max(graph.B, cfg.analysis.validate_horizon)
    rep = validate_graph(graph, horizon)
    ok &= rep.passed
    out = _out_dir(cfg)
    (out / "graph_validation.csv").write_text(rep.to_csv())
    lines = [rep.summary()]
    rng = np.random.default_rng(scfg.seed)
    n = cfg.analysis.check_samples
    fd = min(n, 20)
    for i, obj in enumerate(problem.objectives):
        chk = check_objective(obj, problem.domain, rng, n, name=f"objective {i}", fd_samples=fd)
        ok &= chk.passed
        lines.append(chk.line())
    chk = check_constraint(problem.constraint, problem.domain, rng, n, fd_samples=fd)
    ok &= chk.passed
    lines.append(chk.line())
    try:
        lines.append(estimate_g0(problem, rng, cfg.analysis.g0_samples).line())
    except ProblemError as e:
        lines.append(f"G0 estimate unavailable: {e}")
    lines.append("validation: " + ("PASS" if ok else "FAIL"))
    (out / "validation.txt").write_text("\n".join(lines) + "\n")
    say(*lines)
    return EXIT_OK if ok else EXIT_CONFIG


def cmd_compare(cfg: ExperimentConfig, say: _Out) -> int:
    if cfg.baseline is None:
        raise ConfigError("config.baseline: compare needs a baseline block with N values")
    problem, graph, scfg = build_setup(cfg)
    _require_valid_graph(graph, cfg, scfg.K)
    out = _out_dir(cfg)
    runs = [("dagd", run(problem, graph, scfg, metrics=False))]
    for N in cfg.baseline.N:
        scen = sample_scenarios(problem.constraint.index_set, N, cfg.baseline.seed)
        runs.append((f"dsa-{N}", run_scenario_baseline(problem, graph, scfg, scen, metrics=False)))
    lines = []
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for method, res in runs:
            F, viol = average_estimate_metrics(problem, res)
            T = cumulative_average_time(res.node_ns)
            for k in range(len(F)):
                w.writerow((method, k + 1, fmt(F[k]), fmt(viol[k]), fmt(T[k])))
            lines.append(f"{method}: final F(x_hat) = {fmt(F[-1])}  violation(x_hat) = {fmt(viol[-1])}  "
                         f"cumulative avg time = {T[-1] / 1e3:.1f} us")
    (out / "compare_summary.txt").write_text("\n".join(lines) + "\n")
    say(*lines, f"wrote {out}/compare.csv")
    return EXIT_OK


def cmd_reference(cfg: ExperimentConfig, say: _Out) -> int:
    problem, _, _ = build_setup(cfg)
    a = cfg.analysis
    modes = ("grid", "algorithm") if a.reference_mode == "both" else (a.reference_mode,)
    lines = []
    for mode in modes:
        try:
            ref = centralized_reference(problem, mode, resolution=a.reference_resolution,
                                        iterations=a.reference_iterations)
        except ProblemError as e:
            raise ConfigError(f"config.analysis.reference_mode: {e}") from None
        lines.append(f"mode = {mode}  F_ref = {fmt(ref.value)}  violation = {fmt(ref.violation)}  "
                     f"x_ref = " + " ".join(fmt(v) for v in ref.x))
    out = _out_dir(cfg)
    (out / "reference.txt").write_text("\n".join(lines) + "\n")
    say(*lines)
    return EXIT_OK


def read_controls(path: str | Path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"--controls: cannot read {path} ({e.strerror})") from None
    vals = []
    for ln, line in enumerate(text.splitlines(), 1):
        if line.strip():
            try:
                vals.append(float(line))
            except ValueError:
                raise ConfigError(f"{path}: line {ln}: not a number: {line.strip()!r}") from None
    return np.array(vals)


def cmd_certify(cfg: ExperimentConfig, say: _Out, controls: str | None) -> int:
    if controls is None:
        raise ConfigError("certify needs --controls PATH")
    problem, _, scfg = build_setup(cfg)
    if not isinstance(problem.constraint, TerminalSetConstraint):
        raise ConfigError("config.problem.name: certify applies to meta_control only")
    u = read_controls(controls)
    if u.size != problem.n:
        raise ConfigError(f"{controls}: expected {problem.n} values, found {u.size}")
    tol = cfg.analysis.certify_tolerance
    tol = feasibility_bound(scfg.K, problem.D) if tol is None else tol
    cert = metacontrol_certify(u, problem, cfg.analysis.certify_samples, cfg.analysis.certify_seed, tol)
    out = _out_dir(cfg)
    (out / "certification.csv").write_text(cert.to_csv())
    say(cert.summary())
    return EXIT_OK if cert.passed else EXIT_CERT


COMMANDS = ("run", "validate", "compare", "reference", "certify")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distsip", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="overrides solver, graph and baseline seeds")
    p.add_argument("--workers", type=int, help="overrides solver.workers")
    p.add_argument("--controls", help="control vector file for certify (one float per line)")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    say = _Out(args.quiet)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = args.out
        if args.seed is not None:
            cfg.solver["seed"] = args.seed
            cfg.graph.seed = args.seed
            if cfg.baseline is not None:
                cfg.baseline = dataclasses.replace(cfg.baseline, seed=args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers: must be >= 1")
            cfg.solver["workers"] = args.workers
        if args.command == "run":
            return cmd_run(cfg, say)
        if args.command == "validate":
            return cmd_validate(cfg, say)
        if args.command == "compare":
            return cmd_compare(cfg, say)
        if args.command == "reference":
            return cmd_reference(cfg, say)
        return cmd_certify(cfg, say, args.controls)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
