"""Command-line entry point.

Exit codes: 0 success, 1 configuration or domain error, 2 no equilibrium,
3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from relperf.config import ConfigError, RunConfig, load_config, parse_config, preset
from relperf.convergence import ConvergenceTable, convergence_study, fit_decay_exponent
from relperf.equilibria import (
    EquilibriumResult,
    Setting,
    competition_profile,
    solve,
    value_exponent,
)
from relperf.errors import DomainError, NoEquilibrium, NumericError
from relperf.model import Population, TypeDistribution, empirical_distribution
from relperf.reporting import csv_text, json_text
from relperf.simulation import (
    best_response,
    exact_payoff,
    mc_payoff,
    mf_best_response,
    mfe_consistency_check,
    simulate_paths,
    simulate_terminal,
)
from relperf.sweeps import run_sweep

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_EQUILIBRIUM = 2
EXIT_VERIFY_FAILED = 3


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; exit code 2 is reserved
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: cwd)")
    common.add_argument("--seed", type=int, help="override simulation.seed")
    common.add_argument("--preset", choices=("fig1", "fig2", "fig3"), help="built-in figure configuration")
    common.add_argument("--format", choices=("json", "csv"), help="report format")

    parser = _Parser(prog="relperf", description="Equilibria of portfolio games with relative performance concerns.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="closed-form equilibrium")
    sub.add_parser("verify", parents=[common], help="numerical best-response and consistency checks")
    sub.add_parser("sweep", parents=[common], help="allocation over a parameter grid")
    sub.add_parser("converge", parents=[common], help="n-agent to mean-field convergence table")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo wealth and payoffs")
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    if args.config is not None and args.preset is not None:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset is not None:
        cfg = parse_config(preset(args.preset))
    elif args.config is not None:
        cfg = load_config(args.config)
    else:
        raise ConfigError("a --config file or a --preset is required")
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = dataclasses.replace(cfg, simulation=dataclasses.replace(cfg.simulation, seed=args.seed))
    return cfg


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_bytes(text.encode("utf-8"))
    return path


def _no_equilibrium_report(exc: NoEquilibrium, cfg: RunConfig) -> dict:
    return {
        "status": "no_equilibrium",
        "model": cfg.kind.value,
        "setting": cfg.setting.value,
        "message": str(exc),
        "phi": exc.phi,
        "psi": exc.psi,
    }


def _profiles(res: EquilibriumResult) -> list | None:
    d = TypeDistribution(res.agents, res.weights) if res.setting is Setting.MEAN_FIELD else empirical_distribution(Population(res.agents))
    try:
        return [competition_profile(res.kind, a, d).to_dict() for a in res.agents]
    except DomainError:
        return None


def solve_report(res: EquilibriumResult) -> dict:
    out = {"status": "ok", **res.to_dict(), "agents": [a.to_dict() for a in res.agents]}
    if res.setting is Setting.NASH:
        moments = [res.moments(i) for i in range(len(res.agents))]
    else:
        moments = [res.moments()] * len(res.agents)
    out["value_exponents"] = [
        value_exponent(res.kind, None, a, m).rho for a, m in zip(res.agents, moments)
    ]
    out["moments"] = [m.to_dict() for m in moments] if res.setting is Setting.NASH else moments[0].to_dict()
    profiles = _profiles(res)
    if profiles is not None:
        out["competition_profiles"] = profiles
    return out


def cmd_solve(cfg: RunConfig, args: argparse.Namespace) -> int:
    try:
        res = solve(cfg.kind, cfg.source)
    except NoEquilibrium as exc:
        _write(args.out, "solve.json", json_text(_no_equilibrium_report(exc, cfg)))
        print(f"no equilibrium: psi = {exc.psi!r}", file=sys.stderr)
        return EXIT_NO_EQUILIBRIUM
    report = solve_report(res)
    if args.format == "csv":
        rows = zip(range(len(res.agents)), res.strategies.tolist(), res.merton.tolist(), report["value_exponents"])
        _write(args.out, "solve.csv", csv_text(("index", "strategy", "merton", "rho"), rows))
    else:
        _write(args.out, "solve.json", json_text(report))
    return EXIT_OK


def _result_with(cfg: RunConfig, strategies: np.ndarray) -> EquilibriumResult:
    closed = solve(cfg.kind, cfg.source)
    return dataclasses.replace(closed, strategies=strategies)


def cmd_verify(cfg: RunConfig, args: argparse.Namespace) -> int:
    try:
        closed = solve(cfg.kind, cfg.source)
        closed_strategies = closed.strategies
    except NoEquilibrium as exc:
        if cfg.strategies is None:
            _write(args.out, "verify.json", json_text(_no_equilibrium_report(exc, cfg)))
            return EXIT_NO_EQUILIBRIUM
        closed, closed_strategies = None, None
    strategies = cfg.strategies if cfg.strategies is not None else closed_strategies
    tol = cfg.tolerance
    rows = []
    for i in range(len(cfg.source.agents)):
        if isinstance(cfg.source, Population):
            br = best_response(cfg.kind, i, cfg.source, strategies, cfg.horizon)
        else:
            br = mf_best_response(cfg.kind, i, cfg.source, strategies, cfg.horizon)
        diff = abs(br - float(strategies[i]))
        rows.append(
            {
                "index": i,
                "strategy": float(strategies[i]),
                "best_response": br,
                "abs_diff": diff,
                "closed_form": None if closed_strategies is None else float(closed_strategies[i]),
                "closed_form_diff": None if closed_strategies is None else abs(float(strategies[i]) - float(closed_strategies[i])),
                "passed": diff <= tol,
            }
        )
    passed = all(r["passed"] for r in rows)
    consistency = None
    if isinstance(cfg.source, TypeDistribution) and closed is not None:
        mfe = dataclasses.replace(closed, strategies=strategies)
        consistency = mfe_consistency_check(cfg.kind, cfg.source, mfe, cfg.simulation).to_dict()
        passed = passed and consistency["passed"]
    report = {
        "status": "passed" if passed else "failed",
        "model": cfg.kind.value,
        "setting": cfg.setting.value,
        "tolerance": tol,
        "agents": rows,
        "max_abs_diff": max(r["abs_diff"] for r in rows),
        "consistency": consistency,
        "passed": passed,
    }
    if args.format == "csv":
        header = ("index", "strategy", "best_response", "abs_diff", "closed_form", "closed_form_diff", "passed")
        _write(args.out, "verify.csv", csv_text(header, ([r[h] for h in header] for r in rows)))
    else:
        _write(args.out, "verify.json", json_text(report))
    if not passed:
        print(f"verification failed: max |best response - strategy| = {report['max_abs_diff']:.3g}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a 'sweep' block or a --preset")
    result = run_sweep(cfg.kind, cfg.source, cfg.sweep)
    if args.format == "json":
        _write(args.out, "sweep.json", json_text(result.to_dict()))
    else:
        _write(args.out, "sweep.csv", result.to_csv())
    return EXIT_OK


def _decay(table: ConvergenceTable) -> float | None:
    errs = table.mean_errors
    ok = np.isfinite(errs) & (errs > 0)
    if ok.sum() < 2:
        return None
    return fit_decay_exponent(table.n_values[ok], errs[ok])


def cmd_converge(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.convergence is None:
        raise ConfigError("converge needs a 'convergence' block")
    spec = cfg.convergence
    table = convergence_study(cfg.kind, cfg.source, spec.n_list, spec.replications, cfg.simulation.seed, spec.mode)
    if args.format == "json":
        report = {
            "mode": table.mode.value,
            "rows": [dataclasses.asdict(r) for r in table.rows],
            "decay_exponent": _decay(table),
        }
        _write(args.out, "converge.json", json_text(report))
    else:
        _write(args.out, "converge.csv", table.to_csv())
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    strategies = cfg.strategies
    if strategies is None:
        strategies = solve(cfg.kind, cfg.source).strategies
    sim = cfg.simulation
    if isinstance(cfg.source, TypeDistribution):
        mfe = _result_with(cfg, np.asarray(strategies))
        report = {
            "model": cfg.kind.value,
            "setting": cfg.setting.value,
            "seed": str(sim.seed),
            "consistency": mfe_consistency_check(cfg.kind, cfg.source, mfe, sim).to_dict(),
        }
        _write(args.out, "simulate.json", json_text(report))
        return EXIT_OK

    p = cfg.source
    pairs = list(zip(p.agents, np.asarray(strategies).tolist()))
    wealth = simulate_terminal(cfg.kind, pairs, sim)
    header = ("path", *(f"x_{i}" for i in range(p.n)))
    _write(args.out, "wealth.csv", csv_text(header, ((k, *row) for k, row in enumerate(wealth.tolist()))))
    if sim.time_steps > 1:
        times, paths = simulate_paths(cfg.kind, pairs, sim)
        rows = (
            (k, j, float(times[j]), *paths[j, k].tolist())
            for k in range(sim.num_paths)
            for j in range(times.shape[0])
        )
        _write(args.out, "paths.csv", csv_text(("path", "step", "t", *header[1:]), rows))
    payoffs = []
    for i in range(p.n):
        est = mc_payoff(cfg.kind, i, p, strategies, sim)
        payoffs.append({"index": i, **est.to_dict(), "exact": exact_payoff(cfg.kind, i, p, strategies, sim.horizon)})
    report = {
        "model": cfg.kind.value,
        "setting": cfg.setting.value,
        "seed": str(sim.seed),
        "num_paths": sim.num_paths,
        "horizon": sim.horizon,
        "strategies": np.asarray(strategies).tolist(),
        "payoffs": payoffs,
    }
    _write(args.out, "simulate.json", json_text(report))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "converge": cmd_converge,
    "simulate": cmd_simulate,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except NoEquilibrium as exc:
        print(f"no equilibrium: psi = {exc.psi!r}", file=sys.stderr)
        return EXIT_NO_EQUILIBRIUM
    except (DomainError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
