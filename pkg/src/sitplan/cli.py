"""Command-line front end: ``sitplan --scenario FILE <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

from .control import feasible
from .duration import SWEEP_COLUMNS, allee_cost_regression, sweep_allee
from .errors import NumericError, ScenarioError, SitError
from .optimize import INFEASIBLE, NO_TRAPPING, TRAP_REMAINING, enumerate_strategies, optimize
from .scenario import Scenario, parse_grid, parse_scenario, preset_names
from .wild import persistence_equilibrium

EXIT_OK = 0
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4
EXIT_INPUT = 5


def fmt(v) -> str:
    """Six significant digits; empty for missing values."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{float(v):.6g}"


def _patch_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated patch numbers, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _grid(text: str) -> tuple[float, ...]:
    try:
        return parse_grid(text)
    except ScenarioError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sitplan", description=__doc__)
    ap.add_argument("--scenario", help="scenario YAML file, or preset:NAME")
    ap.add_argument("--out", default=None, help="directory for CSV and table output")
    ap.add_argument("--tol-report", action="store_true", help="print solver tolerances and residuals")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("equilibrium", help="maximal equilibrium of the uncontrolled model")
    sub.add_parser("feasibility", help="can releases within the bounds eliminate the population")
    sub.add_parser("optimize", help="minimum-cost release rates on the scenario's release set")
    en = sub.add_parser("enumerate", help="rank all release subsets of a given size")
    en.add_argument("--k", type=int, help="subset size (default: scenario value)")
    en.add_argument("--forbid", type=_patch_list, help="comma-separated patch numbers to exclude")
    en.add_argument("--trap", help="'none', 'remaining' or comma-separated patch numbers")
    en.add_argument("--trap-rho", type=float, help="wild trapping mortality on trapped patches")
    en.add_argument("--trap-rho-s", type=float, help="sterile trapping mortality (default: --trap-rho)")
    du = sub.add_parser("duration", help="basin entry times for multiples of the a = 0 optimum")
    du.add_argument("--p", type=_float_list, help="comma-separated release multipliers")
    du.add_argument("--a-grid", type=_grid, help="'start:stop:count' or comma-separated values")
    du.add_argument("--estimate-only", action="store_true", help="skip the exact entry time")
    sw = sub.add_parser("sweep-allee", help="optimal cost as a function of the Allee parameter")
    sw.add_argument("--a-grid", type=_grid, help="'start:stop:count' or comma-separated values")
    sub.add_parser("presets", help="list bundled scenario presets")
    return ap


class Output:
    """Collects the human-readable table and CSV rows of one command."""

    def __init__(self, scenario: Scenario | None, command: str, out_dir: str | None):
        self.lines: list[str] = []
        self.header: list[str] | None = None
        self.rows: list[list[str]] = []
        self.name = scenario.name if scenario else "sitplan"
        self.command = command
        self.out_dir = out_dir

    def say(self, line: str = "") -> None:
        self.lines.append(line)
        print(line)

    def table(self, header, rows) -> None:
        self.header = list(header)
        self.rows = [list(r) for r in rows]

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self) -> None:
        if self.out_dir is None:
            return
        d = Path(self.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        stem = f"{self.name}_{self.command}"
        if self.header is not None:
            (d / f"{stem}.csv").write_text(self.csv_text())
        (d / f"{stem}.txt").write_text("\n".join(self.lines) + "\n")


def _patches(idx) -> str:
    return "{" + ",".join(str(i + 1) for i in idx) + "}"


def _split(ceiled, idx=None) -> str:
    n = len(ceiled)
    return "(" + ",".join(f"{int(ceiled[i])}" if idx is None or i in idx else "--" for i in range(n)) + ")"


def cmd_equilibrium(sc, args, out):
    model = sc.build_model()
    x = persistence_equilibrium(model)
    out.say(f"maximal equilibrium: ({', '.join(f'{v:.2f}' for v in x)})")
    out.table(["patch", "x_star"], [[i + 1, fmt(v)] for i, v in enumerate(x)])
    return EXIT_OK


def cmd_feasibility(sc, args, out):
    model, cfg = sc.build_model(), sc.build_config()
    res = feasible(model, cfg)
    out.say(f"release set: {_patches(sorted(cfg.bounds.cs))}")
    out.say(f"infimum criterion: {res.value:.6g}")
    out.say(f"supremal sterile equilibrium: {res.supremal}")
    out.say("feasible" if res.feasible else "infeasible")
    out.table(["feasible", "criterion"], [[str(res.feasible).lower(), fmt(res.value)]])
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def cmd_optimize(sc, args, out):
    model, cfg = sc.build_model(), sc.build_config()
    res = optimize(model, cfg)
    idx = sorted(cfg.bounds.cs)
    out.say(f"status: {res.status}")
    if res.status == INFEASIBLE:
        out.say(f"criterion infimum {res.h_value:.6g} does not reach -alpha = {-cfg.alpha:g}")
        out.table(["patch", "lambda", "lambda_ceiled"], [])
        return EXIT_INFEASIBLE
    ceiled = res.ceiled()
    out.say(f"release set {_patches(idx)}: {_split(ceiled, idx)} total {int(ceiled.sum())}")
    for note in res.notes:
        out.say(f"note: {note}")
    if args.tol_report:
        out.say(f"h + alpha = {res.h_value + cfg.alpha:.3e}, kkt residual = {res.kkt_residual:.3e}, "
                f"newton iterations = {res.iterations}")
    out.table(["patch", "lambda", "lambda_ceiled"],
              [[i + 1, fmt(res.lambda_star.lam[i]), int(ceiled[i])] for i in idx])
    return EXIT_OK


def _trap_rule(text):
    if text is None or text == "none":
        return NO_TRAPPING
    if text == "remaining":
        return TRAP_REMAINING
    return tuple(i - 1 for i in _patch_list(text))


def cmd_enumerate(sc, args, out):
    model, cfg = sc.build_model(), sc.build_config()
    n = model.n
    exp = sc.experiment
    k = args.k if args.k is not None else exp.k
    if k is None:
        raise ScenarioError("subset size missing: pass --k or set experiment.k")
    forbid = set(sc.control.forbidden)
    if args.forbid:
        for f in args.forbid:
            if not 1 <= f <= n:
                raise ScenarioError(f"forbidden patch {f} not in 1..{n}")
        forbid |= {f - 1 for f in args.forbid}
    allowed = [i for i in range(n) if i not in forbid]
    if args.trap is not None:
        rule = _trap_rule(args.trap)
    elif isinstance(exp.trap, str):
        rule = TRAP_REMAINING if exp.trap == "remaining" else NO_TRAPPING
    else:
        rule = exp.trap
    rho = args.trap_rho if args.trap_rho is not None else exp.trap_rho
    rho_s = args.trap_rho_s if args.trap_rho_s is not None else (
        exp.trap_rho_s if args.trap_rho is None else None)
    if k > len(allowed):
        raise ScenarioError(f"k = {k} exceeds the {len(allowed)} allowed patches")
    reports = enumerate_strategies(model, cfg, k, allowed, rule, rho, rho_s)
    if not reports:
        out.say("no feasible subset")
        out.table(["rank", "subset", "total"], [])
        return EXIT_INFEASIBLE
    out.say(f"k = {k}, forbidden {_patches(sorted(forbid))}, trapping {rule if isinstance(rule, str) else _patches(rule)}")
    rows = []
    for rank, r in enumerate(reports, 1):
        c = r.ceiled()
        mark = " *" if r.tied_with_best else ""
        out.say(f"{rank:3d}  {_patches(r.subset):12s} {_split(c, r.subset)}  total {int(c.sum())}{mark}")
        if args.tol_report:
            out.say(f"     h + alpha = {r.result.h_value + cfg.alpha:.3e}, kkt = {r.result.kkt_residual:.3e}")
        rows.append([rank, " ".join(str(i + 1) for i in r.subset)]
                    + [fmt(v) for v in r.lambda_star] + [fmt(r.total), int(c.sum()),
                                                         str(r.tied_with_best).lower(),
                                                         " ".join(str(i + 1) for i in r.trapping_config)])
    out.say("* within 0.1% of the best total")
    out.table(["rank", "subset"] + [f"lambda_{i + 1}" for i in range(n)]
              + ["total", "total_ceiled", "tied_with_best", "trapped"], rows)
    return EXIT_OK


def cmd_duration(sc, args, out):
    model, cfg = sc.build_model(), sc.build_config()
    exp = sc.experiment
    p_list = args.p or exp.p_list
    a_grid = args.a_grid or exp.a_grid
    base = optimize(model.with_allee(0.0), cfg)
    if base.status == INFEASIBLE:
        out.say("base release is infeasible")
        out.table(list(SWEEP_COLUMNS), [])
        return EXIT_INFEASIBLE
    out.say(f"base release (a = 0): {_split(base.ceiled(), sorted(cfg.bounds.cs))}")
    rows = sweep_allee(model, cfg, base.lambda_star.lam, p_list, a_grid,
                       estimate_only=args.estimate_only or exp.estimate_only)
    out.say(f"{'a':>8} {'p':>5} {'tau_exact':>11} {'tau_est':>11} {'total':>13}")
    for r in rows:
        out.say(f"{r.a_value:8g} {r.p:5g} {fmt(r.tau_exact) or '-':>11} {fmt(r.tau_estimate) or '-':>11} "
                f"{fmt(r.total_released) or '-':>13}")
    out.table(list(SWEEP_COLUMNS), [[fmt(r.a_value), fmt(r.p), fmt(r.tau_exact), fmt(r.tau_estimate),
                                     fmt(r.total_released), fmt(r.total_released_estimate)]
                                    for r in rows])
    return EXIT_OK


def cmd_sweep_allee(sc, args, out):
    model, cfg = sc.build_model(), sc.build_config()
    a_grid = args.a_grid or sc.experiment.a_grid
    reg = allee_cost_regression(model, cfg, a_grid)
    n = model.n
    for a, lam, tot in zip(reg.a_values, reg.releases, reg.totals):
        out.say(f"a = {a:8g}: total {tot:.6g}")
    out.say(f"fit: total = {reg.slope:.6g} * a + {reg.intercept:.6g}")
    out.table(["a_value"] + [f"lambda_{i + 1}" for i in range(n)] + ["total"],
              [[fmt(a)] + [fmt(v) for v in lam] + [fmt(t)]
               for a, lam, t in zip(reg.a_values, reg.releases, reg.totals)])
    return EXIT_OK


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "feasibility": cmd_feasibility,
    "optimize": cmd_optimize,
    "enumerate": cmd_enumerate,
    "duration": cmd_duration,
    "sweep-allee": cmd_sweep_allee,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        for name in preset_names():
            print(name)
        return EXIT_OK
    try:
        if not args.scenario:
            raise ScenarioError("--scenario is required")
        sc = parse_scenario(args.scenario)
        out = Output(sc, args.command, args.out)
        code = COMMANDS[args.command](sc, args, out)
        out.write()
        return code
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, SitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
