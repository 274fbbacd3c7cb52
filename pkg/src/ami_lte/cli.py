"""``ami-lte`` command line.

Exit codes: 0 success, 1 reproduction mismatch or failed self-check,
2 bad input (scenario parse error, invalid flag value), 3 infeasible
demand or simulator abort.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import capacity_model as cm
from . import reproduce as rp
from . import sched_sim
from .errors import AmiLteError, ChecksumError, InfeasibleError, InvalidConfigurationError, ScenarioError
from .lte_phy import EtaMode, Modulation
from .scenario_io import (
    TABLE_DECIMALS,
    Architecture,
    ResultRow,
    ScenarioFile,
    SimulationBlock,
    emit_results,
    expand_sweep,
    format_table,
    parse_scenario,
)
from .units import parse_duration
from .validate import run_checks

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3

log = logging.getLogger("ami_lte")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# helpers


def _mcs_override(text: str) -> tuple[Modulation, int]:
    mod, sep, idx = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected MOD=ITBS, got {text!r}")
    try:
        return Modulation.parse(mod), int(idx)
    except (InvalidConfigurationError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _duration_arg(text: str) -> Fraction:
    try:
        return parse_duration(text if not text.replace(".", "", 1).isdigit() else f"{text} s")
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _write(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)


def _load_scenario(args) -> ScenarioFile:
    if not args.scenario:
        raise CliError("--scenario is required for this command", EXIT_INPUT)
    try:
        text = Path(args.scenario).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read scenario: {exc}", EXIT_INPUT) from None
    try:
        sf = parse_scenario(text)
    except ScenarioError as exc:
        raise CliError(f"{args.scenario}: {exc}", EXIT_INPUT) from None
    if args.eta_mode:
        sf = replace(sf, eta_mode=EtaMode(args.eta_mode))
    if args.mcs_override:
        sf = replace(sf, i_tbs_override={**sf.i_tbs_override, **dict(args.mcs_override)})
        for mod in sf.i_tbs_override:
            try:
                sf.mcs(mod)
            except InvalidConfigurationError as exc:
                raise CliError(f"--mcs-override: {exc}", EXIT_INPUT) from None
    return sf


def evaluate(sf: ScenarioFile) -> list[ResultRow]:
    """Closed-form rows for one scenario point; BRR attached when both architectures are present."""
    tdd, sp, mcs = sf.tdd, sf.service, sf.mcs()
    rows = []
    flat = None
    if Architecture.FLAT in sf.architectures:
        flat = cm.flat_report(sf.flat(), sf.bandwidth, tdd, mcs, sp)
        rows.append(ResultRow(Architecture.FLAT, sf.k_sm_total, None, sf.bandwidth, sf.modulation,
                              flat.n_rb_per_node, flat.gamma))
    if Architecture.GROUPED in sf.architectures:
        g = sf.grouped()
        rep = cm.grouped_report(g, sf.bandwidth, tdd, mcs, sp)
        ratio = None
        if flat is not None and sf.k_sm_total > 0:
            ratio = cm.brr(sf.flat(), g, mcs, mcs, sp)
        rows.append(ResultRow(Architecture.GROUPED, sf.k_sm_total, g.k_sm_dc, sf.bandwidth, sf.modulation,
                              rep.n_rb_per_node, rep.gamma, ratio))
    return rows


def _render(rows: list[ResultRow], fmt: str) -> str:
    if fmt == "csv":
        return emit_results(rows, "csv")
    out = []
    for k in sorted({r.k_sm_total for r in rows}):
        out.append(f"K_SM_total = {k}, percent of uplink bandwidth")
        out.append(format_table([r for r in rows if r.k_sm_total == k], 3))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(args) -> int:
    sf = _load_scenario(args)
    rows = evaluate(replace(sf, sweep=type(sf.sweep)()))
    _write(args, _render(rows, args.format))
    return EXIT_OK


def cmd_sweep(args) -> int:
    points = expand_sweep(_load_scenario(args))
    log.info("sweeping %d scenario points with %d job(s)", len(points), args.jobs)
    if args.jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(evaluate, points))  # map preserves input order
    else:
        results = [evaluate(p) for p in points]
    _write(args, _render([r for rs in results for r in rs], args.format))
    return EXIT_OK


def _metric_rows(arch: Architecture, m: sched_sim.SimMetrics, gamma: Fraction) -> list[tuple]:
    rows = [(arch.value, name, value) for name, value in m.summary_rows()]
    g = float(gamma)
    rows.append((arch.value, "closed_form_gamma", f"{g:.9f}"))
    for name, measured in (("utilization", m.mean_uplink_rb_utilization_ami), ("gamma_equivalent", m.gamma_equivalent)):
        err = abs(measured - g) / g if g else float("nan")
        rows.append((arch.value, f"relative_error_{name}", f"{err:.6f}"))
    return rows


def cmd_simulate(args) -> int:
    sf = _load_scenario(args)
    block = sf.simulation or SimulationBlock()
    duration = args.duration if args.duration is not None else block.duration
    load = block.load_model(args.seed)
    tdd, sp, mcs = sf.tdd, sf.service, sf.mcs()
    out = [("architecture", "metric", "value")]
    for arch in sf.architectures:
        if arch is Architecture.FLAT:
            f = sf.flat()
            gamma = cm.gamma_flat(f, sf.bandwidth, tdd, mcs, sp)
            m = sched_sim.simulate_flat(f, sf.bandwidth, tdd, mcs, sp, load, duration, block.stagger)
        else:
            g = sf.grouped()
            dep = sched_sim.build_deployment(g, sf.bandwidth, tdd, mcs, sp, load, stagger=block.stagger)
            m = sched_sim.run(dep, duration)  # aborts naming the DC if infeasible
            gamma = cm.gamma_grouped(g, sf.bandwidth, tdd, mcs, sp)
        if m.overload:
            print(f"overload ({arch.value}): {m.overload_reason}", file=sys.stderr)
        out += _metric_rows(arch, m, gamma)
        log.info("%s: utilization %.6f vs closed form %.6f", arch.value, m.mean_uplink_rb_utilization_ami, gamma)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(out)
    _write(args, buf.getvalue())
    return EXIT_OK


def cmd_reproduce(args) -> int:
    target = args.target
    if target in rp.FIGURES:
        text, checks = rp.FIGURES[target]()
        _write(args, text)
    else:
        i_tbs = dict(args.mcs_override or [])
        eta = EtaMode(args.eta_mode) if args.eta_mode else EtaMode.TABLE_REPRODUCTION
        cmp = rp.compare_table(target, args.rounding, i_tbs or None, eta, args.data_dir)
        if args.format == "csv":
            rows = rp.table_rows(target, i_tbs or None, eta)
            _write(args, emit_results(rows, "csv", TABLE_DECIMALS[target]))
            sys.stderr.write(cmp.render())
        else:
            _write(args, cmp.render())
        checks = [rp.Check(f"{target} reproduction", cmp.passed, f"{len(cmp.mismatches)} non-exempt mismatches")]
    for c in checks:
        print(c.line(), file=sys.stderr)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_MISMATCH


def cmd_validate(args) -> int:
    checks = run_checks(args.data_dir, oracle=not args.quick)
    _write(args, "".join(c.line() + "\n" for c in checks))
    failed = [c for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: " + ", ".join(c.name for c in failed), file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--data-dir", help=argparse.SUPPRESS)
    return common


def _scenario_flags(fmt_default: str = "csv") -> argparse.ArgumentParser:
    # fresh parser per subcommand: parent actions are shared, so defaults would leak
    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", metavar="PATH", help="TOML scenario file")
    scen.add_argument("--format", choices=("csv", "table"), default=fmt_default)
    scen.add_argument("--eta-mode", choices=[m.value for m in EtaMode])
    scen.add_argument("--mcs-override", metavar="MOD=ITBS", type=_mcs_override, action="append",
                      help="TBS index for a modulation, e.g. 64QAM=19 (repeatable)")
    return scen


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ami-lte", description="AMI uplink capacity over LTE-TDD.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[_common(), _scenario_flags()], help="closed-form consumption for a scenario")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", parents=[_common(), _scenario_flags()], help="TTI-level simulation of a scenario")
    s.add_argument("--seed", type=int, help="background load seed (overrides the scenario)")
    s.add_argument("--duration", type=_duration_arg, help="simulated time, seconds or with unit")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", parents=[_common(), _scenario_flags()], help="closed-form consumption over the sweep grid")
    w.add_argument("--jobs", type=int, default=1, help="worker processes; output order is fixed")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("reproduce", parents=[_common(), _scenario_flags("table")],
                       help="regenerate a reference table or figure series")
    r.add_argument("target", choices=rp.TARGETS)
    r.add_argument("--rounding", choices=("two-stage", "half-up"), default="two-stage")
    r.set_defaults(func=cmd_reproduce)

    v = sub.add_parser("validate", parents=[_common()], help="run the embedded self-checks")
    v.add_argument("--quick", action="store_true", help="skip the min_rbs brute-force scan")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "jobs", 1) < 1:
        print("ami-lte: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ami-lte: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleError as exc:
        print(f"ami-lte: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ChecksumError as exc:
        print(f"ami-lte: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (ScenarioError, InvalidConfigurationError) as exc:
        print(f"ami-lte: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AmiLteError as exc:
        print(f"ami-lte: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
