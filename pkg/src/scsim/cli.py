"""Command-line entry point: ``scsim run | pssa | validate | scenarios``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from scsim import presets, pssa
from scsim import scenario as sc
from scsim.errors import ScenarioError
from scsim.fabric import SECOND
from scsim.simulation import Simulation

EXIT_OK, EXIT_ASSERTION, EXIT_INVALID = 0, 1, 2
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging():
    name = os.environ.get("SCS_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(name, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _bits(text):
    try:
        out = tuple(int(b) for b in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated 0/1 values, got {text!r}") from None
    if any(b not in (0, 1) for b in out):
        raise argparse.ArgumentTypeError("bits must be 0 or 1")
    return out


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fail_back(text):
    pied, sep, at = text.partition("@")
    try:
        return pied, float(at)
    except ValueError:
        raise argparse.ArgumentTypeError("expected PIED@SECONDS, e.g. PIED_OC@6.5") from None


def load_scenario(ref):
    """A scenario file path, or the name of a bundled scenario."""
    path = Path(ref)
    if path.exists():
        return sc.load(path)
    if ref in presets.BUNDLED:
        return presets.load_bundled(ref)
    raise ScenarioError([f"no scenario file or bundled scenario named {ref!r}"])


def _print_problems(problems, out):
    for p in problems:
        print(f"error: {p}", file=out)


def cmd_run(args, out):
    try:
        scenario = load_scenario(args.scenario)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.duration is not None:
            overrides["duration"] = args.duration
        if args.trace is not None:
            overrides["trace"] = args.trace
        if overrides:
            scenario = scenario.replace(**overrides)
            problems = sc.validate(scenario)
            if problems:
                raise ScenarioError(problems)
    except ScenarioError as exc:
        _print_problems(exc.problems, sys.stderr)
        return EXIT_INVALID
    sim = Simulation(scenario, ids_enabled=False if args.no_ids else None,
                     console=lambda line: print(line, file=out, flush=True))
    for pied, at in args.fail_back or ():
        if pied not in sim.pieds:
            _print_problems([f"--fail-back: unknown PIED {pied}"], sys.stderr)
            return EXIT_INVALID
        sim.sim.schedule(round(at * SECOND), sim.apc.fail_back, pied)
    sim.run()
    summary = sim.write_outputs(args.out)
    print(f"scenario {scenario.name}: seed={scenario.seed} objective={summary['objective']:g} "
          f"alerts={len(summary['alerts'])}", file=out)
    for cb, st in summary["breakers"].items():
        print(f"  {cb}: {st['position']}", file=out)
    for name, state in summary["failover_state"].items():
        print(f"  {name}: {state}", file=out)
    failed = [a for a in summary["assertions"] if not a["ok"]]
    for a in failed:
        print(f"assertion failed: {a['name']}: expected {a['expected']!r}, got {a['actual']!r}",
              file=sys.stderr)
    print(f"outputs written to {args.out}", file=out)
    return EXIT_ASSERTION if failed else EXIT_OK


def cmd_pssa(args, out):
    n = len(args.weights)
    fixed = args.fixed if args.fixed is not None else (0,) * n
    if len(args.attacks) != n or len(fixed) != n:
        print("error: --weights, --attacks and --fixed must have the same length", file=sys.stderr)
        return EXIT_INVALID
    try:
        inst = pssa.PssaInstance(args.weights, args.gamma, args.attacks,
                                 disableable=tuple(1 - f for f in fixed))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(pssa.format_table(inst, pssa.solve(inst)), file=out)
    return EXIT_OK


def cmd_validate(args, out):
    try:
        scenario = load_scenario(args.file)
    except ScenarioError as exc:
        _print_problems(exc.problems, sys.stderr)
        return EXIT_INVALID
    print(f"{scenario.name}: ok", file=out)
    return EXIT_OK


def cmd_scenarios(args, out):
    if args.write:
        presets.write_bundled(args.write)
        print(f"wrote {len(presets.BUNDLED)} scenarios to {args.write}", file=out)
        return EXIT_OK
    if args.show:
        try:
            print(sc.dumps(presets.bundled_scenario(args.show)), end="", file=out)
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return EXIT_INVALID
        return EXIT_OK
    for name in presets.BUNDLED:
        print(f"{name:18} {presets.bundled_scenario(name).description}", file=out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="scsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write event log, pcaps and summary")
    run.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--duration", type=float, help="override the duration (virtual seconds)")
    run.add_argument("--no-ids", action="store_true", help="disable IDS inspection (no mitigation)")
    run.add_argument("--trace", choices=("control", "all"), help="event log detail")
    run.add_argument("--fail-back", type=_fail_back, action="append", metavar="PIED@SECONDS",
                     help="manually restore a PIED at the given virtual time (repeatable)")
    run.set_defaults(func=cmd_run)

    p = sub.add_parser("pssa", help="solve one PSSA instance and print the decision table")
    p.add_argument("--weights", type=_floats, required=True, help="comma-separated PIED weights")
    p.add_argument("--gamma", type=float, required=True, help="CIED activation cost")
    p.add_argument("--attacks", type=_bits, required=True, help="comma-separated attack bits")
    p.add_argument("--fixed", type=_bits, help="1 marks a PIED that must stay in service")
    p.set_defaults(func=cmd_pssa)

    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("scenarios", help="list, show or export the bundled scenarios")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--show", metavar="NAME", help="print one bundled scenario as JSON")
    g.add_argument("--write", metavar="DIR", help="write every bundled scenario to DIR")
    s.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None, out=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    return args.func(args, out or sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
