"""Command-line front end.

    edgesim run CONFIG [--seed N] [--out DIR] [--policy P] [--duration S]
    edgesim suite {limitations,clique,fattree} [--reps R] [--drops N] [--parallel J] ...
    edgesim factorial DESIGN [RESULTS] [--column NAME] [--out DIR]

Outputs go to ``--out``, else ``$EDGESIM_OUT``, else ``./edgesim-out``.
Exit codes: 0 ok, 2 invalid configuration, 3 failure while running.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from edgesim import scenarios, suites
from edgesim.engine import run
from edgesim.factorial import FactorialDesign, effects, read_responses, write_analysis, \
    write_responses
from edgesim.scenario import ConfigError, Scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _out_dir(args) -> str:
    return args.out or os.environ.get("EDGESIM_OUT") or "edgesim-out"


def _load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return Scenario.from_json(text)


def cmd_run(args) -> int:
    scenario = _load_scenario(args.config)
    changes = {}
    if args.duration is not None:
        changes["duration"] = args.duration
    if changes:
        scenario = scenario.replace(**changes)
    if args.policy is not None:
        scenario = scenarios.with_policy(scenario, args.policy)
    result = run(scenario, args.seed)
    paths = result.write(_out_dir(args))
    s = result.summary()
    p90 = s["delay_p90"]
    print(f"{scenario.name}: seed={result.seed} issued={s['issued']} ok={s['ok']} "
          f"p90={'n/a' if p90 is None else f'{p90 * 1e3:.3f} ms'}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_suite(args) -> int:
    kwargs = {"seed": 1 if args.seed is None else args.seed, "parallel": args.parallel}
    if args.duration is not None:
        kwargs["duration"] = args.duration
    if args.policy:
        valid = {"limitations": scenarios.LIMITATION_POLICIES, "clique": scenarios.CLIQUE_POLICIES,
                 "fattree": scenarios.FATTREE_POLICIES}[args.family]
        bad = [p for p in args.policy if p not in valid]
        if bad:
            raise ConfigError(f"--policy: {bad} not in the {args.family} set {list(valid)}")
        kwargs["policies"] = tuple(args.policy)
    if args.family == "fattree":
        kwargs["drops"] = args.drops
    else:
        kwargs["reps"] = args.reps
    result = suites.SUITES[args.family](**kwargs)
    print(result.format_table())
    for p in result.write(_out_dir(args)):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_factorial(args) -> int:
    try:
        with open(args.design) as fh:
            design = FactorialDesign.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.design}: {exc}") from None
    out = _out_dir(args)
    if args.results:
        try:
            responses = read_responses(design, args.results, args.column)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"{args.results}: {exc}") from None
    else:
        unknown = [f.name for f in design.factors if f.name not in suites.DESIGN_FACTORS]
        if unknown:
            raise ConfigError(f"factors: {unknown} cannot be simulated; "
                              f"known factors are {sorted(suites.DESIGN_FACTORS)}")
        responses = suites.design_responses(
            design, seed=1 if args.seed is None else args.seed,
            duration=60.0 if args.duration is None else args.duration,
            parallel=args.parallel, metric=args.column if args.column != "response" else "p90")
        os.makedirs(out, exist_ok=True)
        write_responses(design, responses, os.path.join(out, "responses.csv"), args.column)
    eff = effects(design, responses)
    width = max(len(n) for n in eff.names)
    for m, name in enumerate(eff.names):
        alloc = "" if m == 0 else f"{eff.allocation[name]:7.2f}%"
        ci = ""
        if eff.intervals is not None:
            lo, hi = eff.intervals[name]
            ci = f"  ({lo:.6g}, {hi:.6g}){' *' if eff.significant(name) else ''}"
        print(f"{name:>{width}} {float(eff.q[m]):14.6g} {alloc:>9}{ci}")
    print(f"{'residual':>{width}} {'':14} {eff.residual_share:7.2f}%")
    for note in eff.notes:
        print(f"note: {note}")
    for p in write_analysis(design, responses, out):
        print(f"wrote {p}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=None, help="output directory (default $EDGESIM_OUT)")
    common.add_argument("--parallel", type=int, default=1, help="worker processes")
    common.add_argument("--duration", type=float, default=None, help="simulated seconds")

    parser = argparse.ArgumentParser(prog="edgesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run one scenario file")
    p.add_argument("config")
    p.add_argument("--policy", default=None, help="override the scenario's policy")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("suite", parents=[common], help="run a bundled experiment family")
    p.add_argument("family", choices=sorted(suites.SUITES))
    p.add_argument("--reps", type=int, default=10, help="replications per case and policy")
    p.add_argument("--drops", type=int, default=50, help="Monte Carlo drops (fattree)")
    p.add_argument("--policy", action="append", default=None,
                   help="restrict to this policy (repeatable)")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("factorial", parents=[common], help="2^k r factorial analysis")
    p.add_argument("design", help="JSON design: factors with low/high levels, replications")
    p.add_argument("results", nargs="?", default=None,
                   help="CSV of responses; omitted means simulate the clique design")
    p.add_argument("--column", default="response", help="response column in the CSV")
    p.set_defaults(func=cmd_factorial)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"edgesim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any run failure as exit 3
        print(f"edgesim: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
