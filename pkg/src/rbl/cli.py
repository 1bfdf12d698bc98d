"""Command line front end.

    rbl run SCENARIO.json [--output DIR] [--parallel]
    rbl converge SCENARIO.json --levels L [--output DIR]
    rbl catalog list
    rbl catalog describe NAME

Exit status: 0 when no check failed, 1 when a check failed, 2 for invalid scenarios,
unknown catalog names and other usage errors.
"""

import argparse
import sys

from .catalog import describe, list_families
from .errors import RBLError, ScenarioError
from .reports import write_reports
from .runner import converge, run
from .scenario import load_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="rbl", description="Boundary inequality verification runs.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the checks of a scenario")
    r.add_argument("scenario")
    r.add_argument("--output", help="report directory (overrides the scenario's output_dir)")
    r.add_argument("--parallel", action="store_true", help="run independent checks concurrently")
    c = sub.add_parser("converge", help="refinement study of a scenario")
    c.add_argument("scenario")
    c.add_argument("--levels", type=int, required=True)
    c.add_argument("--output")
    cat = sub.add_parser("catalog", help="list or describe geometry families")
    cat.add_argument("action", choices=("list", "describe"))
    cat.add_argument("name", nargs="?")
    return p


def _summary(report, paths, out):
    for c in report["checks"]:
        value = "" if c["value"] is None else f" value={c['value']:.6g}"
        out.write(f"{c['check']:<28} {c['verdict']:<12}{value}\n")
        for note in c["notes"]:
            out.write(f"    note: {note}\n")
    out.write(f"status: {report['status']}\n")
    for kind, path in paths.items():
        out.write(f"{kind}: {path}\n")


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    args = _parser().parse_args(argv)
    try:
        if args.command == "catalog":
            if args.action == "list":
                out.write("\n".join(list_families()) + "\n")
                return EXIT_OK
            if not args.name:
                err.write("error: catalog describe needs a family name\n")
                return EXIT_USAGE
            out.write(describe(args.name) + "\n")
            return EXIT_OK
        scenario = load_scenario(args.scenario)
        output = args.output or scenario.output_dir or "reports"
        if args.command == "run":
            report = run(scenario, parallel=args.parallel)
            paths = write_reports(report, output)
        else:
            report, tables = converge(scenario, args.levels)
            paths = write_reports(report, output, tables)
        _summary(report, paths, out)
        return EXIT_FAIL if report["status"] == "fail" else EXIT_OK
    except ScenarioError as exc:
        err.write(f"scenario error: {exc}\n")
        return EXIT_USAGE
    except (RBLError, OSError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
