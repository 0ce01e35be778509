"""Command line: ``meanfield run <config>``, ``meanfield validate <config>``, ``meanfield version``.

Exit codes: 0 success, 2 config error, 3 budget refusal, 4 invariant
violation detected during a run.  Errors go to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .config import RunConfig, validate
from .runner import EXIT_BUDGET, EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, execute


def _report(errors):
    print(json.dumps({"errors": errors}, sort_keys=True), file=sys.stderr)


def _load(path):
    try:
        return RunConfig.load(path)
    except OSError as exc:
        _report([{"field": "file", "message": str(exc), "kind": "config"}])
        return None


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    problems = validate(cfg)
    if not problems:
        print("ok")
        return EXIT_OK
    _report([p.as_dict() for p in problems])
    return EXIT_CONFIG if any(p.kind == "config" for p in problems) else EXIT_BUDGET


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    result = execute(cfg)
    if result.errors:
        _report(result.errors)
        return result.exit_code
    for path in result.files:
        print(path)
    if result.exit_code == EXIT_VIOLATION:
        _report([dict(v, kind="invariant") for v in result.violations])
    return result.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meanfield", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config file without computing")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    ver = sub.add_parser("version", help="print the tool version")
    ver.set_defaults(func=lambda args: print(__version__) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
