"""
Command-line entry point.

    nsch run CONFIG [--section.key VALUE ...]
    nsch resume CHECKPOINT [--section.key VALUE ...]
    nsch sweep CONFIG --axis section.key --values v1,v2,... [--workers N]
    nsch check OUTPUT_DIR
    nsch norms CHECKPOINT

Exit status: 0 all enabled checks passed, 1 a check failed, 2 blow-up,
3 usage or configuration error, 4 unreadable checkpoint or series.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import CheckpointError, ConfigError
from .config import load_config
from .runner import (
    EXIT_INFRA,
    EXIT_OK,
    EXIT_USAGE,
    check,
    checkpoint_norms,
    exit_status,
    resume,
    run,
    sweep,
)

__all__ = ["main", "parse_overrides"]


def parse_overrides(tokens: list[str]) -> dict[str, str]:
    """``--section.key value`` / ``--section.key=value`` pairs to a dict."""
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unexpected argument {tok!r} (overrides look like --section.key value)")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"override {tok} needs a value")
            val = tokens[i + 1]
            i += 2
        out[key] = val
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsch", description="NSCH pseudo-spectral simulator and verification harness")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="integrate a configuration from t = 0")
    r.add_argument("config")

    rs = sub.add_parser("resume", help="continue from a checkpoint")
    rs.add_argument("checkpoint")

    sw = sub.add_parser("sweep", help="run a configuration over values of one field")
    sw.add_argument("config")
    sw.add_argument("--axis", required=True, help="dotted field name, e.g. perturbation.delta")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--workers", type=int, default=1)

    c = sub.add_parser("check", help="re-evaluate verdicts from an existing series")
    c.add_argument("output_dir")

    n = sub.add_parser("norms", help="print the NormSuite of a checkpoint as JSON")
    n.add_argument("checkpoint")
    return p


def _report(verdicts: dict, stream=None) -> None:
    stream = stream or sys.stdout
    for name, rep in verdicts["checks"].items():
        status = "PASS" if rep.get("passed") else "FAIL"
        extra = f"  ({rep['error']})" if "error" in rep else ""
        print(f"{status}  {name}{extra}", file=stream)
    if verdicts.get("blowup"):
        b = verdicts["blowup"]
        print(f"BLOW-UP at t={b['t']:.6g}: {b['reason']}", file=stream)
    print(f"exit status {verdicts['exit_status']}", file=stream)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        overrides = parse_overrides(extra)
        if args.verb in ("check", "norms") and overrides:
            raise ConfigError(f"{args.verb} takes no overrides")
        if args.verb == "run":
            result = run(load_config(args.config, overrides))
            _report(result.verdicts)
            return result.exit_status
        if args.verb == "resume":
            result = resume(args.checkpoint, overrides)
            _report(result.verdicts)
            return result.exit_status
        if args.verb == "sweep":
            cfg = load_config(args.config, overrides)
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            res = sweep(cfg, args.axis, values, workers=args.workers)
            for m in res["members"]:
                print(f"{args.axis}={m['value']}: exit {m['exit_status']}  apriori_ratio={m.get('apriori_ratio')}")
            return EXIT_OK if res["aggregate"]["all_passed"] else max(m["exit_status"] for m in res["members"])
        if args.verb == "check":
            verdicts = check(args.output_dir)
            _report(verdicts)
            return exit_status(verdicts)
        if args.verb == "norms":
            ns = checkpoint_norms(args.checkpoint)
            print(json.dumps(ns.to_json(), indent=2))
            return EXIT_OK
    except ConfigError as exc:
        print(f"nsch: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, OSError, ValueError) as exc:
        print(f"nsch: {exc}", file=sys.stderr)
        return EXIT_INFRA
    return EXIT_USAGE  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
