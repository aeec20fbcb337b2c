"""Command-line entry point: ``ptamper --command <name> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness.runner import COMMANDS, EXIT_INVALID, FORMATS, MODES, load_config, run
from .harness.suite import CriterionResult


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ptamper", description=__doc__)
    ap.add_argument("--config", help="JSON experiment config; flags override its fields")
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--seed", type=int, dest="master_seed", help="master seed (u64, default 0)")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--eps", type=float, help="attack precision in (0, 1]")
    ap.add_argument("--p", type=float, help="tampering probability")
    ap.add_argument("--k", type=int, help="corrupted parties (mpp-attack) or iteration budget (bias-sim)")
    ap.add_argument("--m", type=int, help="number of parties")
    ap.add_argument("--alpha", type=float, help="risk threshold for the confidence objective")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--preset", help="protocol preset for mpp-attack")
    ap.add_argument("--objective", dest="adversary_objective", choices=("confidence", "risk", "targeted"))
    ap.add_argument("--process", help="process definition JSON file")
    ap.add_argument("--function", dest="objective", help="objective name (and, or, parity, mean, threshold:t, ...)")
    ap.add_argument("--covering", help="covering definition JSON file")
    ap.add_argument("--protocol", help="protocol definition JSON file")
    ap.add_argument("--out", help="write the report here instead of stdout")
    ap.add_argument("--format", choices=FORMATS)
    ap.add_argument("--support-cap", type=int, dest="support_cap")
    return ap


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    config = args.pop("config")
    try:
        cfg = load_config(config, args)
        manifest = run(cfg)
    except (ValueError, TypeError, KeyError, LookupError, RuntimeError, OSError) as exc:
        # malformed inputs and oversized supports are validation failures
        print(f"ptamper: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = manifest.render(cfg.format)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    if cfg.command == "suite":
        for check in manifest.checks:
            res = CriterionResult(check["criterion"], check["name"], check["status"] == "pass",
                                  check["summary"], check["runtime"])
            print(res.line(), file=sys.stderr)
    failed = [c["name"] for c in manifest.checks if c["status"] == "fail"]
    if failed:
        print(f"ptamper: failed checks: {json.dumps(failed)}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
