"""Command line entry point: ``spinlab run|validate|report``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CapacityError, ConfigError, DegenerateMeasureError, NumericalError, UnsupportedModelError
from .experiments import run, validate

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERICAL = 0, 2, 3, 4


def _table(pairs):
    width = max((len(k) for k, _ in pairs), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in pairs)


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(obj, list) and obj and isinstance(obj[0], dict):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, out)
    else:
        out.append((prefix, obj))
    return out


def report(manifest_path) -> str:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from None
    lines = [_table([("experiment", manifest["config"]["experiment"]), ("seed", manifest["seed"]),
                     ("wall time [s]", f"{manifest['wall_time']:.3f}"),
                     ("backend", manifest["versions"].get("backend"))])]
    lines.append("")
    lines.append(_table([(a["path"], a["sha256"][:16]) for a in manifest["artifacts"]]))
    summary = manifest_path.parent / "summary.json"
    if summary.exists():
        lines.append("")
        lines.append(_table(_flatten("", json.loads(summary.read_text()), [])))
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spinlab", description="Exact and Monte Carlo block-dynamics experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--output-root", default=None)
    p_val = sub.add_parser("validate", help="check a config against the schema and size guards")
    p_val.add_argument("config")
    p_rep = sub.add_parser("report", help="print a manifest and its summary")
    p_rep.add_argument("manifest")
    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            manifest = run(args.config, workers=args.workers, output_root=args.output_root)
            print(manifest["output_dir"])
        elif args.verb == "validate":
            validate(args.config)
            print("ok")
        else:
            print(report(args.manifest))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"guard violation ({exc.guard}): {exc}", file=sys.stderr)
        return EXIT_GUARD
    except UnsupportedModelError as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (NumericalError, DegenerateMeasureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
