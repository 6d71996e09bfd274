"""Command-line entry point.

One command: export, driven by a JSON job description. Exit codes:
0 success, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExportError, JobError
from .export import export
from .job import ExportJob


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="convert per-sample feature vectors plus a metadata "
        "table into an embedding container and manifest",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("export", help="run an export job")
    run.add_argument("--job", required=True, help="job description JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.job, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise JobError("job description must be a JSON object")
        job = ExportJob.from_dict(doc)
        summary = export(job)
    except (ExportError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
