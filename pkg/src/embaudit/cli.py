"""Command-line entry point.

Commands: synth (generate a labeled cohort), audit (run the configured
audits), report (render a report document), validate (cross-check a
cohort). Exit codes: 0 success, 1 ran with warnings, 2 invalid input,
3 infeasible request.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audits import run_audit
from .errors import InfeasibleError, InvalidInputError, SchemaError
from .manifest import load_manifest, save_manifest, validate_cohort
from .qemb import read_qemb, write_qemb
from .report import canonical_json, load_report, render_markdown, save_report
from .synth import SynthSpec, generate_cohort


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    return doc


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_json(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    spec = SynthSpec.from_dict(config)
    matrix, manifest, truth = generate_cohort(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_qemb(out / "cohort.qemb", matrix)
    save_manifest(out / "manifest.csv", manifest)
    truth.save(out / "truth.json")
    print(f"wrote {matrix.count} x {matrix.dim} embeddings to {out}")
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    config = _load_json(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    out = Path(args.out)
    report = run_audit(config, out, base_dir=Path(args.config).parent)
    save_report(out / "report.json", report)
    if args.format == "markdown":
        (out / "report.md").write_text(render_markdown(report), encoding="utf-8")
    for line in report["warnings"]:
        print(f"warning: {line}", file=sys.stderr)
    print(f"wrote {out / 'report.json'}")
    return 1 if report["warnings"] else 0


def cmd_report(args: argparse.Namespace) -> int:
    doc = load_report(args.config)
    if not doc.get("sections"):
        raise SchemaError("report has no sections to render")
    if args.format == "markdown":
        text = render_markdown(doc)
        name = "report.md"
    else:
        text = canonical_json(doc)
        name = "report.json"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")
        print(f"wrote {out / name}")
    else:
        print(text, end="")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load_json(args.config)
    cohort = config.get("cohort")
    if not isinstance(cohort, dict) or "qemb" not in cohort or "manifest" not in cohort:
        raise SchemaError("config.cohort must give qemb and manifest paths")
    base = Path(args.config).parent

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    matrix = read_qemb(resolve(cohort["qemb"]), check_finite=False)
    manifest = load_manifest(resolve(cohort["manifest"]))
    rep = validate_cohort(matrix, manifest)
    text = canonical_json(rep.to_dict())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.json").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embaudit",
        description="Audit precomputed embedding cohorts for privacy leakage, "
        "shift reliability, and group fairness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a labeled synthetic cohort")
    synth.add_argument("--config", required=True, help="cohort spec JSON")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--seed", type=int, default=None, help="overrides config seed")
    synth.set_defaults(func=cmd_synth)

    audit = sub.add_parser("audit", help="run the configured audits")
    audit.add_argument("--config", required=True, help="audit config JSON")
    audit.add_argument("--out", required=True, help="output directory")
    audit.add_argument("--seed", type=int, default=None, help="overrides config seed")
    audit.add_argument(
        "--format",
        choices=("json", "markdown"),
        default="json",
        help="also render report.md when markdown",
    )
    audit.set_defaults(func=cmd_audit)

    report = sub.add_parser("report", help="render an existing report document")
    report.add_argument("--config", required=True, help="path to report.json")
    report.add_argument("--out", default=None, help="output directory (else stdout)")
    report.add_argument(
        "--format", choices=("json", "markdown"), default="markdown"
    )
    report.set_defaults(func=cmd_report)

    validate = sub.add_parser("validate", help="cross-check a cohort's files")
    validate.add_argument(
        "--config", required=True, help="JSON with a cohort.{qemb,manifest} block"
    )
    validate.add_argument("--out", default=None, help="also write validation.json here")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
