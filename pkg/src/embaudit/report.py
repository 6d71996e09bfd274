"""Report assembly and rendering.

Reports are canonical JSON documents (sorted keys, two-space indent,
trailing newline) so a re-run with the same config and cohort reproduces
the bytes exactly. The markdown renderer prints every numeric cell with
repr so values survive a parse round-trip unchanged.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

TOOLKIT_NAME = "embaudit"


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def save_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(canonical_json(report), encoding="utf-8")


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _table(headers: list[str], rows: list[list]) -> list[str]:
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(c) for c in row) + " |")
    lines.append("")
    return lines


def _folded_cells(block: dict, metric: str) -> list:
    return [block["mean"][metric], block["std"][metric]]


def _privacy_md(section: dict) -> list[str]:
    lines = ["## Privacy", ""]
    rows = []
    skipped = []
    for attr, row in sorted(section["attributes"].items()):
        if "skipped" in row:
            skipped.append(f"- `{attr}`: skipped: {row['skipped']}")
            continue
        rows.append(
            [
                attr,
                row["num_classes"],
                row["support"],
                row["excluded_missing"],
                row["chance"],
                row["majority_fraction"],
                row["cv"]["mean"]["accuracy"],
                row["cv"]["std"]["accuracy"],
                row["cv"]["mean"]["macro_f1"],
                row["cv"]["std"]["macro_f1"],
                row["leakage_vs_chance"],
                row["leakage_vs_majority"],
            ]
        )
    if rows:
        lines += _table(
            [
                "attribute",
                "classes",
                "support",
                "excluded",
                "chance",
                "majority",
                "acc_mean",
                "acc_std",
                "f1_mean",
                "f1_std",
                "leak_chance",
                "leak_majority",
            ],
            rows,
        )
    lines += skipped + ([""] if skipped else [])
    return lines


def _degradation_rows(settings: dict, metric: str) -> list[list]:
    rows = []
    for setting, row in sorted(settings.items()):
        if "skipped" in row:
            rows.append([setting, "skipped: " + row["skipped"]] + [None] * 4)
            continue
        rows.append(
            [
                setting,
                row["baseline_setting"],
                row["baseline"]["mean"][metric],
                row["ood"]["mean"][metric],
                row["degradation_absolute"][metric],
                row["degradation_relative"][metric],
            ]
        )
    return rows


def _reliability_md(section: dict) -> list[str]:
    lines = ["## Reliability under distribution shift", ""]
    for task, block in sorted(section["tasks"].items()):
        lines.append(f"### Task: {task}")
        lines.append("")
        lines += _table(
            [
                "setting",
                "baseline_setting",
                "baseline_acc",
                "ood_acc",
                "abs_degradation",
                "rel_degradation",
            ],
            _degradation_rows(block["settings"], "accuracy"),
        )
    return lines


def _retrieval_md(section: dict) -> list[str]:
    lines = ["## Retrieval", ""]
    for setting, row in sorted(section["settings"].items()):
        lines.append(f"### Setting: {setting}")
        lines.append("")
        if "skipped" in row:
            lines += [f"- skipped: {row['skipped']}", ""]
            continue
        metric_rows = []
        for name in row["baseline"]:
            metric_rows.append(
                [
                    name,
                    row["baseline"][name]["value"],
                    row["ood"][name]["value"],
                    row["degradation_absolute"][name],
                    row["degradation_relative"][name],
                ]
            )
        lines += _table(
            ["metric", "baseline", "ood", "abs_degradation", "rel_degradation"],
            metric_rows,
        )
    return lines


def _survival_md(section: dict) -> list[str]:
    lines = ["## Survival", ""]
    if "skipped" in section:
        return lines + [f"- skipped: {section['skipped']}", ""]
    rows = _degradation_rows(section["settings"], "concordance_index")
    lines += _table(
        [
            "setting",
            "baseline_setting",
            "baseline_cindex",
            "ood_cindex",
            "abs_degradation",
            "rel_degradation",
        ],
        rows,
    )
    return lines


def _fairness_md(section: dict) -> list[str]:
    lines = ["## Fairness", ""]
    for setting, row in sorted(section["settings"].items()):
        lines.append(f"### Plan: {setting}")
        lines.append("")
        if "skipped" in row:
            lines += [f"- skipped: {row['skipped']}", ""]
            continue
        lines.append(f"- overall accuracy: {_fmt(row['overall_accuracy'])}")
        for attr, block in sorted(row["subgroups"].items()):
            if "skipped" in block:
                lines.append(f"- `{attr}` gap: skipped: {block['skipped']}")
                continue
            parts = ", ".join(
                f"{g}={_fmt(v['value'])} (n={v['support']})"
                for g, v in sorted(block["by_group"].items())
            )
            lines.append(f"- `{attr}` gap: {_fmt(block['gap'])} ({parts})")
        inst = row["institutions"]
        if "skipped" in inst:
            lines.append(f"- institution CV: skipped: {inst['skipped']}")
            lines.append("")
            continue
        lines.append(f"- institution CV: {_fmt(inst['cv'])}")
        lines.append("")
        inst_rows = [
            [name, v["value"], v["support"]]
            for name, v in sorted(inst["by_institution"].items())
        ]
        lines += _table(["institution", "accuracy", "support"], inst_rows)
        if inst["excluded"]:
            lines.append(
                "- excluded below min_support: " + ", ".join(inst["excluded"])
            )
            lines.append("")
    return lines


def render_markdown(report: dict) -> str:
    """Markdown view of a report document."""
    lines = [
        "# Embedding audit report",
        "",
        f"- toolkit: {report['toolkit']['name']} {report['toolkit']['version']}",
        f"- config hash: `{report['config_hash']}`",
        f"- seed: {report['seed']}",
    ]
    cohort = report.get("cohort", {})
    if cohort:
        lines.append(
            f"- cohort: {cohort.get('samples')} samples x {cohort.get('dim')} dims, "
            f"level {cohort.get('level')}, group key {cohort.get('group_key')}"
        )
    recipe = report.get("training_recipe", {}).get("probe")
    if recipe:
        lines.append(
            f"- probe recipe: hidden {recipe['hidden_dim']} (relu), "
            f"{recipe['epochs']} epochs, batch {recipe['batch_size']}, "
            f"lr {_fmt(recipe['lr'])}, cosine period {recipe['cosine_period']}"
        )
    lines.append("")
    sections = report.get("sections", {})
    if "privacy" in sections:
        lines += _privacy_md(sections["privacy"])
    if "reliability" in sections:
        lines += _reliability_md(sections["reliability"])
    if "retrieval" in sections:
        lines += _retrieval_md(sections["retrieval"])
    if "survival" in sections:
        lines += _survival_md(sections["survival"])
    if "fairness" in sections:
        lines += _fairness_md(sections["fairness"])
    warnings = report.get("warnings", [])
    lines.append("## Warnings")
    lines.append("")
    if warnings:
        lines += [f"- {w}" for w in warnings]
    else:
        lines.append("- none")
    lines.append("")
    return "\n".join(lines)
