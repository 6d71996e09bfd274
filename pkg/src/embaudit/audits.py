"""Audit orchestration: privacy, reliability, retrieval, survival,
fairness sections assembled into one reproducible report.

Every section row cites the serialized split plan it was computed from
and the seed that built it. Settings that cannot be constructed on the
cohort are skipped with a structured warning instead of failing the run.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from dataclasses import fields as dataclass_fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import (
    CoverageError,
    DataValidationError,
    DegenerateDataError,
    InfeasibleError,
    MetricError,
    SchemaError,
)
from .manifest import CohortManifest, load_manifest
from .metrics import (
    MetricValue,
    accuracy,
    degradation,
    institution_cv,
    leakage_score,
    macro_f1,
    majority_fraction,
    retrieve_and_score,
    subgroup_gap,
)
from .mil import (
    MilConfig,
    SurvivalConfig,
    bags_from_cohort,
    run_cv_bags,
    run_cv_survival,
)
from .probe import ProbeConfig, predict, run_cv, train_probe
from .qemb import EmbeddingMatrix, read_qemb
from .report import TOOLKIT_NAME, config_hash
from .seeding import rng_for
from .splits import (
    ID_BASELINE,
    OOD1,
    OOD2,
    OOD3,
    make_id_split,
    make_matched_baseline,
    make_ood1,
    make_ood2,
    make_ood3,
    save_plan,
)

AUDIT_NAMES = ("privacy", "reliability", "retrieval", "survival", "fairness")
PRIVACY_ATTRIBUTES = ("gender", "race", "age_group", "institution")
FAIRNESS_ATTRIBUTES = ("gender", "race")
_SKIP = (InfeasibleError, CoverageError, DegenerateDataError)


@dataclass
class AuditInputs:
    matrix: EmbeddingMatrix
    manifest: CohortManifest
    X: np.ndarray
    level: str
    group_key: str
    warnings: list[str]


def prepare_inputs(
    matrix: EmbeddingMatrix,
    manifest: CohortManifest,
    min_institution_samples: int = 0,
) -> AuditInputs:
    """Validate alignment, drop under-sized institutions, infer grouping."""
    if matrix.count != manifest.count:
        raise DataValidationError(
            f"embedding rows ({matrix.count}) != manifest rows ({manifest.count})"
        )
    matrix.validate()
    warnings: list[str] = []
    if min_institution_samples > 0:
        counts: dict[str, int] = {}
        for rec in manifest.records:
            counts[rec.institution] = counts.get(rec.institution, 0) + 1
        dropped = sorted(
            i for i, n in counts.items() if n < min_institution_samples
        )
        if dropped:
            keep = [
                i
                for i, rec in enumerate(manifest.records)
                if rec.institution not in set(dropped)
            ]
            warnings.append(
                f"dropped institutions below {min_institution_samples} samples: "
                + ", ".join(dropped)
            )
            manifest = manifest.subset(keep)
            matrix = EmbeddingMatrix(matrix.values[keep])
    levels = {r.level for r in manifest.records}
    if len(levels) > 1:
        warnings.append("cohort mixes patch and slide rows; grouping by patient")
        level = "mixed"
    else:
        level = next(iter(levels)) if levels else "slide"
    group_key = "slide" if level == "patch" else "patient"
    return AuditInputs(
        matrix=matrix,
        manifest=manifest,
        X=matrix.values.astype(np.float64),
        level=level,
        group_key=group_key,
        warnings=warnings,
    )


def validate_config(config: dict) -> None:
    cohort = config.get("cohort")
    if not isinstance(cohort, dict) or "qemb" not in cohort or "manifest" not in cohort:
        raise SchemaError("config.cohort must give qemb and manifest paths")
    audits = config.get("audits")
    if audits is not None:
        if not audits:
            raise SchemaError("config.audits selects no audit")
        bad = [a for a in audits if a not in AUDIT_NAMES]
        if bad:
            raise SchemaError(f"unknown audits {bad}; valid: {list(AUDIT_NAMES)}")
    attrs = config.get("privacy", {}).get("attributes")
    if attrs is not None:
        bad = [a for a in attrs if a not in PRIVACY_ATTRIBUTES]
        if bad:
            raise SchemaError(
                f"unknown privacy attributes {bad}; valid: {list(PRIVACY_ATTRIBUTES)}"
            )
    tf = config.get("test_fraction", 0.2)
    if not 0.0 < float(tf) < 1.0:
        raise SchemaError("test_fraction must be in (0, 1)")


def _head_config(cls, doc: dict, seed: int, what: str):
    known = {f.name for f in dataclass_fields(cls)} - {"seed"}
    bad = sorted(set(doc) - known)
    if bad:
        raise SchemaError(f"unknown config.{what} fields: {', '.join(bad)}")
    return cls(**doc, seed=seed)


def _configs(config: dict, seed: int) -> tuple[ProbeConfig, MilConfig, SurvivalConfig]:
    probe_cfg = _head_config(ProbeConfig, config.get("probe", {}), seed, "probe")
    mil_cfg = _head_config(MilConfig, config.get("mil", {}), seed, "mil")
    surv_cfg = _head_config(
        SurvivalConfig, config.get("survival_head", {}), seed, "survival_head"
    )
    return probe_cfg, mil_cfg, surv_cfg


def _class_arrays(manifest: CohortManifest) -> tuple[np.ndarray, list[str]]:
    classes = manifest.vocab.get("class_label", [])
    index = {c: i for i, c in enumerate(classes)}
    y = np.array(
        [index.get(r.class_label, -1) for r in manifest.records], dtype=np.int64
    )
    return y, classes


def _labeled_inputs(inp: AuditInputs, section: str) -> Optional[AuditInputs]:
    rows = [i for i, r in enumerate(inp.manifest.records) if r.class_label is not None]
    if not rows:
        inp.warnings.append(f"{section}: skipped, cohort has no class labels")
        return None
    if len(rows) < inp.manifest.count:
        inp.warnings.append(
            f"{section}: excluded {inp.manifest.count - len(rows)} rows without "
            "class_label"
        )
        return AuditInputs(
            matrix=EmbeddingMatrix(inp.matrix.values[rows]),
            manifest=inp.manifest.subset(rows),
            X=inp.X[rows],
            level=inp.level,
            group_key=inp.group_key,
            warnings=inp.warnings,
        )
    return inp


# ── privacy ──────────────────────────────────────────────────────────────


def privacy_section(
    inp: AuditInputs,
    config: dict,
    probe_cfg: ProbeConfig,
    seed: int,
    save: Callable[[object, str], str],
) -> dict:
    """Per-attribute probes: can the embedding predict the attribute?"""
    requested = config.get("privacy", {}).get("attributes")
    if requested is None:
        requested = [a for a in PRIVACY_ATTRIBUTES if a in inp.manifest.vocab]
    test_fraction = float(config.get("test_fraction", 0.2))
    section: dict = {"attributes": {}}
    for attr in requested:
        values = inp.manifest.attribute_values(attr)
        present = [i for i, v in enumerate(values) if v is not None]
        excluded = inp.manifest.count - len(present)
        if not present:
            msg = "attribute entirely missing"
            section["attributes"][attr] = {"skipped": msg}
            inp.warnings.append(f"privacy/{attr}: {msg}")
            continue
        sub = inp.manifest.subset(present).relabeled(attr)
        classes = sub.vocab["class_label"]
        if len(classes) < 2:
            msg = f"single category {classes[0]!r}; nothing to probe"
            section["attributes"][attr] = {"skipped": msg}
            inp.warnings.append(f"privacy/{attr}: {msg}")
            continue
        try:
            plan = make_id_split(sub, test_fraction, inp.group_key, seed)
        except _SKIP as exc:
            section["attributes"][attr] = {"skipped": str(exc)}
            inp.warnings.append(f"privacy/{attr}: {exc}")
            continue
        y, _ = _class_arrays(sub)
        X = inp.X[present]
        ids = sub.sample_ids()
        folded = run_cv(X, y, ids, plan, probe_cfg, num_classes=len(classes))
        row_of = {sid: i for i, sid in enumerate(ids)}
        test_truth = y[[row_of[s] for s in plan.test_ids]]
        k = len(classes)
        acc_mean = folded.mean["accuracy"]
        majority = majority_fraction(test_truth)
        section["attributes"][attr] = {
            "plan": save(plan, f"privacy_{attr}"),
            "seed": seed,
            "num_classes": k,
            "support": len(present),
            "excluded_missing": excluded,
            "chance": 1.0 / k,
            "majority_fraction": majority,
            "cv": folded.to_dict(),
            "leakage_vs_chance": leakage_score(acc_mean, k),
            "leakage_vs_majority": float(acc_mean - majority),
        }
    return section


# ── reliability ──────────────────────────────────────────────────────────


def _build_plan(setting: str, manifest: CohortManifest, group_key: str, seed: int):
    if setting == OOD1:
        return make_ood1(manifest, group_key=group_key, seed=seed)
    if setting == OOD2:
        return make_ood2(manifest, group_key=group_key, seed=seed)
    if setting == OOD3:
        return make_ood3(manifest, group_key=group_key, seed=seed)
    raise SchemaError(f"unknown shift setting {setting!r}")


def _folded_degradation(base, ood, support: int) -> tuple[dict, dict]:
    absolute = {}
    relative = {}
    for name in base.mean:
        a, r = degradation(
            MetricValue(name=name, value=base.mean[name], support=support),
            MetricValue(name=name, value=ood.mean[name], support=support),
        )
        absolute[name] = a
        relative[name] = r
    return absolute, relative


def reliability_section(
    inp: AuditInputs,
    config: dict,
    probe_cfg: ProbeConfig,
    mil_cfg: MilConfig,
    seed: int,
    save: Callable[[object, str], str],
) -> Optional[dict]:
    """Task heads trained under each shift setting and its matched
    baseline; reports the accuracy/macro-F1 drop."""
    rel = config.get("reliability", {})
    sub = _labeled_inputs(inp, "reliability")
    if sub is None:
        return None
    settings = rel.get("settings", [OOD1, OOD2, OOD3])
    tasks = rel.get("tasks")
    if tasks is None:
        tasks = ["probe"] + (["mil"] if sub.level == "patch" else [])
    y, classes = _class_arrays(sub.manifest)
    ids = sub.manifest.sample_ids()
    k = len(classes)
    bags = bags_from_cohort(sub.manifest) if "mil" in tasks else None
    section: dict = {"tasks": {}}
    for task in tasks:
        rows: dict = {}
        for setting in settings:
            name = f"reliability_{task}_{setting.lower()}"
            try:
                plan = _build_plan(setting, sub.manifest, sub.group_key, seed)
                baseline = make_matched_baseline(sub.manifest, plan, seed)
                if task == "probe":
                    res_ood = run_cv(sub.X, y, ids, plan, probe_cfg, num_classes=k)
                    res_base = run_cv(sub.X, y, ids, baseline, probe_cfg, num_classes=k)
                elif task == "mil":
                    res_ood = run_cv_bags(
                        sub.matrix, sub.manifest, bags, plan, mil_cfg, k
                    )
                    res_base = run_cv_bags(
                        sub.matrix, sub.manifest, bags, baseline, mil_cfg, k
                    )
                else:
                    raise SchemaError(f"unknown reliability task {task!r}")
            except _SKIP as exc:
                rows[setting] = {"skipped": str(exc)}
                inp.warnings.append(f"reliability/{task}/{setting}: {exc}")
                continue
            absolute, relative = _folded_degradation(
                res_base, res_ood, len(plan.test_ids)
            )
            rows[setting] = {
                "plan": save(plan, name),
                "baseline_plan": save(baseline, name + "_baseline"),
                "baseline_setting": baseline.setting,
                "seed": seed,
                "test_support": len(plan.test_ids),
                "baseline": res_base.to_dict(),
                "ood": res_ood.to_dict(),
                "degradation_absolute": absolute,
                "degradation_relative": relative,
                "plan_warnings": list(plan.warnings),
            }
        section["tasks"][task] = {"settings": rows}
    return section


# ── retrieval ────────────────────────────────────────────────────────────


def retrieval_section(
    inp: AuditInputs,
    config: dict,
    seed: int,
    save: Callable[[object, str], str],
) -> Optional[dict]:
    """Training-free nearest-neighbor evaluation: database = train side,
    queries = test side, under OOD1/OOD3 and their matched baselines."""
    sub = _labeled_inputs(inp, "retrieval")
    if sub is None:
        return None
    settings = config.get("retrieval", {}).get("settings", [OOD1, OOD3])
    y, _ = _class_arrays(sub.manifest)
    ids = sub.manifest.sample_ids()
    row_of = {sid: i for i, sid in enumerate(ids)}
    section: dict = {"settings": {}}
    for setting in settings:
        if setting not in (OOD1, OOD3):
            msg = f"retrieval supports OOD1 and OOD3 only, not {setting}"
            section["settings"][setting] = {"skipped": msg}
            inp.warnings.append(f"retrieval/{setting}: {msg}")
            continue
        try:
            plan = _build_plan(setting, sub.manifest, sub.group_key, seed)
            baseline = make_matched_baseline(sub.manifest, plan, seed)

            def score(p):
                db = np.array([row_of[s] for s in sorted(p.folds)], dtype=np.int64)
                q = np.array([row_of[s] for s in p.test_ids], dtype=np.int64)
                return retrieve_and_score(sub.X[db], y[db], sub.X[q], y[q])

            m_ood = score(plan)
            m_base = score(baseline)
        except _SKIP as exc:
            section["settings"][setting] = {"skipped": str(exc)}
            inp.warnings.append(f"retrieval/{setting}: {exc}")
            continue
        except MetricError as exc:
            section["settings"][setting] = {"skipped": str(exc)}
            inp.warnings.append(f"retrieval/{setting}: {exc}")
            continue
        absolute = {}
        relative = {}
        for mname in m_base:
            a, r = degradation(m_base[mname], m_ood[mname])
            absolute[mname] = a
            relative[mname] = r
        section["settings"][setting] = {
            "plan": save(plan, f"retrieval_{setting.lower()}"),
            "baseline_plan": save(baseline, f"retrieval_{setting.lower()}_baseline"),
            "baseline_setting": baseline.setting,
            "seed": seed,
            "baseline": {k2: v.to_dict() for k2, v in m_base.items()},
            "ood": {k2: v.to_dict() for k2, v in m_ood.items()},
            "degradation_absolute": absolute,
            "degradation_relative": relative,
        }
    return section


# ── survival ─────────────────────────────────────────────────────────────


def survival_section(
    inp: AuditInputs,
    config: dict,
    surv_cfg: SurvivalConfig,
    seed: int,
    save: Callable[[object, str], str],
) -> Optional[dict]:
    """Survival heads under the institution-disjoint shift (OOD1 only)
    against the matched baseline, scored by concordance."""
    rows = [
        i
        for i, r in enumerate(inp.manifest.records)
        if r.survival_days is not None and r.censored is not None
    ]
    if not rows:
        inp.warnings.append("survival: skipped, no survival fields present")
        return None
    if len(rows) < inp.manifest.count:
        inp.warnings.append(
            f"survival: excluded {inp.manifest.count - len(rows)} rows without "
            "survival fields"
        )
    sub_manifest = inp.manifest.subset(rows)
    sub_matrix = EmbeddingMatrix(inp.matrix.values[rows])
    section: dict = {"settings": {}}
    try:
        plan = make_ood1(sub_manifest, group_key="patient", seed=seed)
        baseline = make_matched_baseline(sub_manifest, plan, seed)
        bags = bags_from_cohort(sub_manifest)
        res_ood = run_cv_survival(sub_matrix, sub_manifest, bags, plan, surv_cfg)
        res_base = run_cv_survival(sub_matrix, sub_manifest, bags, baseline, surv_cfg)
    except _SKIP as exc:
        section["settings"][OOD1] = {"skipped": str(exc)}
        inp.warnings.append(f"survival/OOD1: {exc}")
        return section
    absolute, relative = _folded_degradation(res_base, res_ood, len(plan.test_ids))
    section["settings"][OOD1] = {
        "plan": save(plan, "survival_ood1"),
        "baseline_plan": save(baseline, "survival_ood1_baseline"),
        "baseline_setting": baseline.setting,
        "seed": seed,
        "test_support": len(plan.test_ids),
        "baseline": res_base.to_dict(),
        "ood": res_ood.to_dict(),
        "degradation_absolute": absolute,
        "degradation_relative": relative,
    }
    return section


# ── fairness ─────────────────────────────────────────────────────────────


def fairness_section(
    inp: AuditInputs,
    config: dict,
    probe_cfg: ProbeConfig,
    seed: int,
    save: Callable[[object, str], str],
) -> Optional[dict]:
    """One diagnosis head per plan; test metrics sliced by demographic
    subgroup (two-group gaps) and by institution (coefficient of
    variation with a support floor)."""
    fair = config.get("fairness", {})
    sub = _labeled_inputs(inp, "fairness")
    if sub is None:
        return None
    settings = fair.get("settings", [ID_BASELINE])
    attrs = fair.get("attributes")
    if attrs is None:
        attrs = [a for a in FAIRNESS_ATTRIBUTES if a in sub.manifest.vocab]
    min_support = int(fair.get("min_support", 10))
    test_fraction = float(config.get("test_fraction", 0.2))
    y, classes = _class_arrays(sub.manifest)
    ids = sub.manifest.sample_ids()
    row_of = {sid: i for i, sid in enumerate(ids)}
    k = len(classes)
    section: dict = {"settings": {}}
    for setting in settings:
        try:
            if setting == ID_BASELINE:
                plan = make_id_split(sub.manifest, test_fraction, sub.group_key, seed)
            else:
                plan = _build_plan(setting, sub.manifest, sub.group_key, seed)
        except _SKIP as exc:
            section["settings"][setting] = {"skipped": str(exc)}
            inp.warnings.append(f"fairness/{setting}: {exc}")
            continue
        train_rows = np.array(
            sorted(row_of[s] for s in plan.folds), dtype=np.int64
        )
        test_rows = np.array([row_of[s] for s in plan.test_ids], dtype=np.int64)
        head_seed = int(rng_for(seed, "audit", 5).integers(0, 2**63 - 1))
        cfg = ProbeConfig(**{**asdict(probe_cfg), "seed": head_seed})
        head = train_probe(sub.X[train_rows], y[train_rows], k, cfg, classes=classes)
        pred, _ = predict(head, sub.X[test_rows])
        truth = y[test_rows]
        test_recs = [sub.manifest.records[i] for i in test_rows]

        row: dict = {
            "plan": save(plan, f"fairness_{setting.lower()}"),
            "seed": seed,
            "overall_accuracy": accuracy(pred, truth).value,
            "overall_macro_f1": macro_f1(pred, truth, k).value,
            "subgroups": {},
        }
        for attr in attrs:
            by_group: dict[str, MetricValue] = {}
            for g in sub.manifest.vocab.get(attr, []):
                idx = [i for i, r in enumerate(test_recs) if getattr(r, attr) == g]
                if idx:
                    by_group[g] = accuracy(pred[idx], truth[idx], slice=g)
            if len(by_group) != 2:
                row["subgroups"][attr] = {
                    "skipped": f"{len(by_group)} groups on test side, need 2",
                    "by_group": {g: v.to_dict() for g, v in by_group.items()},
                }
                continue
            row["subgroups"][attr] = {
                "gap": subgroup_gap(by_group),
                "by_group": {g: v.to_dict() for g, v in by_group.items()},
            }
        by_inst: dict[str, MetricValue] = {}
        for inst in sub.manifest.vocab.get("institution", []):
            idx = [i for i, r in enumerate(test_recs) if r.institution == inst]
            if idx:
                by_inst[inst] = accuracy(pred[idx], truth[idx], slice=inst)
        try:
            cv = institution_cv(by_inst, min_support=min_support)
            row["institutions"] = {
                "cv": cv.value,
                "min_support": min_support,
                "by_institution": {
                    g: v.to_dict() for g, v in by_inst.items() if g in cv.included
                },
                "excluded": cv.excluded,
            }
        except MetricError as exc:
            row["institutions"] = {"skipped": str(exc)}
            inp.warnings.append(f"fairness/{setting}/institutions: {exc}")
        section["settings"][setting] = row
    return section


# ── top level ────────────────────────────────────────────────────────────


def run_audit(config: dict, out_dir: str | Path, base_dir: str | Path = ".") -> dict:
    """Execute the configured audits and return the report document.

    Relative cohort paths resolve against base_dir. Plans are written
    under out_dir/plans/. The report echoes the effective config and its
    hash so a re-run reproduces the report byte for byte.
    """
    validate_config(config)
    base = Path(base_dir)
    out = Path(out_dir)
    plans_dir = out / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)

    def resolve(p: str) -> Path:
        path = Path(p)
        if not path.is_absolute():
            path = base / path
        if not path.exists():
            raise SchemaError(f"cohort file not found: {path}")
        return path

    matrix = read_qemb(resolve(config["cohort"]["qemb"]))
    manifest = load_manifest(resolve(config["cohort"]["manifest"]))
    inp = prepare_inputs(
        matrix, manifest, int(config.get("min_institution_samples", 0))
    )
    seed = int(config.get("seed", 0))
    probe_cfg, mil_cfg, surv_cfg = _configs(config, seed)

    def save(plan, name: str) -> str:
        rel = f"plans/{name}.json"
        save_plan(out / rel, plan)
        return rel

    has_survival = any(r.survival_days is not None for r in inp.manifest.records)
    audits = config.get("audits")
    if audits is None:
        audits = ["privacy", "reliability", "retrieval", "fairness"]
        if has_survival:
            audits.insert(3, "survival")

    sections: dict = {}
    if "privacy" in audits:
        sections["privacy"] = privacy_section(inp, config, probe_cfg, seed, save)
    if "reliability" in audits:
        out_section = reliability_section(
            inp, config, probe_cfg, mil_cfg, seed, save
        )
        if out_section is not None:
            sections["reliability"] = out_section
    if "retrieval" in audits:
        out_section = retrieval_section(inp, config, seed, save)
        if out_section is not None:
            sections["retrieval"] = out_section
    if "survival" in audits:
        out_section = survival_section(inp, config, surv_cfg, seed, save)
        if out_section is not None:
            sections["survival"] = out_section
    if "fairness" in audits:
        out_section = fairness_section(inp, config, probe_cfg, seed, save)
        if out_section is not None:
            sections["fairness"] = out_section

    classes = inp.manifest.vocab.get("class_label", [])
    return {
        "toolkit": {"name": TOOLKIT_NAME, "version": __version__},
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "cohort": {
            "qemb": str(config["cohort"]["qemb"]),
            "manifest": str(config["cohort"]["manifest"]),
            "samples": inp.manifest.count,
            "dim": inp.matrix.dim,
            "level": inp.level,
            "group_key": inp.group_key,
            "classes": classes,
            "institutions": inp.manifest.vocab.get("institution", []),
        },
        "training_recipe": {
            "probe": asdict(probe_cfg),
            "mil": asdict(mil_cfg),
            "survival": asdict(surv_cfg),
        },
        "sections": sections,
        "warnings": list(inp.warnings),
    }
