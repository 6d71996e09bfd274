"""Split engine: leakage-safe train/test plans for audit experiments.

All plans are built at group granularity (patient or slide) so no group
ever straddles the train/test boundary. Five folds partition the train
side for cross-validated training. Plans are deterministic functions of
(cohort, arguments, seed) and serialize to JSON.

Settings:
    ID_BASELINE  stratified in-distribution split (also survival folds)
    OOD1         institution-disjoint split
    OOD2         single-class-per-institution training, balanced test
    OOD3         OOD2 training plus a class-deranged test from the same
                 institutions
    BASELINE_12  matched baseline for OOD1/OOD2 plans
    BASELINE_3   matched baseline for OOD3 plans
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CoverageError, InfeasibleError, PlanError
from .manifest import CohortManifest
from .seeding import rng_for

N_FOLDS = 5

ID_BASELINE = "ID_BASELINE"
OOD1 = "OOD1"
OOD2 = "OOD2"
OOD3 = "OOD3"
BASELINE_12 = "BASELINE_12"
BASELINE_3 = "BASELINE_3"
SETTINGS = (ID_BASELINE, OOD1, OOD2, OOD3, BASELINE_12, BASELINE_3)

GROUP_KEYS = ("patient", "slide")

# institution -> class label
InstitutionClassAssignment = dict


@dataclass
class SplitPlan:
    """A reproducible train/test split with train-side folds.

    folds maps sample_id -> fold index in 0..4. For survival fold plans
    the test side is empty and folds cover every id.
    """

    setting: str
    seed: int
    group_key: str
    train_ids: list[str]
    test_ids: list[str]
    folds: dict[str, int]
    train_assignment: Optional[dict[str, str]] = None
    test_assignment: Optional[dict[str, str]] = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        fold_lists: dict[str, list[str]] = {str(f): [] for f in range(N_FOLDS)}
        for sid, f in self.folds.items():
            fold_lists[str(f)].append(sid)
        for ids in fold_lists.values():
            ids.sort()
        return {
            "setting": self.setting,
            "seed": self.seed,
            "group_key": self.group_key,
            "train_assignment": self.train_assignment,
            "test_assignment": self.test_assignment,
            "train_ids": sorted(self.train_ids),
            "test_ids": sorted(self.test_ids),
            "folds": fold_lists,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitPlan":
        folds: dict[str, int] = {}
        for f, ids in doc["folds"].items():
            for sid in ids:
                folds[sid] = int(f)
        return cls(
            setting=doc["setting"],
            seed=int(doc["seed"]),
            group_key=doc["group_key"],
            train_ids=list(doc["train_ids"]),
            test_ids=list(doc["test_ids"]),
            folds=folds,
            train_assignment=doc.get("train_assignment"),
            test_assignment=doc.get("test_assignment"),
            warnings=list(doc.get("warnings", [])),
        )


def save_plan(path: str | Path, plan: SplitPlan) -> None:
    Path(path).write_text(
        json.dumps(plan.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_plan(path: str | Path) -> SplitPlan:
    return SplitPlan.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ── group bookkeeping ────────────────────────────────────────────────────


def group_of(record, group_key: str) -> str:
    if group_key == "patient":
        return record.patient_id
    if group_key == "slide":
        return record.slide_id if record.slide_id else record.sample_id
    raise PlanError(f"group_key must be one of {GROUP_KEYS}, got {group_key!r}")


@dataclass
class _Group:
    gid: str
    rows: list[int]
    institution: str
    majority_class: Optional[str]
    pure_class: Optional[str]
    censored: Optional[bool]


def _collect_groups(manifest: CohortManifest, group_key: str) -> list[_Group]:
    order: dict[str, list[int]] = {}
    for i, rec in enumerate(manifest.records):
        order.setdefault(group_of(rec, group_key), []).append(i)
    class_order = {c: j for j, c in enumerate(manifest.vocab.get("class_label", []))}
    groups = []
    for gid, rows in order.items():
        recs = [manifest.records[i] for i in rows]
        insts = {r.institution for r in recs}
        if len(insts) > 1:
            raise PlanError(f"group {gid!r} spans institutions {sorted(insts)}")
        labels = [r.class_label for r in recs if r.class_label is not None]
        majority = None
        pure = None
        if labels:
            counts: dict[str, int] = {}
            for lab in labels:
                counts[lab] = counts.get(lab, 0) + 1
            best = max(counts.values())
            majority = min(
                (lab for lab, n in counts.items() if n == best),
                key=lambda lab: class_order.get(lab, len(class_order)),
            )
            if len(counts) == 1 and len(labels) == len(recs):
                pure = labels[0]
        cens = recs[0].censored
        return_cens = cens if all(r.censored == cens for r in recs) else None
        groups.append(
            _Group(
                gid=gid,
                rows=rows,
                institution=recs[0].institution,
                majority_class=majority,
                pure_class=pure,
                censored=return_cens,
            )
        )
    return groups


def _strata_for_folds(
    manifest: CohortManifest, groups: list[_Group]
) -> list[list[_Group]]:
    """Fold stratification strata: by class when labels exist, else by
    censoring status, else one stratum."""
    classes = manifest.vocab.get("class_label", [])
    if classes:
        by_class: dict[str, list[_Group]] = {c: [] for c in classes}
        rest: list[_Group] = []
        for g in groups:
            if g.majority_class is not None:
                by_class[g.majority_class].append(g)
            else:
                rest.append(g)
        strata = [by_class[c] for c in classes]
        if rest:
            strata.append(rest)
        return [s for s in strata if s]
    has_surv = any(r.survival_days is not None for r in manifest.records)
    if has_surv:
        uncens = [g for g in groups if g.censored is False]
        cens = [g for g in groups if g.censored is not False]
        return [s for s in (uncens, cens) if s]
    return [groups] if groups else []


def _deal_folds(
    strata: list[list[_Group]], rng: np.random.Generator
) -> dict[str, int]:
    """Assign groups to the least-loaded fold, stratum by stratum.

    Load is counted in groups; ties go to the lowest fold index, so the
    result is a pure function of the stratum order and the shuffles."""
    loads = [0] * N_FOLDS
    fold_of: dict[str, int] = {}
    for stratum in strata:
        idx = rng.permutation(len(stratum))
        for i in idx:
            g = stratum[int(i)]
            f = loads.index(min(loads))
            fold_of[g.gid] = f
            loads[f] += 1
    return fold_of


def _expand(groups: list[_Group], manifest: CohortManifest) -> list[str]:
    ids = []
    for g in groups:
        ids.extend(manifest.records[i].sample_id for i in g.rows)
    return ids


def _finish_plan(
    manifest: CohortManifest,
    setting: str,
    seed: int,
    group_key: str,
    train_groups: list[_Group],
    test_groups: list[_Group],
    fold_rng: np.random.Generator,
    train_assignment: Optional[dict] = None,
    test_assignment: Optional[dict] = None,
    warnings: Optional[list[str]] = None,
    extra_test_ids: Optional[list[str]] = None,
) -> SplitPlan:
    strata = _strata_for_folds(manifest, train_groups)
    fold_of_group = _deal_folds(strata, fold_rng)
    folds: dict[str, int] = {}
    for g in train_groups:
        f = fold_of_group[g.gid]
        for i in g.rows:
            folds[manifest.records[i].sample_id] = f
    test_ids = _expand(test_groups, manifest) if extra_test_ids is None else extra_test_ids
    plan = SplitPlan(
        setting=setting,
        seed=seed,
        group_key=group_key,
        train_ids=sorted(_expand(train_groups, manifest)),
        test_ids=sorted(test_ids),
        folds=folds,
        train_assignment=train_assignment,
        test_assignment=test_assignment,
        warnings=list(warnings or []),
    )
    check_plan(manifest, plan)
    return plan


def check_plan(manifest: CohortManifest, plan: SplitPlan) -> None:
    """Raise PlanError if the plan violates its structural invariants."""
    train = set(plan.train_ids)
    test = set(plan.test_ids)
    if train & test:
        raise PlanError(f"{plan.setting}: train and test share sample_ids")
    by_id = {r.sample_id: r for r in manifest.records}
    train_groups = {group_of(by_id[s], plan.group_key) for s in train}
    test_groups = {group_of(by_id[s], plan.group_key) for s in test}
    if train_groups & test_groups:
        raise PlanError(f"{plan.setting}: a group appears on both sides")
    fold_ids = set(plan.folds)
    covered = train if test else train | test
    if fold_ids != covered:
        raise PlanError(f"{plan.setting}: folds do not partition the train side")
    if plan.folds:
        present = set(plan.folds.values())
        if present != set(range(N_FOLDS)):
            raise PlanError(f"{plan.setting}: expected {N_FOLDS} nonempty folds")
        # A group's samples must share a fold.
        fold_of_group: dict[str, int] = {}
        for sid, f in plan.folds.items():
            gid = group_of(by_id[sid], plan.group_key)
            if fold_of_group.setdefault(gid, f) != f:
                raise PlanError(f"{plan.setting}: group {gid!r} spans folds")


def _require_labels(manifest: CohortManifest, op: str) -> None:
    if any(r.class_label is None for r in manifest.records):
        raise PlanError(f"{op} requires class_label on every record")


# ── ID split ─────────────────────────────────────────────────────────────


def make_id_split(
    manifest: CohortManifest, test_fraction: float, group_key: str, seed: int
) -> SplitPlan:
    """Stratified in-distribution split at group granularity.

    Per class the test share is within one group of test_fraction; the
    remaining groups fill five folds. A class with fewer than six groups
    cannot fill five folds plus a test slot and raises InfeasibleError.
    """
    _require_labels(manifest, "make_id_split")
    if not 0.0 < test_fraction < 1.0:
        raise PlanError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups = _collect_groups(manifest, group_key)
    classes = manifest.vocab["class_label"]
    rng = rng_for(seed, "split", 1)
    fold_rng = rng_for(seed, "split", 2)
    train_groups: list[_Group] = []
    test_groups: list[_Group] = []
    for cls in classes:
        cls_groups = [g for g in groups if g.majority_class == cls]
        n = len(cls_groups)
        if n < N_FOLDS + 1:
            raise InfeasibleError(
                f"class {cls!r} has {n} groups; needs at least {N_FOLDS + 1} "
                "to fill five folds plus a test slot"
            )
        n_test = int(round(test_fraction * n))
        n_test = max(1, min(n_test, n - N_FOLDS))
        order = rng.permutation(n)
        picked = [cls_groups[int(i)] for i in order]
        test_groups.extend(picked[:n_test])
        train_groups.extend(picked[n_test:])
    return _finish_plan(
        manifest, ID_BASELINE, seed, group_key, train_groups, test_groups, fold_rng
    )


# ── institution partitioning helpers ─────────────────────────────────────


def _institutions(manifest: CohortManifest) -> list[str]:
    return manifest.vocab.get("institution", [])


def _auto_partition(
    manifest: CohortManifest, rng: np.random.Generator
) -> tuple[list[str], list[str]]:
    """Seeded shuffle of institutions, greedily balanced toward a 50/50
    sample split (each institution goes to the lighter side; ties train)."""
    insts = _institutions(manifest)
    if len(insts) < 2:
        raise InfeasibleError("institution partition needs at least 2 institutions")
    counts = {i: 0 for i in insts}
    for rec in manifest.records:
        counts[rec.institution] += 1
    order = [insts[int(i)] for i in rng.permutation(len(insts))]
    train: list[str] = []
    test: list[str] = []
    n_train = n_test = 0
    for inst in order:
        if n_train <= n_test:
            train.append(inst)
            n_train += counts[inst]
        else:
            test.append(inst)
            n_test += counts[inst]
    train.sort(key=insts.index)
    test.sort(key=insts.index)
    return train, test


def _check_side_coverage(
    manifest: CohortManifest, groups: list[_Group], insts: list[str], side: str
) -> None:
    classes = manifest.vocab.get("class_label", [])
    if not classes:
        return
    inst_set = set(insts)
    seen = {g.majority_class for g in groups if g.institution in inst_set}
    missing = [c for c in classes if c not in seen]
    if missing:
        raise CoverageError(f"{side} institutions cover no group of class {missing}")


# ── OOD1 ─────────────────────────────────────────────────────────────────


def make_ood1(
    manifest: CohortManifest,
    train_institutions: Optional[Sequence[str]] = None,
    test_institutions: Optional[Sequence[str]] = None,
    group_key: str = "slide",
    seed: int = 0,
) -> SplitPlan:
    """Institution-disjoint split: train and test come from disjoint
    institution sets, each covering every class when labels exist.

    With both institution sets omitted, institutions are partitioned by a
    seeded shuffle targeting a 50/50 sample split.
    """
    insts = _institutions(manifest)
    if (train_institutions is None) != (test_institutions is None):
        raise PlanError("give both institution sets or neither")
    if train_institutions is None:
        train_institutions, test_institutions = _auto_partition(
            manifest, rng_for(seed, "split", 11)
        )
    train_set = list(dict.fromkeys(train_institutions))
    test_set = list(dict.fromkeys(test_institutions))
    if not train_set or not test_set:
        raise PlanError("institution sets must be nonempty")
    if set(train_set) & set(test_set):
        raise PlanError("train and test institution sets overlap")
    unknown = (set(train_set) | set(test_set)) - set(insts)
    if unknown:
        raise PlanError(f"unknown institutions {sorted(unknown)}")

    groups = _collect_groups(manifest, group_key)
    _check_side_coverage(manifest, groups, train_set, "train")
    _check_side_coverage(manifest, groups, test_set, "test")
    train_groups = [g for g in groups if g.institution in set(train_set)]
    test_groups = [g for g in groups if g.institution in set(test_set)]
    if len(train_groups) < N_FOLDS:
        raise InfeasibleError("train side has fewer groups than folds")
    return _finish_plan(
        manifest,
        OOD1,
        seed,
        group_key,
        train_groups,
        test_groups,
        rng_for(seed, "split", 12),
    )


# ── OOD2 / OOD3 ──────────────────────────────────────────────────────────


def _validate_assignment(
    manifest: CohortManifest,
    assignment: dict[str, str],
    test_institutions: Sequence[str],
) -> None:
    insts = set(_institutions(manifest))
    classes = manifest.vocab.get("class_label", [])
    unknown = set(assignment) - insts
    if unknown:
        raise PlanError(f"assignment names unknown institutions {sorted(unknown)}")
    bad = [c for c in assignment.values() if c not in classes]
    if bad:
        raise PlanError(f"assignment uses unknown classes {sorted(set(bad))}")
    if set(assignment) & set(test_institutions):
        raise PlanError("assignment institutions overlap test institutions")
    uncovered = [c for c in classes if c not in set(assignment.values())]
    if uncovered:
        raise CoverageError(f"no training institution assigned to class {uncovered}")


def _auto_assignment(
    manifest: CohortManifest, groups: list[_Group], train_insts: list[str]
) -> dict[str, str]:
    """Retained-sample-maximizing single-class assignment with coverage.

    Every class must be assigned somewhere; the coverage constraint is an
    injective classes->institutions matching, solved exactly on the loss
    matrix (retained samples given up by forcing the institution off its
    best class). Remaining institutions keep their best class.
    """
    classes = manifest.vocab.get("class_label", [])
    if len(train_insts) < len(classes):
        raise CoverageError(
            f"{len(train_insts)} training institutions cannot cover "
            f"{len(classes)} classes"
        )
    retained = np.zeros((len(train_insts), len(classes)), dtype=np.int64)
    for g in groups:
        if g.pure_class is not None and g.institution in train_insts:
            i = train_insts.index(g.institution)
            retained[i, classes.index(g.pure_class)] += len(g.rows)
    best = retained.max(axis=1)
    loss = best[None, :] - retained.T  # classes x institutions
    rows, cols = linear_sum_assignment(loss)
    assignment: dict[str, str] = {}
    for i, inst in enumerate(train_insts):
        # Ties toward the first class in vocab order.
        assignment[inst] = classes[int(np.argmax(retained[i]))]
    for c, i in zip(rows, cols):
        assignment[train_insts[int(i)]] = classes[int(c)]
    return assignment


def _assignment_train_side(
    manifest: CohortManifest,
    groups: list[_Group],
    assignment: dict[str, str],
) -> tuple[list[_Group], list[str]]:
    """Class-pure groups matching the assignment, plus warnings for
    institutions that contribute nothing."""
    warnings = []
    train_groups = []
    for inst in _institutions(manifest):
        if inst not in assignment:
            continue
        cls = assignment[inst]
        mine = [g for g in groups if g.institution == inst and g.pure_class == cls]
        if not mine:
            warnings.append(
                f"institution {inst!r} has no pure group of assigned class {cls!r}"
            )
        train_groups.extend(mine)
    if not train_groups:
        raise InfeasibleError("assignment retains no training groups")
    if len(train_groups) < N_FOLDS:
        raise InfeasibleError("assignment retains fewer groups than folds")
    return train_groups, warnings


def make_ood2(
    manifest: CohortManifest,
    assignment: Optional[dict[str, str]] = None,
    test_institutions: Optional[Sequence[str]] = None,
    group_key: str = "slide",
    seed: int = 0,
) -> SplitPlan:
    """Spurious-correlation training split: each training institution
    contributes a single class; the test side comes from held-out
    institutions, downsampled to equal per-class counts.
    """
    _require_labels(manifest, "make_ood2")
    groups = _collect_groups(manifest, group_key)
    classes = manifest.vocab["class_label"]
    if assignment is None:
        train_insts, auto_test = _auto_partition(manifest, rng_for(seed, "split", 21))
        if test_institutions is None:
            test_institutions = auto_test
        assignment = _auto_assignment(manifest, groups, train_insts)
    elif test_institutions is None:
        test_institutions = [
            i for i in _institutions(manifest) if i not in set(assignment)
        ]
    assignment = dict(assignment)
    test_institutions = list(test_institutions)
    if not test_institutions:
        raise PlanError("OOD2 needs at least one test institution")
    _validate_assignment(manifest, assignment, test_institutions)

    train_groups, warnings = _assignment_train_side(manifest, groups, assignment)

    test_set = set(test_institutions)
    rows_by_class: dict[str, list[int]] = {c: [] for c in classes}
    for i, rec in enumerate(manifest.records):
        if rec.institution in test_set:
            rows_by_class[rec.class_label].append(i)
    empty = [c for c in classes if not rows_by_class[c]]
    if empty:
        raise CoverageError(f"test institutions hold no samples of class {empty}")
    m = min(len(rows) for rows in rows_by_class.values())
    ds_rng = rng_for(seed, "split", 23)
    test_ids = []
    for c in classes:
        rows = rows_by_class[c]
        order = ds_rng.permutation(len(rows))
        keep = sorted(rows[int(i)] for i in order[:m])
        test_ids.extend(manifest.records[i].sample_id for i in keep)

    return _finish_plan(
        manifest,
        OOD2,
        seed,
        group_key,
        train_groups,
        [],
        rng_for(seed, "split", 22),
        train_assignment=assignment,
        warnings=warnings,
        extra_test_ids=test_ids,
    )


def derange_assignment(
    assignment: dict[str, str], classes: Sequence[str]
) -> dict[str, str]:
    """Cyclic shift of each assigned class along the vocab order; for two
    classes this is the swap. No institution keeps its class."""
    if len(classes) < 2:
        raise PlanError("derangement needs at least 2 classes")
    k = len(classes)
    shift = {classes[j]: classes[(j + 1) % k] for j in range(k)}
    return {inst: shift[c] for inst, c in assignment.items()}


def make_ood3(
    manifest: CohortManifest,
    train_assignment: Optional[dict[str, str]] = None,
    group_key: str = "slide",
    seed: int = 0,
    drop_infeasible: bool = False,
) -> SplitPlan:
    """Inverted-correlation split: training side equals make_ood2's under
    the same assignment and seed; the test side draws from the same
    institutions with the class assignment deranged.

    An institution lacking any pure group of its deranged class raises
    InfeasibleError, or is dropped from the test side with a warning when
    drop_infeasible is set.
    """
    _require_labels(manifest, "make_ood3")
    groups = _collect_groups(manifest, group_key)
    classes = manifest.vocab["class_label"]
    if train_assignment is None:
        train_insts, _ = _auto_partition(manifest, rng_for(seed, "split", 21))
        train_assignment = _auto_assignment(manifest, groups, train_insts)
    train_assignment = dict(train_assignment)
    _validate_assignment(manifest, train_assignment, [])

    train_groups, warnings = _assignment_train_side(
        manifest, groups, train_assignment
    )
    test_assignment = derange_assignment(train_assignment, classes)

    test_groups: list[_Group] = []
    for inst in _institutions(manifest):
        if inst not in test_assignment:
            continue
        cls = test_assignment[inst]
        mine = [g for g in groups if g.institution == inst and g.pure_class == cls]
        if not mine:
            msg = (
                f"institution {inst!r} has no pure group of deranged class {cls!r}"
            )
            if not drop_infeasible:
                raise InfeasibleError(msg)
            warnings.append(msg + "; dropped from test side")
            continue
        test_groups.extend(mine)
    if not test_groups:
        raise InfeasibleError("OOD3 test side is empty")

    return _finish_plan(
        manifest,
        OOD3,
        seed,
        group_key,
        train_groups,
        test_groups,
        rng_for(seed, "split", 22),
        train_assignment=train_assignment,
        test_assignment=test_assignment,
        warnings=warnings,
    )


# ── matched baseline ─────────────────────────────────────────────────────


def make_matched_baseline(
    manifest: CohortManifest, plan: SplitPlan, seed: int
) -> SplitPlan:
    """Re-split the union of plan's sides at the same train:test ratio,
    stratified at group granularity, with no institution constraint.

    The baseline covers exactly the same sample set as its OOD plan.
    """
    if plan.setting not in (OOD1, OOD2, OOD3):
        raise PlanError(f"matched baseline needs an OOD plan, got {plan.setting}")
    by_id = {r.sample_id: i for i, r in enumerate(manifest.records)}
    pool_rows = sorted(by_id[s] for s in set(plan.train_ids) | set(plan.test_ids))
    sub = manifest.subset(pool_rows)
    groups = _collect_groups(sub, plan.group_key)

    pool_ids = {sub.records[i].sample_id for g in groups for i in g.rows}
    train_gids = {
        group_of(manifest.records[by_id[s]], plan.group_key) for s in plan.train_ids
    }
    test_gids = {
        group_of(manifest.records[by_id[s]], plan.group_key) for s in plan.test_ids
    }
    frac = len(test_gids) / (len(train_gids) + len(test_gids))

    rng = rng_for(seed, "split", 31)
    strata = _strata_for_folds(sub, groups)
    train_groups: list[_Group] = []
    test_groups: list[_Group] = []
    for stratum in strata:
        n = len(stratum)
        n_test = int(round(frac * n))
        n_test = min(max(n_test, 0), n)
        order = rng.permutation(n)
        picked = [stratum[int(i)] for i in order]
        test_groups.extend(picked[:n_test])
        train_groups.extend(picked[n_test:])
    if not test_groups and train_groups:
        mover = max(train_groups, key=lambda g: len(g.rows))
        train_groups.remove(mover)
        test_groups.append(mover)
    if len(train_groups) < N_FOLDS:
        raise InfeasibleError("baseline train side has fewer groups than folds")

    setting = BASELINE_3 if plan.setting == OOD3 else BASELINE_12
    baseline = _finish_plan(
        sub,
        setting,
        seed,
        plan.group_key,
        train_groups,
        test_groups,
        rng_for(seed, "split", 32),
    )
    if set(baseline.train_ids) | set(baseline.test_ids) != pool_ids:
        raise PlanError("baseline does not cover the plan's sample set")
    return baseline


# ── survival folds ───────────────────────────────────────────────────────


def make_survival_folds(
    manifest: CohortManifest, group_key: str = "patient", seed: int = 0
) -> SplitPlan:
    """Five folds partitioning every group, censoring-stratified, with no
    held-out test side. Fold censoring rates stay within 10 percentage
    points of the global rate for cohorts of reasonable size."""
    missing = [
        r.sample_id
        for r in manifest.records
        if r.survival_days is None or r.censored is None
    ]
    if missing:
        raise PlanError(
            f"survival folds need survival_days and censored on every record; "
            f"{len(missing)} rows lack them"
        )
    groups = _collect_groups(manifest, group_key)
    if len(groups) < N_FOLDS:
        raise InfeasibleError(
            f"{len(groups)} groups cannot fill {N_FOLDS} survival folds"
        )
    rng = rng_for(seed, "split", 41)
    uncens = [g for g in groups if g.censored is False]
    cens = [g for g in groups if g.censored is not False]
    fold_of_group = _deal_folds([s for s in (uncens, cens) if s], rng)
    folds: dict[str, int] = {}
    for g in groups:
        for i in g.rows:
            folds[manifest.records[i].sample_id] = fold_of_group[g.gid]
    plan = SplitPlan(
        setting=ID_BASELINE,
        seed=seed,
        group_key=group_key,
        train_ids=sorted(folds),
        test_ids=[],
        folds=folds,
    )
    check_plan(manifest, plan)
    return plan
