"""Shared builders for small hand-made cohorts."""

import numpy as np
import pytest

from embaudit.manifest import CohortManifest, SampleRecord


def record(
    sample_id,
    patient_id=None,
    slide_id="",
    institution="instA",
    level="slide",
    class_label=None,
    gender=None,
    race=None,
    age_group=None,
    survival_days=None,
    censored=None,
):
    return SampleRecord(
        sample_id=sample_id,
        patient_id=patient_id if patient_id is not None else f"p_{sample_id}",
        slide_id=slide_id,
        institution=institution,
        level=level,
        class_label=class_label,
        gender=gender,
        race=race,
        age_group=age_group,
        survival_days=survival_days,
        censored=censored,
    )


def build_manifest(records):
    return CohortManifest(records=list(records))


def grid_manifest(
    n_institutions=4,
    n_classes=2,
    per_cell=6,
    level="slide",
    survival=False,
    rng=None,
):
    """per_cell samples for each (institution, class) pair, one group each."""
    rng = rng or np.random.default_rng(0)
    records = []
    for i in range(n_institutions):
        inst = f"inst{i}"
        for c in range(n_classes):
            for s in range(per_cell):
                sid = f"{inst}_c{c}_s{s}"
                kwargs = {}
                if survival:
                    kwargs["survival_days"] = float(rng.integers(10, 2000))
                    kwargs["censored"] = bool(rng.random() < 0.3)
                records.append(
                    record(
                        sid,
                        patient_id=f"{inst}_p{c}_{s}",
                        institution=inst,
                        level=level,
                        class_label=f"class{c}",
                        gender="male" if rng.random() < 0.5 else "female",
                        **kwargs,
                    )
                )
    return build_manifest(records)


@pytest.fixture
def tmp_cohort_dir(tmp_path):
    return tmp_path
