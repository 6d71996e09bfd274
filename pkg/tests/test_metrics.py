"""Metric layer: hand-computed values, brute-force oracles, error paths."""

import numpy as np
import pytest

from embaudit.errors import DataValidationError, MetricError
from embaudit.metrics import (
    InstitutionCV,
    MetricValue,
    accuracy,
    concordance_index,
    degradation,
    institution_cv,
    leakage_score,
    macro_f1,
    majority_fraction,
    retrieve_and_score,
    subgroup_gap,
)

# ── classification ───────────────────────────────────────────────────────


def test_accuracy_hand_value():
    mv = accuracy(np.array([0, 1, 1, 0]), np.array([0, 1, 0, 0]), slice="site_a")
    assert mv.value == 0.75
    assert mv.support == 4
    assert mv.slice == "site_a"
    assert mv.to_dict() == {
        "name": "accuracy",
        "value": 0.75,
        "support": 4,
        "slice": "site_a",
    }
    assert "slice" not in accuracy(np.array([1]), np.array([1])).to_dict()


def test_macro_f1_hand_value():
    # class 0: P=0.5, R=1 -> F1=2/3; class 1 never predicted -> F1=0
    mv = macro_f1(np.array([0, 0]), np.array([0, 1]), 2)
    assert mv.value == pytest.approx(1.0 / 3.0)
    # perfect predictions
    assert macro_f1(np.array([0, 1, 2]), np.array([0, 1, 2]), 3).value == 1.0
    # absent class counts as zero and still divides the mean
    assert macro_f1(np.array([0, 0]), np.array([0, 0]), 3).value == pytest.approx(
        1.0 / 3.0
    )


def confusion_f1(pred, truth, k):
    f1s = []
    for c in range(k):
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, truth) if p != c and t == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / k


def test_classification_against_confusion_oracle():
    rng = np.random.default_rng(0)
    for _ in range(30):
        k = int(rng.integers(2, 6))
        n = int(rng.integers(1, 60))
        pred = rng.integers(0, k, size=n)
        truth = rng.integers(0, k, size=n)
        assert accuracy(pred, truth).value == pytest.approx(
            sum(p == t for p, t in zip(pred, truth)) / n
        )
        assert macro_f1(pred, truth, k).value == pytest.approx(
            confusion_f1(pred.tolist(), truth.tolist(), k)
        )


def test_classification_input_errors():
    with pytest.raises(MetricError):
        accuracy(np.array([]), np.array([]))
    with pytest.raises(MetricError):
        accuracy(np.array([0, 1]), np.array([0]))
    with pytest.raises(MetricError):
        macro_f1(np.array([0, 2]), np.array([0, 1]), 2)
    with pytest.raises(MetricError):
        macro_f1(np.array([0]), np.array([0]), 0)


# ── leakage and degradation ──────────────────────────────────────────────


def test_leakage_reference_value():
    # binary attribute probed at 0.6377 accuracy leaks 0.1377 over chance
    assert leakage_score(0.6377, 2) == pytest.approx(0.1377)
    mv = MetricValue(name="accuracy", value=0.6377, support=100)
    assert leakage_score(mv, 2) == pytest.approx(0.1377)
    assert leakage_score(0.25, 4) == 0.0
    assert leakage_score(0.2, 4) == pytest.approx(-0.05)


def test_leakage_errors():
    with pytest.raises(MetricError):
        leakage_score(0.5, 1)
    with pytest.raises(MetricError):
        leakage_score(1.2, 2)


def test_degradation_reference_values():
    base = MetricValue(name="accuracy", value=0.7410, support=200)
    ood = MetricValue(name="accuracy", value=0.4455, support=200)
    absolute, relative = degradation(base, ood)
    assert absolute == pytest.approx(0.2955)
    assert relative == pytest.approx(0.2955 / 0.7410)
    base2 = MetricValue(name="acc@1", value=0.7406, support=300)
    ood2 = MetricValue(name="acc@1", value=0.5690, support=300)
    absolute2, _ = degradation(base2, ood2)
    assert absolute2 == pytest.approx(0.1716)


def test_degradation_zero_baseline_and_mismatch():
    zero = MetricValue(name="accuracy", value=0.0, support=10)
    ood = MetricValue(name="accuracy", value=0.0, support=10)
    assert degradation(zero, ood) == (0.0, 0.0)
    other = MetricValue(name="macro_f1", value=0.5, support=10)
    with pytest.raises(MetricError):
        degradation(zero, other)


def test_majority_fraction():
    assert majority_fraction(np.array([0, 0, 1, 0])) == 0.75
    assert majority_fraction(np.array([2])) == 1.0
    with pytest.raises(MetricError):
        majority_fraction(np.array([]))


# ── fairness ─────────────────────────────────────────────────────────────


def test_subgroup_gap_reference_value():
    gap = subgroup_gap(
        {
            "group_a": MetricValue(name="accuracy", value=0.6876, support=50),
            "group_b": MetricValue(name="accuracy", value=0.8057, support=50),
        }
    )
    assert gap == pytest.approx(0.1181)
    assert subgroup_gap({"x": 0.3, "y": 0.1}) == pytest.approx(0.2)


def test_subgroup_gap_requires_two_groups():
    with pytest.raises(MetricError):
        subgroup_gap({"only": 0.5})
    with pytest.raises(MetricError):
        subgroup_gap({"a": 0.5, "b": 0.6, "c": 0.7})


def test_institution_cv_hand_value():
    # values 0.8 and 1.0: mean 0.9, sample std sqrt(0.02)
    by_inst = {
        "inst_a": MetricValue(name="accuracy", value=0.8, support=40),
        "inst_b": MetricValue(name="accuracy", value=1.0, support=40),
    }
    cv = institution_cv(by_inst)
    expected = float(np.sqrt(0.02) / 0.9)
    assert abs(cv.value - expected) <= 1e-12
    assert cv.value == pytest.approx(0.15713484026367722, abs=1e-12)
    assert cv.included == {"inst_a": 0.8, "inst_b": 1.0}
    assert cv.excluded == []


def test_institution_cv_support_filter():
    by_inst = {
        "big_a": MetricValue(name="accuracy", value=0.9, support=30),
        "big_b": MetricValue(name="accuracy", value=0.9, support=12),
        "tiny": MetricValue(name="accuracy", value=0.1, support=3),
    }
    cv = institution_cv(by_inst, min_support=10)
    assert cv.value == 0.0
    assert cv.excluded == ["tiny"]
    with pytest.raises(MetricError):
        institution_cv({"a": by_inst["big_a"], "t": by_inst["tiny"]}, min_support=10)
    zeros = {
        "a": MetricValue(name="accuracy", value=0.0, support=20),
        "b": MetricValue(name="accuracy", value=0.0, support=20),
    }
    with pytest.raises(MetricError):
        institution_cv(zeros)


def test_institution_cv_to_dict():
    cv = InstitutionCV(value=0.1, included={"a": 0.9}, excluded=["b"])
    assert cv.to_dict() == {"value": 0.1, "included": {"a": 0.9}, "excluded": ["b"]}


# ── concordance ──────────────────────────────────────────────────────────


def test_concordance_hand_values():
    # risk descending with time ascending: fully concordant
    mv = concordance_index(
        np.array([3.0, 2.0, 1.0]), np.array([1.0, 2.0, 3.0]), np.zeros(3, bool)
    )
    assert mv.value == 1.0
    assert mv.support == 3
    anti = concordance_index(
        np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]), np.zeros(3, bool)
    )
    assert anti.value == 0.0
    tied = concordance_index(
        np.array([2.0, 2.0, 1.0]), np.array([1.0, 2.0, 3.0]), np.zeros(3, bool)
    )
    assert tied.value == pytest.approx(5.0 / 6.0)


def test_concordance_censoring_rules():
    # a censored early subject contributes no pairs
    with pytest.raises(MetricError):
        concordance_index(
            np.array([1.0, 2.0]), np.array([1.0, 2.0]), np.array([True, False])
        )
    # censored later subject still serves as the pair's survivor
    mv = concordance_index(
        np.array([2.0, 1.0]), np.array([1.0, 5.0]), np.array([False, True])
    )
    assert mv.value == 1.0
    assert mv.support == 1


def brute_force_concordance(risk, time, censored):
    num = 0.0
    pairs = 0
    n = len(risk)
    for i in range(n):
        if censored[i]:
            continue
        for j in range(n):
            if time[i] < time[j]:
                pairs += 1
                if risk[i] > risk[j]:
                    num += 1.0
                elif risk[i] == risk[j]:
                    num += 0.5
    return num / pairs, pairs


def test_concordance_against_brute_force():
    rng = np.random.default_rng(1)
    for trial in range(10):
        n = int(rng.integers(5, 200))
        # integer-valued risks and times so ties actually occur
        risk = rng.integers(0, 6, size=n).astype(float)
        time = rng.integers(1, 8, size=n).astype(float)
        censored = rng.integers(0, 2, size=n).astype(bool)
        censored[rng.integers(0, n)] = False
        try:
            mv = concordance_index(risk, time, censored)
        except MetricError:
            continue
        expected, pairs = brute_force_concordance(risk, time, censored)
        assert mv.support == pairs
        assert mv.value == pytest.approx(expected, abs=1e-15)


# ── retrieval ────────────────────────────────────────────────────────────


def test_retrieval_hand_scored_fixture():
    db = np.array(
        [
            [1.0, 0.0],  # label 0
            [0.9, 0.1],  # label 1
            [1.0, 0.0],  # label 0, exact duplicate of row 0
            [0.8, 0.2],  # label 1
            [0.7, 0.3],  # label 2
            [-1.0, 0.0],  # label 2
        ]
    )
    db_labels = np.array([0, 1, 0, 1, 2, 2])
    queries = np.array([[1.0, 0.0], [0.0, 1.0]])
    query_labels = np.array([0, 1])
    out = retrieve_and_score(db, db_labels, queries, query_labels)
    # query 0 top-5 rows: 0, 2 (tie broken to lower index), 1, 3, 4
    #   labels [0,0,1,1,2]; MV ties 0 vs 1, nearest tied neighbor wins -> 0
    # query 1 top-5 rows: 4, 3, 1, then the 0-similarity tie 0, 2
    #   labels [2,1,1,0,0]; acc@1 misses; MV tie 1 vs 0 -> first tied is 1
    assert out["acc@1"].value == 0.5
    assert out["acc@3"].value == 1.0
    assert out["acc@5"].value == 1.0
    assert out["mvacc@5"].value == 1.0
    assert out["acc@1"].support == 2


def brute_force_retrieval(db, db_labels, q, q_labels, ks, mk):
    dbn = db / np.linalg.norm(db, axis=1, keepdims=True)
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    acc = {k: 0 for k in ks}
    mv = 0
    for qi in range(len(q)):
        sims = [(-float(qn[qi] @ dbn[j]), j) for j in range(len(db))]
        order = [j for _, j in sorted(sims)]
        labs = [int(db_labels[j]) for j in order]
        for k in ks:
            acc[k] += int(int(q_labels[qi]) in labs[:k])
        top = labs[:mk]
        counts = {}
        for lab in top:
            counts[lab] = counts.get(lab, 0) + 1
        best = max(counts.values())
        tied = {lab for lab, c in counts.items() if c == best}
        winner = next(lab for lab in top if lab in tied)
        mv += int(winner == int(q_labels[qi]))
    n = len(q)
    return {f"acc@{k}": acc[k] / n for k in ks} | {f"mvacc@{mk}": mv / n}


def test_retrieval_against_brute_force():
    rng = np.random.default_rng(2)
    for trial in range(10):
        nd, nq, d = int(rng.integers(6, 30)), int(rng.integers(1, 15)), 4
        db = rng.normal(size=(nd, d))
        q = rng.normal(size=(nq, d))
        db_labels = rng.integers(0, 3, size=nd)
        q_labels = rng.integers(0, 3, size=nq)
        out = retrieve_and_score(db, db_labels, q, q_labels)
        expected = brute_force_retrieval(db, db_labels, q, q_labels, (1, 3, 5), 5)
        for key, want in expected.items():
            assert out[key].value == pytest.approx(want), (trial, key)


def test_retrieval_input_errors():
    db = np.eye(4)
    with pytest.raises(MetricError):
        retrieve_and_score(db, np.zeros(4, int), db, np.zeros(4, int))  # < 5 rows
    db6 = np.vstack([np.eye(4), np.eye(4)[:2]])
    with pytest.raises(MetricError):
        retrieve_and_score(db6, np.zeros(3, int), db6, np.zeros(6, int))
    zero_row = db6.copy()
    zero_row[1] = 0.0
    with pytest.raises(DataValidationError):
        retrieve_and_score(zero_row, np.zeros(6, int), db6, np.zeros(6, int))
