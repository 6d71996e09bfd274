"""Audit metrics: classification, leakage, degradation, fairness,
survival concordance, and exact cosine retrieval.

Every function is pure; MetricValue carries the value, its support, and
an optional slice tag so report rows can cite their evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataValidationError, MetricError


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    support: int
    slice: Optional[str] = None

    def to_dict(self) -> dict:
        doc = {"name": self.name, "value": float(self.value), "support": self.support}
        if self.slice is not None:
            doc["slice"] = self.slice
        return doc


def _check_labels(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise MetricError("pred and truth must be 1-D and aligned")
    if pred.size == 0:
        raise MetricError("empty prediction set")
    return pred, truth


def accuracy(pred: np.ndarray, truth: np.ndarray, slice: Optional[str] = None) -> MetricValue:
    pred, truth = _check_labels(pred, truth)
    return MetricValue(
        name="accuracy",
        value=float((pred == truth).mean()),
        support=int(pred.size),
        slice=slice,
    )


def macro_f1(
    pred: np.ndarray, truth: np.ndarray, num_classes: int, slice: Optional[str] = None
) -> MetricValue:
    """Unweighted mean over all num_classes classes of 2PR/(P+R).

    Precision (recall) is 0 when the class is never predicted (never
    true); a class with P + R = 0 contributes F1 = 0.
    """
    pred, truth = _check_labels(pred, truth)
    if num_classes < 1:
        raise MetricError("num_classes must be positive")
    if pred.max() >= num_classes or truth.max() >= num_classes:
        raise MetricError("labels exceed num_classes")
    f1s = []
    for c in range(num_classes):
        tp = float(np.sum((pred == c) & (truth == c)))
        fp = float(np.sum((pred == c) & (truth != c)))
        fn = float(np.sum((pred != c) & (truth == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
    return MetricValue(
        name="macro_f1", value=float(np.mean(f1s)), support=int(pred.size), slice=slice
    )


def leakage_score(acc: "MetricValue | float", num_classes: int) -> float:
    """Accuracy excess over the 1/num_classes chance rate."""
    if num_classes < 2:
        raise MetricError("leakage needs at least 2 classes")
    value = acc.value if isinstance(acc, MetricValue) else float(acc)
    if not 0.0 <= value <= 1.0:
        raise MetricError(f"accuracy out of [0, 1]: {value}")
    return value - 1.0 / num_classes


def majority_fraction(truth: np.ndarray) -> float:
    """Share of the most frequent label; the always-majority baseline."""
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise MetricError("empty label set")
    _, counts = np.unique(truth, return_counts=True)
    return float(counts.max() / truth.size)


def degradation(baseline: MetricValue, ood: MetricValue) -> tuple[float, float]:
    """(absolute, relative) drop from baseline to the shifted setting.

    Relative degradation is 0 when the baseline is 0. The two values must
    be the same metric.
    """
    if baseline.name != ood.name:
        raise MetricError(
            f"metric mismatch: {baseline.name!r} vs {ood.name!r}"
        )
    absolute = baseline.value - ood.value
    relative = absolute / baseline.value if baseline.value != 0.0 else 0.0
    return float(absolute), float(relative)


def subgroup_gap(metric_by_group: dict) -> float:
    """Absolute difference between exactly two per-group metric values."""
    if len(metric_by_group) != 2:
        raise MetricError(
            f"subgroup gap needs exactly 2 groups, got {len(metric_by_group)}"
        )
    a, b = (
        v.value if isinstance(v, MetricValue) else float(v)
        for v in metric_by_group.values()
    )
    return float(abs(a - b))


@dataclass(frozen=True)
class InstitutionCV:
    value: float
    included: dict[str, float]
    excluded: list[str]

    def to_dict(self) -> dict:
        return {
            "value": float(self.value),
            "included": {k: float(v) for k, v in self.included.items()},
            "excluded": list(self.excluded),
        }


def institution_cv(
    acc_by_institution: dict[str, MetricValue], min_support: int = 10
) -> InstitutionCV:
    """Sample (n-1) coefficient of variation of per-institution values.

    Institutions with support below min_support are excluded and listed.
    Zero is perfect parity. Needs at least two qualifying institutions
    and a nonzero mean.
    """
    included = {}
    excluded = []
    for inst, mv in acc_by_institution.items():
        if mv.support < min_support:
            excluded.append(inst)
        else:
            included[inst] = mv.value
    if len(included) < 2:
        raise MetricError(
            f"institution CV needs >= 2 institutions with support >= "
            f"{min_support}, got {len(included)}"
        )
    values = np.array(list(included.values()), dtype=np.float64)
    mean = values.mean()
    if mean == 0.0:
        raise MetricError("institution CV undefined: mean value is 0")
    return InstitutionCV(
        value=float(values.std(ddof=1) / mean),
        included=included,
        excluded=sorted(excluded),
    )


def concordance_index(
    risk: np.ndarray, time: np.ndarray, censored: np.ndarray
) -> MetricValue:
    """Concordance over comparable pairs (time_i < time_j, i uncensored);
    a pair is concordant when risk_i > risk_j, tied risks score 0.5."""
    risk = np.asarray(risk, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    censored = np.asarray(censored, dtype=bool)
    if not (risk.shape == time.shape == censored.shape) or risk.ndim != 1:
        raise MetricError("risk, time, censored must be 1-D and aligned")
    comparable = (time[:, None] < time[None, :]) & ~censored[:, None]
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise MetricError("concordance undefined: no comparable pairs")
    higher = risk[:, None] > risk[None, :]
    tied = risk[:, None] == risk[None, :]
    score = (higher & comparable).sum() + 0.5 * (tied & comparable).sum()
    return MetricValue(
        name="concordance_index", value=float(score / n_pairs), support=n_pairs
    )


def _normalize_rows(X: np.ndarray, what: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataValidationError(
            f"{what} row {int(zero[0])} has zero norm; cosine undefined"
        )
    return X / norms[:, None]


def retrieve_and_score(
    db_X: np.ndarray,
    db_labels: np.ndarray,
    query_X: np.ndarray,
    query_labels: np.ndarray,
    k_values: Sequence[int] = (1, 3, 5),
    majority_k: int = 5,
) -> dict[str, MetricValue]:
    """Exhaustive cosine retrieval scored as Acc@k and MVAcc@majority_k.

    Acc@k counts queries whose top k holds at least one database item of
    the query's label. MVAcc@k takes the majority label of the top k,
    breaking count ties toward the label of the nearest tied neighbor.
    Similarity ties break toward the lower database row index.
    """
    db_labels = np.asarray(db_labels, dtype=np.int64)
    query_labels = np.asarray(query_labels, dtype=np.int64)
    need = max(tuple(k_values) + (majority_k,))
    if db_X.shape[0] < need:
        raise MetricError(
            f"database holds {db_X.shape[0]} rows, need at least {need}"
        )
    if db_X.shape[0] != db_labels.size or query_X.shape[0] != query_labels.size:
        raise MetricError("labels must align with matrix rows")
    dbn = _normalize_rows(db_X, "database")
    qn = _normalize_rows(query_X, "query")
    sims = qn @ dbn.T
    top = np.argsort(-sims, axis=1, kind="stable")[:, :need]
    top_labels = db_labels[top]

    out: dict[str, MetricValue] = {}
    nq = query_X.shape[0]
    for k in k_values:
        hits = (top_labels[:, :k] == query_labels[:, None]).any(axis=1)
        out[f"acc@{k}"] = MetricValue(
            name=f"acc@{k}", value=float(hits.mean()), support=nq
        )
    mv_hits = 0
    for qi in range(nq):
        labs = top_labels[qi, :majority_k]
        uniq, counts = np.unique(labs, return_counts=True)
        best = counts.max()
        tied = set(uniq[counts == best].tolist())
        if len(tied) == 1:
            winner = next(iter(tied))
        else:
            # Nearest neighbor whose label is among the tied labels.
            winner = next(int(lab) for lab in labs if int(lab) in tied)
        mv_hits += int(winner == int(query_labels[qi]))
    out[f"mvacc@{majority_k}"] = MetricValue(
        name=f"mvacc@{majority_k}", value=mv_hits / nq, support=nq
    )
    return out
