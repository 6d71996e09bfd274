"""Attention-based multiple-instance learning over patch bags.

The aggregator is the ungated tanh form: attention logits w^T tanh(V h_k)
softmax-normalized over the bag's instances, bag vector z = sum a_k h_k.
The classifier head is a linear layer over z with softmax cross-entropy;
the survival head emits per-bin conditional hazards through sigmoids and
is trained with the discrete-time negative log likelihood plus l1/l2
penalties on all trainable weights, stepping once per accumulation
window of bag gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateDataError, PlanError
from .manifest import CohortManifest
from .metrics import MetricValue, accuracy, concordance_index, macro_f1
from .nn import Adam, TrainedHead, bias_fan_in, cosine_lr, log_softmax, softmax, uniform_fan_in
from .probe import FoldedResult
from .qemb import EmbeddingMatrix
from .seeding import rng_for
from .splits import SplitPlan


@dataclass
class Bag:
    """One slide's instances: row indices into the cohort matrix plus the
    slide-level label and, when present, survival fields."""

    bag_id: str
    rows: list[int]
    label: Optional[int] = None
    survival_days: Optional[float] = None
    censored: Optional[bool] = None


def bags_from_cohort(manifest: CohortManifest) -> list[Bag]:
    """Group rows into slide bags, first-appearance order.

    The bag label is the slide's class (all rows must agree); survival
    fields likewise come from the slide's rows.
    """
    classes = manifest.vocab.get("class_label", [])
    index = {c: i for i, c in enumerate(classes)}
    order: dict[str, list[int]] = {}
    for i, rec in enumerate(manifest.records):
        key = rec.slide_id if rec.slide_id else rec.sample_id
        order.setdefault(key, []).append(i)
    bags = []
    for bag_id, rows in order.items():
        recs = [manifest.records[i] for i in rows]
        labels = {r.class_label for r in recs}
        if len(labels) > 1:
            raise PlanError(f"slide {bag_id!r} mixes classes {sorted(labels)}")
        label = index[recs[0].class_label] if recs[0].class_label is not None else None
        bags.append(
            Bag(
                bag_id=bag_id,
                rows=rows,
                label=label,
                survival_days=recs[0].survival_days,
                censored=recs[0].censored,
            )
        )
    return bags


@dataclass
class MilConfig:
    attention_hidden: int = 256
    epochs: int = 50
    batch_size: int = 8
    lr: float = 2e-4
    cosine_period: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


@dataclass
class SurvivalConfig(MilConfig):
    bins: int = 4
    l1: float = 1e-4
    l2: float = 1e-5
    accumulation: int = 32


# Parameter layout: V (H,d), w (H), C (K,d), b (K). K = classes or bins.


def _shapes(d: int, h: int, k: int) -> list[tuple[str, tuple[int, ...]]]:
    return [("V", (h, d)), ("w", (h,)), ("C", (k, d)), ("b", (k,))]


def _views(params: np.ndarray, d: int, h: int, k: int) -> dict[str, np.ndarray]:
    views = {}
    o = 0
    for name, shape in _shapes(d, h, k):
        size = int(np.prod(shape))
        views[name] = params[o : o + size].reshape(shape)
        o += size
    if o != params.size:
        raise PlanError("parameter vector size mismatch")
    return views


def init_params(d: int, h: int, k: int, seed: int) -> np.ndarray:
    rng = rng_for(seed, "train", 11)
    parts = [
        uniform_fan_in(rng, h, d).ravel(),
        bias_fan_in(rng, h, d),
        uniform_fan_in(rng, k, d).ravel(),
        bias_fan_in(rng, k, d),
    ]
    return np.concatenate(parts)


def abmil_aggregate(
    H: np.ndarray, V: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Bag vector and attention weights for one bag of instances H (m, d).

    Attention is a softmax over instances, so it is non-negative, sums to
    one, and is invariant to instance order."""
    T = np.tanh(H @ V.T)
    scores = T @ w
    scores = scores - scores.max()
    e = np.exp(scores)
    a = e / e.sum()
    return a @ H, a


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Clipped at +/-50 so the hazard never rounds to exactly 0 or 1.
    return 1.0 / (1.0 + np.exp(-np.clip(x, -50.0, 50.0)))


def _bag_forward_backward(
    params: np.ndarray,
    H: np.ndarray,
    dlogits_fn,
    d: int,
    h: int,
    k: int,
    grad: np.ndarray,
) -> float:
    """Shared ABMIL backprop: dlogits_fn(logits) -> (loss, dlogits)."""
    v = _views(params, d, h, k)
    T = np.tanh(H @ v["V"].T)
    scores = T @ v["w"]
    shifted = scores - scores.max()
    e = np.exp(shifted)
    a = e / e.sum()
    z = a @ H
    logits = v["C"] @ z + v["b"]
    loss, dlogits = dlogits_fn(logits)

    g = _views(grad, d, h, k)
    g["C"] += np.outer(dlogits, z)
    g["b"] += dlogits
    dz = v["C"].T @ dlogits
    da = H @ dz
    ds = a * (da - float(a @ da))
    g["w"] += T.T @ ds
    dT = np.outer(ds, v["w"])
    dpre = dT * (1.0 - T * T)
    g["V"] += dpre.T @ H
    return loss


def classifier_loss_and_grad(
    params: np.ndarray,
    bags_X: list[np.ndarray],
    labels: np.ndarray,
    attention_hidden: int,
    num_classes: int,
) -> tuple[float, np.ndarray]:
    """Mean bag cross-entropy over the batch and its flat gradient."""
    d = bags_X[0].shape[1]
    grad = np.zeros_like(params)
    total = 0.0
    n = len(bags_X)
    for H, y in zip(bags_X, labels):
        def dlogits_fn(logits, y=y):
            logp = log_softmax(logits)
            p = np.exp(logp)
            p[y] -= 1.0
            return -float(logp[y]) / n, p / n

        total += _bag_forward_backward(
            params, H, dlogits_fn, d, attention_hidden, num_classes, grad
        )
    return total, grad


def survival_nll_and_grad(
    params: np.ndarray,
    bags_X: list[np.ndarray],
    bin_idx: np.ndarray,
    censored: np.ndarray,
    attention_hidden: int,
    num_bins: int,
) -> tuple[float, np.ndarray]:
    """Summed discrete-time NLL over the bags plus its flat gradient.

    Uncensored bags in bin t contribute -log f(t) = -log h_t -
    sum_{j<t} log(1-h_j); censored bags contribute -log S(t) =
    -sum_{j<=t} log(1-h_j). No regularization here; the trainer adds it
    once per optimizer step.
    """
    d = bags_X[0].shape[1]
    grad = np.zeros_like(params)
    total = 0.0
    for H, t, c in zip(bags_X, bin_idx, censored):
        def dlogits_fn(logits, t=int(t), c=bool(c)):
            h = _sigmoid(logits)
            dl = np.zeros_like(logits)
            if c:
                loss = -float(np.log1p(-h[: t + 1]).sum())
                dl[: t + 1] = h[: t + 1]
            else:
                loss = -float(np.log(h[t])) - float(np.log1p(-h[:t]).sum())
                dl[:t] = h[:t]
                dl[t] = -(1.0 - h[t])
            return loss, dl

        total += _bag_forward_backward(
            params, H, dlogits_fn, d, attention_hidden, num_bins, grad
        )
    return total, grad


def regularized(
    loss: float, grad: np.ndarray, params: np.ndarray, l1: float, l2: float
) -> float:
    """Add l1*|w|_1 + l2*|w|_2^2 over every trainable weight, in place."""
    if l1:
        loss += l1 * float(np.abs(params).sum())
        grad += l1 * np.sign(params)
    if l2:
        loss += l2 * float(params @ params)
        grad += 2.0 * l2 * params
    return loss


def _materialize(matrix: EmbeddingMatrix, bags: list[Bag]) -> list[np.ndarray]:
    X = matrix.values.astype(np.float64)
    return [X[np.asarray(b.rows, dtype=np.int64)] for b in bags]


def train_mil_classifier(
    matrix: EmbeddingMatrix,
    bags: list[Bag],
    num_classes: int,
    config: MilConfig,
    classes: Optional[list[str]] = None,
) -> TrainedHead:
    """Train the ABMIL classifier on the given bags, deterministic per seed."""
    if not bags:
        raise DegenerateDataError("cannot train on zero bags")
    if any(b.label is None for b in bags):
        raise PlanError("every training bag needs a label")
    bags_X = _materialize(matrix, bags)
    labels = np.array([b.label for b in bags], dtype=np.int64)
    d = matrix.dim
    h, k = config.attention_hidden, num_classes
    params = init_params(d, h, k, config.seed)
    adam = Adam(params.size, config.beta1, config.beta2, config.eps)
    shuffle_rng = rng_for(config.seed, "train", 12)
    n = len(bags)
    history: list[float] = []
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.cosine_period)
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [bags_X[int(i)] for i in idx]
            loss, grad = classifier_loss_and_grad(params, batch, labels[idx], h, k)
            adam.step(params, grad, lr)
            total += loss * idx.size
        history.append(total / n)
    return TrainedHead(
        arch={
            "kind": "abmil_classifier",
            "input_dim": d,
            "attention_hidden": h,
            "num_classes": k,
        },
        params=params,
        classes=list(classes) if classes is not None else [str(i) for i in range(k)],
        metadata={
            "final_loss": history[-1],
            "loss_history": history,
            "epochs": config.epochs,
            "seed": config.seed,
        },
    )


def predict_bags(
    head: TrainedHead, matrix: EmbeddingMatrix, bags: list[Bag]
) -> tuple[np.ndarray, np.ndarray]:
    """Bag class indices and probability rows."""
    if head.arch.get("kind") != "abmil_classifier":
        raise PlanError(f"not an ABMIL classifier head: {head.arch.get('kind')!r}")
    d, h, k = (
        head.arch["input_dim"],
        head.arch["attention_hidden"],
        head.arch["num_classes"],
    )
    v = _views(head.params, d, h, k)
    probs = np.zeros((len(bags), k))
    for i, H in enumerate(_materialize(matrix, bags)):
        z, _ = abmil_aggregate(H, v["V"], v["w"])
        probs[i] = softmax(v["C"] @ z + v["b"])
    return probs.argmax(axis=1), probs


def bag_attention(
    head: TrainedHead, matrix: EmbeddingMatrix, bag: Bag
) -> np.ndarray:
    """Attention weights a trained head assigns to one bag's instances."""
    d, h, k = (
        head.arch["input_dim"],
        head.arch["attention_hidden"],
        head.arch["num_classes"],
    )
    v = _views(head.params, d, h, k)
    X = matrix.values.astype(np.float64)[np.asarray(bag.rows, dtype=np.int64)]
    _, a = abmil_aggregate(X, v["V"], v["w"])
    return a


def quantile_bins(times: np.ndarray, num_bins: int) -> np.ndarray:
    """Interior quantile edges over the uncensored event times."""
    qs = np.linspace(0.0, 1.0, num_bins + 1)[1:-1]
    return np.quantile(np.asarray(times, dtype=np.float64), qs)


def assign_bins(times: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, np.asarray(times, dtype=np.float64), side="right")


def train_mil_survival(
    matrix: EmbeddingMatrix, bags: list[Bag], config: SurvivalConfig
) -> TrainedHead:
    """Train the discrete-time survival head, deterministic per seed.

    Bin edges are quantiles of the uncensored event times; the optimizer
    steps once per accumulation window on the summed gradient.
    """
    if not bags:
        raise DegenerateDataError("cannot train on zero bags")
    if any(b.survival_days is None or b.censored is None for b in bags):
        raise PlanError("every training bag needs survival_days and censored")
    times = np.array([b.survival_days for b in bags])
    cens = np.array([b.censored for b in bags], dtype=bool)
    if not (~cens).any():
        raise DegenerateDataError("survival training needs >= 1 uncensored event")
    edges = quantile_bins(times[~cens], config.bins)
    bin_idx = assign_bins(times, edges)
    bags_X = _materialize(matrix, bags)
    d = matrix.dim
    h, k = config.attention_hidden, config.bins
    params = init_params(d, h, k, config.seed)
    adam = Adam(params.size, config.beta1, config.beta2, config.eps)
    shuffle_rng = rng_for(config.seed, "train", 13)
    n = len(bags)
    history: list[float] = []
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.cosine_period)
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.accumulation):
            idx = order[start : start + config.accumulation]
            batch = [bags_X[int(i)] for i in idx]
            loss, grad = survival_nll_and_grad(
                params, batch, bin_idx[idx], cens[idx], h, k
            )
            loss = regularized(loss, grad, params, config.l1, config.l2)
            adam.step(params, grad, lr)
            total += loss
        history.append(total / n)
    return TrainedHead(
        arch={
            "kind": "abmil_survival",
            "input_dim": d,
            "attention_hidden": h,
            "num_bins": k,
        },
        params=params,
        classes=[],
        metadata={
            "final_loss": history[-1],
            "loss_history": history,
            "epochs": config.epochs,
            "seed": config.seed,
            "bin_edges": [float(e) for e in edges],
            "l1": config.l1,
            "l2": config.l2,
        },
    )


def survival_curves(
    head: TrainedHead, matrix: EmbeddingMatrix, bags: list[Bag]
) -> np.ndarray:
    """Per-bag survival probabilities S(t) for each bin t, non-increasing."""
    if head.arch.get("kind") != "abmil_survival":
        raise PlanError(f"not a survival head: {head.arch.get('kind')!r}")
    d, h, k = (
        head.arch["input_dim"],
        head.arch["attention_hidden"],
        head.arch["num_bins"],
    )
    v = _views(head.params, d, h, k)
    S = np.zeros((len(bags), k))
    for i, H in enumerate(_materialize(matrix, bags)):
        z, _ = abmil_aggregate(H, v["V"], v["w"])
        hazards = _sigmoid(v["C"] @ z + v["b"])
        S[i] = np.cumprod(1.0 - hazards)
    return S


def survival_risks(
    head: TrainedHead, matrix: EmbeddingMatrix, bags: list[Bag]
) -> np.ndarray:
    """Risk score per bag: negative sum of survival probabilities over bins."""
    return -survival_curves(head, matrix, bags).sum(axis=1)


def run_cv_bags(
    matrix: EmbeddingMatrix,
    manifest: CohortManifest,
    bags: list[Bag],
    plan: SplitPlan,
    config: MilConfig,
    num_classes: int,
) -> FoldedResult:
    """Five ABMIL classifiers, each trained on four folds of the plan's
    train side and scored on the fixed test-side bags."""
    if not plan.test_ids:
        raise PlanError("run_cv_bags needs a plan with a test side")
    sid_of_row = manifest.sample_ids()
    test_ids = set(plan.test_ids)
    test_bags = [b for b in bags if all(sid_of_row[r] in test_ids for r in b.rows)]
    if not test_bags:
        raise PlanError("no test bag lies fully inside the plan's test side")
    truth = np.array([b.label for b in test_bags], dtype=np.int64)
    folds = sorted(set(plan.folds.values()))
    per_fold: dict[str, list[float]] = {"accuracy": [], "macro_f1": []}
    for f in folds:
        keep = {sid for sid, fold in plan.folds.items() if fold != f}
        train_bags = [b for b in bags if all(sid_of_row[r] in keep for r in b.rows)]
        fold_seed = int(rng_for(config.seed, "train", 14, f).integers(0, 2**63 - 1))
        head = train_mil_classifier(
            matrix, train_bags, num_classes, replace(config, seed=fold_seed)
        )
        pred, _ = predict_bags(head, matrix, test_bags)
        per_fold["accuracy"].append(accuracy(pred, truth).value)
        per_fold["macro_f1"].append(macro_f1(pred, truth, num_classes).value)
    return FoldedResult(per_fold=per_fold)


def run_cv_survival(
    matrix: EmbeddingMatrix,
    manifest: CohortManifest,
    bags: list[Bag],
    plan: SplitPlan,
    config: SurvivalConfig,
) -> FoldedResult:
    """Five survival heads scored by concordance on the fixed test side."""
    if not plan.test_ids:
        raise PlanError("run_cv_survival needs a plan with a test side")
    sid_of_row = manifest.sample_ids()
    test_ids = set(plan.test_ids)
    test_bags = [b for b in bags if all(sid_of_row[r] in test_ids for r in b.rows)]
    if not test_bags:
        raise PlanError("no test bag lies fully inside the plan's test side")
    times = np.array([b.survival_days for b in test_bags])
    cens = np.array([b.censored for b in test_bags], dtype=bool)
    folds = sorted(set(plan.folds.values()))
    per_fold: dict[str, list[float]] = {"concordance_index": []}
    for f in folds:
        keep = {sid for sid, fold in plan.folds.items() if fold != f}
        train_bags = [b for b in bags if all(sid_of_row[r] in keep for r in b.rows)]
        fold_seed = int(rng_for(config.seed, "train", 15, f).integers(0, 2**63 - 1))
        head = train_mil_survival(matrix, train_bags, replace(config, seed=fold_seed))
        risks = survival_risks(head, matrix, test_bags)
        per_fold["concordance_index"].append(
            concordance_index(risks, times, cens).value
        )
    return FoldedResult(per_fold=per_fold)
