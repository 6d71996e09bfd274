"""Linear-probe engine: a two-layer MLP head over frozen embeddings.

Architecture: Linear(input_dim -> hidden_dim), ReLU, Linear(hidden_dim ->
num_classes), softmax cross-entropy. Optimization: mini-batch Adam with
cosine-annealed learning rate restarting every cosine_period epochs.
Training is deterministic per seed; weights start from seeded uniform
fan-in initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateDataError, PlanError
from .metrics import accuracy, macro_f1
from .nn import (
    Adam,
    TrainedHead,
    bias_fan_in,
    cosine_lr,
    log_softmax,
    softmax,
    uniform_fan_in,
)
from .seeding import rng_for
from .splits import SplitPlan


@dataclass
class ProbeConfig:
    hidden_dim: int = 512
    epochs: int = 50
    batch_size: int = 256
    lr: float = 5e-4
    cosine_period: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


@dataclass
class FoldedResult:
    """Per-fold metric values with their mean and sample (n-1) std."""

    per_fold: dict[str, list[float]]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.mean:
            self.mean = {k: float(np.mean(v)) for k, v in self.per_fold.items()}
        if not self.std:
            self.std = {
                k: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
                for k, v in self.per_fold.items()
            }

    def to_dict(self) -> dict:
        return {
            "per_fold": {k: list(map(float, v)) for k, v in self.per_fold.items()},
            "mean": dict(self.mean),
            "std": dict(self.std),
        }


def _shapes(d: int, h: int, k: int) -> list[tuple[str, tuple[int, ...]]]:
    return [("W1", (h, d)), ("b1", (h,)), ("W2", (k, h)), ("b2", (k,))]


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
    rng = rng_for(seed, "train", 1)
    parts = [
        uniform_fan_in(rng, h, d).ravel(),
        bias_fan_in(rng, h, d),
        uniform_fan_in(rng, k, h).ravel(),
        bias_fan_in(rng, k, h),
    ]
    return np.concatenate(parts)


def loss_and_grad(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, hidden_dim: int, num_classes: int
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient, flat."""
    d = X.shape[1]
    v = _views(params, d, hidden_dim, num_classes)
    n = X.shape[0]
    pre = X @ v["W1"].T + v["b1"]
    hid = np.maximum(pre, 0.0)
    logits = hid @ v["W2"].T + v["b2"]
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(n), y].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grad = np.zeros_like(params)
    g = _views(grad, d, hidden_dim, num_classes)
    g["W2"][:] = dlogits.T @ hid
    g["b2"][:] = dlogits.sum(axis=0)
    dhid = dlogits @ v["W2"]
    dpre = dhid * (pre > 0.0)
    g["W1"][:] = dpre.T @ X
    g["b1"][:] = dpre.sum(axis=0)
    return loss, grad


def train_probe(
    X: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    config: ProbeConfig,
    classes: Optional[list[str]] = None,
) -> TrainedHead:
    """Train the probe head. Deterministic per config.seed."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise PlanError("X and y must align")
    if X.shape[0] == 0:
        raise DegenerateDataError("cannot train a probe on zero samples")
    if y.min() < 0 or y.max() >= num_classes:
        raise PlanError("labels out of range")
    n, d = X.shape
    h, k = config.hidden_dim, num_classes
    params = init_params(d, h, k, config.seed)
    adam = Adam(params.size, config.beta1, config.beta2, config.eps)
    shuffle_rng = rng_for(config.seed, "train", 2)
    history: list[float] = []
    for epoch in range(config.epochs):
        lr = cosine_lr(config.lr, epoch, config.cosine_period)
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grad = loss_and_grad(params, X[idx], y[idx], h, k)
            adam.step(params, grad, lr)
            total += loss * idx.size
        history.append(total / n)
    return TrainedHead(
        arch={
            "kind": "mlp_probe",
            "input_dim": d,
            "hidden_dim": h,
            "num_classes": k,
            "activation": "relu",
        },
        params=params,
        classes=list(classes) if classes is not None else [str(i) for i in range(k)],
        metadata={
            "final_loss": history[-1],
            "loss_history": history,
            "epochs": config.epochs,
            "seed": config.seed,
            "lr": config.lr,
            "cosine_period": config.cosine_period,
            "batch_size": config.batch_size,
        },
    )


def predict(head: TrainedHead, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class indices and softmax probability rows for each input row."""
    if head.arch.get("kind") != "mlp_probe":
        raise PlanError(f"not a probe head: {head.arch.get('kind')!r}")
    X = np.asarray(X, dtype=np.float64)
    d, h, k = head.arch["input_dim"], head.arch["hidden_dim"], head.arch["num_classes"]
    if X.shape[1] != d:
        raise PlanError(f"expected {d}-dim inputs, got {X.shape[1]}")
    v = _views(head.params, d, h, k)
    hid = np.maximum(X @ v["W1"].T + v["b1"], 0.0)
    probs = softmax(hid @ v["W2"].T + v["b2"])
    return probs.argmax(axis=1), probs


def run_cv(
    X: np.ndarray,
    y: np.ndarray,
    ids: list[str],
    plan: SplitPlan,
    config: ProbeConfig,
    num_classes: Optional[int] = None,
) -> FoldedResult:
    """Five probes, each trained on four folds of the plan's train side
    and evaluated on the fixed test side; accuracy and macro-F1 per fold.

    ids must align with the rows of X; every plan id must appear in ids.
    """
    if not plan.test_ids:
        raise PlanError("run_cv needs a plan with a test side")
    row_of = {sid: i for i, sid in enumerate(ids)}
    missing = [s for s in list(plan.folds) + list(plan.test_ids) if s not in row_of]
    if missing:
        raise PlanError(f"plan ids missing from the matrix: {missing[:3]}")
    k = int(num_classes) if num_classes is not None else int(np.max(y)) + 1
    test_rows = np.array([row_of[s] for s in plan.test_ids], dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    folds = sorted(set(plan.folds.values()))
    per_fold: dict[str, list[float]] = {"accuracy": [], "macro_f1": []}
    for f in folds:
        train_rows = np.array(
            sorted(row_of[s] for s, fold in plan.folds.items() if fold != f),
            dtype=np.int64,
        )
        fold_seed = int(
            rng_for(config.seed, "train", 3, f).integers(0, 2**63 - 1)
        )
        head = train_probe(
            X[train_rows], y[train_rows], k, replace(config, seed=fold_seed)
        )
        pred, _ = predict(head, X[test_rows])
        truth = y[test_rows]
        per_fold["accuracy"].append(accuracy(pred, truth).value)
        per_fold["macro_f1"].append(macro_f1(pred, truth, k).value)
    return FoldedResult(per_fold=per_fold)
