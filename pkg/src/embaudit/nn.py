"""Shared training core: flat-parameter models, Adam, cosine restarts.

Models store every trainable tensor inside one float64 vector so the
optimizer, serialization, and finite-difference checks all operate on a
single array. Training is a pure function of (data, config.seed).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import FormatError

HEAD_MAGIC = b"QHD1"


def cosine_lr(base_lr: float, epoch: int, period: int) -> float:
    """Cosine-annealed learning rate with warm restarts every `period`
    epochs: full base_lr at each restart, decaying toward 0 in between."""
    phase = (epoch % period) / period
    return 0.5 * base_lr * (1.0 + np.cos(np.pi * phase))


@dataclass
class Adam:
    """Adam over one flat parameter vector."""

    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.m = np.zeros(self.size)
        self.v = np.zeros(self.size)

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def uniform_fan_in(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    """Weights and bias drawn from U(-1/sqrt(in_dim), 1/sqrt(in_dim));
    returns the (out_dim, in_dim) weight block only."""
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


def bias_fan_in(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=out_dim)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


@dataclass
class TrainedHead:
    """A trained task head: architecture descriptor, flat weights, class
    vocabulary, and training metadata (final loss, epochs, seed)."""

    arch: dict
    params: np.ndarray
    classes: list[str]
    metadata: dict

    def save(self, path: str | Path) -> None:
        header = json.dumps(
            {
                "arch": self.arch,
                "classes": self.classes,
                "metadata": self.metadata,
                "param_count": int(self.params.size),
            },
            sort_keys=True,
        ).encode("utf-8")
        blob = (
            HEAD_MAGIC
            + struct.pack("<I", len(header))
            + header
            + self.params.astype("<f8").tobytes()
        )
        Path(path).write_bytes(blob)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedHead":
        blob = Path(path).read_bytes()
        if len(blob) < 8 or blob[:4] != HEAD_MAGIC:
            raise FormatError("not a trained-head file")
        (hlen,) = struct.unpack_from("<I", blob, 4)
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
        params = np.frombuffer(blob, dtype="<f8", offset=8 + hlen).copy()
        if params.size != header["param_count"]:
            raise FormatError(
                f"weight payload holds {params.size} values, "
                f"header declares {header['param_count']}"
            )
        return cls(
            arch=header["arch"],
            params=params,
            classes=header["classes"],
            metadata=header["metadata"],
        )


@dataclass
class TrainSettings:
    """Optimizer settings shared by every head trainer."""

    epochs: int = 50
    lr: float = 5e-4
    cosine_period: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def epoch_increases(loss_history: list[float], tol: float = 1e-9) -> list[int]:
    """Epoch indices where the loss rose by more than tol."""
    return [
        e
        for e in range(1, len(loss_history))
        if loss_history[e] > loss_history[e - 1] + tol
    ]
