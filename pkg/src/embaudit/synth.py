"""Synthetic cohort generator with planted, known signal structure.

Embeddings are unit-variance Gaussian noise plus planted components along
mutually orthonormal directions: one per category for attributes with
three or more levels, a single signed direction for binary attributes
(levels sit at +mu and -mu, so the two means are 2*mu apart). Signal
strengths are per-attribute knobs, so chance-level and near-Bayes anchor
points are known in closed form.

Institution-class coupling: each institution has a dominant class
(classes rotate across institutions) and spurious_rho interpolates slide
allocation from fully balanced (rho 0) to dominated (rho 1). Every
(institution, class) cell always keeps at least one slide so
inversion-style evaluation splits remain constructible even at rho 1.

When witness_rate < 1 the generator switches to presence-style bag
signals: class-0 slides carry no class component and each slide of class
c > 0 carries its component on only ceil(witness_rate * slide_size)
instances, recorded as witness rows.

Survival, when requested, is exponential with log-hazard equal to the
slide's latent risk draw; embeddings carry risk_strength * latent along a
planted risk direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import PlanError, SchemaError
from .manifest import CohortManifest, SampleRecord
from .metrics import MetricError
from .qemb import EmbeddingMatrix
from .seeding import rng_for


@dataclass
class SurvivalSynth:
    base_hazard: float = 0.002
    risk_strength: float = 0.0
    censor_rate_ratio: float = 0.5


@dataclass
class SynthSpec:
    dim: int = 32
    n_classes: int = 2
    n_institutions: int = 4
    samples_per_cell: int = 8
    slide_size: int = 1
    mu_class: float = 0.0
    mu_inst: float = 0.0
    mu_gender: float = 0.0
    mu_race: float = 0.0
    spurious_rho: float = 0.0
    witness_rate: float = 1.0
    noisy_institution: Optional[int] = None
    noise_scale: float = 3.0
    survival: Optional[SurvivalSynth] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < self.n_classes + self.n_institutions + 2:
            raise PlanError(
                f"dim {self.dim} cannot fit orthonormal directions for "
                f"{self.n_classes} classes + {self.n_institutions} "
                "institutions + gender + race"
            )
        if self.n_classes < 2 or self.n_institutions < 2:
            raise PlanError("need at least 2 classes and 2 institutions")
        if not 0.0 <= self.spurious_rho <= 1.0:
            raise PlanError("spurious_rho must be in [0, 1]")
        if not 0.0 < self.witness_rate <= 1.0:
            raise PlanError("witness_rate must be in (0, 1]")
        if self.slide_size < 1 or self.samples_per_cell < 1:
            raise PlanError("slide_size and samples_per_cell must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        doc = dict(doc)
        surv = doc.pop("survival", None)
        known = {f.name for f in fields(cls)}
        bad = sorted(set(doc) - known)
        if bad:
            raise SchemaError(f"unknown cohort spec fields: {', '.join(bad)}")
        spec = cls(**doc)
        if surv is not None:
            if not isinstance(surv, dict):
                raise SchemaError("survival block must be an object")
            bad = sorted(set(surv) - {f.name for f in fields(SurvivalSynth)})
            if bad:
                raise SchemaError(f"unknown survival fields: {', '.join(bad)}")
            spec.survival = SurvivalSynth(**surv)
        return spec


@dataclass
class GroundTruth:
    """What the generator planted: directions, dominant classes, witness
    rows, and per-slide risk latents."""

    directions: dict[str, list[list[float]]]
    dominant_class: dict[str, str]
    witness_rows: list[int]
    slide_latent: dict[str, float]
    spec: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "directions": self.directions,
            "dominant_class": self.dominant_class,
            "witness_rows": list(self.witness_rows),
            "slide_latent": self.slide_latent,
            "spec": self.spec,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8"
        )


def expected_chance(spec: SynthSpec, attribute: str) -> float:
    """Chance accuracy for probing the attribute under the balanced design."""
    cards = {
        "class_label": spec.n_classes,
        "institution": spec.n_institutions,
        "gender": 2,
        "race": 2,
    }
    if attribute not in cards:
        raise MetricError(f"unknown attribute {attribute!r}")
    return 1.0 / cards[attribute]


def _orthonormal_directions(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """count orthonormal rows via QR of a Gaussian draw, sign-fixed."""
    G = rng.standard_normal((dim, count))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return (Q * signs).T


def _signed_or_per_level(mu: float, levels: int, dirs: np.ndarray, which: int) -> np.ndarray:
    """Planted component for category index `which` of an attribute."""
    if levels == 2:
        return mu * dirs[0] if which == 1 else -mu * dirs[0]
    return mu * dirs[which]


def _cell_counts(spec: SynthSpec) -> list[int]:
    """Slides per class for one institution: index 0 is the dominant
    class count, the rest are the per-other-class counts."""
    k = spec.n_classes
    total = spec.samples_per_cell * k
    other = max(1, int(round(total * (1.0 - spec.spurious_rho) / k)))
    dominant = total - (k - 1) * other
    if dominant < 1:
        raise PlanError("spurious_rho allocation left no dominant slides")
    return [dominant] + [other] * (k - 1)


def generate_cohort(
    spec: SynthSpec,
) -> tuple[EmbeddingMatrix, CohortManifest, GroundTruth]:
    """Deterministic cohort for the given spec and seed."""
    rng = rng_for(spec.seed, "synth", 1)
    k, n_inst = spec.n_classes, spec.n_institutions
    classes = [f"class{c}" for c in range(k)]
    insts = [f"inst{i:02d}" for i in range(n_inst)]

    n_class_dirs = 1 if k == 2 else k
    n_inst_dirs = 1 if n_inst == 2 else n_inst
    need = n_class_dirs + n_inst_dirs + 2 + (1 if spec.survival else 0)
    dirs = _orthonormal_directions(spec.dim, need, rng)
    o = 0
    class_dirs = dirs[o : o + n_class_dirs]; o += n_class_dirs
    inst_dirs = dirs[o : o + n_inst_dirs]; o += n_inst_dirs
    gender_dir = dirs[o : o + 1]; o += 1
    race_dir = dirs[o : o + 1]; o += 1
    risk_dir = dirs[o] if spec.survival else None

    dominant = {insts[i]: classes[i % k] for i in range(n_inst)}
    counts = _cell_counts(spec)

    level = "patch" if spec.slide_size > 1 else "slide"
    records: list[SampleRecord] = []
    rows: list[np.ndarray] = []
    witness_rows: list[int] = []
    slide_latent: dict[str, float] = {}

    for i, inst in enumerate(insts):
        dom_idx = classes.index(dominant[inst])
        slide_classes: list[int] = [dom_idx] * counts[0]
        others = [c for c in range(k) if c != dom_idx]
        for j, c in enumerate(others):
            slide_classes.extend([c] * counts[1 + j])
        order = rng.permutation(len(slide_classes))
        slide_classes = [slide_classes[int(t)] for t in order]

        for s, cls_idx in enumerate(slide_classes):
            slide_id = f"{inst}_s{s:03d}"
            patient_id = f"{inst}_p{s:03d}"
            gender = int(rng.integers(0, 2))
            race = int(rng.integers(0, 2))
            base = np.zeros(spec.dim)
            base += _signed_or_per_level(spec.mu_inst, n_inst, inst_dirs, i)
            base += spec.mu_gender * gender_dir[0] * (1.0 if gender == 1 else -1.0)
            base += spec.mu_race * race_dir[0] * (1.0 if race == 1 else -1.0)

            surv_days = None
            censored = None
            if spec.survival:
                latent = float(rng.standard_normal())
                slide_latent[slide_id] = latent
                base = base + spec.survival.risk_strength * latent * risk_dir
                hazard = spec.survival.base_hazard * math.exp(
                    spec.survival.risk_strength * latent
                )
                t_event = float(rng.exponential(1.0 / hazard))
                t_cens = float(
                    rng.exponential(
                        1.0 / (spec.survival.base_hazard * spec.survival.censor_rate_ratio)
                    )
                )
                surv_days = round(min(t_event, t_cens), 3)
                censored = t_cens < t_event

            class_comp = _signed_or_per_level(spec.mu_class, k, class_dirs, cls_idx)
            n_witness = math.ceil(spec.witness_rate * spec.slide_size)
            witness_mode = spec.witness_rate < 1.0
            scale = (
                spec.noise_scale
                if spec.noisy_institution is not None and i == spec.noisy_institution
                else 1.0
            )
            for t in range(spec.slide_size):
                x = base + scale * rng.standard_normal(spec.dim)
                is_witness = t < n_witness
                if witness_mode:
                    if cls_idx > 0 and is_witness:
                        x = x + class_comp
                        witness_rows.append(len(rows))
                else:
                    x = x + class_comp
                rows.append(x)
                records.append(
                    SampleRecord(
                        sample_id=f"{slide_id}_q{t:03d}",
                        patient_id=patient_id,
                        slide_id=slide_id,
                        institution=inst,
                        level=level,
                        class_label=classes[cls_idx],
                        gender="female" if gender == 0 else "male",
                        race="white" if race == 1 else "black_or_african_american",
                        survival_days=surv_days,
                        censored=censored,
                    )
                )

    matrix = EmbeddingMatrix(np.vstack(rows))
    manifest = CohortManifest(records=records)
    direction_doc: dict[str, list[list[float]]] = {
        "class_label": class_dirs.tolist(),
        "institution": inst_dirs.tolist(),
        "gender": gender_dir.tolist(),
        "race": race_dir.tolist(),
    }
    if risk_dir is not None:
        direction_doc["risk"] = [risk_dir.tolist()]
    truth = GroundTruth(
        directions=direction_doc,
        dominant_class=dominant,
        witness_rows=witness_rows,
        slide_latent=slide_latent,
        spec={
            "dim": spec.dim,
            "n_classes": k,
            "n_institutions": n_inst,
            "samples_per_cell": spec.samples_per_cell,
            "slide_size": spec.slide_size,
            "mu_class": spec.mu_class,
            "mu_inst": spec.mu_inst,
            "mu_gender": spec.mu_gender,
            "mu_race": spec.mu_race,
            "spurious_rho": spec.spurious_rho,
            "witness_rate": spec.witness_rate,
            "seed": spec.seed,
        },
    )
    return matrix, manifest, truth
