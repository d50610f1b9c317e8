"""Synthetic datasets with known per-sample quality.

Each identity gets a random prototype direction; a sample of true quality
``q`` is the prototype plus isotropic Gaussian noise of gain
``noise_floor + noise_scale * (1 - q)``, renormalized to unit length. The
base labels handed to the optimizer are the true qualities plus Gaussian
label noise, clamped to [0, 1].
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .datamodel import Dataset, SampleRecord, write_embeddings, write_manifest


@dataclass(frozen=True)
class SynthSpec:
    n_identities: int = 200
    images_per_identity: int = 10
    dim: int = 64
    noise_floor: float = 0.05
    noise_scale: float = 0.8
    base_label_noise_sigma: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_identities < 2:
            raise ValueError("need at least 2 identities")
        if self.images_per_identity < 2:
            raise ValueError("need at least 2 images per identity")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        for name in ("noise_floor", "noise_scale", "base_label_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def generate(spec: SynthSpec) -> tuple[Dataset, np.ndarray]:
    """Build a dataset and return it with the true (row-indexed) qualities."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.n_identities * spec.images_per_identity

    protos = rng.standard_normal((spec.n_identities, spec.dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    true_q = rng.uniform(0.0, 1.0, size=n)
    z = rng.standard_normal((n, spec.dim))
    label_noise = rng.standard_normal(n) * spec.base_label_noise_sigma

    ident = np.repeat(np.arange(spec.n_identities), spec.images_per_identity)
    gain = spec.noise_floor + spec.noise_scale * (1.0 - true_q)
    emb = protos[ident] + gain[:, None] * z
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    base = np.clip(true_q + label_noise, 0.0, 1.0)

    width = len(str(spec.n_identities - 1))
    samples = [
        SampleRecord(f"id{ident[r]:0{width}d}_{r % spec.images_per_identity:03d}",
                     f"id{ident[r]:0{width}d}", float(base[r]), r)
        for r in range(n)
    ]
    return Dataset(samples, emb), true_q


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"inputs must be equal-length 1-D, got {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValueError("inputs are empty")
    ra = rankdata(a) - (a.size + 1) / 2.0
    rb = rankdata(b) - (b.size + 1) / 2.0
    denom = np.sqrt(np.dot(ra, ra) * np.dot(rb, rb))
    if denom == 0:
        raise ValueError("Spearman correlation undefined: constant ranks")
    return float(np.clip(np.dot(ra, rb) / denom, -1.0, 1.0))


def write_synthetic(out_dir, dataset: Dataset, true_q) -> dict[str, Path]:
    """Write manifest, embeddings and true-quality CSV; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "manifest": out / "manifest.csv",
        "embeddings": out / "embeddings.fqem",
        "true_quality": out / "true_quality.csv",
    }
    write_manifest(paths["manifest"], dataset.samples)
    write_embeddings(paths["embeddings"], dataset.embeddings)
    with open(paths["true_quality"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "quality"])
        for rec in dataset.samples:
            w.writerow([rec.sample_id, f"{true_q[rec.row]:.9g}"])
    return paths
