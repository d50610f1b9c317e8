"""Core types, normalization helpers and on-disk formats.

All per-sample arrays (qualities, identity codes) are indexed by embedding
row, not by manifest order. ``Dataset.samples`` keeps manifest order so that
outputs can be written back in the order they were read.
"""
from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FQEM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQI")
MANIFEST_HEADER = ["sample_id", "identity", "base_quality", "row"]


class LoadError(ValueError):
    """Raised when a dataset file is malformed or inconsistent."""


class ThetaMode(str, enum.Enum):
    FORMULA_LITERAL = "formula-literal"
    COUNT_NORMALIZED = "count-normalized"
    SKIP_EMPTY = "skip-empty"


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    identity: str
    base_quality: float
    row: int


@dataclass
class Dataset:
    """Samples, their embeddings and the identity -> rows index.

    Parameters
    ----------
    samples : list of SampleRecord
        In manifest order.
    embeddings : ndarray, shape (n, d)
        Row ``r`` belongs to the sample whose ``row`` field is ``r``.
    identity_index : dict, optional
        Built from ``samples`` when omitted. Rows are kept ascending and
        identities in order of first appearance.
    """

    samples: list[SampleRecord]
    embeddings: np.ndarray
    identity_index: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        emb = np.asarray(self.embeddings)
        if emb.ndim != 2:
            raise LoadError(f"embeddings must be 2-D, got shape {emb.shape}")
        self.embeddings = emb
        n = emb.shape[0]
        if len(self.samples) != n:
            raise LoadError(
                f"manifest has {len(self.samples)} samples but embedding matrix has {n} rows")
        seen_ids = set()
        seen_rows = np.zeros(n, dtype=bool)
        for rec in self.samples:
            if rec.sample_id in seen_ids:
                raise LoadError(f"duplicate sample_id {rec.sample_id!r}")
            seen_ids.add(rec.sample_id)
            if not 0 <= rec.row < n:
                raise LoadError(
                    f"sample {rec.sample_id!r} references row {rec.row} outside [0, {n})")
            if seen_rows[rec.row]:
                raise LoadError(f"sample {rec.sample_id!r} reuses row {rec.row}")
            seen_rows[rec.row] = True
        norms = np.linalg.norm(emb.astype(np.float64, copy=False), axis=1)
        bad = np.flatnonzero(~(norms > 0) | ~np.isfinite(norms))
        if bad.size:
            rec = self.sample_at_row(int(bad[0]))
            raise LoadError(f"embedding row {bad[0]} (sample {rec.sample_id!r}) has zero or non-finite norm")
        if not self.identity_index:
            index: dict[str, list[int]] = {}
            for rec in self.samples:
                index.setdefault(rec.identity, []).append(rec.row)
            self.identity_index = {k: sorted(v) for k, v in index.items()}

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]

    @property
    def n_identities(self) -> int:
        return len(self.identity_index)

    def sample_at_row(self, row: int) -> SampleRecord:
        return self.samples[self._row_to_sample[row]]

    @property
    def _row_to_sample(self) -> np.ndarray:
        cached = self.__dict__.get("_r2s")
        if cached is None:
            cached = np.empty(len(self.samples), dtype=np.int64)
            for i, rec in enumerate(self.samples):
                cached[rec.row] = i
            self.__dict__["_r2s"] = cached
        return cached

    def identity_codes(self) -> np.ndarray:
        """Integer identity code per row (codes follow identity_index order)."""
        codes = np.empty(self.n, dtype=np.int64)
        for code, rows in enumerate(self.identity_index.values()):
            codes[rows] = code
        return codes

    def base_qualities(self) -> np.ndarray:
        """Raw base qualities, indexed by row."""
        out = np.empty(self.n, dtype=np.float64)
        for rec in self.samples:
            out[rec.row] = rec.base_quality
        return out

    def row_of(self, sample_id: str) -> int:
        lookup = self.__dict__.get("_id2row")
        if lookup is None:
            lookup = {rec.sample_id: rec.row for rec in self.samples}
            self.__dict__["_id2row"] = lookup
        try:
            return lookup[sample_id]
        except KeyError:
            raise LoadError(f"unknown sample_id {sample_id!r}") from None


@dataclass(frozen=True)
class OptimConfig:
    """Hyperparameters of the label optimizer.

    Defaults are the settings used for the reported experiments: ten pairs
    per sample, ten repeats, step 0.01 and gate 0.05.
    """

    k: int = 10
    lam: float = 0.05
    epsilon: float = 0.01
    iterations: int = 10
    repeats: int = 10
    seed: int = 0
    theta_mode: ThetaMode = ThetaMode.FORMULA_LITERAL

    def __post_init__(self):
        object.__setattr__(self, "theta_mode", ThetaMode(self.theta_mode))
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")


# ---------------------------------------------------------------------------
# Normalization and scalar primitives
# ---------------------------------------------------------------------------


def normalize_qualities(raw) -> np.ndarray:
    """Min-max map raw quality scores onto [0, 1].

    A constant input has no range to stretch and maps to 0.5 everywhere.
    """
    q = np.asarray(raw, dtype=np.float64)
    if q.size == 0:
        raise ValueError("cannot normalize an empty quality list")
    lo, hi = q.min(), q.max()
    if hi == lo:
        return np.full(q.shape, 0.5)
    out = (q - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def cosine_similarity(e_i, e_j) -> float:
    a = np.asarray(e_i, dtype=np.float64)
    b = np.asarray(e_j, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    s = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, s))


def normalize_similarity(s):
    """Map a cosine similarity from [-1, 1] to [0, 1] via (s + 1) / 2."""
    return (s + 1.0) / 2.0


def pair_quality(q_i, q_j):
    """Quality of a pair is the quality of its worse image."""
    return np.minimum(q_i, q_j)


def unit_rows(embeddings: np.ndarray) -> np.ndarray:
    """Float64 copy of ``embeddings`` with every row scaled to unit norm."""
    e = np.asarray(embeddings, dtype=np.float64)
    return e / np.linalg.norm(e, axis=1, keepdims=True)


def pair_cosines(unit: np.ndarray, a: np.ndarray, b: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
    """Clamped cosine similarity of rows ``a[p]`` and ``b[p]`` of unit-norm ``unit``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = np.empty(a.shape[0], dtype=np.float64)
    for start in range(0, a.shape[0], chunk):
        sl = slice(start, start + chunk)
        out[sl] = np.einsum("ij,ij->i", unit[a[sl]], unit[b[sl]])
    return np.clip(out, -1.0, 1.0, out=out)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_embeddings(path, embeddings) -> None:
    e = np.ascontiguousarray(embeddings, dtype="<f4")
    if e.ndim != 2:
        raise ValueError("embeddings must be 2-D")
    n, d = e.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, d))
        fh.write(e.tobytes(order="C"))


def read_embeddings(path, mmap: bool = True) -> np.ndarray:
    """Read an embedding file, memory-mapped by default (read-only)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
    except OSError as exc:
        raise LoadError(f"cannot read embeddings {path}: {exc}") from exc
    if len(head) < _HEADER.size:
        raise LoadError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack(head)
    if magic != MAGIC:
        raise LoadError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n * d
    size = path.stat().st_size
    if size != expected:
        raise LoadError(f"{path}: expected {expected} bytes for {n}x{d} matrix, found {size}")
    if n * d == 0:
        return np.zeros((n, d), dtype="<f4")
    if mmap:
        return np.memmap(path, dtype="<f4", mode="r", offset=_HEADER.size, shape=(n, d))
    return np.fromfile(path, dtype="<f4", offset=_HEADER.size).reshape(n, d)


def read_manifest(path) -> list[SampleRecord]:
    path = Path(path)
    records = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read manifest {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise LoadError(f"{path}: header must be {','.join(MANIFEST_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise LoadError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            sid, ident, q, r = row
            try:
                quality = float(q)
                index = int(r)
            except ValueError:
                raise LoadError(f"{path}:{lineno}: sample {sid!r} has unparseable quality/row") from None
            if not math.isfinite(quality):
                raise LoadError(f"{path}:{lineno}: sample {sid!r} has non-finite quality")
            records.append(SampleRecord(sid, ident, quality, index))
    if not records:
        raise LoadError(f"{path}: manifest is empty")
    return records


def write_manifest(path, samples) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for rec in samples:
            w.writerow([rec.sample_id, rec.identity, repr(float(rec.base_quality)), rec.row])


def load_dataset(manifest_path, embeddings_path) -> Dataset:
    samples = read_manifest(manifest_path)
    embeddings = read_embeddings(embeddings_path)
    return Dataset(samples, embeddings)


def write_qualities(path, dataset: Dataset, qualities) -> None:
    """Write ``sample_id,quality`` rows in manifest order, 9 significant digits."""
    q = np.asarray(qualities, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "quality"])
        for rec in dataset.samples:
            w.writerow([rec.sample_id, f"{q[rec.row]:.9g}"])


def read_qualities(path, dataset: Dataset) -> np.ndarray:
    """Read a ``sample_id,quality`` CSV into a row-indexed array."""
    out = np.full(dataset.n, np.nan)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read qualities {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "quality"]:
            raise LoadError(f"{path}: header must start with sample_id,quality")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[dataset.row_of(row[0])] = float(row[1])
            except (IndexError, ValueError):
                raise LoadError(f"{path}:{lineno}: malformed quality row {row}") from None
    missing = np.flatnonzero(np.isnan(out))
    if missing.size:
        raise LoadError(
            f"{path}: no quality for {missing.size} samples, e.g. {dataset.sample_at_row(int(missing[0])).sample_id!r}")
    return out
