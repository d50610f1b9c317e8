"""Sampling of mated pairs and their normalized similarities."""
from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .datamodel import Dataset, normalize_similarity, pair_cosines, unit_rows

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def repeat_seed(master_seed: int, repeat_index: int) -> int:
    """Seed for one repeat, derived from the master seed only."""
    return splitmix64((master_seed + repeat_index * _GOLDEN) & _MASK64)


@dataclasses.dataclass(frozen=True, eq=False)
class PairTable:
    """Directed mated pairs grouped by anchor row.

    Pairs of anchor row ``r`` occupy ``offsets[r]:offsets[r + 1]``; eligible
    anchors own exactly ``k`` pairs and singletons own none (listed in
    ``skipped``). ``similarity01`` is NaN until filled.
    """

    anchor: np.ndarray
    partner: np.ndarray
    similarity01: np.ndarray
    offsets: np.ndarray
    skipped: np.ndarray
    k: int

    @property
    def m(self) -> int:
        return self.anchor.shape[0]

    @property
    def n(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def eligible(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self.offsets) > 0)

    def owned(self, row: int) -> slice:
        return slice(int(self.offsets[row]), int(self.offsets[row + 1]))

    def has_similarities(self) -> bool:
        return not np.isnan(self.similarity01).any()

    def tobytes(self) -> bytes:
        parts = [self.anchor, self.partner, self.similarity01, self.offsets, self.skipped]
        return b"".join(np.ascontiguousarray(p).tobytes() for p in parts)


def sample_mated_pairs(dataset: Dataset, k: int, seed: int) -> PairTable:
    """Draw ``k`` same-identity partners per sample, with replacement.

    Partners are uniform over the anchor's peers excluding itself. Samples
    whose identity has a single image own no pairs.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = dataset.n
    members = np.empty(n, dtype=np.int64)
    group_start = np.empty(n, dtype=np.int64)
    group_size = np.empty(n, dtype=np.int64)
    position = np.empty(n, dtype=np.int64)
    cursor = 0
    for rows in dataset.identity_index.values():
        rows = np.asarray(rows, dtype=np.int64)
        c = rows.size
        members[cursor:cursor + c] = rows
        group_start[rows] = cursor
        group_size[rows] = c
        position[rows] = np.arange(c)
        cursor += c

    eligible = np.flatnonzero(group_size >= 2)
    skipped = np.flatnonzero(group_size < 2)
    rng = np.random.Generator(np.random.PCG64(seed))
    peers = group_size[eligible] - 1
    u = rng.integers(0, peers[:, None], size=(eligible.size, k), dtype=np.int64)
    u += u >= position[eligible][:, None]
    partner = members[group_start[eligible][:, None] + u].reshape(-1)
    anchor = np.repeat(eligible, k)

    counts = np.zeros(n, dtype=np.int64)
    counts[eligible] = k
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return PairTable(
        anchor=anchor,
        partner=partner,
        similarity01=np.full(anchor.size, np.nan),
        offsets=offsets,
        skipped=skipped,
        k=k,
    )


def compute_pair_similarities(pairs: PairTable, embeddings, threads: int = 1,
                              unit: np.ndarray | None = None) -> PairTable:
    """Fill ``similarity01`` with (cos + 1) / 2 of every pair.

    ``unit`` may carry pre-normalized float64 embeddings to avoid recomputing
    them once per repeat.
    """
    if unit is None:
        unit = unit_rows(embeddings)
    m = pairs.m
    if m and (pairs.anchor.max() >= unit.shape[0] or pairs.partner.max() >= unit.shape[0]):
        raise IndexError("pair table references rows outside the embedding matrix")
    sims = np.empty(m, dtype=np.float64)

    def fill(lo, hi):
        sims[lo:hi] = normalize_similarity(pair_cosines(unit, pairs.anchor[lo:hi], pairs.partner[lo:hi]))

    bounds = _chunks(m, threads)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: fill(*b), bounds))
    else:
        for lo, hi in bounds:
            fill(lo, hi)
    return dataclasses.replace(pairs, similarity01=sims)


def _chunks(size: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, size)) if size else 1
    edges = np.linspace(0, size, parts + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def write_pair_table(path, pairs: PairTable, dataset: Dataset) -> None:
    """Audit dump: ``anchor_id,partner_id,similarity01`` in table order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["anchor_id", "partner_id", "similarity01"])
        for a, b, s in zip(pairs.anchor, pairs.partner, pairs.similarity01):
            w.writerow([dataset.sample_at_row(int(a)).sample_id,
                        dataset.sample_at_row(int(b)).sample_id,
                        f"{s:.17g}"])
