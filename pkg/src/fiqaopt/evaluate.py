"""Error-versus-reject evaluation of quality labels.

The decision threshold is fixed once from the impostor scores at zero
rejection. Genuine pairs are then discarded in order of increasing pair
quality (the quality of the worse image) and FNMR is measured on the rest.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .datamodel import Dataset, LoadError, pair_cosines, pair_quality, unit_rows

PAUC_CUTOFFS = (0.1, 0.2, 0.4, 0.8)
DEFAULT_FMR = 1e-3
DEFAULT_GRID = tuple(round(0.02 * i, 10) for i in range(41))


@dataclass
class VerificationProtocol:
    genuine_pairs: np.ndarray
    impostor_pairs: np.ndarray

    def __post_init__(self):
        self.genuine_pairs = np.asarray(self.genuine_pairs, dtype=np.int64).reshape(-1, 2)
        self.impostor_pairs = np.asarray(self.impostor_pairs, dtype=np.int64).reshape(-1, 2)

    def validate(self, dataset: Dataset) -> None:
        codes = dataset.identity_codes()
        for name, pairs, same in (("genuine", self.genuine_pairs, True),
                                  ("impostor", self.impostor_pairs, False)):
            if pairs.size and (pairs.min() < 0 or pairs.max() >= dataset.n):
                raise LoadError(f"{name} pair references a row outside the dataset")
            bad = np.flatnonzero((codes[pairs[:, 0]] == codes[pairs[:, 1]]) != same)
            if bad.size:
                a, b = pairs[bad[0]]
                raise LoadError(
                    f"{name} pair ({dataset.sample_at_row(int(a)).sample_id}, "
                    f"{dataset.sample_at_row(int(b)).sample_id}) has wrong identity relation")


@dataclass
class ErcCurve:
    reject_fractions: np.ndarray
    fnmr: np.ndarray
    threshold: float
    fmr_target: float

    def to_dict(self, cutoffs=PAUC_CUTOFFS) -> dict:
        return {
            "fmr_target": self.fmr_target,
            "threshold": self.threshold,
            "points": [{"reject": float(r), "fnmr": float(f)}
                       for r, f in zip(self.reject_fractions, self.fnmr)],
            "pauc": {str(c): pauc(self, c) for c in cutoffs},
        }


def fmr_threshold(impostor_scores, fmr_target: float) -> float:
    """Smallest observed impostor score usable as threshold at ``fmr_target``.

    Candidates are the impostor scores themselves; when even the largest one
    would admit too many impostors, the next float above it is returned.
    Scores ``>= threshold`` count as matches.
    """
    s = np.asarray(impostor_scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("impostor score set is empty")
    if not 0.0 < fmr_target < 1.0:
        raise ValueError(f"fmr_target must be in (0, 1), got {fmr_target}")
    values, counts = np.unique(s, return_counts=True)
    at_or_above = np.cumsum(counts[::-1])[::-1]
    ok = np.flatnonzero(at_or_above <= fmr_target * s.size)
    if ok.size:
        return float(values[ok[0]])
    return float(np.nextafter(values[-1], np.inf))


def _reject_count(reject_fraction: float, m: int) -> int:
    # guard against r*m landing just below an integer, e.g. 0.29*100
    return int(math.floor(reject_fraction * m + 1e-9))


def fnmr_at_reject(pair_qualities, genuine_scores, threshold: float, reject_fraction: float) -> float:
    """FNMR after dropping the lowest-quality fraction of genuine pairs.

    Ties in pair quality are dropped in ascending pair index.
    """
    q = np.asarray(pair_qualities, dtype=np.float64)
    g = np.asarray(genuine_scores, dtype=np.float64)
    if g.size == 0:
        raise ValueError("genuine pair set is empty")
    if q.shape != g.shape:
        raise ValueError("pair_qualities and genuine_scores must align")
    if not 0.0 <= reject_fraction < 1.0:
        raise ValueError(f"reject_fraction must be in [0, 1), got {reject_fraction}")
    order = np.argsort(q, kind="stable")
    kept = order[_reject_count(reject_fraction, g.size):]
    if kept.size == 0:
        return 0.0
    return float(np.count_nonzero(g[kept] < threshold) / kept.size)


def _fnmr_curve(pair_q, genuine, threshold, grid) -> np.ndarray:
    m = genuine.size
    order = np.argsort(pair_q, kind="stable")
    errors = (genuine[order] < threshold).astype(np.int64)
    suffix = np.concatenate([np.cumsum(errors[::-1])[::-1], [0]])
    out = np.empty(len(grid))
    for i, r in enumerate(grid):
        cut = _reject_count(r, m)
        out[i] = suffix[cut] / (m - cut) if cut < m else 0.0
    return out


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("reject grid must be a non-empty 1-D sequence")
    if grid.min() < 0.0 or grid.max() >= 1.0:
        raise ValueError("reject fractions must lie in [0, 1)")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("reject grid must be strictly ascending")
    return grid


def protocol_scores(dataset: Dataset, protocol: VerificationProtocol, unit=None):
    """Raw cosine scores of the genuine and impostor pairs."""
    if unit is None:
        unit = unit_rows(dataset.embeddings)
    g = protocol.genuine_pairs
    i = protocol.impostor_pairs
    return pair_cosines(unit, g[:, 0], g[:, 1]), pair_cosines(unit, i[:, 0], i[:, 1])


def erc_curve(dataset: Dataset, protocol: VerificationProtocol, qualities,
              fmr_target: float = DEFAULT_FMR, grid=DEFAULT_GRID, scores=None) -> ErcCurve:
    """ERC of ``qualities`` (row-indexed) on ``protocol``.

    ``scores`` may pass precomputed ``(genuine, impostor)`` cosine arrays when
    several labelings are evaluated on the same protocol.
    """
    grid = check_grid(grid)
    q = np.asarray(qualities, dtype=np.float64)
    if q.shape != (dataset.n,):
        raise ValueError(f"expected {dataset.n} qualities, got shape {q.shape}")
    if protocol.genuine_pairs.shape[0] == 0:
        raise ValueError("protocol has no genuine pairs")
    genuine, impostor = scores if scores is not None else protocol_scores(dataset, protocol)
    threshold = fmr_threshold(impostor, fmr_target)
    gp = protocol.genuine_pairs
    pq = pair_quality(q[gp[:, 0]], q[gp[:, 1]])
    return ErcCurve(grid, _fnmr_curve(pq, genuine, threshold, grid), threshold, fmr_target)


def pauc(curve: ErcCurve, max_reject: float) -> float:
    """Trapezoidal area under FNMR on [0, max_reject], divided by max_reject.

    The curve is linearly interpolated at ``max_reject`` when that is not one
    of its grid points.
    """
    if not 0.0 < max_reject <= 1.0:
        raise ValueError(f"max_reject must be in (0, 1], got {max_reject}")
    r = np.asarray(curve.reject_fractions, dtype=np.float64)
    f = np.asarray(curve.fnmr, dtype=np.float64)
    if r.size == 0 or r[0] != 0.0 or r[-1] < max_reject - 1e-12:
        raise ValueError(f"curve does not span [0, {max_reject}]")
    inside = r < max_reject - 1e-12
    xs = np.append(r[inside], max_reject)
    ys = np.append(f[inside], np.interp(max_reject, r, f))
    return float(trapezoid(ys, xs) / max_reject)


def write_curve_json(path, curve: ErcCurve, cutoffs=PAUC_CUTOFFS) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(curve.to_dict(cutoffs), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Protocol files
# ---------------------------------------------------------------------------

PROTOCOL_HEADER = ["sample_id_a", "sample_id_b", "label"]


def read_protocol(path, dataset: Dataset) -> VerificationProtocol:
    genuine, impostor = [], []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read protocol {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        if next(reader, None) != PROTOCOL_HEADER:
            raise LoadError(f"{path}: header must be {','.join(PROTOCOL_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise LoadError(f"{path}:{lineno}: expected 3 fields")
            a, b, label = row
            pair = (dataset.row_of(a), dataset.row_of(b))
            if label == "genuine":
                genuine.append(pair)
            elif label == "impostor":
                impostor.append(pair)
            else:
                raise LoadError(f"{path}:{lineno}: unknown label {label!r}")
    proto = VerificationProtocol(genuine, impostor)
    proto.validate(dataset)
    return proto


def write_protocol(path, protocol: VerificationProtocol, dataset: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROTOCOL_HEADER)
        for label, pairs in (("genuine", protocol.genuine_pairs), ("impostor", protocol.impostor_pairs)):
            for a, b in pairs:
                w.writerow([dataset.sample_at_row(int(a)).sample_id,
                            dataset.sample_at_row(int(b)).sample_id, label])


def build_protocol(dataset: Dataset, n_impostor: int = 100_000, max_genuine: int | None = None,
                   seed: int = 0) -> VerificationProtocol:
    """All unordered mated pairs (optionally subsampled) plus random impostor pairs."""
    rng = np.random.Generator(np.random.PCG64(seed))
    genuine = []
    for rows in dataset.identity_index.values():
        r = np.asarray(rows)
        if r.size >= 2:
            a, b = np.triu_indices(r.size, k=1)
            genuine.append(np.stack([r[a], r[b]], axis=1))
    genuine = np.concatenate(genuine) if genuine else np.empty((0, 2), dtype=np.int64)
    if max_genuine is not None and genuine.shape[0] > max_genuine:
        keep = np.sort(rng.choice(genuine.shape[0], size=max_genuine, replace=False))
        genuine = genuine[keep]

    codes = dataset.identity_codes()
    if np.unique(codes).size < 2:
        raise ValueError("impostor pairs need at least two identities")
    impostor = np.empty((0, 2), dtype=np.int64)
    while impostor.shape[0] < n_impostor:
        need = n_impostor - impostor.shape[0]
        cand = rng.integers(0, dataset.n, size=(2 * need + 16, 2))
        cand = cand[codes[cand[:, 0]] != codes[cand[:, 1]]][:need]
        impostor = np.concatenate([impostor, cand])
    return VerificationProtocol(genuine, impostor)
