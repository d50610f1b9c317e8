"""Iterative refinement of quality labels from mated-pair similarities.

Each sample is pulled towards a correction factor built from the similarities
of the pairs in which it is the worse image by at least ``lam``. Updates are
synchronous: every correction factor of iteration ``j`` is computed from the
same snapshot of qualities.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datamodel import Dataset, OptimConfig, ThetaMode, unit_rows
from .pairing import PairTable, compute_pair_similarities, repeat_seed, sample_mated_pairs

log = logging.getLogger(__name__)

#: Marker for "no evidence": the sample keeps its current quality.
NO_EVIDENCE = None


@dataclass
class RepeatResult:
    optimized: np.ndarray
    iterations_run: int
    per_iteration_delta: list[float] = field(default_factory=list)


def correction_factor(sample_i, q, pairs: PairTable, lam, theta_mode=ThetaMode.FORMULA_LITERAL):
    """Correction factor of a single sample, or ``NO_EVIDENCE``.

    Scalar version of :func:`correction_factors`, kept for inspection and
    audit of individual samples.
    """
    theta_mode = ThetaMode(theta_mode)
    sl = pairs.owned(sample_i)
    if sl.stop == sl.start:
        return NO_EVIDENCE
    total = 0.0
    used = 0
    for p in range(sl.start, sl.stop):
        if q[sample_i] <= q[pairs.partner[p]] - lam:
            total += pairs.similarity01[p]
            used += 1
    if used == 0 and theta_mode is not ThetaMode.FORMULA_LITERAL:
        return NO_EVIDENCE
    if theta_mode is ThetaMode.COUNT_NORMALIZED:
        return total / used
    return total / pairs.k


def correction_factors(q, pairs: PairTable, lam, theta_mode=ThetaMode.FORMULA_LITERAL,
                       anchors: slice | None = None) -> np.ndarray:
    """Vectorized correction factors for every row, NaN where there is no evidence.

    ``anchors`` restricts the computation to a slice of the eligible anchors
    (in ascending row order); the result then has one entry per anchor in the
    slice instead of one per row.
    """
    theta_mode = ThetaMode(theta_mode)
    q = np.asarray(q, dtype=np.float64)
    k = pairs.k
    eligible = pairs.eligible
    if anchors is None:
        lo, hi = 0, eligible.size
    else:
        lo, hi, _ = anchors.indices(eligible.size)
    rows = eligible[lo:hi]
    base = int(pairs.offsets[rows[0]]) if rows.size else 0
    psl = slice(base, base + rows.size * k)

    partner_q = q[pairs.partner[psl]].reshape(-1, k)
    gate = q[rows][:, None] <= partner_q - lam
    vals = np.where(gate, pairs.similarity01[psl].reshape(-1, k), 0.0)
    # fixed left-to-right reduction per anchor keeps results independent of chunking
    total = vals[:, 0].copy()
    used = gate[:, 0].astype(np.int64)
    for c in range(1, k):
        total += vals[:, c]
        used += gate[:, c]

    if theta_mode is ThetaMode.COUNT_NORMALIZED:
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = np.where(used > 0, total / np.maximum(used, 1), np.nan)
    elif theta_mode is ThetaMode.SKIP_EMPTY:
        theta = np.where(used > 0, total / k, np.nan)
    else:
        theta = total / k

    if anchors is not None:
        return theta
    out = np.full(q.shape[0], np.nan)
    out[rows] = theta
    return out


def update_quality(q_i, theta, epsilon):
    """One step from ``q_i`` towards ``theta``; NaN/None theta leaves q_i as is.

    Works elementwise on arrays. The result is clipped into the closed
    interval between ``q_i`` and ``theta`` to absorb rounding.
    """
    if theta is NO_EVIDENCE:
        return q_i
    q_i = np.asarray(q_i, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    missing = np.isnan(theta)
    t = np.where(missing, q_i, theta)
    stepped = (1.0 - epsilon) * q_i + epsilon * t
    out = np.clip(stepped, np.minimum(q_i, t), np.maximum(q_i, t))
    return out if out.ndim else float(out)


def run_iteration(q, pairs: PairTable, config: OptimConfig, threads: int = 1) -> np.ndarray:
    """One synchronous pass over all samples; returns a fresh quality vector."""
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    eligible = pairs.eligible
    if eligible.size == 0:
        return out

    def work(lo, hi):
        theta = correction_factors(q, pairs, config.lam, config.theta_mode, anchors=slice(lo, hi))
        rows = eligible[lo:hi]
        out[rows] = update_quality(q[rows], theta, config.epsilon)

    n_chunks = max(1, threads)
    edges = np.linspace(0, eligible.size, n_chunks + 1).astype(np.int64)
    bounds = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: work(*b), bounds))
    else:
        for b in bounds:
            work(*b)
    return out


def optimize_repeat(dataset: Dataset, base_q, config: OptimConfig, repeat_index: int,
                    threads: int = 1, unit: np.ndarray | None = None) -> RepeatResult:
    """Sample pairs once for this repeat, then run ``config.iterations`` passes."""
    base_q = np.asarray(base_q, dtype=np.float64)
    q = base_q.copy()
    if config.iterations == 0:
        return RepeatResult(q, 0, [])
    seed = repeat_seed(config.seed, repeat_index)
    pairs = sample_mated_pairs(dataset, config.k, seed)
    pairs = compute_pair_similarities(pairs, dataset.embeddings, threads=threads, unit=unit)
    deltas = []
    for _ in range(config.iterations):
        nxt = run_iteration(q, pairs, config, threads=threads)
        deltas.append(float(np.mean(np.abs(nxt - q))))
        q = nxt
    log.debug("repeat %d: %d pairs, final mean step %.3g", repeat_index, pairs.m, deltas[-1])
    return RepeatResult(q, config.iterations, deltas)


def optimize(dataset: Dataset, base_q, config: OptimConfig, threads: int = 1) -> np.ndarray:
    """Average of ``config.repeats`` independent repeats, accumulated in repeat order."""
    if config.iterations == 0:
        return np.array(base_q, dtype=np.float64)
    unit = unit_rows(dataset.embeddings)
    acc = np.zeros(dataset.n)
    for t in range(config.repeats):
        acc += optimize_repeat(dataset, base_q, config, t, threads=threads, unit=unit).optimized
    return np.clip(acc / config.repeats, 0.0, 1.0)
