"""
Working with files
==================

Datasets live in two files: a CSV manifest (``sample_id,identity,
base_quality,row``) and a binary embedding matrix. This script writes a
synthetic dataset, reloads it through the memory-mapped reader, optimizes
the labels and writes them back, then dumps the pairs of one repeat for
auditing.
"""

import tempfile
from pathlib import Path

import numpy as np

from fiqaopt import OptimConfig, SynthSpec, generate, load_dataset, normalize_qualities, optimize
from fiqaopt.datamodel import write_qualities
from fiqaopt.optimizer import correction_factors
from fiqaopt.pairing import compute_pair_similarities, repeat_seed, sample_mated_pairs, write_pair_table
from fiqaopt.synth import write_synthetic

out = Path(tempfile.mkdtemp())
dataset, true_q = generate(SynthSpec(n_identities=50, images_per_identity=6, dim=32, seed=5))
paths = write_synthetic(out, dataset, true_q)
for name, path in paths.items():
    print(f"{name:13s} {path} ({path.stat().st_size} bytes)")

###############################################################################
# Embeddings are stored as float32, so the reloaded matrix matches to single
# precision.

loaded = load_dataset(paths["manifest"], paths["embeddings"])
print("max |embedding diff|:", np.abs(loaded.embeddings - dataset.embeddings).max())

base = normalize_qualities(loaded.base_qualities())
config = OptimConfig(iterations=10, seed=5)
write_qualities(out / "optimized.csv", loaded, optimize(loaded, base, config))
print((out / "optimized.csv").read_text().splitlines()[:4])

###############################################################################
# The pairs of repeat 0 are the ones the optimizer samples first. The dump
# carries enough to recompute any correction factor by hand.

pairs = sample_mated_pairs(loaded, config.k, repeat_seed(config.seed, 0))
pairs = compute_pair_similarities(pairs, loaded.embeddings)
write_pair_table(out / "pairs.csv", pairs, loaded)
print((out / "pairs.csv").read_text().splitlines()[:4])

row = 0
sl = pairs.owned(row)
gated = base[row] <= base[pairs.partner[sl]] - config.lam
print(f"sample {loaded.sample_at_row(row).sample_id}: {gated.sum()} of {config.k} pairs gated, "
      f"theta = {pairs.similarity01[sl][gated].sum() / config.k:.6f} "
      f"(vectorized {correction_factors(base, pairs, config.lam)[row]:.6f})")
