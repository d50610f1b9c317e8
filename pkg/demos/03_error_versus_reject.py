"""
Error-versus-reject curves
==========================

Labels are judged by how much the false non-match rate drops when the
lowest-quality genuine comparisons are discarded. The decision threshold is
fixed from the impostor scores at a target false match rate, then genuine
pairs are rejected by pair quality (the quality of the worse image).
"""

import numpy as np

from fiqaopt import OptimConfig, SynthSpec, build_protocol, erc_curve, generate, normalize_qualities, optimize, pauc
from fiqaopt.evaluate import PAUC_CUTOFFS, protocol_scores

dataset, true_q = generate(SynthSpec(seed=1))
protocol = build_protocol(dataset, n_impostor=100_000, seed=1)
scores = protocol_scores(dataset, protocol)
print(f"{len(protocol.genuine_pairs)} genuine and {len(protocol.impostor_pairs)} impostor pairs")

base = normalize_qualities(dataset.base_qualities())
labelings = {
    "true": true_q,
    "base": base,
    "optimized L=10": optimize(dataset, base, OptimConfig(iterations=10, seed=1)),
    "constant": np.full(dataset.n, 0.5),
}

###############################################################################
# pAUC at the usual reporting cutoffs (lower is better). ``true`` is the
# best achievable ordering here; ``constant`` rejects in index order.

for fmr in (1e-3, 1e-2):
    print(f"\nFMR target {fmr:g}")
    print(f"{'labels':16s}" + "".join(f"{int(c * 100):>8d}%" for c in PAUC_CUTOFFS) + "       mu")
    for name, q in labelings.items():
        curve = erc_curve(dataset, protocol, q, fmr_target=fmr, scores=scores)
        values = [pauc(curve, c) for c in PAUC_CUTOFFS]
        print(f"{name:16s}" + "".join(f"{v:9.5f}" for v in values) + f"{np.mean(values):9.5f}")

###############################################################################
# The curve itself: FNMR at a few reject fractions for the true labels.

curve = erc_curve(dataset, protocol, true_q, fmr_target=1e-2, scores=scores)
for r, f in list(zip(curve.reject_fractions, curve.fnmr))[::5]:
    print(f"reject {r:4.2f}  FNMR {f:.4f}")
