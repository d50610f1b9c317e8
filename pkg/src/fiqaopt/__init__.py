"""Refinement of pseudo ground-truth face image quality labels using
mated-pair similarities, with error-versus-reject evaluation."""

from .datamodel import (Dataset, LoadError, OptimConfig, SampleRecord, ThetaMode,
                        cosine_similarity, load_dataset, normalize_qualities,
                        normalize_similarity, pair_quality)
from .evaluate import (ErcCurve, VerificationProtocol, build_protocol, erc_curve,
                       fmr_threshold, fnmr_at_reject, pauc)
from .optimizer import (NO_EVIDENCE, RepeatResult, correction_factor, correction_factors,
                        optimize, optimize_repeat, run_iteration, update_quality)
from .pairing import PairTable, compute_pair_similarities, repeat_seed, sample_mated_pairs
from .synth import SynthSpec, generate, spearman

__version__ = "0.1.0"
