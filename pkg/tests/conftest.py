import sys
from pathlib import Path

import numpy as np
import pytest

from fiqaopt.datamodel import Dataset, SampleRecord
from fiqaopt.synth import SynthSpec, generate

sys.path.insert(0, str(Path(__file__).parent))


def make_dataset(identities, embeddings=None, qualities=None, dim=4, seed=0):
    """Dataset whose row r has identity ``identities[r]``."""
    n = len(identities)
    rng = np.random.default_rng(seed)
    if embeddings is None:
        embeddings = rng.standard_normal((n, dim))
    if qualities is None:
        qualities = rng.uniform(size=n)
    samples = [SampleRecord(f"s{r}", str(identities[r]), float(qualities[r]), r) for r in range(n)]
    return Dataset(samples, np.asarray(embeddings, dtype=np.float64))


def random_instance(rng, n_max=10):
    """Small random dataset with at least one multi-image identity."""
    n = int(rng.integers(2, n_max + 1))
    n_ids = int(rng.integers(1, max(2, n // 2) + 1))
    ids = rng.integers(0, n_ids, size=n)
    ids[1] = ids[0]
    return make_dataset(ids.tolist(), dim=int(rng.integers(2, 6)), seed=int(rng.integers(1 << 31)))


@pytest.fixture
def toy():
    # two identities of three images, one singleton
    return make_dataset(["a", "a", "a", "b", "b", "b", "c"], seed=3)


@pytest.fixture(scope="session")
def synth_small():
    return generate(SynthSpec(n_identities=30, images_per_identity=6, dim=16, seed=11))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
