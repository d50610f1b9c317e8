import csv
import itertools

import numpy as np

from conftest import make_dataset
from fiqaopt.datamodel import cosine_similarity, normalize_similarity
from fiqaopt.pairing import (compute_pair_similarities, repeat_seed, sample_mated_pairs,
                             write_pair_table)


def test_two_image_identity_only_partner():
    ds = make_dataset(["x", "x"])
    pairs = sample_mated_pairs(ds, 3, seed=1)
    sl = pairs.owned(0)
    assert sl.stop - sl.start == 3
    assert pairs.partner[sl].tolist() == [1, 1, 1]
    assert pairs.partner[pairs.owned(1)].tolist() == [0, 0, 0]


def test_singleton_skipped():
    ds = make_dataset(["x", "y", "y"])
    pairs = sample_mated_pairs(ds, 10, seed=1)
    assert pairs.skipped.tolist() == [0]
    assert pairs.owned(0).stop == pairs.owned(0).start
    assert pairs.m == 20


def test_pair_count_by_enumeration():
    ds = make_dataset(["a", "a", "a", "b", "b", "b"])
    pairs = sample_mated_pairs(ds, 2, seed=5)
    # every possible (anchor, partner) must be a mated, non-self pair
    allowed = {(i, j) for i, j in itertools.permutations(range(6), 2) if (i < 3) == (j < 3)}
    got = list(zip(pairs.anchor.tolist(), pairs.partner.tolist()))
    assert len(got) == 12
    assert set(got) <= allowed
    for r in range(6):
        assert pairs.offsets[r + 1] - pairs.offsets[r] == 2


def test_table_invariants(toy):
    codes = toy.identity_codes()
    for seed in range(20):
        p = sample_mated_pairs(toy, 4, seed)
        assert np.all(codes[p.anchor] == codes[p.partner])
        assert np.all(p.anchor != p.partner)
        assert np.all(p.anchor[p.offsets[:-1][p.eligible][:, None] + np.arange(4)].T == p.eligible)


def test_partners_uniform_over_peers():
    ds = make_dataset(["a"] * 4)
    p = sample_mated_pairs(ds, 30000, seed=9)
    counts = np.bincount(p.partner[p.owned(1)], minlength=4)
    assert counts[1] == 0
    np.testing.assert_allclose(counts[[0, 2, 3]] / 30000, 1 / 3, atol=0.015)


def test_deterministic(synth_small):
    ds, _ = synth_small
    a = compute_pair_similarities(sample_mated_pairs(ds, 5, 123), ds.embeddings, threads=1)
    b = compute_pair_similarities(sample_mated_pairs(ds, 5, 123), ds.embeddings, threads=4)
    assert a.tobytes() == b.tobytes()


def test_distinct_seeds_distinct_tables(synth_small):
    ds, _ = synth_small
    tables = {sample_mated_pairs(ds, 10, repeat_seed(7, t)).partner.tobytes() for t in range(10)}
    assert len(tables) >= 9


def test_repeat_seed_stable():
    assert repeat_seed(0, 0) != repeat_seed(0, 1)
    assert repeat_seed(7, 3) == repeat_seed(7, 3)
    assert 0 <= repeat_seed(2**64 - 1, 5) < 2**64


def test_similarities_identical_and_orthogonal():
    emb = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 2.0]])
    ds = make_dataset(["a", "a", "b", "b"], embeddings=emb)
    p = compute_pair_similarities(sample_mated_pairs(ds, 1, 0), ds.embeddings)
    assert p.similarity01.tolist() == [1.0, 1.0, 0.5, 0.5]


def test_similarities_match_scalar_loop(toy):
    p = compute_pair_similarities(sample_mated_pairs(toy, 1, 4), toy.embeddings)
    assert p.m >= 5
    expected = [normalize_similarity(cosine_similarity(toy.embeddings[a], toy.embeddings[b]))
                for a, b in zip(p.anchor, p.partner)]
    np.testing.assert_allclose(p.similarity01, expected, atol=1e-9)
    assert p.has_similarities()


def test_similarities_idempotent_and_order_independent(synth_small):
    ds, _ = synth_small
    p = compute_pair_similarities(sample_mated_pairs(ds, 3, 2), ds.embeddings)
    again = compute_pair_similarities(p, ds.embeddings)
    np.testing.assert_array_equal(p.similarity01, again.similarity01)

    perm = np.random.default_rng(0).permutation(p.m)
    import dataclasses
    shuffled = dataclasses.replace(p, anchor=p.anchor[perm], partner=p.partner[perm])
    np.testing.assert_allclose(compute_pair_similarities(shuffled, ds.embeddings).similarity01,
                               p.similarity01[perm], rtol=0, atol=1e-15)


def test_pair_dump(tmp_path):
    ds = make_dataset(["a", "a", "b"])
    p = compute_pair_similarities(sample_mated_pairs(ds, 1, 0), ds.embeddings)
    path = tmp_path / "pairs.csv"
    write_pair_table(path, p, ds)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["anchor_id", "partner_id", "similarity01"]
    assert [r[:2] for r in rows[1:]] == [["s0", "s1"], ["s1", "s0"]]
    assert float(rows[1][2]) == p.similarity01[0]
