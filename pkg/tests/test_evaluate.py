import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_dataset
from fiqaopt.evaluate import (DEFAULT_GRID, ErcCurve, VerificationProtocol, build_protocol,
                              erc_curve, fmr_threshold, fnmr_at_reject, pauc, protocol_scores,
                              read_protocol, write_curve_json, write_protocol)
from fiqaopt.datamodel import LoadError
from fiqaopt.synth import SynthSpec, generate


def brute_threshold(scores, target):
    candidates = sorted(set(scores)) + [math.nextafter(max(scores), math.inf)]
    for t in candidates:
        if sum(s >= t for s in scores) <= target * len(scores):
            return t


def brute_erc(pair_q, genuine, threshold, grid):
    m = len(genuine)
    order = sorted(range(m), key=lambda i: (pair_q[i], i))
    out = []
    for r in grid:
        drop = math.floor(Fraction(str(r)) * m)
        kept = order[drop:]
        out.append(sum(genuine[i] < threshold for i in kept) / len(kept))
    return out


def test_threshold_examples():
    assert fmr_threshold([0.1, 0.2, 0.3, 0.4], 0.25) == 0.4
    assert fmr_threshold([0.1, 0.2, 0.3, 0.4], 0.5) == 0.3
    t = fmr_threshold([0.7] * 5, 0.9)
    assert t == math.nextafter(0.7, 1)
    assert np.mean(np.array([0.7] * 5) >= t) == 0


def test_threshold_errors():
    with pytest.raises(ValueError):
        fmr_threshold([], 0.1)
    with pytest.raises(ValueError):
        fmr_threshold([0.1], 1.0)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=60), st.floats(0.001, 0.999))
def test_threshold_matches_enumeration(scores, target):
    t = fmr_threshold(scores, target)
    assert t == brute_threshold(scores, target)
    assert np.mean(np.asarray(scores) >= t) <= target


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=60),
       st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_threshold_monotone(scores, a, b):
    lo, hi = sorted((a, b))
    assert fmr_threshold(scores, hi) <= fmr_threshold(scores, lo)


def test_fnmr_examples():
    q = [0.1, 0.2, 0.3, 0.4]
    g = [0.0, 1.0, 1.0, 1.0]
    assert fnmr_at_reject(q, g, 0.5, 0.0) == 0.25
    assert fnmr_at_reject(q, g, 0.5, 0.25) == 0.0
    assert fnmr_at_reject([0.4, 0.1, 0.2, 0.3], g, 0.5, 0.25) == pytest.approx(1 / 3)


def test_fnmr_tie_break_by_index():
    # all qualities equal: the first pair (index order) is dropped
    assert fnmr_at_reject([0.5] * 4, [0.0, 1.0, 1.0, 0.0], 0.5, 0.25) == pytest.approx(1 / 3)
    assert fnmr_at_reject([0.5] * 4, [1.0, 0.0, 0.0, 1.0], 0.5, 0.25) == pytest.approx(2 / 3)


def test_fnmr_errors():
    with pytest.raises(ValueError):
        fnmr_at_reject([], [], 0.5, 0.0)
    with pytest.raises(ValueError):
        fnmr_at_reject([0.1], [0.1], 0.5, 1.0)


@pytest.fixture
def evalset():
    rng = np.random.default_rng(5)
    ids = np.repeat(np.arange(6), 4)
    ds = make_dataset(ids.tolist(), dim=3, seed=5)
    proto = build_protocol(ds, n_impostor=40, max_genuine=36, seed=1)
    return ds, proto, rng


def test_erc_matches_enumeration(evalset):
    ds, proto, rng = evalset
    assert len(proto.genuine_pairs) == 36
    g, imp = protocol_scores(ds, proto)
    grid = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.55, 0.8, 0.95]
    for trial in range(50):
        q = rng.uniform(size=ds.n) if trial % 5 else np.full(ds.n, 0.5)
        fmr = float(rng.uniform(0.01, 0.5))
        curve = erc_curve(ds, proto, q, fmr_target=fmr, grid=grid)
        t = brute_threshold(imp.tolist(), fmr)
        assert curve.threshold == t
        gp = proto.genuine_pairs
        pq = [min(q[a], q[b]) for a, b in gp]
        assert curve.fnmr.tolist() == brute_erc(pq, g.tolist(), t, grid)


def test_erc_zero_reject_independent_of_labels(evalset):
    ds, proto, rng = evalset
    first = {erc_curve(ds, proto, rng.uniform(size=ds.n), 0.1).fnmr[0] for _ in range(10)}
    assert len(first) == 1


def test_erc_constant_qualities_are_suffixes(evalset):
    ds, proto, _ = evalset
    g, imp = protocol_scores(ds, proto)
    curve = erc_curve(ds, proto, np.full(ds.n, 0.3), 0.1, grid=DEFAULT_GRID)
    m = len(g)
    err = g < curve.threshold
    for r, f in zip(curve.reject_fractions, curve.fnmr):
        drop = math.floor(Fraction(str(r)) * m)
        assert f == err[drop:].mean()


def test_erc_reporting_grid(evalset):
    ds, proto, rng = evalset
    curve = erc_curve(ds, proto, rng.uniform(size=ds.n), 0.1, grid=[0.1, 0.2, 0.4, 0.8])
    assert curve.reject_fractions.tolist() == [0.1, 0.2, 0.4, 0.8]
    assert len(curve.fnmr) == 4


def test_erc_perfect_labels_non_increasing(synth_small):
    ds, tq = synth_small
    proto = build_protocol(ds, n_impostor=20000, seed=0)
    curve = erc_curve(ds, proto, tq, fmr_target=0.05)
    # true qualities drive noise; allow small sampling wiggle at the tail
    assert curve.fnmr[-1] < curve.fnmr[0]
    assert np.all(np.diff(curve.fnmr) <= 0.05)


def test_erc_rejects_bad_grid(evalset):
    ds, proto, _ = evalset
    for grid in ([0.2, 0.1], [0.0, 1.0], []):
        with pytest.raises(ValueError):
            erc_curve(ds, proto, np.zeros(ds.n), 0.1, grid=grid)


def curve(rs, fs):
    return ErcCurve(np.asarray(rs, float), np.asarray(fs, float), 0.0, 0.001)


def test_pauc_constant():
    c = curve([0, 0.1, 0.2, 0.4, 0.8], [0.3] * 5)
    for x in (0.1, 0.2, 0.4, 0.8, 0.5):
        assert pauc(c, x) == pytest.approx(0.3)


def test_pauc_triangle():
    assert pauc(curve([0, 0.2, 0.4], [0.2, 0.1, 0.0]), 0.4) == pytest.approx(0.1, abs=1e-15)


def test_pauc_interpolates_and_validates():
    c = curve([0, 0.4], [0.2, 0.0])
    assert pauc(c, 0.2) == pytest.approx((0.2 + 0.1) / 2)
    with pytest.raises(ValueError):
        pauc(curve([0.1, 0.4], [0.2, 0.0]), 0.2)
    with pytest.raises(ValueError):
        pauc(c, 0.8)


def test_pauc_refinement():
    # desk-scale set: 9000 genuine pairs keep the step curve smooth enough
    ds, tq = generate(SynthSpec(seed=3))
    proto = build_protocol(ds, seed=3)
    scores = protocol_scores(ds, proto)
    coarse = erc_curve(ds, proto, tq, 0.05, grid=DEFAULT_GRID, scores=scores)
    fine = erc_curve(ds, proto, tq, 0.05, grid=np.round(np.arange(0, 801) / 1000, 10), scores=scores)
    for x in (0.1, 0.2, 0.4, 0.8):
        assert abs(pauc(coarse, x) - pauc(fine, x)) < 1e-3


def test_protocol_roundtrip_and_validation(tmp_path, evalset):
    ds, proto, _ = evalset
    path = tmp_path / "p.csv"
    write_protocol(path, proto, ds)
    back = read_protocol(path, ds)
    np.testing.assert_array_equal(back.genuine_pairs, proto.genuine_pairs)
    np.testing.assert_array_equal(back.impostor_pairs, proto.impostor_pairs)

    bad = VerificationProtocol(proto.impostor_pairs[:1], proto.impostor_pairs)
    with pytest.raises(LoadError):
        bad.validate(ds)
    path.write_text("sample_id_a,sample_id_b,label\ns0,nope,genuine\n")
    with pytest.raises(LoadError):
        read_protocol(path, ds)


def test_curve_json(tmp_path, evalset):
    ds, proto, rng = evalset
    c = erc_curve(ds, proto, rng.uniform(size=ds.n), 0.1)
    path = tmp_path / "c.json"
    write_curve_json(path, c)
    doc = json.loads(path.read_text())
    assert set(doc) == {"fmr_target", "threshold", "points", "pauc"}
    assert set(doc["pauc"]) == {"0.1", "0.2", "0.4", "0.8"}
    assert len(doc["points"]) == len(DEFAULT_GRID)
    assert doc["points"][0] == {"reject": 0.0, "fnmr": c.fnmr[0]}
