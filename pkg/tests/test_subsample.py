import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fodkit.errors import FodkitError
from fodkit.subsample import axial_distance, kennard_stone, subsample_acquisition
from fodkit.types import GradientTable
from oracles import kennard_stone_bruteforce


def random_dirs(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def fibonacci_dirs(n):
    i = np.arange(n) + 0.5
    z = 1 - i / n  # upper hemisphere only, so no antipodal duplicates
    r = np.sqrt(1 - z * z)
    t = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([r * np.cos(t), r * np.sin(t), z], axis=1)


def hcp_table(seed=0):
    rng = np.random.default_rng(seed)
    dirs, bvals = [], []
    for _ in range(18):
        dirs.append([0, 0, 0])
        bvals.append(5)
    for b in (1000, 2000, 3000):
        dirs.extend(random_dirs(rng, 90))
        bvals.extend([b + rng.integers(-20, 20)] * 90)
    return GradientTable(np.array(dirs, dtype=float), np.array(bvals, dtype=float))


def test_axes_pick_one_per_axis():
    d = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    sel = kennard_stone(d, 3)
    assert sorted(np.argmax(np.abs(d[sel]), axis=1)) == [0, 1, 2]


def test_k_equals_n(rng):
    d = random_dirs(rng, 7)
    sel = kennard_stone(d, 7)
    assert sorted(sel) == list(range(7))
    assert sel == kennard_stone(d, 7)


@pytest.mark.parametrize("k", [0, 1, 8])
def test_bad_k(rng, k):
    with pytest.raises(FodkitError):
        kennard_stone(random_dirs(rng, 7), k)


def test_matches_bruteforce(rng):
    for _ in range(50):
        d = random_dirs(rng, 10)
        for k in range(2, 6):
            assert kennard_stone(d, k) == kennard_stone_bruteforce(d, k)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8))
def test_antipodal_flip_invariance(seed, k):
    rng = np.random.default_rng(seed)
    d = random_dirs(rng, 12)
    flip = np.where(rng.random(12) < 0.5, -1.0, 1.0)[:, None]
    assert kennard_stone(d, k) == kennard_stone(d * flip, k)


def test_permutation_invariance_as_set(rng):
    d = random_dirs(rng, 20)
    ref = set(kennard_stone(d, 6))
    for _ in range(10):
        perm = rng.permutation(20)
        sel = kennard_stone(d[perm], 6)
        assert {int(perm[i]) for i in sel} == ref


def test_better_spread_than_random(rng):
    d = fibonacci_dirs(60)
    D = axial_distance(d)
    sel = kennard_stone(d, 8)
    ks_min = min(D[i, j] for i, j in itertools.combinations(sel, 2))
    rand = []
    for _ in range(100):
        sub = rng.choice(60, 8, replace=False)
        rand.append(min(D[i, j] for i, j in itertools.combinations(sub, 2)))
    assert ks_min >= np.mean(rand)


def test_hcp_style_subsample():
    table = hcp_table()
    out = subsample_acquisition(table, 1000, 32)
    assert len(out) == 50
    assert len(out.b0_indices()) == 18
    assert set(np.round(out.bvalues[out.bvalues > 50], -2)) == {1000}


def test_ms_style_subsample():
    rng = np.random.default_rng(3)
    dirs = np.vstack([np.zeros((4, 3)), random_dirs(rng, 64)])
    bvals = np.r_[np.zeros(4), np.full(64, 1000.0)]
    out = subsample_acquisition(GradientTable(dirs, bvals), 1000, 30)
    assert int(np.sum(out.bvalues > 50)) == 30


def test_subsample_preserves_order():
    table = hcp_table()
    out = subsample_acquisition(table, 2000, 10)
    # rows keep their original relative order
    idx = [int(np.flatnonzero((table.bvalues == b) & np.all(table.directions == d, axis=1))[0])
           for d, b in zip(out.directions, out.bvalues) if b > 50]
    assert idx == sorted(idx)


def test_subsample_errors():
    table = hcp_table()
    with pytest.raises(FodkitError, match="no shell"):
        subsample_acquisition(table, 5000, 10)
    with pytest.raises(FodkitError):
        subsample_acquisition(table, 1000, 91)
    with pytest.raises(FodkitError):
        subsample_acquisition(table, 1000, 0)
