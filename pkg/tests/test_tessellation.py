import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uqd.core import ConfigError, ContractError, RngStream
from uqd.tessellation import Centroids, generate_cvt, lloyd, nearest_centroid

from .oracles import linear_scan_nearest


def test_nearer_point_and_tie_break():
    c = Centroids(np.array([[0.25], [0.75]]))
    assert nearest_centroid([0.3], c) == 0
    assert nearest_centroid([0.5], c) == 0
    assert nearest_centroid([0.51], c) == 1


def test_tie_break_lowest_index_with_duplicates_far_apart():
    c = Centroids(np.array([[0.9, 0.9], [0.0, 0.5], [1.0, 0.5], [0.5, 0.0]]))
    # (0.5, 0.5) is equidistant from cells 1, 2 and 3
    assert nearest_centroid([0.5, 0.5], c) == 1


def test_out_of_range_descriptors_map_somewhere():
    c = Centroids(np.array([[0.25], [0.75]]))
    assert nearest_centroid([-3.0], c) == 0
    assert nearest_centroid([7.0], c) == 1


def test_dimension_mismatch():
    c = Centroids(np.array([[0.25, 0.1]]))
    with pytest.raises(ContractError):
        nearest_centroid([0.3], c)


def test_matches_linear_scan_1000_queries(cvt256):
    q = np.random.default_rng(5).uniform(-0.1, 1.1, size=(1000, 2))
    got = cvt256.lookup(q)
    expected = [linear_scan_nearest(p, cvt256.points) for p in q]
    assert got.tolist() == expected


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30), st.integers(0, 2**32))
def test_lookup_property_on_lattice_points(points, seed):
    # Coarse lattice coordinates make exact ties common.
    rng = np.random.default_rng(seed)
    cents = np.unique(np.round(rng.uniform(size=(12, 2)) * 4) / 4, axis=0)
    c = Centroids(cents)
    q = np.round(np.array(points) * 8) / 8
    assert c.lookup(q).tolist() == [linear_scan_nearest(p, cents) for p in q]


def test_single_centroid_is_sample_mean():
    c = generate_cvt(1, 3, 50_000, 5, rng=RngStream(1))
    np.testing.assert_allclose(c.points[0], 0.5, atol=0.02)


def test_symmetric_two_clusters():
    samples = np.array([[0.1], [0.9]] * 50)
    np.testing.assert_allclose(np.sort(lloyd(samples, 2, 10).ravel()), [0.1, 0.9], atol=1e-12)


def test_every_centroid_owns_a_sample():
    rng = RngStream(4)
    c = generate_cvt(1024, 2, 50_000, 100, rng=rng)
    samples = rng.generator().uniform(0.0, 1.0, size=(50_000, 2))
    # brute force assignment in blocks
    owners = np.concatenate([
        np.argmin(((blk[:, None, :] - c.points[None]) ** 2).sum(-1), axis=1) for blk in np.array_split(samples, 50)
    ])
    assert np.all(np.bincount(owners, minlength=1024) >= 1)
    assert np.all((c.points >= 0) & (c.points <= 1))
    assert len(np.unique(c.points, axis=0)) == 1024


def test_deterministic_and_seed_sensitive():
    a = generate_cvt(32, 2, 2000, 10, rng=RngStream(3))
    b = generate_cvt(32, 2, 2000, 10, rng=RngStream(3))
    c = generate_cvt(32, 2, 2000, 10, rng=RngStream(4))
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_too_many_cells():
    with pytest.raises(ConfigError):
        generate_cvt(11, 2, 10, 1)


def test_csv_roundtrip(tmp_path, cvt64):
    cvt64.to_csv(tmp_path / "c.csv")
    back = Centroids.from_csv(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.points, cvt64.points)
