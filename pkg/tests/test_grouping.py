import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowpose.data import FlowField
from flowpose.errors import ContractError, FormatError
from flowpose.grouping import (
    MeanShiftParams,
    ModeField,
    extract_blobs,
    format_blobs,
    mean_shift_modes,
    parse_blobs,
    read_blobs,
    write_blobs,
)

from .oracles import naive_blobs, naive_mean_shift


def half_planes(size=20):
    vec = np.zeros((size, size, 2))
    vec[: size // 2, :, 0] = 5.0
    vec[size // 2:, :, 0] = -5.0
    return FlowField(vec)


def random_field(seed, h, w):
    """Piecewise-constant flow with noise, under a random mask of blobs and speckle."""
    rng = np.random.default_rng(seed)
    vec = np.zeros((h, w, 2))
    for _ in range(rng.integers(1, 4)):
        x0, y0 = rng.integers(0, w), rng.integers(0, h)
        x1, y1 = rng.integers(x0 + 1, w + 1), rng.integers(y0 + 1, h + 1)
        vec[y0:y1, x0:x1] = rng.uniform(-4, 4, size=2)
    vec += rng.normal(scale=0.2, size=vec.shape)
    mask = rng.random((h, w)) < rng.uniform(0.3, 0.9)
    if not mask.any():
        mask[0, 0] = True
    return FlowField(vec), mask


def partition(blobs):
    return [set(map(tuple, b.pixels.tolist())) for b in blobs]


class TestModes:
    def test_uniform_flow_converges_to_centroid(self):
        vec = np.zeros((10, 10, 2))
        vec[..., 0] = 2.0
        params = MeanShiftParams(spatial_bandwidth=20.0, range_bandwidth=1.5)
        modes = mean_shift_modes(FlowField(vec), np.ones((10, 10), bool), params)
        np.testing.assert_allclose(modes.modes[:, 2:], np.tile([2.0, 0.0], (100, 1)), atol=1e-12)
        np.testing.assert_allclose(modes.modes[:, :2], 4.5, atol=1e-9)

    def test_half_planes_two_mode_clusters(self):
        params = MeanShiftParams(spatial_bandwidth=2.0, range_bandwidth=1.0)
        field = half_planes()
        mask = np.ones((20, 20), bool)
        modes = mean_shift_modes(field, mask, params)
        top = modes.modes[:200]
        bottom = modes.modes[200:]
        assert np.abs(top[:, 2:] - [5.0, 0.0]).max() < 0.1
        assert np.abs(bottom[:, 2:] - [-5.0, 0.0]).max() < 0.1
        ref = np.array(naive_mean_shift(field.u, field.v, mask, 2.0, 1.0, 50, 1e-3)) * params.scale
        np.testing.assert_allclose(modes.modes, ref, atol=1e-9)

    def test_single_pixel_is_fixed_point(self):
        vec = np.zeros((5, 5, 2))
        vec[2, 3] = (1.0, -1.0)
        mask = np.zeros((5, 5), bool)
        mask[2, 3] = True
        modes = mean_shift_modes(FlowField(vec), mask)
        np.testing.assert_array_equal(modes.modes, [[3.0, 2.0, 1.0, -1.0]])

    def test_empty_mask(self):
        with pytest.raises(ContractError):
            mean_shift_modes(FlowField.zeros(3, 3), np.zeros((3, 3), bool))

    def test_rerun_from_modes_barely_moves(self):
        field, mask = random_field(5, 18, 18)
        params = MeanShiftParams(spatial_bandwidth=3.0, range_bandwidth=1.0, max_iterations=200)
        modes = mean_shift_modes(field, mask, params)
        # feed the converged modes back in as seeds over the same points
        from flowpose.grouping import _shift_group, features

        points = features(field, mask, params)
        seeds = modes.modes / params.scale
        again = _shift_group(seeds, points)
        assert np.sqrt(((again - seeds) ** 2).sum(axis=1)).max() < params.convergence_tol


class TestBlobs:
    def test_half_planes_give_two_blobs(self):
        params = MeanShiftParams(spatial_bandwidth=2.0, range_bandwidth=1.0)
        field = half_planes()
        blobs = extract_blobs(mean_shift_modes(field, np.ones((20, 20), bool), params), params)
        assert [b.id for b in blobs] == [1, 2]
        assert [b.size for b in blobs] == [200, 200]
        assert set(blobs[0].ys.tolist()) == set(range(10))
        assert blobs[0].mode[2] == pytest.approx(5.0, abs=0.1)
        assert blobs[1].mode[2] == pytest.approx(-5.0, abs=0.1)

    def test_uniform_one_blob(self):
        vec = np.zeros((12, 12, 2))
        vec[..., 1] = 1.0
        mask = np.ones((12, 12), bool)
        blobs = extract_blobs(mean_shift_modes(FlowField(vec), mask))
        assert len(blobs) == 1 and blobs[0].size == 144

    def test_isolated_speck_dropped(self):
        vec = np.zeros((30, 30, 2))
        vec[..., 0] = 2.0
        mask = np.zeros((30, 30), bool)
        mask[:10, :10] = True
        mask[25, 25] = True
        params = MeanShiftParams(min_blob_size=5)
        blobs = extract_blobs(mean_shift_modes(FlowField(vec), mask, params), params)
        assert len(blobs) == 1 and blobs[0].size == 100

    def test_same_mode_split_by_connectivity(self):
        vec = np.zeros((10, 20, 2))
        vec[..., 0] = 1.0
        mask = np.zeros((10, 20), bool)
        mask[2:8, 1:5] = True
        mask[2:8, 14:19] = True
        params = MeanShiftParams(spatial_bandwidth=100.0, min_blob_size=3)
        blobs = extract_blobs(mean_shift_modes(FlowField(vec), mask, params), params)
        assert [b.size for b in blobs] == [24, 30]
        assert blobs[0].xs.max() < 5 <= 14 <= blobs[1].xs.min()

    def test_empty_modes(self):
        empty = ModeField(np.zeros((3, 3), bool), np.zeros((0, 4)))
        assert extract_blobs(empty) == []

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_oracle(self, seed):
        field, mask = random_field(seed, 12, 14)
        params = MeanShiftParams(spatial_bandwidth=3.0, range_bandwidth=1.0, min_blob_size=3)
        blobs = extract_blobs(mean_shift_modes(field, mask, params), params)
        ref_modes = naive_mean_shift(field.u, field.v, mask, 3.0, 1.0, params.max_iterations, params.convergence_tol)
        assert partition(blobs) == naive_blobs(mask, ref_modes, params.merge_radius, params.min_blob_size)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_partition_property(self, seed):
        field, mask = random_field(seed, 15, 15)
        params = MeanShiftParams(spatial_bandwidth=2.5, range_bandwidth=1.0, min_blob_size=2)
        blobs = extract_blobs(mean_shift_modes(field, mask, params), params)
        seen = set()
        for b in blobs:
            pix = set(map(tuple, b.pixels.tolist()))
            assert not pix & seen
            seen |= pix
            assert all(mask[y, x] for x, y in pix)
            assert b.size >= params.min_blob_size
        firsts = [(b.ys[0], b.xs[0]) for b in blobs]
        assert firsts == sorted(firsts)


class TestBlobFormat:
    def test_roundtrip(self, tmp_path):
        params = MeanShiftParams(spatial_bandwidth=2.0, range_bandwidth=1.0)
        blobs = extract_blobs(mean_shift_modes(half_planes(), np.ones((20, 20), bool), params), params)
        path = tmp_path / "blobs.txt"
        write_blobs(blobs, path)
        back = read_blobs(path)
        assert [b.id for b in back] == [1, 2]
        for a, b in zip(blobs, back):
            np.testing.assert_array_equal(a.pixels, b.pixels)
            assert a.mode == b.mode
        # one run per row of each half
        assert len(path.read_text().splitlines()[0].split()) == 6 + 10

    def test_size_mismatch(self):
        with pytest.raises(FormatError):
            parse_blobs("1 3 0 0 0 0 0,0,2\n")

    def test_text_layout(self):
        from flowpose.grouping import Blob

        blob = Blob(4, np.array([[2, 1], [3, 1], [0, 2]]), (1.0, 2.0, 0.5, -0.5))
        assert format_blobs([blob]) == "4 3 1.0 2.0 0.5 -0.5 1,2,2 2,0,1\n"
