import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manifold_unlearn.datagen import (
    Dataset,
    DatasetError,
    IdxCountMismatchError,
    IdxFormatError,
    IdxTruncatedError,
    UnlearnSplit,
    cluster_centers,
    draw_erased,
    gen_gaussian_clusters,
    load_idx,
    make_split,
    write_idx,
)
from manifold_unlearn.nn import EncoderSpec, init_params, representations


def brute_force_knn(queries, base, k):
    out = []
    for q in queries:
        d = [float(np.sum((q - b) ** 2)) for b in base]
        out.append(sorted(range(len(base)), key=lambda j: (d[j], j))[:k])
    return np.array(out)


class TestGaussianClusters:
    def test_centres_are_hypercube_corners(self):
        np.testing.assert_array_equal(cluster_centers(3, 2), [[-1, -1], [1, -1], [-1, 1]])

    def test_centres_fallback_line(self):
        np.testing.assert_array_equal(cluster_centers(3, 1), [[-2], [0], [2]])

    def test_shape_and_balance(self):
        ds = gen_gaussian_clusters(3, 100, 2, 0.5, seed=0)
        assert ds.inputs.shape == (300, 2)
        np.testing.assert_array_equal(np.bincount(ds.labels), [100, 100, 100])

    def test_deterministic(self):
        a = gen_gaussian_clusters(4, 10, 3, 1.0, seed=7)
        b = gen_gaussian_clusters(4, 10, 3, 1.0, seed=7)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_class_means_near_centres(self):
        ds = gen_gaussian_clusters(3, 2000, 2, 0.5, seed=1)
        for c, centre in enumerate(cluster_centers(3, 2)):
            np.testing.assert_allclose(ds.inputs[ds.labels == c].mean(axis=0), centre, atol=0.05)

    @pytest.mark.parametrize("args", [(3, 10, 0, 1.0), (3, 0, 2, 1.0), (3, 10, 2, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(DatasetError):
            gen_gaussian_clusters(*args, seed=0)

    def test_label_range_checked(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((2, 1)), [0, 3], 3)


class TestIdx:
    def test_hand_built_two_by_two(self, tmp_path):
        img = tmp_path / "img"
        lab = tmp_path / "lab"
        img.write_bytes(struct.pack(">IIII", 0x803, 1, 2, 2) + bytes([0, 255, 51, 102]))
        lab.write_bytes(struct.pack(">II", 0x801, 1) + bytes([7]))
        ds = load_idx(img, lab)
        np.testing.assert_allclose(ds.inputs, [[0.0, 1.0, 0.2, 0.4]])
        np.testing.assert_array_equal(ds.labels, [7])
        assert ds.class_count == 8

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(5, 3, 4))
        labels = rng.integers(0, 10, size=5)
        write_idx(tmp_path / "i", tmp_path / "l", images, labels)
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        np.testing.assert_allclose(ds.inputs, images.reshape(5, 12) / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_bad_magic(self, tmp_path):
        write_idx(tmp_path / "i", tmp_path / "l", np.zeros((1, 2, 2)), [0])
        with pytest.raises(IdxFormatError, match="magic"):
            load_idx(tmp_path / "l", tmp_path / "l")

    def test_truncated_pixels(self, tmp_path):
        write_idx(tmp_path / "i", tmp_path / "l", np.zeros((2, 2, 2)), [0, 1])
        raw = (tmp_path / "i").read_bytes()
        (tmp_path / "i").write_bytes(raw[:-1])
        with pytest.raises(IdxTruncatedError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_count_mismatch(self, tmp_path):
        write_idx(tmp_path / "i", tmp_path / "l", np.zeros((2, 2, 2)), [0, 1])
        write_idx(tmp_path / "j", tmp_path / "m", np.zeros((3, 2, 2)), [0, 1, 2])
        with pytest.raises(IdxCountMismatchError):
            load_idx(tmp_path / "i", tmp_path / "m")

    def test_empty_file(self, tmp_path):
        (tmp_path / "e").write_bytes(b"")
        with pytest.raises(IdxFormatError):
            load_idx(tmp_path / "e", tmp_path / "e")


class TestSplit:
    def setup_method(self):
        self.spec = EncoderSpec([2, 6, 3], ["tanh", "identity"])
        self.ds = gen_gaussian_clusters(3, 20, 2, 0.5, seed=0)
        self.params = init_params(self.spec, np.random.default_rng(0))

    def test_partition(self):
        split = make_split(self.ds, 10, 4, self.spec, self.params, seed=1)
        assert split.uss == 10
        assert len(np.intersect1d(split.erased, split.retained)) == 0
        assert len(split.erased) + len(split.retained) == len(self.ds)
        assert np.all(np.isin(split.neighbor_sets, split.retained))
        assert split.neighbor_sets.shape == (10, 4)

    def test_neighbours_match_brute_force(self):
        split = make_split(self.ds, 10, 4, self.spec, self.params, seed=1)
        reps = representations(self.spec, self.params, self.ds.inputs)
        expected = brute_force_knn(reps[split.erased], reps[split.retained], 4)
        np.testing.assert_array_equal(split.neighbor_sets, split.retained[expected])
        np.testing.assert_array_equal(split.original_reps, reps[split.erased])

    def test_ties_go_to_lower_index(self):
        # all retained points collide in representation space
        spec = EncoderSpec([1, 1], "identity", bias=False)
        ds = Dataset(np.ones((6, 1)), np.zeros(6, dtype=int), 1)
        split = make_split(ds, 2, 3, spec, np.zeros(1), seed=0)
        for row in split.neighbor_sets:
            np.testing.assert_array_equal(row, split.retained[:3])

    def test_uss_too_large(self):
        with pytest.raises(DatasetError):
            make_split(self.ds, 60, 3, self.spec, self.params, seed=0)

    def test_k_too_large(self):
        with pytest.raises(DatasetError):
            make_split(self.ds, 50, 11, self.spec, self.params, seed=0)

    def test_balanced_draw(self):
        erased = draw_erased(self.ds, 9, seed=2, balanced=True)
        np.testing.assert_array_equal(np.bincount(self.ds.labels[erased], minlength=3), [3, 3, 3])

    def test_json_round_trip(self):
        split = make_split(self.ds, 7, 3, self.spec, self.params, seed=5)
        again = UnlearnSplit.from_json(split.to_json(), self.ds, self.spec, self.params)
        np.testing.assert_array_equal(again.erased, split.erased)
        np.testing.assert_array_equal(again.neighbor_sets, split.neighbor_sets)
        np.testing.assert_array_equal(again.original_reps, split.original_reps)

    def test_json_mismatch_detected(self):
        split = make_split(self.ds, 7, 3, self.spec, self.params, seed=5)
        other = init_params(self.spec, np.random.default_rng(99))
        with pytest.raises(DatasetError):
            UnlearnSplit.from_json(split.to_json(), self.ds, self.spec, other)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 1000), st.integers(1, 8))
@settings(max_examples=25, deadline=None)
def test_knn_against_brute_force(seed, n, k):
    from manifold_unlearn import _kernels

    rng = np.random.default_rng(seed)
    k = min(k, n)
    # coarse grid values make exact ties common
    base = rng.integers(0, 4, size=(n, 3)).astype(float)
    queries = rng.integers(0, 4, size=(5, 3)).astype(float)
    np.testing.assert_array_equal(_kernels.knn_select(queries, base, k), brute_force_knn(queries, base, k))
