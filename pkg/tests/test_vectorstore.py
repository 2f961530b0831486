import numpy as np
import pytest

from kstop.errors import DimensionMismatch, FormatError, ParameterError
from kstop.vectorstore import (
    Dataset,
    GroundTruth,
    Metric,
    brute_force_topk,
    compute_ground_truth,
    distance,
    load_dataset,
    read_vecs,
    recall_at_k,
    save_vecs,
    synth_dataset,
    synth_split,
)


def write_records(path, records, dtype='<f4'):
    with open(path, 'wb') as f:
        for record in records:
            np.array([len(record)], dtype='<i4').tofile(f)
            np.asarray(record, dtype=dtype).tofile(f)


class TestReadVecs:
    def test_fvecs_records(self, tmp_path):
        path = str(tmp_path / 'base.fvecs')
        write_records(path, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])

        vectors = read_vecs(path, 'fvecs')

        assert vectors.shape == (2, 3)
        np.testing.assert_array_equal(vectors[1], [4.0, 5.0, 6.0])

    def test_ivecs_are_integers(self, tmp_path):
        path = str(tmp_path / 'ids.ivecs')
        write_records(path, [[7, 8], [9, 10]], dtype='<i4')

        ids = read_vecs(path, 'ivecs')

        assert ids.dtype.kind == 'i'
        np.testing.assert_array_equal(ids, [[7, 8], [9, 10]])

    def test_bvecs_load_as_float_dataset(self, tmp_path):
        path = str(tmp_path / 'base.bvecs')
        write_records(path, [[0, 255], [10, 20]], dtype='u1')

        dataset = load_dataset(path, 'bvecs')

        assert dataset.element_kind == 'uint8'
        assert dataset.vectors.dtype == np.float32
        np.testing.assert_array_equal(dataset.vectors[0], [0.0, 255.0])

    def test_truncated_body(self, tmp_path):
        path = str(tmp_path / 'base.fvecs')
        write_records(path, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])

        with open(path, 'rb') as f:
            data = f.read()

        with open(path, 'wb') as f:
            f.write(data[:-2])

        with pytest.raises(FormatError):
            read_vecs(path, 'fvecs')

    def test_mixed_dimensions(self, tmp_path):
        path = str(tmp_path / 'mixed.fvecs')
        write_records(path, [[1.0, 2.0], [1.0, 2.0, 3.0]])

        with pytest.raises(DimensionMismatch):
            read_vecs(path, 'fvecs')

    def test_raw_needs_dimension(self, tmp_path):
        path = str(tmp_path / 'base.raw')
        np.arange(8, dtype='<f4').tofile(path)

        with pytest.raises(FormatError):
            read_vecs(path, 'raw-f32')

        assert read_vecs(path, 'raw-f32', dim=4).shape == (2, 4)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(FormatError):
            read_vecs(str(tmp_path / 'x'), 'hdf5')

    def test_save_then_read(self, tmp_path):
        path = str(tmp_path / 'out.fvecs')
        vectors = np.random.default_rng(0).random((5, 4), dtype=np.float32)

        save_vecs(path, vectors, 'fvecs')

        np.testing.assert_array_equal(read_vecs(path, 'fvecs'), vectors)


class TestMetric:
    def test_squared_euclidean(self):
        assert distance([0, 0], [3, 4]) == 25.0

    def test_inner_product_is_negated(self):
        assert distance([1, 2], [3, 4], Metric(Metric.INNER_PRODUCT)) == -11.0

    def test_cosine(self):
        assert distance([1, 0], [2, 0], Metric(Metric.COSINE)) == pytest.approx(-1.0)
        assert distance([1, 0], [0, 5], Metric(Metric.COSINE)) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            distance([1, 2], [1, 2, 3])

    def test_unknown_metric(self):
        with pytest.raises(ParameterError):
            Metric('manhattan')

    def test_cosine_rejects_zero_vectors(self):
        with pytest.raises(ParameterError):
            Dataset([[1.0, 0.0], [0.0, 0.0]], Metric(Metric.COSINE))

    def test_batch_matches_pairwise(self):
        rng = np.random.default_rng(1)
        vectors = rng.random((20, 6))
        query = rng.random(6)

        for kind in Metric.KINDS:
            metric = Metric(kind)
            dataset = Dataset(vectors, metric)
            expected = [distance(query, vector, metric) for vector in dataset.vectors]

            np.testing.assert_allclose(dataset.distances(query), expected, rtol=1e-9, atol=1e-9)


class TestBruteForce:
    def test_ties_broken_by_lower_id(self):
        dataset = Dataset([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])

        row = brute_force_topk(dataset, [1.0, 0.0], 2)

        np.testing.assert_array_equal(row.ids, [1, 2])
        np.testing.assert_array_equal(row.distances, [0.0, 0.0])

    def test_sorted_by_distance(self, dataset, queries):
        row = brute_force_topk(dataset, queries[0], 10)

        assert np.all(np.diff(row.distances) >= 0)
        np.testing.assert_allclose(row.distances, np.sort(dataset.distances(queries[0].astype(np.float64)))[:10])

    def test_k_larger_than_dataset(self):
        dataset = Dataset([[0.0], [1.0]])

        with pytest.raises(ParameterError):
            brute_force_topk(dataset, [0.0], 3)

    def test_query_dimension_checked(self, dataset):
        with pytest.raises(DimensionMismatch):
            brute_force_topk(dataset, np.zeros(dataset.dim + 1), 1)


class TestGroundTruth:
    def test_workers_do_not_change_results(self, dataset, queries):
        serial = compute_ground_truth(dataset, queries[:20], 5)
        parallel = compute_ground_truth(dataset, queries[:20], 5, workers=3)

        np.testing.assert_array_equal(serial.ids, parallel.ids)
        np.testing.assert_array_equal(serial.distances, parallel.distances)

    def test_save_and_load(self, tmp_path, dataset, queries):
        truth = compute_ground_truth(dataset, queries[:4], 3)
        prefix = str(tmp_path / 'gt')

        truth.save(prefix)
        loaded = GroundTruth.load(prefix)

        np.testing.assert_array_equal(loaded.ids, truth.ids)
        np.testing.assert_allclose(loaded.distances, truth.distances, rtol=1e-6)
        assert loaded.depth == 3


class TestRecall:
    def test_partial_overlap(self):
        assert recall_at_k([1, 2, 3, 4], [4, 3, 9, 8], 4) == 0.5

    def test_only_first_k_count(self):
        assert recall_at_k([1, 2, 3], [1, 7, 2], 2) == 0.5

    def test_k_must_be_positive(self):
        with pytest.raises(ParameterError):
            recall_at_k([1], [1], 0)


class TestSynth:
    def test_deterministic(self):
        first = synth_dataset(100, 4, seed=9, distribution='gaussian-clusters')
        second = synth_dataset(100, 4, seed=9, distribution='gaussian-clusters')

        np.testing.assert_array_equal(first.vectors, second.vectors)

    def test_seed_matters(self):
        assert not np.array_equal(synth_dataset(50, 4, seed=1).vectors, synth_dataset(50, 4, seed=2).vectors)

    def test_uniform_components_average_one_half(self):
        vectors = synth_dataset(25000, 4, seed=3).vectors

        assert vectors.min() >= 0.0
        assert vectors.max() < 1.0
        np.testing.assert_allclose(vectors.mean(axis=0), 0.5, atol=0.02)

    def test_split_shapes(self):
        dataset, queries = synth_split(80, 12, 5, seed=0)

        assert len(dataset) == 80
        assert queries.shape == (12, 5)

    def test_bad_distribution(self):
        with pytest.raises(ParameterError):
            synth_dataset(10, 2, distribution='zipf')
