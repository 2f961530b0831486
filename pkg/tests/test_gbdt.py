import numpy as np
import pytest

from kstop import gbdt
from kstop.errors import ArtifactError, ParameterError
from kstop.gbdt import GbdtModel, TrainConfig


def threshold_data(n=600, seed=0):
    rng = np.random.default_rng(seed)
    features = rng.random((n, 4))
    labels = (features[:, 0] > 0.5).astype(np.int64)

    return features, labels


@pytest.fixture(scope='module')
def model():
    features, labels = threshold_data()
    return gbdt.train(features, labels, TrainConfig(max_rounds=30, min_samples_per_leaf=5))


class TestTraining:
    def test_learns_threshold(self, model):
        features, labels = threshold_data(seed=1)
        predicted = model.predict_many(features) >= 0.5

        assert np.mean(predicted == labels) > 0.95

    def test_training_loss_never_increases(self, model):
        losses = [fit_loss for fit_loss, _ in model.history]

        assert len(losses) > 1
        assert all(later <= earlier + 1e-9 for earlier, later in zip(losses, losses[1:]))

    def test_probabilities_in_range(self, model):
        features = np.random.default_rng(2).normal(0, 10, size=(200, 4))
        p = model.predict_many(features)

        assert np.all((p > 0) & (p < 1))

    def test_deterministic(self):
        features, labels = threshold_data()
        config = TrainConfig(max_rounds=10, min_samples_per_leaf=5, seed=4)

        assert gbdt.train(features, labels, config).to_bytes() == gbdt.train(features, labels, config).to_bytes()

    def test_single_class(self):
        model = gbdt.train(np.zeros((10, 3)), np.ones(10))

        assert model.trees == []
        assert model.predict(np.zeros(3)) > 0.99

    def test_empty(self):
        with pytest.raises(ParameterError):
            gbdt.train(np.zeros((0, 3)), np.zeros(0))

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            gbdt.train(np.zeros((5, 3)), np.zeros(4))

    def test_early_stopping_on_noise(self):
        rng = np.random.default_rng(7)
        features = rng.random((400, 3))
        labels = rng.integers(0, 2, size=400)
        config = TrainConfig(max_rounds=200, min_samples_per_leaf=2, early_stop_patience=3)

        model = gbdt.train(features, labels, config)

        assert model.stopping_round < 200
        assert model.best_round <= model.stopping_round
        assert len(model.trees) == model.best_round

    def test_depth_growth_respects_max_depth(self):
        features, labels = threshold_data()
        model = gbdt.train(features, labels, TrainConfig(max_rounds=5, growth='depth', max_depth=2,
                                                         min_samples_per_leaf=5))

        assert all(tree.depth <= 2 for tree in model.trees)

    def test_leaf_growth_respects_max_leaves(self):
        features, labels = threshold_data()
        model = gbdt.train(features, labels, TrainConfig(max_rounds=5, max_leaves=4, min_samples_per_leaf=5))

        for tree in model.trees:
            assert np.sum(tree.feature < 0) <= 4

    def test_min_samples_per_leaf(self):
        features, labels = threshold_data(n=100)
        model = gbdt.train(features, labels, TrainConfig(max_rounds=3, min_samples_per_leaf=60))

        # 80 fitting rows cannot be split into two leaves of 60.
        assert all(len(tree) == 1 for tree in model.trees)

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            TrainConfig(growth='oblivious')

        with pytest.raises(ParameterError):
            TrainConfig(validation_fraction=1.0)


class TestPrediction:
    def test_single_matches_batch(self, model):
        features = np.random.default_rng(3).random((25, 4))
        batch = model.predict_many(features)

        for row, expected in zip(features, batch):
            assert model.predict(row) == pytest.approx(expected, abs=1e-12)

    def test_arity_checked(self, model):
        with pytest.raises(ParameterError):
            model.predict(np.zeros(5))


class TestSerialization:
    def test_round_trip_predictions_identical(self, tmp_path, model):
        path = str(tmp_path / 'model.bin')
        model.save(path)
        loaded = GbdtModel.load(path)
        features = np.random.default_rng(4).random((50, 4))

        np.testing.assert_array_equal(loaded.predict_many(features), model.predict_many(features))
        assert loaded.best_round == model.best_round
        assert loaded.stopping_round == model.stopping_round

    def test_corrupt(self, model):
        data = bytearray(model.to_bytes())
        data[-10] ^= 0x01

        with pytest.raises(ArtifactError):
            GbdtModel.from_bytes(bytes(data))

    def test_wrong_magic(self):
        with pytest.raises(ArtifactError):
            GbdtModel.from_bytes(b'\x00' * 64)
