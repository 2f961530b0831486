import numpy as np
import pytest

from kstop.errors import ArtifactError, ParameterError
from kstop.prob_table import DecayFit, DecayFits, ProbTable, fit_decay, fit_log_decay
from kstop.search import forecast_recall


def observed(n_max, r_max, observations):
    table = ProbTable(n_max, r_max)

    for n, present in observations:
        table.observe(n, np.asarray(present, dtype=bool))

    return table


class TestFinalize:
    def test_backfills_unobserved_rows(self):
        table = observed(3, 4, [
            (0, [False, True, False, False]),
            (0, [False, True, False, False]),
            (3, [True, True, True, True]),
        ]).finalize()

        np.testing.assert_allclose(table.probs, [
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
        ])
        assert table.lookup(1, 3) == 0.0
        assert table.lookup(2, 2) == 1.0

    def test_isotonic_pass_repairs_violations(self):
        table = observed(2, 3, [
            (0, [False, False, True]),
            (1, [True, False, False]),
            (2, [True, True, True]),
        ]).finalize()

        np.testing.assert_allclose(table.probs[:, 2], [0.5, 0.5, 1.0])
        assert table.deviation == pytest.approx(1.0)

    def test_properties_on_random_observations(self):
        rng = np.random.default_rng(11)
        table = ProbTable(10, 15)

        for _ in range(300):
            table.observe(int(rng.integers(0, 12)), rng.random(15) < 0.6)

        table.finalize()
        rows = np.arange(11)[:, None]
        ranks = np.arange(1, 16)[None, :]

        assert np.all((table.probs >= 0) & (table.probs <= 1))
        assert np.all(table.probs[ranks <= rows] == 1.0)
        assert np.all(np.diff(table.probs, axis=0) >= -1e-12)

    def test_large_n_clamps_to_last_row(self):
        table = observed(2, 3, [(5, [True, True, False])])

        assert table.observations[2] == 1
        assert table.finalize().lookup(7, 3) == table.lookup(2, 3)

    def test_lookup_rank_range(self):
        table = ProbTable(2, 3).finalize()

        with pytest.raises(ParameterError):
            table.lookup(0, 4)

        with pytest.raises(ParameterError):
            table.lookup(0, 0)

    def test_merge(self):
        first = observed(2, 3, [(1, [True, False, False])])
        second = observed(2, 3, [(1, [True, True, False])])

        first.merge(second)

        assert first.observations[1] == 2
        np.testing.assert_array_equal(first.hits[1], [2, 1, 0])

        with pytest.raises(ParameterError):
            first.merge(ProbTable(3, 3))


class TestTableSerialization:
    def test_save_and_load(self, tmp_path):
        table = observed(3, 5, [(1, [True, False, True, False, False]), (2, [True, True, False, True, False])])
        table.finalize()
        path = str(tmp_path / 'table.bin')

        table.save(path)
        loaded = ProbTable.load(path)

        np.testing.assert_array_equal(loaded.probs, table.probs)
        np.testing.assert_array_equal(loaded.hits, table.hits)
        np.testing.assert_array_equal(loaded.observations, table.observations)
        assert loaded.finalized

    def test_corrupt(self):
        data = bytearray(ProbTable(2, 2).finalize().to_bytes())
        data[20] ^= 0x10

        with pytest.raises(ArtifactError):
            ProbTable.from_bytes(bytes(data))


class TestDecayFit:
    def test_recovers_noisy_log_decay(self):
        rng = np.random.default_rng(0)
        ranks = np.arange(1, 201)
        probs = 0.9 - 0.1 * np.log(ranks) + rng.normal(0, 0.01, size=ranks.size)

        fit = fit_log_decay(ranks, probs)

        assert fit.a == pytest.approx(0.9, abs=0.05)
        assert fit.b == pytest.approx(0.1, abs=0.05)

    def test_increasing_data_gives_flat_fit(self):
        fit = fit_log_decay([1, 2, 3, 4], [0.1, 0.2, 0.3, 0.4])

        assert fit.b == 0.0
        assert fit.a == pytest.approx(0.25)

    def test_needs_two_points(self):
        with pytest.raises(ParameterError):
            fit_log_decay([3], [0.5])

    def test_prediction_is_clamped(self):
        fit = DecayFit(1.5, 0.5)

        np.testing.assert_allclose(fit.predict([1, np.e ** 4]), [1.0, 0.0])

    def test_needs_finalized_table(self):
        table = observed(3, 6, [(0, [False] * 6)])

        with pytest.raises(ParameterError):
            fit_decay(table, 0)

    def test_backfilled_row_keeps_decaying_past_the_table(self):
        table = observed(4, 6, [
            (0, [False] * 6),
            (1, [True] + [False] * 5),
            (2, [True] * 6),
            (2, [True] * 6),
            (2, [True] * 4 + [False] * 2),
            (2, [True] * 3 + [False] * 3),
            (4, [True] * 6),
        ]).finalize()
        fits = DecayFits(table)

        # Row 3 was never observed and borrows row 2.
        assert table.observations[3] == 0
        np.testing.assert_allclose(table.probs[3], [1.0, 1.0, 1.0, 0.75, 0.5, 0.5])
        assert fits[3].b > 0

        flat_tail = (3 + 0.75 + 0.5 + 0.5 + 6 * 0.5) / 12

        assert forecast_recall(table, fits, 3, 12, 0.95, 1.0) < flat_tail

    def test_short_row_falls_back_to_constant(self):
        table = observed(4, 5, [(4, [True, True, True, True, False])]).finalize()
        fits = DecayFits(table)

        # Row 4 has a single rank (5) beyond its prefix.
        assert fits[4] == DecayFit(float(table.probs[4, -1]), 0.0)
        assert fits[9] is fits[4]

    def test_fits_file(self, tmp_path):
        table = observed(3, 8, [
            (n, [r < n or r % 3 == 0 for r in range(8)]) for n in range(4)
        ]).finalize()
        fits = DecayFits(table).fit_all()
        path = str(tmp_path / 'fits.csv')

        fits.save(path)
        loaded = DecayFits.load(path, table)

        for row in range(4):
            assert loaded[row].a == fits[row].a
            assert loaded[row].b == fits[row].b

    def test_bad_fits_file(self, tmp_path):
        path = tmp_path / 'fits.csv'
        path.write_text('rank,value\n1,2\n')

        with pytest.raises(ArtifactError):
            DecayFits.load(str(path), ProbTable(1, 2))
