"""Data pipeline tests: CSV ingestion, standardization, windowing, batching,
splitting, and the synthetic generator."""

import numpy as np
import pytest

from aopu.baselines import linear_mve_fit
from aopu.data import (
    ColumnCountError,
    Dataset,
    EmptyCsvError,
    NonNumericValueError,
    RowCountError,
    ZeroVarianceError,
    batches,
    load_csv,
    split,
    standardize,
    synth_generate,
    train_column_stats,
    window,
)
from aopu.errors import InvalidInputError


class TestLoadCsv:
    def test_small_file_round_trip(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("1.5,2,3\n-4,5e-1,6\n7,8,9.25\n")
        ds = load_csv(path)
        expected = np.array([[1.5, 2, 3], [-4, 0.5, 6], [7, 8, 9.25]])
        np.testing.assert_array_equal(ds.values, expected)
        assert ds.n_inputs == 2 and ds.target_col == 2

    def test_header_detection(self, tmp_path):
        path = tmp_path / "named.csv"
        path.write_text("temp,pressure,y\n1,2,3\n4,5,6\n")
        ds = load_csv(path)
        assert ds.columns == ("temp", "pressure", "y")
        assert ds.n_rows == 2

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(ColumnCountError):
            load_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3,oops\n")
        with pytest.raises(NonNumericValueError):
            load_csv(path)

    def test_missing_value_rejected(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("1,2\n3,\n")
        with pytest.raises(NonNumericValueError):
            load_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyCsvError):
            load_csv(path)

    def test_schema_row_count_enforced(self, tmp_path):
        path = tmp_path / "short.csv"
        rows = "\n".join(",".join("1" for _ in range(8)) for _ in range(10))
        path.write_text(rows + "\n")
        with pytest.raises(RowCountError):
            load_csv(path, schema="debutanizer")

    def test_known_schema_roles(self, tmp_path):
        # a file with the documented shape: 7 inputs and 1 target column
        rng = np.random.default_rng(0)
        path = tmp_path / "deb.csv"
        data = rng.standard_normal((2394, 8))
        np.savetxt(path, data, delimiter=",")
        ds = load_csv(path, schema="debutanizer")
        assert ds.n_rows == 2394
        assert ds.n_inputs == 7
        assert ds.target_col == 7

    def test_sru_schema_two_candidate_targets(self, tmp_path):
        rng = np.random.default_rng(1)
        path = tmp_path / "sru.csv"
        np.savetxt(path, rng.standard_normal((10080, 7)), delimiter=",")
        ds = load_csv(path, schema="sru")
        assert ds.n_inputs == 5
        assert ds.target_col == 5  # first analyzer output by default
        ds2 = load_csv(path, schema="sru", target_col=6)
        assert ds2.target_col == 6

    def test_unknown_schema_name(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("1,2\n")
        with pytest.raises(InvalidInputError):
            load_csv(path, schema="mystery")


def _toy_dataset(values, n_inputs=None, target_col=None):
    values = np.asarray(values, dtype=np.float64)
    n_inputs = values.shape[1] - 1 if n_inputs is None else n_inputs
    target_col = values.shape[1] - 1 if target_col is None else target_col
    cols = tuple(f"c{j}" for j in range(values.shape[1]))
    return Dataset(values=values, columns=cols, n_inputs=n_inputs, target_col=target_col)


class TestStandardize:
    def test_z_scores(self):
        ds = _toy_dataset(np.column_stack([[1.0, 2.0, 3.0], [0.0, 1.0, 2.0]]))
        stats = train_column_stats(ds, 1.0)
        out = standardize(ds, stats)
        np.testing.assert_allclose(
            out.values[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4
        )
        np.testing.assert_allclose(
            out.values[:, 0], [-1.22474487, 0.0, 1.22474487], atol=1e-8
        )

    def test_already_standardized_unchanged(self):
        rng = np.random.default_rng(2)
        v = rng.standard_normal((40, 3))
        v = (v - v.mean(axis=0)) / v.std(axis=0)  # exact unit stats
        ds = _toy_dataset(v)
        out = standardize(ds, train_column_stats(ds, 1.0))
        np.testing.assert_allclose(out.values, v, atol=1e-12)

    def test_validation_rows_keep_train_stats(self):
        rng = np.random.default_rng(3)
        v = rng.standard_normal((100, 2))
        v[60:] += 5.0  # later rows drift
        ds = _toy_dataset(v)
        stats = train_column_stats(ds, 0.6)
        out = standardize(ds, stats)
        # train part is centered, the drifted tail is not re-fitted
        np.testing.assert_allclose(out.values[:60].mean(axis=0), 0.0, atol=1e-12)
        assert np.all(np.abs(out.values[60:].mean(axis=0)) > 1.0)

    def test_no_leakage_from_later_rows(self):
        rng = np.random.default_rng(4)
        v = rng.standard_normal((50, 2))
        ds = _toy_dataset(v)
        stats = train_column_stats(ds, 0.6)
        v2 = v.copy()
        v2[40:] += 123.0  # perturb rows outside the fitting range
        stats2 = train_column_stats(_toy_dataset(v2), 0.6)
        np.testing.assert_array_equal(stats.mean, stats2.mean)
        np.testing.assert_array_equal(stats.std, stats2.std)

    def test_zero_variance_column_named(self):
        v = np.column_stack([np.ones(10), np.arange(10.0)])
        ds = _toy_dataset(v)
        with pytest.raises(ZeroVarianceError, match="c0"):
            standardize(ds, train_column_stats(ds, 1.0))


class TestWindow:
    def test_seq_one_is_transpose(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal((20, 4))
        ds = _toy_dataset(v)
        ws = window(ds, 1)
        np.testing.assert_array_equal(ws.features, v[:, :3].T)
        np.testing.assert_array_equal(ws.targets[:, 0], v[:, 3])

    def test_two_variable_layout(self):
        v = np.array([[1.0, 2.0, 0.1], [3.0, 4.0, 0.2], [5.0, 6.0, 0.3]])
        ds = _toy_dataset(v, n_inputs=2, target_col=2)
        ws = window(ds, 2)
        np.testing.assert_array_equal(ws.features[:, 0], [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(ws.features[:, 1], [3.0, 4.0, 5.0, 6.0])
        np.testing.assert_array_equal(ws.targets[:, 0], [0.2, 0.3])

    def test_counts_at_production_shape(self):
        rng = np.random.default_rng(6)
        ds = _toy_dataset(rng.standard_normal((2394, 8)), n_inputs=7, target_col=7)
        ws = window(ds, 48)
        assert ws.dim == 48 * 7 == 336
        assert ws.n_windows == 2394 - 48 + 1 == 2347

    def test_windows_reconstruct_original_series(self):
        rng = np.random.default_rng(7)
        v = rng.standard_normal((30, 3))
        ds = _toy_dataset(v)
        seq = 5
        ws = window(ds, seq)
        rebuilt = np.empty((30, 2))
        rebuilt[: seq - 1] = ws.features[: 2 * (seq - 1), 0].reshape(seq - 1, 2)
        for k in range(ws.n_windows):
            rebuilt[k + seq - 1] = ws.features[-2:, k]
        np.testing.assert_array_equal(rebuilt, v[:, :2])

    def test_target_alignment(self):
        v = np.column_stack([np.arange(10.0), np.arange(10.0) * 10])
        ds = _toy_dataset(v, n_inputs=1, target_col=1)
        ws = window(ds, 3)
        # window k covers rows [k, k+3): its target sits at row k+2
        np.testing.assert_array_equal(ws.targets[:, 0], np.arange(2, 10) * 10)

    def test_bad_seq(self):
        ds = _toy_dataset(np.ones((5, 3)) + np.arange(5)[:, None])
        with pytest.raises(InvalidInputError):
            window(ds, 0)
        with pytest.raises(InvalidInputError):
            window(ds, 6)


class TestSplit:
    def _ws(self, n):
        v = np.column_stack([np.arange(n, dtype=float), np.arange(n, dtype=float)])
        return window(_toy_dataset(v, n_inputs=1, target_col=1), 1)

    def test_ten_windows(self):
        tr, va, te = split(self._ws(10))
        assert (tr.n_windows, va.n_windows, te.n_windows) == (6, 2, 2)

    def test_floor_rule_remainder_to_test(self):
        tr, va, te = split(self._ws(2347))
        assert (tr.n_windows, va.n_windows, te.n_windows) == (1408, 469, 470)

    def test_chronological_contiguous(self):
        tr, va, te = split(self._ws(10))
        np.testing.assert_array_equal(tr.features[0], np.arange(6.0))
        np.testing.assert_array_equal(va.features[0], [6.0, 7.0])
        np.testing.assert_array_equal(te.features[0], [8.0, 9.0])

    def test_empty_partition_rejected(self):
        with pytest.raises(InvalidInputError):
            split(self._ws(4), (0.9, 0.05, 0.05))

    def test_invalid_ratios_rejected(self):
        ws = self._ws(10)
        with pytest.raises(InvalidInputError):
            split(ws, (0.5, 0.5))
        with pytest.raises(InvalidInputError):
            split(ws, (0.8, 0.3, -0.1))
        with pytest.raises(InvalidInputError):
            split(ws, (0.5, 0.4, 0.2))


class TestBatches:
    def _ws(self, n):
        v = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
        return window(_toy_dataset(v, n_inputs=1, target_col=1), 1)

    def test_drop_last_rule(self):
        out = batches(self._ws(100), 64)
        assert len(out) == 1
        assert out[0][0].shape == (1, 64)

    def test_keep_last_for_evaluation(self):
        out = batches(self._ws(100), 64, drop_last=False)
        assert len(out) == 2
        assert out[1][0].shape == (1, 36)

    def test_same_seed_same_order(self):
        a = batches(self._ws(50), 8, shuffle=True, seed=3)
        b = batches(self._ws(50), 8, shuffle=True, seed=3)
        for (fa, _), (fb, _) in zip(a, b):
            np.testing.assert_array_equal(fa, fb)

    def test_no_shuffle_is_time_order(self):
        out = batches(self._ws(12), 4)
        np.testing.assert_array_equal(out[0][0][0], [0.0, 1.0, 2.0, 3.0])
        np.testing.assert_array_equal(out[2][0][0], [8.0, 9.0, 10.0, 11.0])

    def test_all_training_batches_have_bs_columns(self):
        for feats, targs in batches(self._ws(103), 10, shuffle=True, seed=0):
            assert feats.shape[1] == 10
            assert targs.shape[0] == 10

    def test_bad_batch_size(self):
        with pytest.raises(InvalidInputError):
            batches(self._ws(10), 0)


class TestSynthGenerate:
    def test_noise_free_linear_recovered_by_closed_form(self):
        ds = synth_generate(n=400, n_vars=6, noise=0.0, seed=11)
        fit = linear_mve_fit(ds.inputs().T, ds.target()[None, :])
        np.testing.assert_allclose(fit.weights[0], ds.meta["w"], atol=1e-6)
        np.testing.assert_allclose(fit.offset, [0.0], atol=1e-6)

    def test_noise_floor_matches_analytic_r2(self):
        sigma = 0.1
        ds = synth_generate(n=20000, n_vars=5, noise=sigma, seed=12)
        w = ds.meta["w"]
        yhat = ds.inputs() @ w
        y = ds.target()
        r2 = 1.0 - np.sum((y - yhat) ** 2) / np.sum((y - y.mean()) ** 2)
        var_y = float(np.linalg.norm(w) ** 2 + sigma**2)
        np.testing.assert_allclose(r2, 1.0 - sigma**2 / var_y, atol=0.02)

    def test_same_seed_identical(self):
        a = synth_generate(n=100, n_vars=3, noise=0.2, nonlinear=True, seed=5)
        b = synth_generate(n=100, n_vars=3, noise=0.2, nonlinear=True, seed=5)
        np.testing.assert_array_equal(a.values, b.values)

    def test_marginal_moments_near_stationary_targets(self):
        ds = synth_generate(n=50000, n_vars=4, noise=0.0, seed=13)
        np.testing.assert_allclose(ds.inputs().mean(axis=0), 0.0, atol=0.1)
        np.testing.assert_allclose(ds.inputs().std(axis=0), 1.0, atol=0.1)

    def test_nonlinear_component_is_linearly_invisible(self):
        # the even tanh-product term must be uncorrelated with every input
        ds = synth_generate(n=100000, n_vars=4, noise=0.0, nonlinear=True, seed=14)
        x = ds.inputs()
        extra = ds.target() - x @ ds.meta["w"]
        corr = x.T @ (extra - extra.mean()) / len(extra)
        assert np.max(np.abs(corr)) < 0.02

    def test_invalid_args(self):
        with pytest.raises(InvalidInputError):
            synth_generate(n=0, n_vars=2)
        with pytest.raises(InvalidInputError):
            synth_generate(n=10, n_vars=2, noise=-0.5)


class TestDatasetValidation:
    def test_target_must_be_outside_inputs(self):
        with pytest.raises(InvalidInputError):
            _toy_dataset(np.ones((5, 3)), n_inputs=2, target_col=1)

    def test_non_finite_rejected(self):
        v = np.ones((4, 2))
        v[2, 1] = np.nan
        with pytest.raises(InvalidInputError):
            _toy_dataset(v)
