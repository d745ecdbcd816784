"""Feature-map tests: determinism, freezing, activations, layer norm."""

import hashlib
import math

import numpy as np
import pytest

from aopu import augment
from aopu.augment import (
    ACTIVATIONS,
    ZERO_MEAN_ACTIVATIONS,
    AugmentConfig,
    activation_apply,
    init_augmenter,
    layer_norm,
)
from aopu.errors import InvalidInputError


class TestInitAugmenter:
    def test_same_seed_identical(self):
        cfg = AugmentConfig(input_dim=4, hidden=8, seed=123)
        a1 = init_augmenter(cfg)
        a2 = init_augmenter(cfg)
        np.testing.assert_array_equal(a1.g_hat, a2.g_hat)

    def test_zero_hidden_columns(self):
        aug = init_augmenter(AugmentConfig(input_dim=3, hidden=0))
        assert aug.g_hat.shape == (3, 0)

    def test_adjacent_seeds_differ(self):
        a1 = init_augmenter(AugmentConfig(input_dim=4, hidden=8, seed=5))
        a2 = init_augmenter(AugmentConfig(input_dim=4, hidden=8, seed=6))
        assert np.any(a1.g_hat != a2.g_hat)

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            AugmentConfig(input_dim=0, hidden=4)
        with pytest.raises(InvalidInputError):
            AugmentConfig(input_dim=2, hidden=-1)
        with pytest.raises(InvalidInputError):
            AugmentConfig(input_dim=2, hidden=4, activation="nope")
        with pytest.raises(InvalidInputError):
            AugmentConfig(input_dim=2, hidden=1, layer_norm=True)


class TestAugment:
    def test_zero_weight_matrix_gives_zero_block(self):
        aug = init_augmenter(AugmentConfig(input_dim=2, hidden=3))
        aug.g_hat = np.zeros((2, 3))
        x = np.array([[1.0, -2.0], [0.5, 3.0]])
        out = aug.augment(x)
        np.testing.assert_array_equal(out[:3], np.zeros((3, 2)))  # tanh(0) = 0
        np.testing.assert_array_equal(out[3:], x)

    def test_zero_hidden_is_identity(self):
        aug = init_augmenter(AugmentConfig(input_dim=3, hidden=0))
        x = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(aug.augment(x), x)

    def test_scalar_tanh_value(self):
        aug = init_augmenter(AugmentConfig(input_dim=1, hidden=1))
        aug.g_hat = np.array([[1.0]])
        out = aug.augment(np.array([[0.5]]))
        np.testing.assert_allclose(out[:, 0], [0.46212, 0.5], atol=1e-5)
        np.testing.assert_allclose(out[0, 0], np.tanh(0.5), atol=1e-15)

    def test_hidden_block_first_raw_second(self):
        aug = init_augmenter(AugmentConfig(input_dim=2, hidden=4, seed=0))
        x = np.array([[1.0], [2.0]])
        out = aug.augment(x)
        np.testing.assert_array_equal(out[4:], x)
        np.testing.assert_allclose(out[:4], np.tanh(aug.g_hat.T @ x), atol=0)

    def test_dimension_mismatch(self):
        aug = init_augmenter(AugmentConfig(input_dim=3, hidden=2))
        with pytest.raises(InvalidInputError):
            aug.augment(np.ones((2, 5)))

    def test_layer_norm_applies_to_hidden_block_only(self):
        aug = init_augmenter(
            AugmentConfig(input_dim=2, hidden=8, layer_norm=True, seed=1)
        )
        x = np.array([[2.0, -1.0], [0.3, 0.7]])
        out = aug.augment(x)
        hidden = out[:8]
        np.testing.assert_allclose(hidden.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(hidden.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_array_equal(out[8:], x)  # raw copy untouched

    def test_freezing_under_repeated_calls(self):
        aug = init_augmenter(AugmentConfig(input_dim=3, hidden=4, seed=9))
        before = hashlib.sha256(aug.g_hat.tobytes()).hexdigest()
        x = np.random.default_rng(0).standard_normal((3, 5))
        for _ in range(1000):
            aug.augment(x)
        after = hashlib.sha256(aug.g_hat.tobytes()).hexdigest()
        assert before == after
        with pytest.raises(ValueError):
            aug.g_hat[0, 0] = 1.0  # read-only buffer

    def test_augment_batch_diagnostics(self):
        aug = init_augmenter(AugmentConfig(input_dim=3, hidden=0))
        x = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])  # duplicate columns
        batch = aug.augment_batch(x, np.zeros((2, 1)))
        assert batch.rank == 1
        assert batch.rr == 0.5

    def test_functional_alias(self):
        aug = init_augmenter(AugmentConfig(input_dim=2, hidden=2, seed=3))
        x = np.ones((2, 3))
        np.testing.assert_array_equal(augment.augment(aug, x), aug.augment(x))


class TestActivations:
    def test_closed_forms(self):
        z = lambda name, v: float(activation_apply(name, np.array([[v]]))[0, 0])
        assert z("tanh", 0.0) == 0.0
        assert z("softsign", 1.0) == 0.5
        assert z("hardshrink", 0.3) == 0.0
        assert z("hardshrink", 0.7) == 0.7
        assert z("softshrink", 0.3) == 0.0
        np.testing.assert_allclose(z("softshrink", 0.8), 0.3, atol=1e-15)
        np.testing.assert_allclose(z("tanhshrink", 1.0), 1.0 - math.tanh(1.0), atol=1e-15)
        assert z("sigmoid", 0.0) == 0.5
        assert z("relu", -1.0) == 0.0 and z("relu", 2.0) == 2.0
        assert z("relu6", 7.0) == 6.0
        np.testing.assert_allclose(z("rrelu", -1.0), -11.0 / 48.0, atol=1e-15)
        np.testing.assert_allclose(z("leakyrelu", -2.0), -0.02, atol=1e-15)
        np.testing.assert_allclose(z("hardswish", -3.0), 0.0, atol=1e-15)
        np.testing.assert_allclose(z("hardswish", 4.0), 4.0, atol=1e-15)

    def test_mish_composition(self):
        got = float(activation_apply("mish", np.array([[1.0]]))[0, 0])
        expected = 1.0 * math.tanh(math.log1p(math.e))  # independent composition
        np.testing.assert_allclose(got, expected, atol=1e-12)
        np.testing.assert_allclose(got, 0.86509, atol=1e-5)

    def test_unknown_name(self):
        with pytest.raises(InvalidInputError):
            activation_apply("swishish", np.ones((1, 1)))

    def test_all_catalog_entries_finite_on_wide_range(self):
        x = np.linspace(-20, 20, 401).reshape(1, -1)
        for name in ACTIVATIONS:
            out = activation_apply(name, x)
            assert out.shape == x.shape
            assert np.all(np.isfinite(out)), name

    def test_rrelu_deterministic(self):
        x = np.random.default_rng(0).standard_normal((4, 4))
        np.testing.assert_array_equal(
            activation_apply("rrelu", x), activation_apply("rrelu", x)
        )

    def test_zero_mean_catalog(self):
        rng = np.random.default_rng(42)
        z = rng.standard_normal((1, 1_000_000))
        for name in ZERO_MEAN_ACTIVATIONS:
            assert abs(float(activation_apply(name, z).mean())) < 0.01, name
        for name in ("sigmoid", "relu6", "rrelu"):
            assert abs(float(activation_apply(name, z).mean())) > 0.1, name


class TestLayerNorm:
    def test_constant_column_zeroed(self):
        out = layer_norm(np.full((4, 2), 3.5))
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_already_normalized_unchanged(self):
        col = np.array([[1.0], [-1.0]])
        np.testing.assert_allclose(layer_norm(col), col, atol=1e-15)

    def test_random_column_moments(self):
        rng = np.random.default_rng(8)
        m = rng.standard_normal((50, 3)) * 4.0 + 2.0
        out = layer_norm(m)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-10)

    def test_single_row_rejected(self):
        with pytest.raises(InvalidInputError):
            layer_norm(np.ones((1, 3)))


class TestNonlinearityBreaksTracking:
    def test_activation_is_not_representable_as_operator(self):
        # acti(W (x1+x2)) must differ from acti(W x1) + acti(W x2) - the
        # post-activation weights cannot be decoupled from the input
        rng = np.random.default_rng(21)
        hits = 0
        for _ in range(100):
            w = rng.standard_normal((4, 3))
            x1 = rng.standard_normal((3, 1))
            x2 = rng.standard_normal((3, 1))
            lhs = np.tanh(w @ (x1 + x2))
            rhs = np.tanh(w @ x1) + np.tanh(w @ x2)
            if np.max(np.abs(lhs - rhs)) > 1e-6:
                hits += 1
        assert hits >= 99
