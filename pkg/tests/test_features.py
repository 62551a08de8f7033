import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nextcell import features as ft
from nextcell.channel import CsiTrace

gains = arrays(np.float64, st.integers(2, 400),
               elements=st.floats(1e-12, 1e3, allow_nan=False, allow_infinity=False))
ratios = st.floats(0.001, 1.0, exclude_min=True)


def test_truncate_examples():
    x = np.arange(1, 101, dtype=float)
    np.testing.assert_array_equal(ft.truncate(x, 0.6), x[:60])
    np.testing.assert_array_equal(ft.truncate(x, 1.0), x)
    assert len(ft.truncate(np.ones(7), 0.5)) == 4


def test_truncate_csi_trace_keeps_metadata():
    t = CsiTrace(np.arange(1.0, 11.0), 0.02, 5.0, np.zeros((10, 2)))
    p = ft.truncate(t, 0.3)
    assert isinstance(p, CsiTrace) and len(p) == 3
    assert p.t_in == 5.0 and p.positions.shape == (3, 2)


@pytest.mark.parametrize("r", [0.0, -0.1, 1.0001])
def test_truncate_bad_ratio(r):
    with pytest.raises(ft.FeatureError):
        ft.truncate(np.ones(5), r)


def test_truncate_empty():
    with pytest.raises(ft.FeatureError):
        ft.truncate(np.ones(0), 0.5)


@given(st.integers(1, 5000), ratios)
def test_n_kept_is_ceiling(n, r):
    k = ft.n_kept(n, r)
    # exact rational ceiling, guarding float noise in r * n
    assert k == max(1, min(n, math.ceil(round(r * n, 9))))


def test_normalize_constant():
    out = ft.normalize(np.full(37, 0.004), 100)
    np.testing.assert_allclose(out, 10 * math.log10(0.004), rtol=1e-12)
    assert len(out) == 100


def test_normalize_identity_at_length():
    g = np.random.default_rng(0).exponential(size=100)
    np.testing.assert_allclose(ft.normalize(g, 100), 10 * np.log10(g), rtol=1e-12)


def test_normalize_ramp():
    L, n = 100, 200
    db = -60 + 25 * np.arange(n) / (n - 1)
    out = ft.normalize(10 ** (db / 10), L)
    np.testing.assert_allclose(out, -60 + 25 * np.arange(L) / (L - 1), atol=1e-9)


def test_normalize_upsamples_by_interpolation():
    out = ft.normalize(np.array([1.0, 10.0, 1.0]), 5)
    np.testing.assert_allclose(out, [0, 5, 10, 5, 0], atol=1e-12)


def test_normalize_errors():
    with pytest.raises(ft.FeatureError):
        ft.normalize(np.ones(1))
    with pytest.raises(ft.FeatureError):
        ft.normalize(np.array([1.0, 0.0]))


def test_standardize_two_points():
    s, Z = ft.standardize(np.array([[0.0], [2.0]]))
    np.testing.assert_allclose(Z, [[-1.0], [1.0]])


def test_standardize_constant_column():
    s, Z = ft.standardize(np.array([[1.0, 3.0], [2.0, 3.0], [4.0, 3.0]]))
    np.testing.assert_array_equal(Z[:, 1], 0.0)
    assert s.transform(np.array([[0.0, 99.0]]))[0, 1] == 0.0


def test_scaler_held_out():
    rng = np.random.default_rng(1)
    X = rng.normal(3, 2, (50, 4))
    s, _ = ft.standardize(X)
    v = rng.normal(size=4)
    mean = X.sum(0) / len(X)
    std = np.sqrt(((X - mean) ** 2).sum(0) / len(X))
    np.testing.assert_allclose(s.transform(v), (v - mean) / std, rtol=1e-12)


def test_standardize_needs_two_rows():
    with pytest.raises(ft.FeatureError):
        ft.standardize(np.ones((1, 3)))


def test_history_examples():
    with pytest.raises(ft.FeatureError):
        ft.encode_history([0], 2, 4)
    with pytest.raises(ft.FeatureError):
        ft.encode_history([0, 1, 2], 1, 4)
    h = [0, 1, 2, 3] * 2
    v = ft.encode_history(h, 2, 4)
    np.testing.assert_array_equal(v, [0, 0, 1, 0, 0, 0, 0, 1])
    np.testing.assert_array_equal(ft.encode_history([3, 1], 2, 4)[4:], [0, 1, 0, 0])


def test_history_padding():
    v = ft.encode_history([0, 1, 2, 3, 0, 1, 2, 3], 3, 4, width=8)
    assert v.shape == (32,)
    np.testing.assert_array_equal(v[:20], 0)
    np.testing.assert_array_equal(v[20:].reshape(3, 4).argmax(1), [1, 2, 3])
    assert v.sum() == 3


def test_feature_csv_round_trip(tmp_path):
    X = np.random.default_rng(0).normal(size=(5, 7))
    ft.write_feature_csv(tmp_path / "f.csv", X, [1, 2, 3, 4, 1])
    X2, y = ft.read_feature_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, [1, 2, 3, 4, 1])


# -- properties ----------------------------------------------------------------

@given(gains, ratios, ratios)
def test_truncate_prefix(g, r1, r2):
    r1, r2 = sorted((r1, r2))
    a, b = ft.truncate(g, r1), ft.truncate(g, r2)
    assert len(a) <= len(b)
    np.testing.assert_array_equal(a, b[:len(a)])


@given(gains)
def test_truncate_full_is_identity(g):
    np.testing.assert_array_equal(ft.normalize(ft.truncate(g, 1.0)), ft.normalize(g))


@given(gains, st.floats(-5, 5), st.floats(0, 1e4))
def test_normalize_scaling_and_shift(g, log_c, t0):
    c = 10.0 ** log_c
    base = ft.normalize(CsiTrace(g, 0.02, 0.0))
    shifted = ft.normalize(CsiTrace(g, 0.02, t0))
    np.testing.assert_array_equal(base, shifted)
    scaled = ft.normalize(g * c)
    np.testing.assert_allclose(scaled - base, 10 * math.log10(c), atol=1e-8)


@given(gains, st.integers(2, 300))
def test_normalize_length_and_finite(g, L):
    out = ft.normalize(g, L)
    assert out.shape == (L,) and np.all(np.isfinite(out))


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 8)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_standardize_moments(X):
    _, Z = ft.standardize(X)
    spread = X.std(0)
    live = spread > 1e-6 * np.maximum(1.0, np.abs(X).max(0))
    assume(live.any())
    np.testing.assert_allclose(Z[:, live].mean(0), 0, atol=1e-9)
    np.testing.assert_allclose(Z[:, live].var(0), 1, atol=1e-9)
    np.testing.assert_array_equal(Z[:, spread == 0], 0)
