import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nextcell import svm
from nextcell.svm import KernelParams

from qp_oracle import gaussian_gram, solve as qp_solve

RBF1 = KernelParams("gaussian", 1.0)
LINEAR = KernelParams("linear")


def random_instance(rng, n_max=20):
    n = int(rng.integers(6, n_max + 1))
    X = rng.normal(size=(n, 2))
    y = np.where(np.sin(2 * X[:, 0]) + X[:, 1] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    if abs(y.sum()) == n:
        y[0] = -y[0]
    return X, y


# -- kernel ------------------------------------------------------------------

def test_kernel_identity_is_one():
    x = np.array([0.3, -1.2, 4.0])
    assert svm.kernel(x, x, RBF1) == 1.0


def test_kernel_unit_distance():
    assert svm.kernel([0.0, 0.0], [1.0, 0.0], RBF1) == pytest.approx(np.exp(-1.0))
    assert svm.kernel([0.0, 0.0], [1.0, 0.0], RBF1) == pytest.approx(0.36787944, abs=1e-8)


def test_kernel_length_mismatch():
    with pytest.raises(svm.SvmError):
        svm.kernel([1.0, 2.0], [1.0], RBF1)


def test_linear_kernel_is_dot():
    assert svm.kernel([1.0, 2.0], [3.0, -1.0], LINEAR) == 1.0


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(1e-3, 10))
def test_kernel_symmetric(x, z, gamma):
    p = KernelParams("gaussian", gamma)
    assert svm.kernel(x, z, p) == svm.kernel(z, x, p)


def test_kernel_params_validate():
    with pytest.raises(svm.SvmError):
        KernelParams("gaussian", 0.0)
    with pytest.raises(svm.SvmError):
        KernelParams("gaussian", float("inf"))
    with pytest.raises(svm.SvmError):
        KernelParams("poly", 1.0)


def test_gram_matrix_psd():
    rng = np.random.default_rng(3)
    for _ in range(20):
        X = rng.normal(size=(int(rng.integers(5, 40)), int(rng.integers(1, 6))))
        K = svm.kernel_matrix(X, X, KernelParams("gaussian", float(rng.uniform(0.05, 5))))
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_kernel_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    X, Z = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
    K = svm.kernel_matrix(X, Z, RBF1)
    for i in range(5):
        for j in range(4):
            assert K[i, j] == pytest.approx(svm.kernel(X[i], Z[j], RBF1), rel=1e-12)


def test_lru_cache_matches_full_matrix():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    full = svm.KernelCache(X, RBF1)
    small = svm.KernelCache(X, RBF1, max_bytes=8 * 30 * 5)
    assert small.full is None
    for i in [0, 5, 9, 0, 17, 29, 5, 3, 1, 2, 8]:
        np.testing.assert_allclose(small.row(i), full.row(i), rtol=1e-12)
    assert len(small._rows) <= small.capacity
    X2, y2 = random_instance(np.random.default_rng(2))
    a = svm.train_binary(X2, y2, 1.0, RBF1, tol=1e-8)
    b = svm.train_binary(X2, y2, 1.0, RBF1, tol=1e-8, cache_bytes=8 * len(y2) * 3)
    np.testing.assert_allclose(a.info["alpha"], b.info["alpha"], atol=1e-10)


# -- binary training -----------------------------------------------------------

def test_symmetric_pair_linear():
    X = np.array([[-1.0], [1.0]])
    y = np.array([-1.0, 1.0])
    m = svm.train_binary(X, y, 10.0, LINEAR)
    assert len(m.dual_coef) == 2
    assert m.info["n_sv"] == 2
    lab, val = svm.predict_binary(m, [0.0])
    assert val == pytest.approx(0.0, abs=1e-9)
    assert lab == 1  # zero decision value goes to +1
    for x, t in zip(X, y):
        lab, val = svm.predict_binary(m, x)
        assert lab == t
        assert abs(val) >= 1 - 1e-3


def test_xor_gaussian():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    m = svm.train_binary(X, y, 10.0, RBF1)
    for x, t in zip(X, y):
        assert svm.predict_binary(m, x)[0] == t


def test_single_class_rejected():
    with pytest.raises(svm.SvmError):
        svm.train_binary(np.zeros((3, 2)), np.ones(3), 1.0, RBF1)


def test_decision_value_hand_expanded():
    sv = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    coef = np.array([0.7, -0.4, -0.3])
    m = svm.BinarySvmModel(sv, coef, 0.25, KernelParams("gaussian", 0.5), 1.0)
    x = np.array([0.5, 0.5])
    expect = (0.7 * np.exp(-0.5 * 0.5) - 0.4 * np.exp(-0.5 * 0.5)
              - 0.3 * np.exp(-0.5 * (0.25 + 2.25)) + 0.25)
    assert svm.predict_binary(m, x)[1] == pytest.approx(expect, rel=1e-12)


def test_iteration_cap_raises():
    X, y = random_instance(np.random.default_rng(5))
    with pytest.raises(svm.ConvergenceError):
        svm.train_binary(X, y, 10.0, RBF1, tol=1e-12, max_iter=2)


def test_dual_feasibility_and_kkt():
    rng = np.random.default_rng(11)
    for _ in range(30):
        X, y = random_instance(rng, 40)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        p = KernelParams("gaussian", float(rng.choice([0.1, 1.0])))
        tol = 1e-3
        m = svm.train_binary(X, y, C, p, tol=tol)
        a = m.info["alpha"]
        assert np.all(a >= 0) and np.all(a <= C)
        assert abs(a @ y) <= 1e-8
        assert np.all(np.abs(m.dual_coef) <= C)
        K = svm.kernel_matrix(X, X, p)
        assert svm.kkt_violation(a, y, K, C) <= tol + 1e-9


def test_matches_exact_qp_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(15):
        X, y = random_instance(rng)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        gamma = float(rng.choice([0.1, 1.0]))
        m = svm.train_binary(X, y, C, KernelParams("gaussian", gamma), tol=1e-8)
        K = gaussian_gram(X, X, gamma)
        _, _, obj = qp_solve(K, y, C)
        assert svm.dual_objective(m.info["alpha"], y, K) == pytest.approx(obj, abs=1e-6)


def test_duplicate_point_keeps_predictions():
    rng = np.random.default_rng(8)
    X = np.vstack([rng.normal(-2, 0.4, (6, 2)), rng.normal(2, 0.4, (6, 2))])
    y = np.array([-1.0] * 6 + [1.0] * 6)
    grid = np.stack(np.meshgrid(np.linspace(-4, 4, 15), np.linspace(-4, 4, 15)), -1).reshape(-1, 2)
    base = svm.train_binary(X, y, 10.0, RBF1, tol=1e-8)
    for k in range(len(y)):
        m = svm.train_binary(np.vstack([X, X[k]]), np.append(y, y[k]), 10.0, RBF1, tol=1e-8)
        ref = base.decision_function(grid)
        clear = np.abs(ref) > 1e-3
        np.testing.assert_array_equal((m.decision_function(grid) >= 0)[clear], (ref >= 0)[clear])


# -- multi-class -----------------------------------------------------------------

def blobs(rng, centers, n=20, spread=0.3):
    X = np.vstack([rng.normal(c, spread, (n, len(c))) for c in centers])
    y = np.repeat(np.arange(1, len(centers) + 1), n)
    return X, y


def nearest_centroid(X, centers):
    d = ((X[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1)
    return d.argmin(1) + 1


def test_pairwise_model_count():
    rng = np.random.default_rng(0)
    X, y = blobs(rng, [(0, 0), (3, 0), (0, 3), (3, 3)])
    m = svm.train_multiclass(X, y, 1.0, RBF1)
    assert len(m.models) == 6
    assert set(m.models) == {(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)}


def test_two_classes_reduce_to_binary():
    rng = np.random.default_rng(1)
    X, y = blobs(rng, [(0, 0), (2, 1)])
    m = svm.train_multiclass(X, y, 1.0, RBF1, tol=1e-6)
    b = svm.train_binary(X, np.where(y == 1, 1.0, -1.0), 1.0, RBF1, tol=1e-6)
    grid = rng.normal(1, 2, (50, 2))
    expect = np.where(b.decision_function(grid) >= 0, 1, 2)
    np.testing.assert_array_equal(m.predict(grid), expect)


def test_single_class_multiclass_rejected():
    with pytest.raises(svm.SvmError):
        svm.train_multiclass(np.zeros((4, 2)), [3, 3, 3, 3])


def test_blobs_train_and_holdout_match_centroids():
    rng = np.random.default_rng(4)
    centers = [(0, 0), (4, 0), (2, 4)]
    X, y = blobs(rng, centers)
    m = svm.train_multiclass(X, y, 10.0, KernelParams("gaussian", 0.5))
    assert np.all(m.predict(X) == y)
    np.testing.assert_array_equal(nearest_centroid(X, centers), y)
    Xh, _ = blobs(rng, centers, n=30)
    np.testing.assert_array_equal(m.predict(Xh), nearest_centroid(Xh, centers))


class _Fixed:
    """Stub binary model with a fixed decision sign."""

    def __init__(self, value):
        self.value = value

    def decision_function(self, X):
        return np.full(len(np.atleast_2d(X)), self.value)


def test_unanimous_vote():
    models = {(a, b): _Fixed(1.0 if a == 3 else -1.0) for a, b in
              [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]}
    models[(1, 2)] = _Fixed(1.0)
    m = svm.MultiClassModel((1, 2, 3, 4), models)
    assert svm.predict_multiclass(m, np.zeros(2)) == 3


def test_vote_tie_goes_to_smallest_class():
    # votes: 1 beats 3, 2 beats 1, 2 beats 3 ... arrange {1: 2, 2: 2, 3: 1, 4: 1}
    signs = {(1, 2): -1.0, (1, 3): 1.0, (1, 4): 1.0, (2, 3): 1.0, (2, 4): -1.0, (3, 4): 1.0}
    m = svm.MultiClassModel((1, 2, 3, 4), {k: _Fixed(v) for k, v in signs.items()})
    assert svm.predict_multiclass(m, np.zeros(2)) == 1


# -- grid search -------------------------------------------------------------

def test_grid_single_point():
    rng = np.random.default_rng(0)
    X, y = blobs(rng, [(0, 0), (3, 3)])
    r = svm.grid_search(X, y, [2.0], [0.5], folds=3, rng=rng)
    assert (r.C, r.gamma) == (2.0, 0.5)


def test_grid_tie_break_smallest():
    rng = np.random.default_rng(5)
    X, y = blobs(rng, [(0, 0), (6, 0), (0, 6)], spread=0.2)
    C_grid, g_grid = [0.5, 4.0, 32.0], [0.05, 0.5, 2.0]
    r = svm.grid_search(X, y, C_grid, g_grid, folds=4, rng=np.random.default_rng(1))
    perfect = [k for k, v in r.scores.items() if v == 1.0]
    assert perfect
    assert (r.C, r.gamma) == min(perfect)


def test_grid_reproducible():
    rng = np.random.default_rng(9)
    X, y = blobs(rng, [(0, 0), (1.2, 0), (0, 1.2)], spread=0.6)
    args = ([0.25, 1, 4, 16], [0.1, 1, 10])
    r1 = svm.grid_search(X, y, *args, folds=5, rng=np.random.default_rng(3), subset=0.5)
    r2 = svm.grid_search(X, y, *args, folds=5, rng=np.random.default_rng(3), subset=0.5)
    assert (r1.C, r1.gamma, r1.scores) == (r2.C, r2.gamma, r2.scores)


def test_grid_reduces_folds_for_small_class():
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(0, 1, (10, 2)), rng.normal(3, 1, (3, 2))])
    y = np.array([1] * 10 + [2] * 3)
    r = svm.grid_search(X, y, [1.0], [0.5], folds=5, rng=rng)
    assert r.folds == 3 and r.reduced_folds


def test_grid_validates():
    X, y = blobs(np.random.default_rng(0), [(0, 0), (3, 3)])
    with pytest.raises(svm.SvmError):
        svm.grid_search(X, y, [], [1.0])
    with pytest.raises(svm.SvmError):
        svm.grid_search(X, y, [1.0], [1.0], folds=1)


def test_stratified_folds_balanced():
    labels = np.repeat([1, 2, 3], [10, 20, 7])
    f = svm.stratified_folds(labels, 5, np.random.default_rng(0))
    for c in (1, 2, 3):
        counts = np.bincount(f[labels == c], minlength=5)
        assert counts.max() - counts.min() <= 1


# -- serialization -------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_model_round_trip_exact(seed):
    rng = np.random.default_rng(seed)
    X, y = blobs(rng, [(0, 0), (2, 0), (0, 2)], spread=0.8)
    m = svm.train_multiclass(X, y, 3.0, KernelParams("gaussian", 0.7))
    blob = json.dumps(m.to_dict())
    m2 = svm.MultiClassModel.from_dict(json.loads(blob))
    Xq = rng.normal(1, 2, (40, 2))
    for k in m.models:
        a, b = m.models[k], m2.models[k]
        assert a.bias == b.bias
        np.testing.assert_array_equal(a.dual_coef, b.dual_coef)
        np.testing.assert_array_equal(a.support_vectors, b.support_vectors)
        np.testing.assert_array_equal(a.decision_function(Xq), b.decision_function(Xq))
    np.testing.assert_array_equal(m.predict(Xq), m2.predict(Xq))
