import numpy as np
import pytest
from hypothesis import given, strategies as st

from geofer.elm import (ElmModel, elm_predict, elm_predict_batch, fit_predict_stack, hidden_output,
                        load_elm, one_hot, pseudoinverse, random_hidden, save_elm, train_elm)
from oracles import elm_normal_equations


def penrose_residuals(M, P):
    return (np.abs(M @ P @ M - M).max(), np.abs(P @ M @ P - P).max(),
            np.abs((M @ P).T - M @ P).max(), np.abs((P @ M).T - P @ M).max())


def test_pinv_identity_and_column():
    np.testing.assert_allclose(pseudoinverse(np.eye(4)), np.eye(4), atol=1e-15)
    np.testing.assert_allclose(pseudoinverse(np.array([[1.0], [1.0]])), [[0.5, 0.5]], atol=1e-15)


def test_pinv_random_full_rank():
    M = np.random.default_rng(0).normal(size=(10, 4))
    assert max(penrose_residuals(M, pseudoinverse(M))) < 1e-8


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 12), st.integers(0, 2**32 - 1))
def test_pinv_penrose_rank_deficient(n, m, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, n, m)
    M = rng.normal(size=(n, r)) @ rng.normal(size=(r, m))
    assert max(penrose_residuals(M, pseudoinverse(M))) < 1e-8


def test_pinv_stack_and_errors():
    A = np.random.default_rng(1).normal(size=(5, 6, 3))
    stacked = pseudoinverse(A)
    for k in range(5):
        np.testing.assert_allclose(stacked[k], pseudoinverse(A[k]), atol=1e-12)
    with pytest.raises(ValueError):
        pseudoinverse(np.array([[1.0, np.nan]]))


def _problem(seed, n=40, d=3, K=3):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.integers(0, K, n)


@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_normal_equation_oracle(seed, L):
    X, y = _problem(seed)
    model = train_elm(X, y, n_hidden=L, seed=seed, n_classes=3)
    expected = elm_normal_equations(X, y, L, seed, 3)
    np.testing.assert_allclose(model.output_weights, expected, rtol=0, atol=1e-7)
    w = np.random.default_rng(seed + 1).uniform(0.1, 5.0, len(y))
    weighted = train_elm(X, y, n_hidden=L, seed=seed, n_classes=3, sample_weights=w)
    np.testing.assert_allclose(weighted.output_weights, elm_normal_equations(X, y, L, seed, 3, w),
                               rtol=0, atol=1e-7)


def test_square_invertible_hidden_layer():
    X, y = _problem(2, n=8)
    model = train_elm(X, y, n_hidden=8, seed=5, n_classes=3)
    H = model.hidden(X)
    np.testing.assert_allclose(model.output_weights, np.linalg.inv(H) @ one_hot(y, 3), atol=1e-8)
    np.testing.assert_allclose(H @ model.output_weights, one_hot(y, 3), atol=1e-8)
    pred, _ = elm_predict_batch(model, X)
    np.testing.assert_array_equal(pred, y)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_uniform_weights_and_scaling_invariance(seed, c):
    X, y = _problem(seed)
    base = train_elm(X, y, n_hidden=12, seed=3)
    uniform = train_elm(X, y, n_hidden=12, seed=3, sample_weights=np.full(len(y), c))
    np.testing.assert_allclose(uniform.output_weights, base.output_weights, atol=1e-8)
    w = np.random.default_rng(seed).uniform(0.5, 2.0, len(y))
    a = train_elm(X, y, n_hidden=12, seed=3, sample_weights=w)
    b = train_elm(X, y, n_hidden=12, seed=3, sample_weights=c * w)
    np.testing.assert_allclose(a.output_weights, b.output_weights, atol=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_least_squares_optimality(seed):
    X, y = _problem(seed, n=60)
    model = train_elm(X, y, n_hidden=20, seed=seed)
    H, T = model.hidden(X), one_hot(y, model.n_classes)
    assert np.abs(H.T @ (H @ model.output_weights - T)).max() < 1e-6
    w = np.random.default_rng(seed).uniform(0.2, 3.0, len(y))
    wm = train_elm(X, y, n_hidden=20, seed=seed, sample_weights=w)
    r = np.sqrt(w)[:, None]
    assert np.abs((r * H).T @ (r * H @ wm.output_weights - r * T)).max() < 1e-6


def test_hidden_weights_uniform_in_unit_box():
    W, b = random_hidden(11, 500, 4)
    assert W.shape == (500, 4) and b.shape == (500,)
    assert W.min() >= -1 and W.max() <= 1 and abs(W.mean()) < 0.05


def test_determinism():
    X, y = _problem(0)
    a = train_elm(X, y, n_hidden=30, seed=9)
    b = train_elm(X, y, n_hidden=30, seed=9)
    assert a.output_weights.tobytes() == b.output_weights.tobytes()
    c = train_elm(X, y, n_hidden=30, seed=10)
    assert not np.array_equal(a.input_weights, c.input_weights)


def test_zero_output_weights_tie_break():
    model = ElmModel(np.ones((3, 2)), np.zeros(3), np.zeros((3, 4)))
    cat, scores = elm_predict(model, np.array([0.3, -0.2]))
    assert cat == 0
    np.testing.assert_array_equal(scores, 0)


def test_interpolates_a_training_point():
    X, y = _problem(4, n=5)
    model = train_elm(X, y, n_hidden=10, seed=1)
    for x, label in zip(X, y):
        assert elm_predict(model, x)[0] == label


def test_separable_blobs():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(-2, 1, (100, 2)), rng.normal(2, 1, (100, 2))])
    y = np.repeat([0, 1], 100)
    model = train_elm(X, y, n_hidden=50, seed=0)
    pred, _ = elm_predict_batch(model, X)
    assert np.mean(pred == y) >= 0.99


def test_stack_matches_single_models():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(6, 30, 4))
    y = rng.integers(0, 3, 30)
    seeds = [11, 12, 13, 14, 15, 16]
    stacked = fit_predict_stack(X, y, 3, seeds, n_hidden=10)
    for e in range(6):
        single, _ = elm_predict_batch(train_elm(X[e], y, n_hidden=10, seed=seeds[e], n_classes=3), X[e])
        np.testing.assert_array_equal(stacked[e], single)


def test_ridge_option():
    X, y = _problem(1)
    m = train_elm(X, y, n_hidden=10, seed=0, ridge=0.5)
    H, T = m.hidden(X), one_hot(y, m.n_classes)
    np.testing.assert_allclose((H.T @ H + 0.5 * np.eye(10)) @ m.output_weights, H.T @ T, atol=1e-10)


@pytest.mark.parametrize("kwargs", [dict(n_hidden=0), dict(X=np.zeros((0, 2)), labels=np.zeros(0, int))])
def test_train_errors(kwargs):
    args = dict(X=np.zeros((3, 2)), labels=np.array([0, 1, 0]), n_hidden=5)
    args.update(kwargs)
    with pytest.raises(ValueError):
        train_elm(**args)


def test_predict_dimension_mismatch():
    m = train_elm(np.zeros((3, 2)), np.array([0, 1, 0]), n_hidden=4)
    with pytest.raises(ValueError):
        elm_predict(m, np.zeros(3))


def test_model_file_round_trip(tmp_path):
    X, y = _problem(3)
    m = train_elm(X, y, n_hidden=7, seed=2, activation="tanh")
    save_elm(m, tmp_path / "m.npz")
    back = load_elm(tmp_path / "m.npz")
    assert back.activation == "tanh" and back.seed == 2
    np.testing.assert_array_equal(back.output_weights, m.output_weights)
    np.testing.assert_array_equal(hidden_output(X, back.input_weights, back.biases, "tanh"), m.hidden(X))
