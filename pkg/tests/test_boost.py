import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geofer.boost import (BoostResult, ElmParams, candidate_seed, samme_select, samme_select_retrain,
                          select_from_bank, standardize_stack, strong_classify, train_candidates)
from geofer.features import enumerate_elements, line
from oracles import samme_trace

# 4 samples, 3 candidates, K = 3. Hand-executed run:
#   round 1: w = 1/4 each; errs (1/4, 1/4, 1/2) -> tie, lowest element wins -> c0,
#            alpha = log(3) + log(2) = log 6; sample 2 weight x6 -> w = (1, 1, 6, 1) / 9
#   round 2: c1 err = 1/9, c2 err = 2/9 -> c1, alpha = log(8) + log(2) = log 16
HAND_LABELS = np.array([0, 1, 2, 0])
HAND_TABLE = np.array([[0, 0, 1],
                       [1, 0, 1],
                       [1, 2, 2],
                       [0, 0, 2]])
HAND_ELEMENTS = [line(0, 1), line(0, 2), line(1, 2)]


def test_hand_trace():
    r = samme_select(HAND_TABLE, HAND_LABELS, 2, 3, elements=HAND_ELEMENTS, keep_history=True)
    assert r.selected == (line(0, 1), line(0, 2))
    np.testing.assert_allclose(r.errors, [1 / 4, 1 / 9], rtol=0, atol=1e-12)
    np.testing.assert_allclose(r.alphas, [math.log(6), math.log(16)], rtol=0, atol=1e-12)
    np.testing.assert_allclose(r.weight_history[1], [1 / 9, 1 / 9, 6 / 9, 1 / 9], atol=1e-12)


def test_k6_err_one_sixth():
    labels = np.arange(6)
    table = labels.copy()[:, None]
    table[0, 0] = 1                        # one miss in six -> err = 1/6
    r = samme_select(table, labels, 1, 6)
    assert r.errors[0] == pytest.approx(1 / 6, abs=1e-15)
    assert r.alphas[0] == pytest.approx(2 * math.log(5), abs=1e-12)
    assert r.alphas[0] == pytest.approx(3.2189, abs=1e-4)


def test_perfect_candidate_is_clamped():
    labels = np.array([0, 1, 1, 0])
    r = samme_select(np.stack([labels, 1 - labels], axis=1), labels, 1, 2)
    assert r.selected == (0,)
    assert np.isfinite(r.alphas[0]) and r.alphas[0] == pytest.approx(math.log((1 - 1e-10) / 1e-10))


def test_early_stop_warns():
    labels = np.array([0, 1, 0, 1])
    table = np.stack([labels, 1 - labels], axis=1)    # second candidate is always wrong
    with pytest.warns(RuntimeWarning, match="stopped after 1"):
        r = samme_select(table, labels, 2, 2)
    assert r.M == 1


def test_errors():
    with pytest.raises(ValueError, match="empty"):
        samme_select(np.zeros((3, 0), int), np.zeros(3, int), 1, 2)
    with pytest.raises(ValueError, match="exceeds"):
        samme_select(np.zeros((3, 2), int), np.zeros(3, int), 3, 2)
    with pytest.raises(ValueError):
        samme_select(np.zeros((3, 2), int), np.zeros(3, int), 1, 1)


tables = st.tuples(st.integers(1, 8), st.integers(1, 5), st.integers(2, 4), st.integers(0, 2**32 - 1))


@given(tables)
def test_matches_exact_fraction_oracle(spec):
    n, E, K, seed = spec
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, K, n)
    table = np.where(rng.random((n, E)) < 0.6, labels[:, None], rng.integers(0, K, (n, E)))
    expected = samme_trace(table.tolist(), labels.tolist(), E, K)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r = samme_select(table, labels, E, K)
    assert list(r.selected) == [c for c, _, _ in expected]
    for got_e, got_a, (_, err, alpha) in zip(r.errors, r.alphas, expected):
        assert got_e == pytest.approx(float(err), abs=1e-12)
        assert got_a == pytest.approx(alpha, abs=1e-12)


@given(tables)
def test_invariants(spec):
    n, E, K, seed = spec
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, K, n)
    table = np.where(rng.random((n, E)) < 0.7, labels[:, None], rng.integers(0, K, (n, E)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r = samme_select(table, labels, E, K, keep_history=True)
    assert len(set(r.selected)) == r.M
    assert np.all(r.errors < 1 - 1 / K) and np.all(r.alphas > 0) and np.all(np.isfinite(r.alphas))
    for m, w in enumerate(r.weight_history):
        assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)
        if m + 1 < len(r.weight_history):
            c = r.selected[m]
            missed = table[:, c] != labels
            if 1e-10 < r.errors[m] and missed.any() and (~missed).any():
                ratio = r.weight_history[m + 1] / w
                assert ratio[missed].min() > ratio[~missed].max()


@given(tables)
def test_permutation_invariance(spec):
    n, E, K, seed = spec
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, K, n)
    table = np.where(rng.random((n, E)) < 0.6, labels[:, None], rng.integers(0, K, (n, E)))
    elements = enumerate_elements("line", 6)[:E]
    perm = rng.permutation(E)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a = samme_select(table, labels, E, K, elements=elements)
        b = samme_select(table[:, perm], labels, E, K, elements=[elements[p] for p in perm])
    assert a.selected == b.selected
    np.testing.assert_array_equal(a.alphas, b.alphas)


def test_head_equals_shorter_run():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, 20)
    table = np.where(rng.random((20, 12)) < 0.6, labels[:, None], rng.integers(0, 3, (20, 12)))
    full = samme_select(table, labels, 8, 3)
    short = samme_select(table, labels, 3, 3)
    assert full.head(3).selected == short.selected
    np.testing.assert_array_equal(full.head(3).alphas, short.alphas)


def test_strong_classify():
    r = BoostResult((line(0, 1),), np.array([0.7]), np.array([0.2]), 6)
    assert strong_classify(r, {line(0, 1): 4}) == 4
    r2 = BoostResult((line(0, 1), line(0, 2)), np.array([1.0, 1.0]), np.array([0.2, 0.2]), 6)
    assert strong_classify(r2, [5, 2]) == 2
    with pytest.raises(KeyError):
        strong_classify(r2, {line(0, 1): 1})


def _blobs(seed, n_per=15, K=6, E=8):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(K), n_per)
    centers = rng.normal(0, 1, (E, K, 3))
    X = {line(0, e + 1): centers[e][labels] + rng.normal(0, 1.2, (len(labels), 3)) for e in range(E)}
    return X, labels


def test_train_candidates_shape_and_determinism():
    X, labels = _blobs(1, n_per=2, K=5, E=3)
    labels = labels[:10]
    X = {k: v[:10] for k, v in X.items()}
    a = train_candidates(X, labels, 5, ElmParams(n_hidden=5), master_seed=3)
    b = train_candidates(X, labels, 5, ElmParams(n_hidden=5), master_seed=3)
    assert a.predictions.shape == (10, 3)
    np.testing.assert_array_equal(a.predictions, b.predictions)


def test_candidate_seed_depends_on_element_only():
    assert candidate_seed(7, line(0, 1)) == candidate_seed(7, line(0, 1))
    assert candidate_seed(7, line(0, 1)) != candidate_seed(7, line(0, 2))
    assert candidate_seed(7, line(0, 1)) != candidate_seed(8, line(0, 1))


def test_strong_classifier_beats_best_weak():
    X, labels = _blobs(2)
    bank = train_candidates(X, labels, 6, ElmParams(n_hidden=20), master_seed=0)
    r = select_from_bank(bank, labels, 20, 6)
    col = {e: c for c, e in enumerate(bank.elements)}
    strong = [strong_classify(r, {e: bank.predictions[i, col[e]] for e in r.selected})
              for i in range(len(labels))]
    best_weak = max(np.mean(bank.predictions[:, c] == labels) for c in range(len(bank.elements)))
    assert np.mean(np.array(strong) == labels) >= best_weak


def test_standardize_stack():
    X = np.random.default_rng(0).normal(3, 5, (2, 50, 3))
    X[1, :, 2] = 4.0
    Z = standardize_stack(X)
    np.testing.assert_allclose(Z.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(Z[0].std(axis=0), 1, atol=1e-12)
    np.testing.assert_array_equal(Z[1, :, 2], 0)


def test_retrain_mode_runs():
    X, labels = _blobs(3, n_per=6, K=3, E=4)
    elements = list(X)

    def chunks():
        return [(elements, np.stack([X[e] for e in elements]), [])]

    r = samme_select_retrain(chunks, labels, 3, 3, ElmParams(n_hidden=8), master_seed=1)
    assert 1 <= r.M <= 3 and len(set(r.selected)) == r.M
    assert np.all(r.alphas > 0)


def test_selection_file_round_trip(tmp_path):
    r = samme_select(HAND_TABLE, HAND_LABELS, 2, 3, elements=HAND_ELEMENTS)
    r.save(tmp_path / "sel.csv")
    back = BoostResult.load(tmp_path / "sel.csv")
    assert back.selected == r.selected and back.K == 3
    np.testing.assert_array_equal(back.alphas, r.alphas)
    text = (tmp_path / "sel.csv").read_text().splitlines()
    assert text[1] == "round,kind,i,j,k,alpha,err"
