import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relctl.data import MISSING, Schema, Window
from relctl.errors import ConfigError, DataError
from relctl.predictor import (
    VOCAB_CAP,
    LogisticConfig,
    fit_preprocessor,
    load_external_scores,
    logistic_loss_and_grad,
    score,
    train_builtin,
)


def finite_difference_check(w, b, X, y, l2, h=1e-6):
    _, gw, gb = logistic_loss_and_grad(w, b, X, y, l2)
    analytic = np.r_[gw, gb]
    numeric = np.empty_like(analytic)
    for i in range(w.size + 1):
        wp, wm = w.copy(), w.copy()
        bp = bm = b
        if i < w.size:
            wp[i] += h
            wm[i] -= h
        else:
            bp, bm = b + h, b - h
        lp = logistic_loss_and_grad(wp, bp, X, y, l2)[0]
        lm = logistic_loss_and_grad(wm, bm, X, y, l2)[0]
        numeric[i] = (lp - lm) / (2 * h)
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


class TestPreprocessor:
    def test_median_imputation(self):
        schema = Schema(numeric=("x",))
        pre = fit_preprocessor(np.array([[1.0], [3.0], [np.nan]]), np.empty((3, 0), object), schema)
        assert pre.medians[0] == 2.0
        out = pre.transform(np.array([[np.nan]]), np.empty((1, 0), object))
        assert out[0, 0] == 2.0

    def test_unseen_category_is_all_zero(self):
        schema = Schema(categorical=("c",))
        cat = np.array([["a"], ["b"], ["a"]], dtype=object)
        pre = fit_preprocessor(np.zeros((3, 0)), cat, schema)
        out = pre.transform(np.zeros((2, 0)), np.array([["zzz"], ["a"]], dtype=object))
        np.testing.assert_array_equal(out, [[0, 0], [1, 0]])

    def test_missing_is_its_own_category(self):
        schema = Schema(categorical=("c",))
        cat = np.array([["a"], [MISSING]], dtype=object)
        pre = fit_preprocessor(np.zeros((2, 0)), cat, schema)
        assert pre.width == 2

    def test_all_missing_numeric_names_feature(self):
        schema = Schema(numeric=("income",))
        with pytest.raises(DataError, match="income"):
            fit_preprocessor(np.array([[np.nan], [np.nan]]), np.empty((2, 0), object), schema)

    def test_vocab_cap(self):
        n = VOCAB_CAP + 10
        schema = Schema(categorical=("c",))
        cat = np.array([[f"k{i:04d}"] for i in range(n)], dtype=object)
        pre = fit_preprocessor(np.zeros((n, 0)), cat, schema)
        assert pre.width == VOCAB_CAP + 1
        out = pre.transform(np.zeros((n, 0)), cat)
        assert out[:, VOCAB_CAP].sum() == 10
        assert np.all(out.sum(axis=1) == 1)


class TestLogistic:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 4))
        y = rng.integers(0, 2, 30).astype(float)
        w = rng.normal(size=4)
        assert finite_difference_check(w, float(rng.normal()), X, y, 1e-3) < 1e-5

    def test_zero_init_loss_is_log2(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        y = np.r_[np.zeros(5), np.ones(5)]
        assert logistic_loss_and_grad(np.zeros(3), 0.0, X, y, 0.1)[0] == pytest.approx(np.log(2))

    def test_training_reduces_loss_and_is_deterministic(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(400, 3))
        y = (X[:, 0] + 0.5 * rng.normal(size=400) > 0).astype(int)
        schema = Schema(numeric=("a", "b", "c"))
        cat = np.empty((400, 0), object)
        m1 = train_builtin(X, cat, y, schema, LogisticConfig(epochs=50))
        m2 = train_builtin(X, cat, y, schema, LogisticConfig(epochs=50))
        assert m1.loss_history[-1] < m1.loss_history[0] < np.log(2) + 1e-9
        np.testing.assert_array_equal(m1.weights, m2.weights)
        assert m1.weights[0] > 0

    def test_minibatch_seeded(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(100, 2))
        y = (X[:, 1] > 0).astype(int)
        schema = Schema(numeric=("a", "b"))
        cfg = LogisticConfig(epochs=5, batch_size=16, seed=9)
        cat = np.empty((100, 0), object)
        a = train_builtin(X, cat, y, schema, cfg)
        b = train_builtin(X, cat, y, schema, cfg)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="both classes"):
            train_builtin(np.zeros((3, 1)), np.empty((3, 0), object), np.ones(3), Schema(numeric=("a",)))


def _win(wid, n):
    return Window(wid, np.zeros((n, 0)), np.empty((n, 0), object), np.zeros(n, dtype=np.int8))


class TestExternalScores:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("window_id,row_index,probability\n2010,0,0.1\n2010,1,0.9\n2011,0,0.5\n")
        scores = load_external_scores(p)
        np.testing.assert_array_equal(score(scores, _win(2010, 2)), [0.1, 0.9])
        np.testing.assert_array_equal(score(scores, _win(2011, 1)), [0.5])

    def test_out_of_range_cites_line(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("window_id,row_index,probability\n2010,0,0.1\n2010,1,1.2\n")
        with pytest.raises(DataError, match="line 3"):
            load_external_scores(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("w,r,p\n")
        with pytest.raises(DataError, match="header"):
            load_external_scores(p)

    def test_gap_in_rows(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("window_id,row_index,probability\n2010,0,0.1\n2010,2,0.3\n")
        with pytest.raises(DataError, match="complete"):
            load_external_scores(p)

    def test_missing_window_and_length(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("window_id,row_index,probability\n2010,0,0.1\n")
        scores = load_external_scores(p)
        with pytest.raises(DataError, match="no entry"):
            scores.predict_proba(_win(2011, 1))
        with pytest.raises(DataError, match="rows"):
            scores.predict_proba(_win(2010, 3))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_external_scores(tmp_path / "nope.csv")
