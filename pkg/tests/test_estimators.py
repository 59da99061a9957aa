import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.linear_model import LogisticRegression

from rulefuzz import scenarios
from rulefuzz.estimators import DenseBaselineClassifier, RecordFeatures, RuleClassifier


def xy(ds):
    return ds.records, ds.labels


def test_rule_classifier_strict(small_random):
    X, y = xy(small_random)
    clf = RuleClassifier(relaxation="strict", epochs=1).fit(X, y)
    assert clf.n_params_ == 0
    assert clf.score(X, y) == 1.0
    proba = clf.predict_proba(X[:5])
    assert proba.shape == (5, 2) and np.allclose(proba.sum(axis=1), 1)


def test_rule_classifier_custom_rules(small_random):
    X, y = xy(small_random)
    clf = RuleClassifier(rules=scenarios.rules_source("industry", "time-ab"), epochs=2).fit(X, y)
    assert clf.n_params_ == 2 and len(clf.report_.history) == 2


def test_clone_and_params():
    clf = RuleClassifier(relaxation="all", p=5.0)
    twin = clone(clf)
    assert twin.get_params() == clf.get_params() and twin is not clf


def test_not_fitted(small_random):
    with pytest.raises(NotFittedError):
        RuleClassifier().predict(small_random.records)


def test_input_validation(small_random):
    X, y = xy(small_random)
    with pytest.raises(ValueError, match="labels"):
        RuleClassifier(epochs=1).fit(X, y[:-1])
    with pytest.raises(TypeError):
        RuleClassifier(epochs=1).fit([1, 2, 3], [0, 1, 0])
    with pytest.raises(ValueError):
        RuleClassifier(epochs=1).fit(X, np.full(len(X), 2))


def test_dense_baseline(small_random):
    X, y = xy(small_random)
    clf = DenseBaselineClassifier(depth=1, width=128, epochs=2).fit(X, y)
    assert clf.n_params_ == 1281
    assert set(np.unique(clf.predict(X))) <= {0, 1}


def test_record_features_in_pipeline(small_random):
    X, y = xy(small_random)
    feats = RecordFeatures().fit(X)
    assert feats.transform(X).shape == (400, 8) and feats.n_features_out_ == 8
    pipe = make_pipeline(RecordFeatures(), LogisticRegression()).fit(X, y)
    assert pipe.score(X, y) > 0.5


def test_estimator_deterministic(small_random):
    X, y = xy(small_random)
    a = RuleClassifier(relaxation="time-right", epochs=2, random_state=3).fit(X, y).predict_proba(X)
    b = RuleClassifier(relaxation="time-right", epochs=2, random_state=3).fit(X, y).predict_proba(X)
    assert np.array_equal(a, b)
