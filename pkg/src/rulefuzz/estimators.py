"""scikit-learn style wrappers around the compile/train pipeline.

``X`` is always a sequence of records (dicts shaped like the dataset
records), since the rules read nested fields rather than a flat matrix.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from . import scenarios
from .baseline import BaselineSpec, build_industry_baseline, features_for
from .data import Dataset, split
from .dsl import load
from .fuzzify import FuzzConfig, compile_bundled, fuzzify
from .train import TrainConfig, decisions, train


def check_records(X) -> list[dict]:
    if isinstance(X, Dataset):
        return list(X.records)
    if isinstance(X, dict) or not hasattr(X, "__len__"):
        raise TypeError("X must be a sequence of record dicts")
    records = list(X)
    if not records:
        raise ValueError("X is empty")
    bad = next((i for i, r in enumerate(records) if not isinstance(r, dict)), None)
    if bad is not None:
        raise TypeError(f"X[{bad}] is {type(records[bad]).__name__}, expected a record dict")
    return records


def check_labels(y, n: int) -> np.ndarray:
    y = column_or_1d(np.asarray(y), warn=True)
    if y.size != n:
        raise ValueError(f"X has {n} records but y has {y.size} labels")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
        y = y.astype(int)
    return y


def _as_dataset(records, y, scenario: str) -> Dataset:
    strata = [r.get("stratum", "-") for r in records]
    recs = [dict(r, label=int(lab), stratum=s) for r, lab, s in zip(records, y, strata)]
    return Dataset(recs, scenario, provenance="estimator")


class RuleClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier built from a relaxed rule.

    Give ``relaxation`` to use a bundled rule file, or ``rules`` with the
    source text of your own. A held-out fraction is used for the per-epoch
    validation history.
    """

    def __init__(self, relaxation="all", rules=None, rule_name=None, scenario="industry", p=10.0,
                 epochs=100, batch_size=100, lr=0.01, epsilon=0.0, validation_fraction=0.1,
                 random_state=1):
        self.relaxation = relaxation
        self.rules = rules
        self.rule_name = rule_name
        self.scenario = scenario
        self.p = p
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.epsilon = epsilon
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _build(self):
        cfg = FuzzConfig(p=self.p, seed=self.random_state)
        if self.rules is not None:
            typed = load(self.rules, scenarios.SCHEMAS[self.scenario])
            return fuzzify(typed, self.rule_name or scenarios.RULE_NAME[self.scenario], cfg)
        return compile_bundled(self.scenario, self.relaxation, cfg)

    def fit(self, X, y):
        records = check_records(X)
        y = check_labels(y, len(records))
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("RuleClassifier is binary; labels must be 0 or 1")
        self.model_ = self._build()
        ds = _as_dataset(records, y, self.scenario)
        tr, va = split(ds, 1 - self.validation_fraction, self.random_state)
        cfg = TrainConfig(self.epochs, self.batch_size, self.lr, self.epsilon, self.random_state)
        self.report_ = train(self.model_, tr, va, cfg)
        self.classes_ = np.array([0, 1])
        self.n_params_ = self.model_.param_count()
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = self.model_.predict_proba(check_records(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        check_is_fitted(self, "model_")
        return decisions(self.model_, self.model_.predict_proba(check_records(X)))


class DenseBaselineClassifier(ClassifierMixin, BaseEstimator):
    """The dense comparison network on the eight engineered industry features."""

    def __init__(self, depth=2, width=256, epsilon=0.1, epochs=100, batch_size=100, lr=0.01,
                 validation_fraction=0.1, random_state=1):
        self.depth = depth
        self.width = width
        self.epsilon = epsilon
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        records = check_records(X)
        y = check_labels(y, len(records))
        self.model_ = build_industry_baseline(BaselineSpec(self.depth, self.width, self.epsilon),
                                              self.random_state)
        tr, va = split(_as_dataset(records, y, "industry"), 1 - self.validation_fraction, self.random_state)
        cfg = TrainConfig(self.epochs, self.batch_size, self.lr, self.epsilon, self.random_state)
        self.report_ = train(self.model_, tr, va, cfg)
        self.classes_ = np.array([0, 1])
        self.n_params_ = self.model_.param_count()
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = self.model_.predict_proba(check_records(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        check_is_fitted(self, "model_")
        return decisions(self.model_, self.model_.predict_proba(check_records(X)))


class RecordFeatures(TransformerMixin, BaseEstimator):
    """Records to the dense feature matrix used by the baselines. Stateless."""

    def __init__(self, scenario="industry", n_workers=4):
        self.scenario = scenario
        self.n_workers = n_workers

    def fit(self, X, y=None):
        check_records(X)
        self.encoder_ = features_for(self.scenario, self.n_workers)
        self.n_features_out_ = self.encoder_.width
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        return self.encoder_.encode(check_records(X))["x"]
