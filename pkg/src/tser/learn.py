"""Regression learners, the direct multi-step forecaster and the training regimes."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import resample as rs
from .errors import ConfigError, ShapeError, TrainingError
from .preprocess import EmbeddedDataset

# Reference search space for the boosted-tree learner; no random search is run here.
LGBM_PARAM_GRID = {
    "num_leaves": [3, 5, 10, 15],
    "max_depth": [-1, 3, 5, 10, 15],
    "lambda_l1": [0.1, 1, 10, 100],
    "lambda_l2": [0.1, 1, 10, 100],
    "learning_rate": [0.05, 0.1, 0.2],
    "min_child_samples": [7, 15, 30],
    "boosting_type": ["gbdt"],
    "num_boost_round": [200],
    "early_stopping_rounds": [30],
}

MAJORITY_GROWTH = 0.5


class Learner(Protocol):
    name: str
    order_sensitive: bool

    def fit(self, X: np.ndarray, y: np.ndarray) -> Learner: ...

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def get_params(self) -> dict: ...


class KNNRegressor:
    """k-nearest-neighbors regression on the lag vector.

    Ties in distance go to the earlier training row. With ``weighted=True``
    neighbors are weighted by inverse distance and an exact match returns
    the mean target of the matching rows.
    """

    name = "knn"
    order_sensitive = False

    def __init__(self, k: int = 10, weighted: bool = False):
        if int(k) < 1:
            raise ConfigError("knn: k must be >= 1")
        self.k = int(k)
        self.weighted = bool(weighted)

    def get_params(self):
        return {"k": self.k, "weighted": self.weighted}

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
            raise TrainingError("knn: need a non-empty 2-D X and a matching y")
        self.X_, self.y_ = X, y
        self.sq_norms_ = (X * X).sum(axis=1)
        return self

    def _distances(self, Xq):
        sq = (Xq * Xq).sum(axis=1)[:, None] - 2.0 * Xq @ self.X_.T + self.sq_norms_[None, :]
        return np.sqrt(np.maximum(sq, 0.0))

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = min(self.k, len(self.X_))
        out = np.empty(len(X))
        for start in range(0, len(X), 256):
            block = X[start:start + 256]
            cols = rs._smallest(self._distances(block), k)[:, :k]
            target = self.y_[cols]
            if self.weighted:
                # exact distances for the chosen neighbors so that matches give 0
                dist = np.linalg.norm(self.X_[cols] - block[:, None, :], axis=2)
                exact = dist == 0
                w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / np.where(exact, 1.0, dist))
                out[start:start + len(cols)] = (w * target).sum(axis=1) / w.sum(axis=1)
            else:
                out[start:start + len(cols)] = target.mean(axis=1)
        return out


class RidgeRegressor:
    """Ridge regression with an unpenalized intercept, solved in closed form."""

    name = "ridge"
    order_sensitive = False

    def __init__(self, alpha: float = 1.0, fit_intercept: bool = True):
        if alpha < 0:
            raise ConfigError("ridge: alpha must be nonnegative")
        self.alpha = float(alpha)
        self.fit_intercept = bool(fit_intercept)

    def get_params(self):
        return {"alpha": self.alpha, "fit_intercept": self.fit_intercept}

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) == 0 or len(X) != len(y):
            raise TrainingError("ridge: need a non-empty 2-D X and a matching y")
        if self.fit_intercept:
            x_mean, y_mean = X.mean(axis=0), y.mean()
        else:
            x_mean, y_mean = np.zeros(X.shape[1]), 0.0
        Xc, yc = X - x_mean, y - y_mean
        p = X.shape[1]
        # augmented least squares == (X'X + alpha I) w = X'y, minimum-norm when singular
        A = np.vstack([Xc, math.sqrt(self.alpha) * np.eye(p)])
        b = np.concatenate([yc, np.zeros(p)])
        self.coef_ = np.linalg.lstsq(A, b, rcond=None)[0]
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.coef_ + self.intercept_


class LightGBMRegressor:
    """Gradient-boosted trees via ``lightgbm`` (optional dependency)."""

    name = "lgbm"
    order_sensitive = True

    def __init__(self, num_boost_round: int = 200, seed: int = 0, **params):
        self.num_boost_round = int(num_boost_round)
        self.seed = int(seed)
        self.params = {"objective": "regression", "verbosity": -1, "deterministic": True,
                       "num_threads": 1, **params}

    def get_params(self):
        return {"num_boost_round": self.num_boost_round, "seed": self.seed, **self.params}

    def fit(self, X, y):
        try:
            import lightgbm as lgb
        except ImportError as exc:
            raise ConfigError("the 'lgbm' learner needs the optional lightgbm package") from exc
        if len(X) == 0:
            raise TrainingError("lgbm: empty training set")
        params = {**self.params, "seed": self.seed}
        self.booster_ = lgb.train(params, lgb.Dataset(np.asarray(X), np.asarray(y)),
                                  num_boost_round=self.num_boost_round)
        return self

    def predict(self, X):
        return self.booster_.predict(np.atleast_2d(np.asarray(X, dtype=float)))


LEARNERS = {"knn": KNNRegressor, "ridge": RidgeRegressor, "lgbm": LightGBMRegressor}


def make_learner(spec: Mapping | str) -> Learner:
    """Build a learner from ``{"name": ..., **params}`` or a bare name."""
    if isinstance(spec, str):
        spec = {"name": spec}
    params = dict(spec)
    name = params.pop("name", None)
    if name not in LEARNERS:
        raise ConfigError(f"unknown learner {name!r}; expected one of {sorted(LEARNERS)}")
    try:
        return LEARNERS[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for learner {name!r}: {exc}") from None


@dataclass(frozen=True, eq=False)
class DirectForecaster:
    """One fitted learner per forecast step."""

    learners: tuple
    q: int
    h: int

    def predict(self, X) -> np.ndarray:
        """Forecasts for a batch of lag vectors, shape (n, h)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.q:
            raise ShapeError(f"expected {self.q} lags, got {X.shape[1]}")
        return np.column_stack([m.predict(X) for m in self.learners])


def fit_direct(dataset: EmbeddedDataset, learner_spec: Mapping | str = "knn", seed: int | None = None) -> DirectForecaster:
    """Fit step ``j`` on ``(x, y[j])`` for every training row.

    Rows are shuffled with ``seed`` first if the learner is order sensitive.
    """
    if len(dataset) == 0:
        raise TrainingError("cannot fit on an empty dataset")
    X, Y = dataset.X, dataset.Y
    learners = []
    for j in range(dataset.h):
        model = make_learner(learner_spec)
        if getattr(model, "order_sensitive", False):
            perm = np.random.default_rng(seed).permutation(len(X))
            model.fit(X[perm], Y[perm, j])
        else:
            model.fit(X, Y[:, j])
        learners.append(model)
    return DirectForecaster(tuple(learners), dataset.q, dataset.h)


def forecast(model: DirectForecaster, x) -> np.ndarray:
    """h-step forecast from a single lag vector (oldest lag first)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.q,):
        raise ShapeError(f"expected a lag vector of length {model.q}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeError("lag vector must be finite")
    return model.predict(x[None, :])[0]


REGIMES = ("LOCAL", "GLOBAL", "TSER", "TSER_LOCAL", "TSER_ALL")


@dataclass(frozen=True)
class Regime:
    name: str
    plan: rs.ResamplePlan | None = field(default=None)

    def __post_init__(self):
        name = str(self.name).upper()
        if name not in REGIMES:
            raise ConfigError(f"unknown regime {self.name!r}; expected one of {REGIMES}")
        object.__setattr__(self, "name", name)
        if name in ("LOCAL", "GLOBAL") and self.plan is not None:
            raise ConfigError(f"{name} takes no resampling plan")
        if name.startswith("TSER") and self.plan is None:
            raise ConfigError(f"{name} needs a resampling plan")
        if name == "TSER_ALL" and self.plan.method not in rs.OVERSAMPLERS:
            raise ConfigError("TSER_ALL needs an oversampling method")

    @property
    def label(self) -> str:
        """Display name such as ``TSER(SMOTE)`` or ``GLOBAL``."""
        if self.plan is None:
            return self.name
        return f"{self.name}({self.plan.method})"

    @classmethod
    def parse(cls, text: str, k: int = 10, ratio: float = 1.0, seed: int = 0) -> Regime:
        """Parse ``GLOBAL``, ``LOCAL`` or ``TSER(SMOTE)``-style method names."""
        text = text.strip().upper()
        if "(" in text:
            if not text.endswith(")"):
                raise ConfigError(f"malformed method {text!r}")
            name, method = text[:-1].split("(", 1)
            return cls(name.strip(), rs.ResamplePlan(method.strip(), k=k, ratio=ratio, seed=seed))
        if text.startswith("TSER"):
            raise ConfigError(f"{text} needs a resampler, e.g. {text}(SMOTE)")
        return cls(text)


def assemble_training_set(dataset: EmbeddedDataset, regime: Regime, target_id: str) -> EmbeddedDataset:
    """Training rows for ``target_id`` under ``regime``."""
    if regime.name == "GLOBAL":
        if not dataset.mask_of(target_id).any():
            raise ConfigError(f"target series {target_id!r} has no rows in the dataset")
        return dataset
    data = rs.label(dataset, target_id)
    if regime.name == "LOCAL":
        return dataset.subset(data.labels == 1)
    plan = regime.plan.with_target(target_id)
    rng = np.random.default_rng(plan.seed)
    if regime.name == "TSER":
        return rs.augment(data, plan, rng=rng)
    if regime.name == "TSER_LOCAL":
        out = rs.augment(data, plan, rng=rng)
        return out.subset(out.origin_id == target_id)
    oversample = rs.OVERSAMPLER_FUNCS[plan.method]
    synth_min = oversample(data, plan, rng=rng)
    n_maj_new = math.ceil(MAJORITY_GROWTH * data.majority.size - rs._EPS)
    synth_maj = oversample(data, plan, n_new=n_maj_new, rng=rng, invert=True)
    return EmbeddedDataset.concat([dataset, synth_min, synth_maj], shift_parents=False)
