"""Base learners: decision tree, boosted trees, feedforward net, support-vector regressor.

All learners are regressors. Tree kinds route missing values along learned
default directions; the other two impute training-column means and
standardize inputs with training statistics. Every fit first puts the rows
into a canonical order, so results do not depend on how the caller ordered
the training set.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..errors import FitError, UnsupportedOperation, ValidationError
from ._tree import Tree, grow_tree

FORMAT_VERSION = 1

KINDS = ("tree", "boosted-trees", "feedforward", "support-vector")
TREE_KINDS = ("tree", "boosted-trees")

DEFAULTS: dict[str, dict[str, Any]] = {
    "tree": {"max_depth": 4, "min_samples_leaf": 5},
    "boosted-trees": {"rounds": 100, "learning_rate": 0.1, "max_depth": 3,
                      "min_child_weight": 5.0, "l2_penalty": 1.0, "subsample": 1.0},
    "feedforward": {"layers": [32, 16], "activation": "relu", "epochs": 500,
                    "step_size": 1e-3, "l2_penalty": 1e-4},
    "support-vector": {"kernel": "rbf", "regularization": 1.0, "epsilon": 0.1, "gamma": "median"},
}

ACTIVATIONS = {
    "relu": lambda a: np.maximum(a, 0.0),
    "tanh": np.tanh,
    "logistic": lambda a: 1.0 / (1.0 + np.exp(-a)),
    "identity": lambda a: a,
}


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValidationError(f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        hp = {**DEFAULTS[self.kind], **self.hyperparameters}
        object.__setattr__(self, "hyperparameters", hp)
        _check_hyperparameters(self.kind, hp)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(self.kind, dict(self.hyperparameters), int(seed))

    def to_dict(self) -> dict:
        hp = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.hyperparameters.items()}
        return {"kind": self.kind, "hyperparameters": hp, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LearnerSpec":
        return cls(d["kind"], dict(d.get("hyperparameters", {})), int(d.get("seed", 0)))


def _check_hyperparameters(kind, hp):
    def positive_int(name, allow_none=False, allow_zero=False):
        v = hp[name]
        if v is None and allow_none:
            return
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < (0 if allow_zero else 1):
            raise ValidationError(f"{kind}: {name} must be a positive integer, got {v!r}")

    if kind == "tree":
        positive_int("max_depth", allow_none=True)
        positive_int("min_samples_leaf")
    elif kind == "boosted-trees":
        positive_int("rounds", allow_zero=True)
        positive_int("max_depth")
        if not 0 < hp["learning_rate"] <= 1:
            raise ValidationError("boosted-trees: learning_rate must be in (0, 1]")
        if not 0 < hp["subsample"] <= 1:
            raise ValidationError("boosted-trees: subsample must be in (0, 1]")
        if hp["min_child_weight"] <= 0 or hp["l2_penalty"] < 0:
            raise ValidationError("boosted-trees: min_child_weight must be > 0 and l2_penalty >= 0")
    elif kind == "feedforward":
        if not hp["layers"] or any(int(w) < 1 for w in hp["layers"]):
            raise ValidationError("feedforward: layers must be a non-empty list of positive widths")
        if hp["activation"] not in ACTIVATIONS:
            raise ValidationError(f"feedforward: activation must be one of {sorted(ACTIVATIONS)}")
        positive_int("epochs")
        if hp["step_size"] <= 0:
            raise ValidationError("feedforward: step_size must be > 0")
    else:
        if hp["kernel"] not in ("linear", "rbf"):
            raise ValidationError("support-vector: kernel must be 'linear' or 'rbf'")
        if hp["regularization"] <= 0 or hp["epsilon"] < 0:
            raise ValidationError("support-vector: regularization must be > 0 and epsilon >= 0")
        g = hp["gamma"]
        if g != "median" and not (isinstance(g, (int, float)) and g > 0):
            raise ValidationError("support-vector: gamma must be 'median' or a positive number")


class Model:
    """A fitted base learner. Subclasses hold the kind-specific parameters."""

    spec: LearnerSpec
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"feature width mismatch: model trained on {self.n_features}, got {X.shape[1]}")
        return self._predict(X)

    def importance(self) -> np.ndarray:
        raise UnsupportedOperation(f"gain importance is only defined for tree kinds, not {self.spec.kind!r}")

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "spec": self.spec.to_dict(),
                "n_features": self.n_features, **self._params()}


class _TreeEnsemble(Model):
    def __init__(self, spec, n_features, base_score, trees, training_loss=None):
        self.spec = spec
        self.n_features = n_features
        self.base_score = float(base_score)
        self.trees = list(trees)
        self.training_loss = list(training_loss or [])

    @property
    def feature_importance(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        for t in self.trees:
            total += t.gain_by_feature(self.n_features)
        return np.maximum(total, 0.0)

    def importance(self) -> np.ndarray:
        g = self.feature_importance
        s = g.sum()
        return g / s if s > 0 else g

    def _predict(self, X):
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out += t.predict(X)
        return out

    def _params(self):
        return {"base_score": self.base_score, "trees": [t.to_dict() for t in self.trees],
                "training_loss": [float(v) for v in self.training_loss]}


class TreeModel(_TreeEnsemble):
    pass


class BoostedTreesModel(_TreeEnsemble):
    pass


class _ImputingModel(Model):
    """Shared input handling for the kinds that cannot route missing values."""

    imputation_vector: np.ndarray
    input_scale: np.ndarray

    def _inputs(self, X):
        X = np.where(np.isnan(X), self.imputation_vector, X)
        return (X - self.imputation_vector) / self.input_scale


class FeedforwardModel(_ImputingModel):
    def __init__(self, spec, n_features, imputation_vector, input_scale, weights, biases):
        self.spec = spec
        self.n_features = n_features
        self.imputation_vector = np.asarray(imputation_vector, float)
        self.input_scale = np.asarray(input_scale, float)
        self.weights = [np.asarray(w, float) for w in weights]
        self.biases = [np.asarray(b, float) for b in biases]

    def _predict(self, X):
        act = ACTIVATIONS[self.spec.hyperparameters["activation"]]
        a = self._inputs(X)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = act(a @ W + b)
        return (a @ self.weights[-1] + self.biases[-1]).ravel()

    def _params(self):
        return {"imputation_vector": self.imputation_vector.tolist(),
                "input_scale": self.input_scale.tolist(),
                "layers": [{"weights": W.tolist(), "bias": b.tolist()}
                           for W, b in zip(self.weights, self.biases)]}


class SupportVectorModel(_ImputingModel):
    def __init__(self, spec, n_features, imputation_vector, input_scale, support_vectors,
                 dual_coef, intercept, gamma):
        self.spec = spec
        self.n_features = n_features
        self.imputation_vector = np.asarray(imputation_vector, float)
        self.input_scale = np.asarray(input_scale, float)
        self.support_vectors = np.asarray(support_vectors, float).reshape(-1, n_features)
        self.dual_coef = np.asarray(dual_coef, float).ravel()
        self.intercept = float(intercept)
        self.gamma = float(gamma)

    def _predict(self, X):
        Z = self._inputs(X)
        if self.support_vectors.shape[0] == 0:
            return np.full(Z.shape[0], self.intercept)
        if self.spec.hyperparameters["kernel"] == "linear":
            K = Z @ self.support_vectors.T
        else:
            K = np.exp(-self.gamma * cdist(Z, self.support_vectors, "sqeuclidean"))
        return K @ self.dual_coef + self.intercept

    def _params(self):
        return {"imputation_vector": self.imputation_vector.tolist(),
                "input_scale": self.input_scale.tolist(),
                "support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist(),
                "intercept": self.intercept, "gamma": self.gamma}


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError(f"expected a 2-D feature matrix, got shape {X.shape}")
    return X


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row permutation sorting by features (column 0 first), then target."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def fit(spec: LearnerSpec, features, targets) -> Model:
    X = _as_matrix(features)
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValidationError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
    if X.shape[0] < 2:
        raise FitError("at least 2 training rows are required")
    if X.shape[1] == 0:
        raise FitError("feature matrix has no columns")
    if not np.all(np.isfinite(y)):
        raise ValidationError("targets must be finite and non-missing")
    if np.isinf(X).any():
        raise ValidationError("features must be finite or missing (nan)")
    empty = np.isnan(X).all(axis=0)
    if empty.any():
        warnings.warn(f"feature columns {np.flatnonzero(empty).tolist()} are entirely missing "
                      "and carry no information", stacklevel=2)
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    return _FITTERS[spec.kind](spec, X, y, ~empty)


def _fit_tree(spec, X, y, usable):
    hp = spec.hyperparameters
    if X.shape[0] < hp["min_samples_leaf"]:
        raise FitError(f"tree: {X.shape[0]} rows is fewer than min_samples_leaf={hp['min_samples_leaf']}")
    tree = grow_tree(X, y, hp["max_depth"], hp["min_samples_leaf"], 0.0, usable)
    # grown on raw targets, so the root weight already carries the mean
    return TreeModel(spec, X.shape[1], 0.0, [tree])


def _fit_boosted(spec, X, y, usable):
    hp = spec.hyperparameters
    if X.shape[0] < hp["min_child_weight"]:
        raise FitError(f"boosted-trees: {X.shape[0]} rows is fewer than min_child_weight")
    rng = np.random.default_rng(spec.seed)
    n = X.shape[0]
    base = float(y.mean())
    pred = np.full(n, base)
    loss = [float(np.mean((y - pred) ** 2))]
    trees = []
    n_sub = max(2, int(round(hp["subsample"] * n)))
    for _ in range(hp["rounds"]):
        r = y - pred
        if hp["subsample"] < 1.0 and n_sub < n:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
            t = grow_tree(X[rows], r[rows], hp["max_depth"], hp["min_child_weight"],
                          hp["l2_penalty"], usable, hp["learning_rate"])
        else:
            t = grow_tree(X, r, hp["max_depth"], hp["min_child_weight"],
                          hp["l2_penalty"], usable, hp["learning_rate"])
        pred = pred + t.predict(X)
        trees.append(t)
        loss.append(float(np.mean((y - pred) ** 2)))
    return BoostedTreesModel(spec, X.shape[1], base, trees, loss)


def _input_stats(X, usable):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.where(usable, np.nanmean(np.where(usable, X, 0.0), axis=0), 0.0)
        scale = np.where(usable, np.nanstd(np.where(usable, X, 0.0), axis=0), 1.0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return mean, scale


def _fit_feedforward(spec, X, y, usable):
    from sklearn.exceptions import ConvergenceWarning
    from sklearn.neural_network import MLPRegressor

    hp = spec.hyperparameters
    mean, scale = _input_stats(X, usable)
    Z = (np.where(np.isnan(X), mean, X) - mean) / scale
    net = MLPRegressor(hidden_layer_sizes=tuple(int(w) for w in hp["layers"]),
                       activation=hp["activation"], solver="adam", alpha=hp["l2_penalty"],
                       learning_rate_init=hp["step_size"], max_iter=hp["epochs"],
                       random_state=spec.seed, shuffle=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        net.fit(Z, y)
    return FeedforwardModel(spec, X.shape[1], mean, scale,
                            [w.copy() for w in net.coefs_], [b.copy() for b in net.intercepts_])


def median_heuristic_gamma(Z: np.ndarray) -> float:
    """RBF ``gamma = 1 / (2 sigma^2)`` with sigma the median pairwise distance."""
    if Z.shape[0] < 2:
        return 1.0
    d = pdist(Z)
    med = float(np.median(d))
    return 1.0 / (2.0 * med * med) if med > 0 else 1.0


def _fit_support_vector(spec, X, y, usable):
    from sklearn.svm import SVR

    hp = spec.hyperparameters
    mean, scale = _input_stats(X, usable)
    Z = (np.where(np.isnan(X), mean, X) - mean) / scale
    gamma = median_heuristic_gamma(Z) if hp["gamma"] == "median" else float(hp["gamma"])
    svr = SVR(kernel=hp["kernel"], C=hp["regularization"], epsilon=hp["epsilon"], gamma=gamma)
    svr.fit(Z, y)
    return SupportVectorModel(spec, X.shape[1], mean, scale, svr.support_vectors_,
                              svr.dual_coef_.ravel(), float(svr.intercept_[0]), gamma)


_FITTERS = {
    "tree": _fit_tree,
    "boosted-trees": _fit_boosted,
    "feedforward": _fit_feedforward,
    "support-vector": _fit_support_vector,
}


def predict(model: Model, features) -> np.ndarray:
    return model.predict(features)


def importance(model: Model, names=None):
    """Normalized gain per feature; a ``{name: gain}`` dict when names are given."""
    g = model.importance()
    if names is None:
        return g
    if len(names) != len(g):
        raise ValidationError("one name is required per model feature")
    return dict(zip(names, (float(v) for v in g)))


def model_from_dict(d: Mapping) -> Model:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {d.get('format_version')!r}")
    spec = LearnerSpec.from_dict(d["spec"])
    n = int(d["n_features"])
    if spec.kind in TREE_KINDS:
        cls = TreeModel if spec.kind == "tree" else BoostedTreesModel
        return cls(spec, n, d["base_score"], [Tree.from_dict(t) for t in d["trees"]],
                   d.get("training_loss"))
    if spec.kind == "feedforward":
        return FeedforwardModel(spec, n, d["imputation_vector"], d["input_scale"],
                                [np.array(L["weights"], float).reshape(-1, len(L["bias"]))
                                 for L in d["layers"]],
                                [L["bias"] for L in d["layers"]])
    return SupportVectorModel(spec, n, d["imputation_vector"], d["input_scale"],
                              d["support_vectors"], d["dual_coef"], d["intercept"], d["gamma"])


def save_model(model: Model, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")
    return path


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
