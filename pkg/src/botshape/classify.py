"""Classifiers over feature matrices: logistic regression, linear SVM, MLP, random forest.

Labels are 1 for bot and 0 for genuine. Every model is a :class:`ClassifierModel`
that serializes to versioned JSON and predicts deterministically.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MODEL_FORMAT_VERSION = 1
KINDS = ("logreg", "linear_svm", "mlp", "random_forest")
FEATURE_SETS = ("account", "sequence", "pattern")
STD_FLOOR = 1e-12


class LeakageError(RuntimeError):
    """Raised when a fit step is handed data tagged as a test split."""


# -- feature matrices and scaling ----------------------------------------------------


@dataclass
class FeatureMatrix:
    X: np.ndarray
    column_names: list[str]
    feature_set: str
    account_ids: tuple[str, ...] = ()
    split: str | None = None  # "train", "test" or None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        if len(self.column_names) != self.X.shape[1]:
            raise ValueError(
                f"{len(self.column_names)} column names for {self.X.shape[1]} columns"
            )
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {self.feature_set!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray


def _matrix(X) -> np.ndarray:
    return X.X if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)


def standardize_fit_transform(X) -> tuple[Scaler, np.ndarray]:
    """Fit per-column mean and population std on training data and scale it.

    Constant columns map to zero.
    """
    if isinstance(X, FeatureMatrix) and X.split == "test":
        raise LeakageError("refusing to fit a scaler on a test split")
    A = _matrix(X)
    if A.ndim != 2 or A.shape[0] == 0:
        raise ValueError("standardize_fit_transform needs a non-empty 2-D matrix")
    mean = A.mean(axis=0)
    std = np.maximum(A.std(axis=0), STD_FLOOR)
    scaler = Scaler(mean, std)
    return scaler, standardize_apply(scaler, A)


def standardize_apply(scaler: Scaler, X) -> np.ndarray:
    A = _matrix(X)
    if A.ndim != 2 or A.shape[1] != scaler.mean.size:
        raise ValueError(f"expected {scaler.mean.size} columns, got {A.shape[-1] if A.ndim else 0}")
    out = (A - scaler.mean) / scaler.std
    out[:, scaler.std <= STD_FLOOR] = 0.0
    return out


# -- model container -------------------------------------------------------------


@dataclass
class ClassifierModel:
    kind: str
    n_features: int
    params: dict
    config: dict = field(default_factory=dict)
    trace: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        payload = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "config": self.config,
            "params": _jsonable(self.params),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClassifierModel":
        payload = json.loads(text)
        if payload.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {payload.get('format_version')!r}")
        kind = payload["kind"]
        if kind not in KINDS:
            raise ValueError(f"unknown classifier kind {kind!r}")
        params = payload["params"]
        if kind in ("logreg", "linear_svm"):
            params = {"w": np.asarray(params["w"], dtype=np.float64), "b": float(params["b"])}
        elif kind == "mlp":
            params = {
                "weights": [np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(params["weights"], params["shapes"])],
                "biases": [np.asarray(b, dtype=np.float64) for b in params["biases"]],
                "shapes": [tuple(s) for s in params["shapes"]],
            }
        return cls(kind, payload["n_features"], params, payload["config"])


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _check_binary(y) -> np.ndarray:
    y = np.asarray(y).astype(np.int64).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return y


def _require_two_classes(y: np.ndarray, kind: str) -> None:
    if y.size == 0 or np.all(y == y[0]):
        raise ValueError(f"{kind} needs both classes in training labels")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1pexp(z):
    return np.logaddexp(0.0, z)


# -- logistic regression -------------------------------------------------------------


def logreg_loss_and_grad(w, b, X, y, l2=0.0):
    """Mean cross-entropy plus ``l2/2 * |w|^2`` and its gradient in (w, b)."""
    z = X @ w + b
    loss = np.mean(_log1pexp(z) - y * z) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    gw = X.T @ r / len(y) + l2 * w
    gb = float(np.mean(r))
    return float(loss), gw, gb


def train_logreg(X, y, lr=0.5, epochs=2000, l2=1e-3, seed=0, tol=1e-7) -> ClassifierModel:
    """Full-batch gradient descent from all-zero weights."""
    X = _matrix(X)
    y = _check_binary(y)
    _require_two_classes(y, "logreg")
    w = np.zeros(X.shape[1])
    b = 0.0
    trace = []
    for _ in range(epochs):
        loss, gw, gb = logreg_loss_and_grad(w, b, X, y, l2)
        trace.append(loss)
        if math.sqrt(float(gw @ gw) + gb * gb) < tol:
            break
        w = w - lr * gw
        b = b - lr * gb
    config = {"lr": lr, "epochs": epochs, "l2": l2, "seed": seed, "tol": tol}
    return ClassifierModel("logreg", X.shape[1], {"w": w, "b": b}, config, trace)


# -- linear SVM --------------------------------------------------------------------


def svm_objective(w, b, X, y_pm, C) -> float:
    """``0.5 |w|^2 + C * mean(hinge)`` with labels in {-1, +1}."""
    margins = y_pm * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.mean(np.maximum(0.0, 1.0 - margins)))


def _svm_subgradient(w, b, X, y_pm, C):
    margins = y_pm * (X @ w + b)
    active = margins < 1.0
    n = len(y_pm)
    gw = w - C * (y_pm[active] @ X[active]) / n
    gb = -C * float(np.sum(y_pm[active])) / n
    return gw, gb


def train_linear_svm(
    X, y, lr=0.1, epochs=200, C=10.0, seed=0, batch_size: int | None = 32, decay=0.01
) -> ClassifierModel:
    """Subgradient descent on the L2-regularised hinge loss.

    With ``batch_size`` set, each epoch visits a seeded shuffle of the rows in
    mini-batches with step ``lr / (1 + decay * epoch)``. With
    ``batch_size=None`` the full-batch step is additionally halved until the
    objective does not increase, so the logged objective is non-increasing.
    """
    X = _matrix(X)
    y = _check_binary(y)
    _require_two_classes(y, "linear_svm")
    y_pm = 2.0 * y - 1.0
    rng = np.random.default_rng(seed)
    n = len(y)
    w = np.zeros(X.shape[1])
    b = 0.0
    trace = [svm_objective(w, b, X, y_pm, C)]
    for epoch in range(epochs):
        step = lr / (1.0 + decay * epoch)
        if batch_size is None:
            gw, gb = _svm_subgradient(w, b, X, y_pm, C)
            current = trace[-1]
            for _ in range(40):
                w_new, b_new = w - step * gw, b - step * gb
                obj = svm_objective(w_new, b_new, X, y_pm, C)
                if obj <= current:
                    w, b = w_new, b_new
                    break
                step /= 2
            else:
                obj = current
        else:
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                gw, gb = _svm_subgradient(w, b, X[idx], y_pm[idx], C)
                w = w - step * gw
                b = b - step * gb
            obj = svm_objective(w, b, X, y_pm, C)
        trace.append(obj)
    config = {"lr": lr, "epochs": epochs, "C": C, "seed": seed, "batch_size": batch_size, "decay": decay}
    return ClassifierModel("linear_svm", X.shape[1], {"w": w, "b": b}, config, trace)


# -- multilayer perceptron -------------------------------------------------------------

ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(np.float64)),
}


def init_mlp(n_features: int, hidden_sizes: Sequence[int], seed: int = 0):
    """Glorot-uniform weights and zero biases for a sigmoid-output network."""
    rng = np.random.default_rng(seed)
    sizes = [n_features, *hidden_sizes, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _mlp_forward(weights, biases, X, activation):
    act, _ = ACTIVATIONS[activation]
    acts = [X]
    h = X
    for W, c in zip(weights[:-1], biases[:-1]):
        h = act(h @ W + c)
        acts.append(h)
    z = (h @ weights[-1] + biases[-1]).ravel()
    return acts, z


def mlp_loss_and_grad(weights, biases, X, y, activation="tanh", l2=0.0):
    """Mean cross-entropy (+ ``l2/2`` times squared weights) and backprop gradients."""
    _, dact = ACTIVATIONS[activation]
    acts, z = _mlp_forward(weights, biases, X, activation)
    n = len(y)
    loss = float(np.mean(_log1pexp(z) - y * z)) + 0.5 * l2 * sum(float(np.sum(W * W)) for W in weights)
    delta = ((sigmoid(z) - y) / n)[:, None]
    gws, gbs = [None] * len(weights), [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        gws[layer] = acts[layer].T @ delta + l2 * weights[layer]
        gbs[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * dact(acts[layer])
    return loss, gws, gbs


def train_mlp(
    X, y, hidden_sizes: Sequence[int] = (32,), lr=0.5, epochs=3000, seed=0, activation="tanh", l2=1e-4
) -> ClassifierModel:
    """Full-batch gradient descent on a sigmoid-output MLP."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    X = _matrix(X)
    y = _check_binary(y).astype(np.float64)
    _require_two_classes(y.astype(np.int64), "mlp")
    weights, biases = init_mlp(X.shape[1], hidden_sizes, seed)
    trace = []
    for _ in range(epochs):
        loss, gws, gbs = mlp_loss_and_grad(weights, biases, X, y, activation, l2)
        trace.append(loss)
        weights = [W - lr * g for W, g in zip(weights, gws)]
        biases = [c - lr * g for c, g in zip(biases, gbs)]
    params = {"weights": weights, "biases": biases, "shapes": [W.shape for W in weights]}
    config = {
        "hidden_sizes": list(hidden_sizes),
        "lr": lr,
        "epochs": epochs,
        "seed": seed,
        "activation": activation,
        "l2": l2,
    }
    return ClassifierModel("mlp", X.shape[1], params, config, trace)


# -- random forest -------------------------------------------------------------------


def gini(n_pos, n):
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, np.asarray(n_pos) / np.where(n > 0, n, 1), 0.0)
    return 2.0 * p * (1.0 - p)


def best_gini_split(X: np.ndarray, y: np.ndarray, features: Sequence[int], min_leaf: int = 1):
    """Lowest weighted Gini split over the given features.

    Returns (feature, threshold, impurity) or None when no split leaves
    ``min_leaf`` rows on both sides. Samples with value <= threshold go left.
    """
    n = len(y)
    if n < 2 * min_leaf:
        return None
    feats = np.asarray(features)
    V = X[:, feats]
    order = np.argsort(V, axis=0, kind="stable")
    Vs = np.take_along_axis(V, order, axis=0)
    ys = y[order]
    left_n = np.arange(1, n, dtype=np.float64)[:, None]
    left_pos = np.cumsum(ys, axis=0)[:-1]
    right_pos = ys.sum(axis=0) - left_pos
    impurity = (left_n * gini(left_pos, left_n) + (n - left_n) * gini(right_pos, n - left_n)) / n
    valid = Vs[1:] > Vs[:-1]
    sizes = np.arange(1, n)
    valid &= ((sizes >= min_leaf) & (n - sizes >= min_leaf))[:, None]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    # column-major scan: first feature in subset order, then smallest threshold
    flat = np.argmin(impurity.T)
    j, row = divmod(int(flat), n - 1)
    threshold = (Vs[row, j] + Vs[row + 1, j]) / 2
    return int(feats[j]), float(threshold), float(impurity[row, j])


def _build_tree(X, y, idx, depth, max_depth, min_leaf, max_features, rng) -> dict:
    ys = y[idx]
    n_pos = int(ys.sum())
    leaf = {"value": n_pos / len(idx), "n": int(len(idx))}
    if depth >= max_depth or n_pos in (0, len(idx)):
        return leaf
    width = X.shape[1]
    feats = rng.choice(width, size=max_features, replace=False) if max_features < width else np.arange(width)
    split = best_gini_split(X[idx], ys, feats, min_leaf)
    if split is None:
        return leaf
    f, t, _ = split
    go_left = X[idx, f] <= t
    return {
        "feature": f,
        "threshold": t,
        "left": _build_tree(X, y, idx[go_left], depth + 1, max_depth, min_leaf, max_features, rng),
        "right": _build_tree(X, y, idx[~go_left], depth + 1, max_depth, min_leaf, max_features, rng),
    }


def tree_predict_proba(tree: dict, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))

    def walk(node, rows):
        if rows.size == 0:
            return
        if "feature" not in node:
            out[rows] = node["value"]
            return
        left = X[rows, node["feature"]] <= node["threshold"]
        walk(node["left"], rows[left])
        walk(node["right"], rows[~left])

    walk(tree, np.arange(len(X)))
    return out


def bootstrap_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.integers(0, n, size=n))


def train_random_forest(
    X, y, n_trees=100, max_depth=12, min_leaf=2, seed=0, max_features: int | None = None, bootstrap=True
) -> ClassifierModel:
    """Bagged Gini trees with ``sqrt(width)`` candidate features per node."""
    X = _matrix(X)
    y = _check_binary(y)
    width = X.shape[1]
    if max_features is None:
        max_features = max(1, int(math.sqrt(width)))
    max_features = min(max_features, width)
    config = {
        "n_trees": n_trees,
        "max_depth": max_depth,
        "min_leaf": min_leaf,
        "seed": seed,
        "max_features": max_features,
        "bootstrap": bootstrap,
    }
    if y.size == 0 or np.all(y == y[0]):
        warnings.warn("random forest trained on a single class; model predicts a constant", stacklevel=2)
        constant = int(y[0]) if y.size else 0
        config["degenerate"] = True
        return ClassifierModel("random_forest", width, {"trees": [{"value": float(constant), "n": int(y.size)}]}, config)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        idx = bootstrap_indices(len(y), rng) if bootstrap else np.arange(len(y))
        trees.append(_build_tree(X, y, idx, 0, max_depth, min_leaf, max_features, rng))
    return ClassifierModel("random_forest", width, {"trees": trees}, config)


# -- prediction ----------------------------------------------------------------------


def decision_scores(model: ClassifierModel, X) -> np.ndarray:
    """Bot probability for logreg/mlp/forest, signed margin for the SVM."""
    X = _matrix(X)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[-1] if X.ndim else 0}")
    p = model.params
    if model.kind == "logreg":
        return sigmoid(X @ p["w"] + p["b"])
    if model.kind == "linear_svm":
        return X @ p["w"] + p["b"]
    if model.kind == "mlp":
        _, z = _mlp_forward(p["weights"], p["biases"], X, model.config.get("activation", "tanh"))
        return sigmoid(z)
    if model.kind == "random_forest":
        votes = np.asarray([tree_predict_proba(t, X) > 0.5 for t in p["trees"]], dtype=np.float64)
        return votes.mean(axis=0)
    raise ValueError(f"unknown classifier kind {model.kind!r}")


def predict(model: ClassifierModel, X) -> tuple[np.ndarray, np.ndarray | None]:
    """Labels and, where the model has one, a score in [0, 1].

    Ties (score exactly 0.5, or SVM margin exactly 0) go to the negative class.
    """
    s = decision_scores(model, X)
    if model.kind == "linear_svm":
        return (s > 0).astype(np.int64), None
    return (s > 0.5).astype(np.int64), s


TRAINERS = {
    "logreg": train_logreg,
    "linear_svm": train_linear_svm,
    "mlp": train_mlp,
    "random_forest": train_random_forest,
}

DEFAULT_HYPERPARAMETERS = {
    "logreg": {"lr": 0.5, "epochs": 2000, "l2": 1e-3},
    "linear_svm": {"lr": 0.1, "epochs": 200, "C": 10.0, "batch_size": 32, "decay": 0.01},
    "mlp": {"hidden_sizes": [32], "lr": 0.5, "epochs": 3000, "activation": "tanh", "l2": 1e-4},
    "random_forest": {"n_trees": 100, "max_depth": 12, "min_leaf": 2},
}


def train(kind: str, X, y, seed: int = 0, **hyperparameters) -> ClassifierModel:
    if kind not in TRAINERS:
        raise ValueError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")
    params = {**DEFAULT_HYPERPARAMETERS[kind], **hyperparameters}
    return TRAINERS[kind](X, y, seed=seed, **params)
