"""One-vs-rest linear SVM trained by dual coordinate descent.

Each class gets an independent L2-regularized L1-hinge binary problem.
The bias is handled as an implicit constant-one feature, so it is updated
inside the same coordinate steps and the dual box constraint [0, C]
applies unchanged.  Training is deterministic for a fixed seed: epoch
permutations come from a seeded generator per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from adired.cache import read_svm_container, write_svm_container

DEFAULT_C = 0.02


@dataclass(frozen=True)
class TrainConfig:
    c: float = DEFAULT_C
    max_epochs: int = 1000
    tol: float = 1e-8  # stop when the per-epoch objective decrease falls below
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"C must be positive, got {self.c}")


@dataclass
class SvmModel:
    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)
    class_labels: tuple
    c: float
    objective_history: dict = field(default_factory=dict)  # label -> [per-epoch]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def primal_objective(w, b, x, y, c):
    margins = 1.0 - y * (x @ w + b)
    hinge = np.maximum(margins, 0.0).sum()
    return 0.5 * (w @ w + b * b) + c * hinge


def _negated_dual(alpha, w, b):
    # the quantity coordinate descent minimizes; decreases at every step
    return 0.5 * (w @ w + b * b) - alpha.sum()


def _train_binary(x, y, cfg: TrainConfig, rng, callback=None):
    """Dual coordinate descent for one binary problem; y in {-1, +1}.

    Returns (w, b, per-epoch solver objectives).  The tracked objective is
    the negated dual: unlike the primal, it is non-increasing under every
    coordinate step, so it doubles as the stopping signal.
    """
    n, d = x.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    b = 0.0
    q_ii = np.einsum("ij,ij->i", x, x) + 1.0  # +1 for the bias feature
    history = [_negated_dual(alpha, w, b)]
    for epoch in range(cfg.max_epochs):
        for i in rng.permutation(n):
            g = y[i] * (x[i] @ w + b) - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == cfg.c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new_alpha = min(max(alpha[i] - g / q_ii[i], 0.0), cfg.c)
                delta = (new_alpha - alpha[i]) * y[i]
                if delta != 0.0:
                    w += delta * x[i]
                    b += delta
                    alpha[i] = new_alpha
        history.append(_negated_dual(alpha, w, b))
        if callback is not None:
            callback(epoch, alpha.copy(), w.copy(), b)
        if history[-2] - history[-1] < cfg.tol:
            break
    return w, b, history


def train(features, cfg: TrainConfig | None = None, callback=None) -> SvmModel:
    """Fit one-vs-rest weights on (vector, label) pairs.

    ``callback(label, epoch, alpha, w, b)`` is invoked once per epoch per
    class; tests use it to watch the dual variables.
    """
    cfg = cfg or TrainConfig()
    if not features:
        raise ValueError("no training data")
    x = np.asarray([np.asarray(v, dtype=np.float64).ravel() for v, _ in features])
    labels = [lbl for _, lbl in features]
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValueError("training data must contain at least two classes")
    dims = {len(np.asarray(v).ravel()) for v, _ in features}
    if len(dims) != 1:
        raise ValueError(f"mixed feature dimensions {sorted(dims)}")
    k, d = len(classes), x.shape[1]
    weights = np.zeros((k, d))
    bias = np.zeros(k)
    history = {}
    for ci, cls in enumerate(classes):
        y = np.where(np.asarray(labels, dtype=object) == cls, 1.0, -1.0)
        rng = np.random.default_rng((cfg.seed, ci))
        cls_callback = None
        if callback is not None:
            cls_callback = lambda e, a, w, b, _cls=cls: callback(_cls, e, a, w, b)
        weights[ci], bias[ci], history[cls] = _train_binary(
            x, y, cfg, rng, cls_callback)
    return SvmModel(weights=weights, bias=bias, class_labels=classes,
                    c=cfg.c, objective_history=history)


def decision_scores(model: SvmModel, vector) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64).ravel()
    if vector.shape[0] != model.dim:
        raise ValueError(f"expected dim {model.dim}, got {vector.shape[0]}")
    return model.weights @ vector + model.bias


def predict(model: SvmModel, vector):
    """Argmax of the per-class scores; ties go to the lowest class index."""
    return model.class_labels[int(np.argmax(decision_scores(model, vector)))]


def accuracy(predictions, truths) -> float:
    """Percentage of correct predictions."""
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    if not predictions:
        raise ValueError("empty evaluation set")
    correct = sum(p == t for p, t in zip(predictions, truths))
    return 100.0 * correct / len(predictions)


def save_model(model: SvmModel, path) -> None:
    write_svm_container(path, model.weights, model.bias,
                        model.class_labels, model.c)


def load_model(path) -> SvmModel:
    weights, bias, labels, c = read_svm_container(path)
    return SvmModel(weights=np.asarray(weights, np.float64),
                    bias=np.asarray(bias, np.float64),
                    class_labels=labels, c=float(c))
