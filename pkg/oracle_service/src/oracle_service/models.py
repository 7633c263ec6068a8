"""Built-in models and the seeded-weights recipe.

Both are wire contracts shared with protocol clients: the weights-file
format, the weight draw order, and the loss formulas must stay exactly as
written so that any client hosting the same weights file computes the same
losses. Arrays are serialized as nested row-major JSON lists; the decimal
round trip at repr precision is bit-exact for float64.
"""

import numpy as np

MLP_HIDDEN = 64

KNOWN_KINDS = ("linear", "quadratic", "softmax", "mlp")


class WeightsError(ValueError):
    """The weights document is malformed or self-inconsistent."""


def cross_entropy(logits: np.ndarray, label: int) -> np.ndarray:
    """Cross-entropy at the true label for a (n, classes) logits batch."""
    z = np.atleast_2d(logits)
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    return lse - z[:, label]


class LinearModel:
    """L(x, y) = <coeffs, x>; the label is ignored."""

    kind = "linear"

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        self.dimension = self.coeffs.size
        self.num_classes = None

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        return xs @ self.coeffs


class QuadraticModel:
    """L(x, y) = 0.5 * ||x - center||^2; the label is ignored."""

    kind = "quadratic"

    def __init__(self, center: np.ndarray):
        self.center = np.asarray(center, dtype=np.float64)
        self.dimension = self.center.size
        self.num_classes = None

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        diff = xs - self.center
        return 0.5 * np.einsum("ij,ij->i", diff, diff)


class SoftmaxModel:
    """Affine logits W x + b with cross-entropy loss at the true label."""

    kind = "softmax"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise WeightsError("softmax weights must be (classes, dimension) with matching bias")
        self.num_classes, self.dimension = self.w.shape

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        return xs @ self.w.T + self.b

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        return cross_entropy(self.logits_batch(xs), label)


class MlpModel:
    """One tanh hidden layer of 64 units with cross-entropy loss."""

    kind = "mlp"

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w2.shape[1] != self.w1.shape[0]:
            raise WeightsError("hidden layer shapes disagree")
        if self.b1.shape != (self.w1.shape[0],) or self.b2.shape != (self.w2.shape[0],):
            raise WeightsError("bias shapes disagree with weight matrices")
        self.num_classes = self.w2.shape[0]
        self.dimension = self.w1.shape[1]

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        h = np.tanh(xs @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        return cross_entropy(self.logits_batch(xs), label)


def seeded_weights(kind: str, dimension: int, num_classes: int, seed: int) -> dict:
    """Deterministic weight draw for a built-in target.

    Contract: a single ``default_rng(seed)`` stream, matrices drawn
    row-major in the order listed below, scaled by 1/sqrt(fan-in), biases
    zero. The draw order must never change.
    """
    rng = np.random.default_rng(seed)
    if kind == "linear":
        return {"coeffs": rng.standard_normal(dimension)}
    if kind == "quadratic":
        return {"center": rng.standard_normal(dimension)}
    if kind == "softmax":
        w = rng.standard_normal((num_classes, dimension)) / np.sqrt(dimension)
        return {"w": w, "b": np.zeros(num_classes)}
    if kind == "mlp":
        w1 = rng.standard_normal((MLP_HIDDEN, dimension)) / np.sqrt(dimension)
        w2 = rng.standard_normal((num_classes, MLP_HIDDEN)) / np.sqrt(MLP_HIDDEN)
        return {"w1": w1, "b1": np.zeros(MLP_HIDDEN), "w2": w2, "b2": np.zeros(num_classes)}
    raise WeightsError(f"no seeded weights for kind {kind!r}")


_ARRAY_NAMES = {
    "linear": ("coeffs",),
    "quadratic": ("center",),
    "softmax": ("w", "b"),
    "mlp": ("w1", "b1", "w2", "b2"),
}


def _model_from_arrays(kind: str, weights: dict):
    missing = [name for name in _ARRAY_NAMES[kind] if name not in weights]
    if missing:
        raise WeightsError(f"weights document is missing arrays: {', '.join(missing)}")
    arrays = {}
    for name in _ARRAY_NAMES[kind]:
        try:
            arrays[name] = np.asarray(weights[name], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise WeightsError(f"array {name!r} is not numeric and rectangular") from exc
        if not np.all(np.isfinite(arrays[name])):
            raise WeightsError(f"array {name!r} contains non-finite entries")
    if kind == "linear":
        return LinearModel(arrays["coeffs"])
    if kind == "quadratic":
        return QuadraticModel(arrays["center"])
    if kind == "softmax":
        return SoftmaxModel(arrays["w"], arrays["b"])
    return MlpModel(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"])


def build_model(doc: dict):
    """Model instance from a weights document.

    The document carries kind, dimension, num_classes, and either a seed or
    explicit weight arrays; explicit arrays take precedence over the seed.
    The declared dimension and num_classes must match what the arrays (or
    the seeded draw) produce.
    """
    if not isinstance(doc, dict):
        raise WeightsError("weights document must be a JSON object")
    kind = doc.get("kind")
    if kind not in KNOWN_KINDS:
        raise WeightsError(f"unknown model kind {kind!r}")
    try:
        dimension = int(doc["dimension"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightsError("weights document needs an integer dimension") from exc
    if dimension < 1:
        raise WeightsError("dimension must be positive")
    num_classes = doc.get("num_classes")
    if num_classes is not None:
        num_classes = int(num_classes)
        if num_classes < 2:
            raise WeightsError("classifiers need at least 2 classes")
    if kind in ("softmax", "mlp") and num_classes is None:
        raise WeightsError(f"{kind} weights need num_classes")

    if "weights" in doc:
        model = _model_from_arrays(kind, doc["weights"])
    elif "seed" in doc:
        model = _model_from_arrays(
            kind, seeded_weights(kind, dimension, num_classes or 0, int(doc["seed"]))
        )
    else:
        raise WeightsError("weights document needs either a seed or explicit arrays")

    if model.dimension != dimension:
        raise WeightsError(
            f"declared dimension {dimension} does not match arrays ({model.dimension})"
        )
    if model.num_classes != num_classes:
        raise WeightsError(
            f"declared num_classes {num_classes} does not match arrays ({model.num_classes})"
        )
    return model


def weights_document(kind: str, dimension: int, num_classes: int | None, seed: int) -> dict:
    """Seed-form weights document for a built-in target."""
    doc = {"kind": kind, "dimension": dimension, "num_classes": num_classes, "seed": seed}
    build_model(doc)
    return doc
