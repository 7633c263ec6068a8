"""Loss oracles with strict query accounting.

Built-in deterministic targets (linear, quadratic, softmax, mlp) expose exact
losses, top classes, and analytic gradients. A remote client speaks the JSON
wire protocol (POST /v1/loss, POST /v1/top_class, GET /v1/meta). Every loss
evaluation is charged to a QueryLedger; classification checks and diagnostic
gradients are free.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import requests

from .errors import BudgetExhausted, DiagnosticsUnavailable, TransportError

MLP_HIDDEN = 64


@dataclass(frozen=True)
class Point:
    """A dense real vector, optionally carrying an image shape (H, W, C).

    Flattening order is row-major: height, then width, then channel.
    """

    data: np.ndarray
    shape: tuple[int, int, int] | None = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 1:
            arr = arr.reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point entries must be finite")
        if self.shape is not None:
            h, w, c = self.shape
            if h * w * c != arr.size:
                raise ValueError(f"shape {self.shape} does not match vector length {arr.size}")
        object.__setattr__(self, "data", arr)

    @property
    def dimension(self) -> int:
        return self.data.size

    def replace_data(self, data: np.ndarray) -> "Point":
        return Point(data, self.shape)


@dataclass(frozen=True)
class LabeledInput:
    point: Point
    label: int

    def __post_init__(self):
        if self.label < 0:
            raise ValueError("label must be a non-negative class index")


@dataclass
class QueryLedger:
    """Exact count of loss-oracle evaluations; the budget currency of a run.

    ``charge`` either books the full batch or raises BudgetExhausted without
    booking anything, so the count never overshoots the cap.
    """

    loss_queries: int = 0
    cap: int | None = None

    def charge(self, n: int = 1) -> None:
        if n < 1:
            raise ValueError("charge must book at least one query")
        if self.cap is not None and self.loss_queries + n > self.cap:
            raise BudgetExhausted(self.loss_queries, self.cap, n)
        self.loss_queries += n

    @property
    def remaining(self) -> int | None:
        if self.cap is None:
            return None
        return self.cap - self.loss_queries


@dataclass(frozen=True)
class OracleDescriptor:
    """Names a target: a seeded built-in or a remote endpoint."""

    kind: str
    dimension: int = 0
    num_classes: int = 10
    seed: int = 0
    endpoint: str | None = None

    def __post_init__(self):
        if self.kind not in {"linear", "quadratic", "softmax", "mlp", "remote"}:
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.kind != "remote" and self.dimension < 1:
            raise ValueError("built-in oracles need a positive dimension")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote oracle needs an endpoint")


def _cross_entropy(logits: np.ndarray, label: int) -> np.ndarray:
    """Cross-entropy at the true label, stable under large logits.

    Works on a single logit vector or a (n, classes) batch.
    """
    z = np.atleast_2d(logits)
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    out = lse - z[:, label]
    return out if logits.ndim == 2 else out[0]


class LinearModel:
    """L(x, y) = <coeffs, x>; the label is ignored."""

    kind = "linear"

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        self.dimension = self.coeffs.size
        self.num_classes = None

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        return xs @ self.coeffs

    def gradient(self, x: np.ndarray, label: int) -> np.ndarray:
        return self.coeffs.copy()


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

    def gradient(self, x: np.ndarray, label: int) -> np.ndarray:
        return x - self.center


class SoftmaxModel:
    """Affine logits W x + b with cross-entropy loss at the true label."""

    kind = "softmax"

    def __init__(self, w: np.ndarray, b: np.ndarray):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.num_classes, self.dimension = self.w.shape

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        return xs @ self.w.T + self.b

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        return _cross_entropy(self.logits_batch(xs), label)

    def gradient(self, x: np.ndarray, label: int) -> np.ndarray:
        z = self.logits_batch(x[None, :])[0]
        p = np.exp(z - z.max())
        p /= p.sum()
        p[label] -= 1.0
        return self.w.T @ p


class MlpModel:
    """One tanh hidden layer of 64 units with cross-entropy loss."""

    kind = "mlp"

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.num_classes, hidden = self.w2.shape
        if hidden != self.w1.shape[0]:
            raise ValueError("hidden layer shapes disagree")
        self.dimension = self.w1.shape[1]

    def logits_batch(self, xs: np.ndarray) -> np.ndarray:
        h = np.tanh(xs @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2

    def loss_batch(self, xs: np.ndarray, label: int) -> np.ndarray:
        return _cross_entropy(self.logits_batch(xs), label)

    def gradient(self, x: np.ndarray, label: int) -> np.ndarray:
        a = self.w1 @ x + self.b1
        h = np.tanh(a)
        z = self.w2 @ h + self.b2
        p = np.exp(z - z.max())
        p /= p.sum()
        p[label] -= 1.0
        dh = self.w2.T @ p
        da = dh * (1.0 - h * h)
        return self.w1.T @ da


def seeded_weights(kind: str, dimension: int, num_classes: int, seed: int) -> dict:
    """Deterministic weight draw for a built-in target.

    The draw order is part of the weights-file contract: a single
    ``default_rng(seed)`` stream, matrices drawn row-major in the order
    listed below, scaled by 1/sqrt(fan-in), biases zero.
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
    raise ValueError(f"no seeded weights for kind {kind!r}")


def model_from_weights(kind: str, weights: dict):
    if kind == "linear":
        return LinearModel(weights["coeffs"])
    if kind == "quadratic":
        return QuadraticModel(weights["center"])
    if kind == "softmax":
        return SoftmaxModel(weights["w"], weights["b"])
    if kind == "mlp":
        return MlpModel(weights["w1"], weights["b1"], weights["w2"], weights["b2"])
    raise ValueError(f"unknown model kind {kind!r}")


def make_model(desc: OracleDescriptor):
    weights = seeded_weights(desc.kind, desc.dimension, desc.num_classes, desc.seed)
    return model_from_weights(desc.kind, weights)


def weights_payload(model) -> dict:
    """JSON-ready weights document (nested lists, row-major)."""
    arrays = {
        "linear": ("coeffs",),
        "quadratic": ("center",),
        "softmax": ("w", "b"),
        "mlp": ("w1", "b1", "w2", "b2"),
    }[model.kind]
    return {
        "kind": model.kind,
        "dimension": model.dimension,
        "num_classes": model.num_classes,
        "weights": {name: getattr(model, name).tolist() for name in arrays},
    }


class Oracle:
    """Counted handle over a built-in model: one model, one ledger.

    The model is immutable and may be shared; the ledger belongs to a single
    attack run. ``fresh`` spawns a new handle over the same model.
    """

    def __init__(self, model, max_queries: int | None = None, ledger: QueryLedger | None = None):
        self.model = model
        self.ledger = ledger if ledger is not None else QueryLedger(cap=max_queries)

    @property
    def kind(self) -> str:
        return self.model.kind

    @property
    def dimension(self) -> int:
        return self.model.dimension

    @property
    def num_classes(self) -> int | None:
        return self.model.num_classes

    @property
    def is_classifier(self) -> bool:
        return self.model.num_classes is not None

    @property
    def supports_gradients(self) -> bool:
        return True

    def fresh(self, max_queries: int | None = None) -> "Oracle":
        return Oracle(self.model, max_queries=max_queries)

    def _check_point(self, point: Point) -> np.ndarray:
        if point.dimension != self.dimension:
            raise ValueError(f"point dimension {point.dimension} != oracle dimension {self.dimension}")
        return point.data

    def _check_label(self, label: int) -> None:
        if self.is_classifier and not 0 <= label < self.model.num_classes:
            raise ValueError(f"label {label} out of range for {self.model.num_classes} classes")

    def loss(self, inp: LabeledInput) -> float:
        return self.loss_batch([inp.point], inp.label)[0]

    def loss_batch(self, points: Sequence[Point], label: int) -> list[float]:
        if len(points) == 0:
            raise ValueError("empty loss batch")
        self._check_label(label)
        xs = np.stack([self._check_point(p) for p in points])
        self.ledger.charge(len(points))
        losses = self.model.loss_batch(xs, label)
        if not np.all(np.isfinite(losses)):
            raise ValueError("non-finite loss from built-in model (misconfigured weights?)")
        return [float(v) for v in losses]

    def top_class(self, point: Point) -> int:
        """Argmax of the logits, ties toward the lowest index. Never counted."""
        if not self.is_classifier:
            raise ValueError(f"{self.kind} oracle is not a classifier")
        x = self._check_point(point)
        z = self.model.logits_batch(x[None, :])[0]
        return int(np.argmax(z))

    def true_gradient(self, inp: LabeledInput) -> np.ndarray:
        """Analytic input gradient of the loss. Diagnostic only: never counted,
        never available over the wire, not for driving black-box optimizers."""
        x = self._check_point(inp.point)
        self._check_label(inp.label)
        return self.model.gradient(x, inp.label)

    def diagnostic_loss(self, inp: LabeledInput) -> float:
        """Free loss evaluation for traces and experiments; never counted."""
        self._check_label(inp.label)
        x = self._check_point(inp.point)
        val = float(self.model.loss_batch(x[None, :], inp.label)[0])
        if not np.isfinite(val):
            raise ValueError("non-finite loss from built-in model")
        return val


class RemoteOracle:
    """Client for a loss oracle served over the wire protocol.

    Gradients and free diagnostic losses are unavailable by design; only
    /v1/loss (counted) and /v1/top_class (free) can be reached.
    """

    def __init__(
        self,
        endpoint: str,
        max_queries: int | None = None,
        ledger: QueryLedger | None = None,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.ledger = ledger if ledger is not None else QueryLedger(cap=max_queries)
        self.timeout = timeout
        self.session = session or requests.Session()
        meta = self._get("/v1/meta")
        try:
            self.dimension = int(meta["dimension"])
            self.num_classes = int(meta["num_classes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed /v1/meta body: {meta!r}") from exc

    kind = "remote"

    @property
    def is_classifier(self) -> bool:
        return True

    @property
    def supports_gradients(self) -> bool:
        return False

    def fresh(self, max_queries: int | None = None) -> "RemoteOracle":
        clone = object.__new__(RemoteOracle)
        clone.endpoint = self.endpoint
        clone.ledger = QueryLedger(cap=max_queries)
        clone.timeout = self.timeout
        clone.session = self.session
        clone.dimension = self.dimension
        clone.num_classes = self.num_classes
        return clone

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        url = self.endpoint + path
        try:
            resp = self.session.request(method, url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{method} {url}: {exc}") from exc
        if resp.status_code // 100 != 2:
            raise TransportError(f"{method} {url}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(f"{method} {url}: body is not JSON") from exc

    def _get(self, path: str) -> dict:
        return self._request("GET", path)

    def _post(self, path: str, body: dict) -> dict:
        return self._request("POST", path, body)

    def _check_point(self, point: Point) -> list[float]:
        if point.dimension != self.dimension:
            raise ValueError(f"point dimension {point.dimension} != oracle dimension {self.dimension}")
        return point.data.tolist()

    def loss(self, inp: LabeledInput) -> float:
        return self.loss_batch([inp.point], inp.label)[0]

    def loss_batch(self, points: Sequence[Point], label: int) -> list[float]:
        if len(points) == 0:
            raise ValueError("empty loss batch")
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} out of range for {self.num_classes} classes")
        payload = {"points": [self._check_point(p) for p in points], "label": int(label)}
        self.ledger.charge(len(points))
        body = self._post("/v1/loss", payload)
        losses = body.get("losses")
        if not isinstance(losses, list) or len(losses) != len(points):
            raise TransportError(f"malformed /v1/loss body: {body!r}")
        values = [float(v) for v in losses]
        if not all(np.isfinite(values)):
            raise TransportError("non-finite loss from remote oracle")
        return values

    def top_class(self, point: Point) -> int:
        body = self._post("/v1/top_class", {"points": [self._check_point(point)]})
        classes = body.get("classes")
        if not isinstance(classes, list) or len(classes) != 1:
            raise TransportError(f"malformed /v1/top_class body: {body!r}")
        return int(classes[0])

    def true_gradient(self, inp: LabeledInput) -> np.ndarray:
        raise DiagnosticsUnavailable("remote oracles do not expose gradients")

    def diagnostic_loss(self, inp: LabeledInput) -> float:
        raise DiagnosticsUnavailable("remote oracles do not expose free losses")


def make_oracle(desc: OracleDescriptor, max_queries: int | None = None):
    if desc.kind == "remote":
        return RemoteOracle(desc.endpoint, max_queries=max_queries)
    return Oracle(make_model(desc), max_queries=max_queries)
