"""Gradient-estimation primitives and the estimator-equivalence evaluators.

Four estimation routes share one oracle interface: single-direction finite
differences, full coordinate-wise finite differences, Gaussian-probe NES
(raw = A^T y), and min-norm least squares (raw = A^T (A A^T)^{-1} y). The
equivalence helpers measure and bound the inner-product gap between the last
two on identical probes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditionedProbe
from .oracle import LabeledInput, Point

GRAM_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class ProbeMatrix:
    """Probe directions A (k rows of dimension d) and measured responses y.

    responses[i] estimates the inner product of rows[i] with the gradient at
    the probed point, exactly (linear oracles) or by finite differences.
    """

    rows: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=np.float64))
        resp = np.asarray(self.responses, dtype=np.float64).reshape(-1)
        if rows.shape[0] < 1:
            raise ValueError("need at least one probe row")
        if rows.shape[0] != resp.size:
            raise ValueError(f"{rows.shape[0]} rows but {resp.size} responses")
        if not (np.all(np.isfinite(rows)) and np.all(np.isfinite(resp))):
            raise ValueError("probe rows and responses must be finite")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "responses", resp)

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class GradientEstimate:
    """An estimate with its unit direction and the queries it cost.

    direction is raw normalized to unit l2 norm; a raw of exactly zero (the
    antithetic constant-oracle case) keeps a zero direction.
    """

    raw: np.ndarray
    direction: np.ndarray
    queries_spent: int
    incomplete: bool = False

    @classmethod
    def from_raw(cls, raw: np.ndarray, queries_spent: int) -> "GradientEstimate":
        raw = np.asarray(raw, dtype=np.float64)
        norm = np.linalg.norm(raw)
        direction = raw / norm if norm > 0 else np.zeros_like(raw)
        return cls(raw=raw, direction=direction, queries_spent=queries_spent)


@dataclass(frozen=True)
class BoundInputs:
    k: int
    d: int
    p: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("failure probability p must lie in (0,1)")


def fd_directional(oracle, inp: LabeledInput, v: np.ndarray, delta: float, base_loss: float | None = None) -> float:
    """Forward difference (L(x + delta*v, y) - L(x, y)) / delta.

    Two ledger queries, or one when the caller supplies a cached base loss.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    v = np.asarray(v, dtype=np.float64)
    x = inp.point
    shifted = x.replace_data(x.data + delta * v)
    if base_loss is None:
        base_loss, probe_loss = oracle.loss_batch([x, shifted], inp.label)
    else:
        probe_loss = oracle.loss(LabeledInput(shifted, inp.label))
    return (probe_loss - base_loss) / delta


def fd_full_gradient(oracle, inp: LabeledInput, delta: float) -> GradientEstimate:
    """Coordinate-wise forward differences along all d basis vectors.

    Exactly d+1 queries: the base loss is shared across coordinates.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = inp.point.data
    d = x.size
    points = [inp.point]
    for i in range(d):
        shifted = x.copy()
        shifted[i] += delta
        points.append(inp.point.replace_data(shifted))
    losses = np.asarray(oracle.loss_batch(points, inp.label))
    raw = (losses[1:] - losses[0]) / delta
    return GradientEstimate.from_raw(raw, queries_spent=d + 1)


def gaussian_probe(k: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """k probe rows drawn i.i.d. from N(0, I/d) (expected squared norm 1)."""
    return rng.standard_normal((k, d)) / np.sqrt(d)


def nes_estimate(
    oracle,
    inp: LabeledInput,
    k: int,
    delta: float,
    rng: np.random.Generator,
    antithetic: bool = True,
) -> tuple[GradientEstimate, ProbeMatrix]:
    """Gaussian-probe estimate raw = A^T y.

    Antithetic (default): k/2 fresh directions evaluated at +/- delta, k
    queries total, base loss cancels in the pairing. Without pairing: k
    i.i.d. rows against one shared base loss, k+1 queries. Budget
    exhaustion surfaces from the ledger before any query is booked.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if k < 1:
        raise ValueError("k must be at least 1")
    x = inp.point
    d = x.dimension
    if antithetic:
        if k % 2 != 0:
            raise ValueError("antithetic pairing needs an even k")
        m = k // 2
        u = gaussian_probe(m, d, rng)
        points = []
        for j in range(m):
            points.append(x.replace_data(x.data + delta * u[j]))
            points.append(x.replace_data(x.data - delta * u[j]))
        losses = np.asarray(oracle.loss_batch(points, inp.label))
        pair_resp = (losses[0::2] - losses[1::2]) / (2.0 * delta)
        rows = np.empty((k, d))
        rows[0::2] = u
        rows[1::2] = -u
        responses = np.empty(k)
        responses[0::2] = pair_resp
        responses[1::2] = -pair_resp
        spent = k
    else:
        rows = gaussian_probe(k, d, rng)
        points = [x] + [x.replace_data(x.data + delta * rows[i]) for i in range(k)]
        losses = np.asarray(oracle.loss_batch(points, inp.label))
        responses = (losses[1:] - losses[0]) / delta
        spent = k + 1
    probe = ProbeMatrix(rows=rows, responses=responses)
    raw = probe.rows.T @ probe.responses
    return GradientEstimate.from_raw(raw, queries_spent=spent), probe


def nes_from_probe(probe: ProbeMatrix) -> GradientEstimate:
    """Closed-form A^T y on an already-collected probe."""
    raw = probe.rows.T @ probe.responses
    return GradientEstimate.from_raw(raw, queries_spent=probe.k)


def lsq_estimate(probe: ProbeMatrix) -> GradientEstimate:
    """Min-norm interpolant A^T (A A^T)^{-1} y via a dense symmetric solve."""
    gram = probe.rows @ probe.rows.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_CONDITION_LIMIT:
        raise IllConditionedProbe(float(cond))
    coeffs = scipy.linalg.solve(gram, probe.responses, assume_a="sym")
    raw = probe.rows.T @ coeffs
    return GradientEstimate.from_raw(raw, queries_spent=probe.k)


def equivalence_gap(g_star: np.ndarray, probe: ProbeMatrix) -> float:
    """<x_lsq, g*> - <x_nes, g*> from the two closed forms on one probe."""
    g_star = np.asarray(g_star, dtype=np.float64)
    lsq = lsq_estimate(probe).raw
    nes = probe.rows.T @ probe.responses
    return float((lsq - nes) @ g_star)


def equivalence_bound(b: BoundInputs) -> float:
    """High-probability gap bound, in units of the squared gradient norm:

        8 * sqrt((2k/d) * log^3((2k+2)/p)) * (1 + kappa/sqrt(d)),
        kappa = 2 * sqrt(log(2k(k+1)/p)).
    """
    k, d, p = b.k, b.d, b.p
    kappa = 2.0 * np.sqrt(np.log(2.0 * k * (k + 1) / p))
    value = 8.0 * np.sqrt((2.0 * k / d) * np.log((2.0 * k + 2.0) / p) ** 3) * (1.0 + kappa / np.sqrt(d))
    return float(value)
