"""Projection geometry and the attack drivers.

Four estimator routes share one PGD loop: white-box (diagnostic gradient),
coordinate-wise finite differences, NES resampled every iteration, and the
bandit latent carried across iterations (optionally at tile resolution).
Every iterate is projected to the epsilon ball and, for images, to [0,1].
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bandit import (
    BanditHyper,
    LatentState,
    TilingSpec,
    eg_update,
    gd_update,
    latent_to_image,
    spherical_grad_est,
)
from .errors import BudgetExhausted, DegenerateGradient, TransportError
from .estimators import fd_full_gradient, nes_estimate
from .oracle import LabeledInput, Point

WHITEBOX_ITERATION_CAP = 500


@dataclass(frozen=True)
class Whitebox:
    """PGD on the oracle's analytic gradient; spends no queries."""

    name = "whitebox"


@dataclass(frozen=True)
class CoordinateFd:
    """Full finite-difference gradient, d+1 queries per iteration."""

    delta: float = 0.01
    name = "coordinate_fd"

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class Nes:
    """Gaussian-probe estimate refreshed every iteration (no carry-over).

    lr overrides the config-level image step when set.
    """

    k: int = 50
    delta: float = 0.01
    lr: float | None = None
    name = "nes"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.lr is not None and self.lr <= 0:
            raise ValueError("lr must be positive when set")


@dataclass(frozen=True)
class Bandit:
    """Latent bandit estimator: time prior always on, data prior optional.

    The image step size comes from hyper.h_image; tile sets the data-prior
    pooling factor (used only when data_prior is true).
    """

    hyper: BanditHyper
    data_prior: bool = False
    tile: int = 2

    @property
    def name(self) -> str:
        return "bandits_td" if self.data_prior else "bandits_t"

    def __post_init__(self):
        if self.tile < 1:
            raise ValueError("tile must be at least 1")


EstimatorSpec = Whitebox | CoordinateFd | Nes | Bandit


@dataclass(frozen=True)
class AttackConfig:
    norm: str
    epsilon: float
    h: float
    estimator: EstimatorSpec
    max_queries: int = 10_000
    clamp: bool = True
    max_iterations: int | None = None

    def __post_init__(self):
        if self.norm not in {"l2", "linf"}:
            raise ValueError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.h <= 0:
            raise ValueError("image step h must be positive")
        if self.max_queries < 2:
            raise ValueError("max_queries must be at least 2")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be positive when set")


@dataclass(frozen=True)
class AttackOutcome:
    success: bool
    queries_used: int
    adversarial_point: Point
    iterations: int
    aborted: bool = False


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    queries: int
    loss: float
    cosine: float


@dataclass
class AttackTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)


def boundary_project(g: np.ndarray, norm: str) -> np.ndarray:
    """Unit step direction: l2 normalizes, linf takes signs (sign(0) = +1)."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient entries must be finite")
    if norm == "linf":
        return np.where(g >= 0, 1.0, -1.0)
    n = np.linalg.norm(g)
    if n == 0:
        raise DegenerateGradient("cannot project the zero vector onto the l2 sphere")
    return g / n


def ball_project(x: Point, x0: Point, epsilon: float, norm: str, clamp: bool) -> Point:
    """Project onto the epsilon ball around x0, then (optionally) onto [0,1].

    The norm ball comes first so the pixel clamp cannot push the point back
    outside the ball (both are boxes for linf; for l2 the clamp only shrinks
    coordinates toward x0's feasible range).
    """
    offset = x.data - x0.data
    if norm == "linf":
        offset = np.clip(offset, -epsilon, epsilon)
    else:
        n = np.linalg.norm(offset)
        if n > epsilon:
            offset = offset * (epsilon / n)
    out = x0.data + offset
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return x0.replace_data(out)


def fgsm_step(x0: Point, y: int, sign_vector: np.ndarray, epsilon: float) -> Point:
    """Single step x0 + epsilon * signs, clamped to [0,1]."""
    s = np.asarray(sign_vector, dtype=np.float64)
    if not np.all(np.isin(s, (-1.0, 1.0))):
        raise ValueError("sign vector entries must be exactly -1 or +1")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return x0.replace_data(np.clip(x0.data + epsilon * s, 0.0, 1.0))


def _check_feasible(x: Point, x0: Point, config: AttackConfig) -> None:
    offset = x.data - x0.data
    if config.norm == "linf":
        dist = float(np.max(np.abs(offset))) if offset.size else 0.0
    else:
        dist = float(np.linalg.norm(offset))
    if dist > config.epsilon * (1 + 1e-9):
        raise RuntimeError(f"iterate left the {config.norm} ball: {dist} > {config.epsilon}")
    if config.clamp and (x.data.min() < -1e-12 or x.data.max() > 1 + 1e-12):
        raise RuntimeError("iterate left the [0,1] pixel box")


def _trace_loss(oracle, inp: LabeledInput) -> float:
    if oracle.supports_gradients:
        return oracle.diagnostic_loss(inp)
    return math.nan


def _trace_cosine(oracle, inp: LabeledInput, estimate: np.ndarray) -> float:
    if not oracle.supports_gradients:
        return math.nan
    g = oracle.true_gradient(inp)
    ng, ne = np.linalg.norm(g), np.linalg.norm(estimate)
    if ng == 0 or ne == 0:
        return math.nan
    return float(estimate @ g / (ne * ng))


def _bandit_setup(spec: Bandit, config: AttackConfig, x0: Point):
    tiling = None
    if spec.data_prior:
        if x0.shape is None:
            side = int(round(math.sqrt(x0.dimension)))
            if side * side != x0.dimension:
                raise ValueError("data prior needs an image shape or a square dimension")
            dims = (side, side, 1)
        else:
            dims = x0.shape
        tiling = TilingSpec(tile=spec.tile, dims=dims)
    constraint = "box" if config.norm == "linf" else "unconstrained"
    d_latent = tiling.latent_size if tiling is not None else x0.dimension
    return LatentState.zeros(d_latent, constraint, tiling)


def run_attack(oracle, inp: LabeledInput, config: AttackConfig, rng: np.random.Generator):
    """Run one PGD attack; returns (AttackOutcome, AttackTrace).

    The oracle is re-handled with a fresh ledger capped at max_queries, so
    outcomes of parallel runs never share accounting. Stops at the first
    misclassified iterate, on budget exhaustion, or at the iteration cap.
    Transport failures abort the run (aborted=True, not a plain failure).
    """
    work = oracle.fresh(max_queries=config.max_queries)
    x0 = inp.point
    y = inp.label
    if work.top_class(x0) != y:
        raise ValueError("input is already misclassified; attack precondition requires label == top_class")

    spec = config.estimator
    is_bandit = isinstance(spec, Bandit)
    state = _bandit_setup(spec, config, x0) if is_bandit else None
    if isinstance(spec, Nes) and spec.lr is not None:
        step_size = spec.lr
    elif is_bandit:
        step_size = spec.hyper.h_image
    else:
        step_size = config.h

    cap = config.max_iterations
    if cap is None and isinstance(spec, Whitebox):
        cap = WHITEBOX_ITERATION_CAP

    trace = AttackTrace()
    x = x0
    iterations = 0
    success = False
    aborted = False
    try:
        while True:
            if cap is not None and iterations >= cap:
                break
            iterations += 1
            x_prev = x

            # One estimate per iteration. The bandit reads its latent first
            # and refreshes it after the image step (pre-step point), so the
            # time prior carries across iterations.
            if is_bandit:
                estimate = latent_to_image(state.v, state.tiling)
            elif isinstance(spec, Whitebox):
                estimate = work.true_gradient(LabeledInput(x, y))
            elif isinstance(spec, CoordinateFd):
                try:
                    estimate = fd_full_gradient(work, LabeledInput(x, y), spec.delta).raw
                except BudgetExhausted:
                    break
            else:
                try:
                    estimate, _ = nes_estimate(work, LabeledInput(x, y), spec.k, spec.delta, rng)
                    estimate = estimate.raw
                except BudgetExhausted:
                    break

            if np.any(estimate != 0):
                step = boundary_project(estimate, config.norm)
                moved = x.replace_data(x.data + step_size * step)
                x = ball_project(moved, x0, config.epsilon, config.norm, config.clamp)
                _check_feasible(x, x0, config)

            row_inp = LabeledInput(x, y)
            trace.append(
                TraceRow(
                    iteration=iterations,
                    queries=work.ledger.loss_queries,
                    loss=_trace_loss(work, row_inp),
                    cosine=_trace_cosine(work, row_inp, estimate),
                )
            )
            if work.top_class(x) != y:
                success = True
                break

            if is_bandit:
                try:
                    delta = spherical_grad_est(work, LabeledInput(x_prev, y), state, spec.hyper, rng)
                except BudgetExhausted:
                    break
                update = eg_update if state.constraint == "box" else gd_update
                state = update(state, -delta, spec.hyper.eta_oco)

            if work.ledger.remaining is not None and work.ledger.remaining < 2:
                break
    except TransportError:
        aborted = True

    if success:
        success = work.top_class(x) != y
    outcome = AttackOutcome(
        success=success,
        queries_used=work.ledger.loss_queries,
        adversarial_point=x,
        iterations=iterations,
        aborted=aborted,
    )
    return outcome, trace
