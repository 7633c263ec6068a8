"""Bandit-style gradient estimation: latent state, spherical estimator, priors.

The latent vector v lives either in R^n (paired with plain gradient steps) or
in the box [-1,1]^n (paired with exponentiated-gradient steps). A data prior
shrinks the latent to tile resolution via mean pooling; the matching upsample
is nearest-neighbor block replication. The spherical estimator spends exactly
two loss queries per round.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import BudgetExhausted
from .estimators import GradientEstimate
from .oracle import LabeledInput, Point

BOX_MARGIN = 1e-9


@dataclass(frozen=True)
class TilingSpec:
    """Square mean-pool kernel over the spatial dims of an (H, W, C) image."""

    tile: int
    dims: tuple[int, int, int]

    def __post_init__(self):
        h, w, c = self.dims
        if self.tile < 1:
            raise ValueError("tile side must be at least 1")
        if min(h, w, c) < 1:
            raise ValueError("image dims must be positive")
        if h % self.tile or w % self.tile:
            raise ValueError(f"dims {h}x{w} not divisible by tile {self.tile}")

    @property
    def image_size(self) -> int:
        h, w, c = self.dims
        return h * w * c

    @property
    def latent_size(self) -> int:
        return self.image_size // (self.tile * self.tile)


def downsample(image_vector: np.ndarray, spec: TilingSpec) -> np.ndarray:
    """Mean pool with kernel and stride (tile, tile, 1).

    Block means are computed relative to the block's first entry so a
    constant block pools to exactly its constant; this makes downsample an
    exact left inverse of upsample for every tile size.
    """
    h, w, c = spec.dims
    x = np.asarray(image_vector, dtype=np.float64)
    if x.size != spec.image_size:
        raise ValueError(f"expected length {spec.image_size}, got {x.size}")
    t = spec.tile
    blocks = x.reshape(h // t, t, w // t, t, c)
    anchor = blocks[:, :1, :, :1, :]
    return (anchor[:, 0, :, 0, :] + (blocks - anchor).mean(axis=(1, 3))).reshape(-1)


def upsample(latent_vector: np.ndarray, spec: TilingSpec) -> np.ndarray:
    """Nearest-neighbor upscale by the tile factor in both spatial dims."""
    h, w, c = spec.dims
    z = np.asarray(latent_vector, dtype=np.float64)
    if z.size != spec.latent_size:
        raise ValueError(f"expected length {spec.latent_size}, got {z.size}")
    t = spec.tile
    small = z.reshape(h // t, w // t, c)
    big = np.repeat(np.repeat(small, t, axis=0), t, axis=1)
    return big.reshape(-1)


@dataclass(frozen=True)
class BanditHyper:
    """Bandit knobs: latent learning rate, exploration radius, FD probe step,
    and the image step size consumed by the attack driver."""

    eta_oco: float
    delta_explore: float
    fd_probe: float
    h_image: float

    def __post_init__(self):
        for name in ("eta_oco", "delta_explore", "fd_probe", "h_image"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class LatentState:
    """The optimizer's latent vector with its constraint set and optional tiling."""

    v: np.ndarray
    constraint: str = "unconstrained"
    tiling: TilingSpec | None = None

    def __post_init__(self):
        if self.constraint not in {"unconstrained", "box"}:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("latent entries must be finite")
        if self.constraint == "box":
            v = np.clip(v, -1.0 + BOX_MARGIN, 1.0 - BOX_MARGIN)
        if self.tiling is not None and v.size != self.tiling.latent_size:
            raise ValueError(
                f"latent length {v.size} does not match tiling latent size {self.tiling.latent_size}"
            )
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, d_latent: int, constraint: str = "unconstrained", tiling: TilingSpec | None = None):
        return cls(np.zeros(d_latent), constraint, tiling)

    @property
    def d_latent(self) -> int:
        return self.v.size

    def with_v(self, v: np.ndarray) -> "LatentState":
        return replace(self, v=v)


def latent_to_image(z: np.ndarray, tiling: TilingSpec | None) -> np.ndarray:
    return upsample(z, tiling) if tiling is not None else np.asarray(z, dtype=np.float64)


def spherical_grad_est(oracle, inp: LabeledInput, state: LatentState, hyper: BanditHyper, rng: np.random.Generator) -> np.ndarray:
    """Two-query antithetic spherical estimate of the round-loss gradient.

    Probes the image at x + fd_probe * up(v -/+ delta*u) and returns
    (loss_minus - loss_plus) / (delta * fd_probe) * u in latent space.
    The two losses are booked one at a time, so running out of budget on the
    second probe still counts the first.
    """
    dl = state.d_latent
    u = rng.standard_normal(dl) / np.sqrt(dl)
    q_plus = state.v + hyper.delta_explore * u
    q_minus = state.v - hyper.delta_explore * u
    x = inp.point
    p_plus = x.replace_data(x.data + hyper.fd_probe * latent_to_image(q_plus, state.tiling))
    p_minus = x.replace_data(x.data + hyper.fd_probe * latent_to_image(q_minus, state.tiling))
    loss_plus = oracle.loss(LabeledInput(p_plus, inp.label))
    loss_minus = oracle.loss(LabeledInput(p_minus, inp.label))
    return (loss_minus - loss_plus) / (hyper.delta_explore * hyper.fd_probe) * u


def gd_update(state: LatentState, delta: np.ndarray, eta: float) -> LatentState:
    """Plain gradient step v + eta*delta on an unconstrained latent."""
    if state.constraint != "unconstrained":
        raise ValueError("gd_update requires an unconstrained latent")
    return state.with_v(state.v + eta * np.asarray(delta, dtype=np.float64))

def eg_update(state: LatentState, delta: np.ndarray, eta: float) -> LatentState:
    """Multiplicative-weights step on the box latent.

    Per coordinate, with p = (v+1)/2 and a = eta*delta:
    p' = p*exp(a) / (p*exp(a) + (1-p)*exp(-a)), v' = 2p' - 1. Dividing
    through by exp(|a|) keeps every exponent non-positive, so large steps
    saturate instead of overflowing.
    """
    if state.constraint != "box":
        raise ValueError("eg_update requires a box latent")
    a = eta * np.asarray(delta, dtype=np.float64)
    p = (state.v + 1.0) / 2.0
    t = np.exp(-2.0 * np.abs(a))
    p_new = np.where(a >= 0, p / (p + (1.0 - p) * t), p * t / (p * t + (1.0 - p)))
    v_new = 2.0 * p_new - 1.0
    # Zero-step coordinates stay bit-identical; p -> 2p-1 round trips are
    # not exact for every float.
    return state.with_v(np.where(a == 0.0, state.v, v_new))


def latent_boundary_projection(v: np.ndarray, constraint: str) -> np.ndarray:
    """Step direction read off a latent: l2 normalize (unconstrained),
    coordinate signs (box). Zero latents stay zero."""
    if constraint == "box":
        return np.sign(v)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def bandit_gradient_estimation(
    oracle,
    inp: LabeledInput,
    hyper: BanditHyper,
    rounds: int,
    rng: np.random.Generator,
    constraint: str = "unconstrained",
    tiling: TilingSpec | None = None,
    cosine_trace: list | None = None,
) -> GradientEstimate:
    """Fixed-point gradient estimation: T spherical rounds on one (x, y).

    Each round estimates the round-loss gradient and moves the latent
    against it (the adversarial objective ascends the oracle loss). Returns
    the boundary projection of the final latent; on budget exhaustion the
    partial state is returned flagged incomplete. Spends exactly 2*rounds
    queries when it completes.

    When the oracle is diagnostic-capable and cosine_trace is a list, the
    per-round cosine between the latent (at image resolution) and the true
    gradient is appended to it.
    """
    if rounds < 1:
        raise ValueError("need at least one round")
    d_latent = tiling.latent_size if tiling is not None else inp.point.dimension
    state = LatentState.zeros(d_latent, constraint, tiling)
    update = eg_update if constraint == "box" else gd_update
    start = oracle.ledger.loss_queries
    incomplete = False
    track = cosine_trace is not None and oracle.supports_gradients
    if track:
        g_true = oracle.true_gradient(inp)
        g_true = g_true / max(np.linalg.norm(g_true), 1e-300)
    for _ in range(rounds):
        try:
            delta = spherical_grad_est(oracle, inp, state, hyper, rng)
        except BudgetExhausted:
            incomplete = True
            break
        state = update(state, -delta, hyper.eta_oco)
        if track:
            g_img = latent_to_image(state.v, tiling)
            norm = np.linalg.norm(g_img)
            cosine_trace.append(float(g_img @ g_true / norm) if norm > 0 else 0.0)
    spent = oracle.ledger.loss_queries - start
    raw = latent_boundary_projection(state.v, constraint)
    est = GradientEstimate.from_raw(raw, queries_spent=spent)
    return replace(est, incomplete=incomplete) if incomplete else est
