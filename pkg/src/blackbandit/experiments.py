"""Desk-scale measurement harness and CSV serialization.

Five experiments against the seeded built-in targets: sign-fraction FGSM,
successive-gradient cosine along NES trajectories, tiling cosine, top-k
gradient mass, and the query-budgeted attack benchmark. All randomness is
seeded; per-run streams are derived from (seed, method, input index) so a
worker pool cannot change results.
"""

import csv
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .attack import AttackConfig, Nes, ball_project, boundary_project, fgsm_step, run_attack
from .bandit import TilingSpec, downsample, upsample
from .estimators import nes_estimate
from .oracle import LabeledInput, Oracle, Point

# Suite images: blurred white noise rescaled into the pixel box. The 0.18
# amplitude keeps ~99% of mass inside [0,1] before clipping.
SUITE_SIGMA = 2.0
SUITE_AMPLITUDE = 0.18


def make_suite(oracle, size: int, seed: int, dims: tuple[int, int, int] = (16, 16, 1)) -> list[LabeledInput]:
    """Seeded smooth random images labeled by the oracle's own top class.

    Labels come from the oracle, so every suite member starts correctly
    classified and the attack precondition holds by construction.
    """
    if size < 1:
        raise ValueError("suite size must be positive")
    h, w, c = dims
    if h * w * c != oracle.dimension:
        raise ValueError(f"dims {dims} do not match oracle dimension {oracle.dimension}")
    rng = np.random.default_rng(seed)
    suite = []
    for _ in range(size):
        noise = rng.standard_normal((h, w, c))
        smooth = ndimage.gaussian_filter(noise, sigma=(SUITE_SIGMA, SUITE_SIGMA, 0), mode="wrap")
        smooth /= max(smooth.std(), 1e-12)
        img = np.clip(0.5 + SUITE_AMPLITUDE * smooth, 0.0, 1.0).reshape(-1)
        point = Point(img, shape=dims)
        label = oracle.top_class(point) if oracle.is_classifier else 0
        suite.append(LabeledInput(point, label))
    return suite


def _stderr(values: np.ndarray) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(n))


def _binomial_stderr(rate: float, n: int) -> float:
    if n < 1:
        return 0.0
    return float(math.sqrt(rate * (1.0 - rate) / n))


@dataclass(frozen=True)
class SignFractionRow:
    selection: str
    fraction: float
    adversarial_rate: float
    stderr: float


def sign_fraction_experiment(
    oracle,
    suite: list[LabeledInput],
    epsilon: float,
    fractions: list[float],
    selection: str,
    rng: np.random.Generator,
) -> list[SignFractionRow]:
    """FGSM with only a fraction of correct gradient signs.

    For each fraction rho, rho*d coordinates (largest-|gradient| or random)
    carry the true sign and the rest are uniform +/-1; the row records the
    suite-wide misclassification rate of the single step.
    """
    if selection not in {"top_k", "random_k"}:
        raise ValueError(f"selection must be top_k or random_k, got {selection!r}")
    if not oracle.supports_gradients:
        raise ValueError("sign-fraction experiment needs a diagnostic-capable oracle")
    d = oracle.dimension
    rows = []
    for rho in fractions:
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"fraction {rho} outside [0,1]")
        n_true = int(round(rho * d))
        hits = 0
        for inp in suite:
            g = oracle.true_gradient(inp)
            signs = np.where(rng.random(d) < 0.5, -1.0, 1.0)
            if n_true > 0:
                if selection == "top_k":
                    idx = np.argsort(-np.abs(g))[:n_true]
                else:
                    idx = rng.choice(d, size=n_true, replace=False)
                true_signs = np.where(g >= 0, 1.0, -1.0)
                signs[idx] = true_signs[idx]
            stepped = fgsm_step(inp.point, inp.label, signs, epsilon)
            if oracle.top_class(stepped) != inp.label:
                hits += 1
        rate = hits / len(suite)
        rows.append(SignFractionRow(selection, float(rho), rate, _binomial_stderr(rate, len(suite))))
    return rows


@dataclass(frozen=True)
class CosineRow:
    step_size: float
    step_index: int
    mean_cosine: float
    stderr: float


def successive_cosine_experiment(
    oracle,
    suite: list[LabeledInput],
    config: AttackConfig,
    step_sizes: list[float],
    steps: int,
    rng: np.random.Generator,
) -> tuple[list[CosineRow], list[CosineRow]]:
    """Cosine between successive true gradients along NES walk trajectories.

    Walks `steps` PGD steps per input for each step size (projection and
    clamping as configured, success does not stop the walk) and averages
    cos(grad(x_t), grad(x_{t+1})) per step index. The second table is the
    independent-pair baseline: cosines between gradients of distinct suite
    inputs at their start points, one row per step size's comparison.
    """
    if not oracle.supports_gradients:
        raise ValueError("successive-cosine experiment needs a diagnostic-capable oracle")
    if not isinstance(config.estimator, Nes):
        raise ValueError("the trajectory walk is defined for the nes estimator")
    if steps < 1:
        raise ValueError("need at least one step")
    spec = config.estimator
    rows = []
    for h in step_sizes:
        if h < 0:
            raise ValueError("step sizes must be non-negative")
        per_step: list[list[float]] = [[] for _ in range(steps)]
        for inp in suite:
            work = oracle.fresh()
            x = inp.point
            g_prev = oracle.true_gradient(LabeledInput(x, inp.label))
            for t in range(steps):
                est, _ = nes_estimate(work, LabeledInput(x, inp.label), spec.k, spec.delta, rng)
                if h > 0 and np.any(est.raw != 0):
                    step_dir = boundary_project(est.raw, config.norm)
                    x = ball_project(
                        x.replace_data(x.data + h * step_dir), inp.point, config.epsilon,
                        config.norm, config.clamp,
                    )
                g_next = oracle.true_gradient(LabeledInput(x, inp.label))
                denom = np.linalg.norm(g_prev) * np.linalg.norm(g_next)
                per_step[t].append(float(g_prev @ g_next / denom) if denom > 0 else 1.0)
                g_prev = g_next
        for t in range(steps):
            vals = np.asarray(per_step[t])
            rows.append(CosineRow(float(h), t, float(vals.mean()), _stderr(vals)))

    baseline_vals = []
    grads = [oracle.true_gradient(inp) for inp in suite]
    for i in range(len(suite) - 1):
        a, b = grads[i], grads[i + 1]
        denom = np.linalg.norm(a) * np.linalg.norm(b)
        if denom > 0:
            baseline_vals.append(float(a @ b / denom))
    base = np.asarray(baseline_vals)
    baseline = [CosineRow(float("nan"), -1, float(base.mean()), _stderr(base))]
    return rows, baseline


@dataclass(frozen=True)
class TileRow:
    tile: int
    mean_cosine: float
    stderr: float


def tiling_cosine_experiment(oracle, suite: list[LabeledInput], tiles: list[int]) -> list[TileRow]:
    """Alignment of the mean-pooled-then-upsampled gradient with the original.

    up(down(g)) orthogonally projects g onto tile-constant vectors, so the
    cosine equals the retained mass fraction ||P g|| / ||g||.
    """
    if not oracle.supports_gradients:
        raise ValueError("tiling experiment needs a diagnostic-capable oracle")
    rows = []
    for tile in tiles:
        vals = []
        for inp in suite:
            if inp.point.shape is None:
                raise ValueError("tiling experiment needs image-shaped inputs")
            spec = TilingSpec(tile=tile, dims=inp.point.shape)
            g = oracle.true_gradient(inp)
            pg = upsample(downsample(g, spec), spec)
            denom = np.linalg.norm(pg) * np.linalg.norm(g)
            vals.append(float(pg @ g / denom) if denom > 0 else 0.0)
        arr = np.asarray(vals)
        rows.append(TileRow(tile, float(arr.mean()), _stderr(arr)))
    return rows


@dataclass(frozen=True)
class SparsityRow:
    k: int
    mean_mass_fraction: float
    stderr: float


def sparsity_mass_experiment(
    oracle, suite: list[LabeledInput], k_values: list[int]
) -> tuple[list[SparsityRow], int]:
    """Fraction of squared gradient mass captured by the k largest entries.

    Returns the per-k table and the count of skipped zero-gradient inputs.
    """
    if not oracle.supports_gradients:
        raise ValueError("sparsity experiment needs a diagnostic-capable oracle")
    grads = []
    skipped = 0
    for inp in suite:
        g = oracle.true_gradient(inp)
        total = float(g @ g)
        if total == 0.0:
            skipped += 1
            continue
        grads.append((np.sort(g * g)[::-1], total))
    rows = []
    for k in k_values:
        if not 1 <= k <= oracle.dimension:
            raise ValueError(f"k={k} outside [1, {oracle.dimension}]")
        vals = np.asarray([sq[:k].sum() / total for sq, total in grads])
        rows.append(SparsityRow(k, float(vals.mean()), _stderr(vals)))
    return rows, skipped


@dataclass(frozen=True)
class RunRecord:
    method: str
    input_id: int
    seed: int
    success: bool
    queries: int
    iterations: int


@dataclass
class MethodReport:
    name: str
    runs: list[RunRecord]
    traces: list
    success_rate: float
    failure_rate: float
    avg_queries_success: float
    avg_queries_on_baseline_successes: float
    median_queries_all: float
    query_cdf: list[tuple[int, float]]
    avg_queries_by_success_rate: list[tuple[float, float]]
    mean_loss_by_iteration_carried: list[float]
    mean_cosine_by_iteration_carried: list[float]


@dataclass
class BenchmarkReport:
    suite_size: int
    baseline: str
    methods: dict[str, MethodReport] = field(default_factory=dict)


def run_seed_for(base_seed: int, method: str, input_id: int) -> np.random.SeedSequence:
    """Per-run stream: pool order can never leak into results."""
    return np.random.SeedSequence([base_seed, zlib.crc32(method.encode("utf-8")), input_id])


def _run_single_attack(oracle, inp, config, base_seed, method, input_id):
    rng = np.random.default_rng(run_seed_for(base_seed, method, input_id))
    outcome, trace = run_attack(oracle, inp, config, rng)
    record = RunRecord(
        method=method, input_id=input_id, seed=base_seed,
        success=outcome.success, queries=outcome.queries_used, iterations=outcome.iterations,
    )
    return record, trace


def _pool_task(args):
    oracle, inp, config, base_seed, method, input_id = args
    return method, input_id, _run_single_attack(oracle, inp, config, base_seed, method, input_id)


def _carried_means(series: list[list[float]]) -> list[float]:
    """Mean per iteration over runs, carrying each run's last value forward."""
    if not series:
        return []
    horizon = max(len(s) for s in series)
    out = []
    for t in range(horizon):
        vals = []
        for s in series:
            if not s:
                continue
            v = s[t] if t < len(s) else s[-1]
            if not math.isnan(v):
                vals.append(v)
        out.append(float(np.mean(vals)) if vals else math.nan)
    return out


def attack_benchmark(
    oracle,
    suite: list[LabeledInput],
    methods: dict[str, AttackConfig],
    seed: int,
    baseline: str | None = None,
    workers: int = 1,
) -> BenchmarkReport:
    """Run every method over the suite and aggregate Table-1-style metrics.

    Medians count failed runs at their spent query total (the budget cap for
    exhausted runs); averages follow the headline convention and cover
    successful runs only. The baseline method defines the input set for the
    intersection average.
    """
    if not suite:
        raise ValueError("empty suite")
    if not methods:
        raise ValueError("no methods configured")
    if baseline is None:
        baseline = "nes" if "nes" in methods else next(iter(methods))
    if baseline not in methods:
        raise ValueError(f"baseline {baseline!r} is not a configured method")

    tasks = [
        (oracle, inp, config, seed, method, idx)
        for method, config in methods.items()
        for idx, inp in enumerate(suite)
    ]
    results: dict[tuple[str, int], tuple[RunRecord, object]] = {}
    if workers > 1:
        if not isinstance(oracle, Oracle):
            raise ValueError("parallel benchmarks need a built-in oracle (picklable)")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for method, input_id, payload in pool.map(_pool_task, tasks, chunksize=4):
                results[(method, input_id)] = payload
    else:
        for args in tasks:
            method, input_id = args[4], args[5]
            results[(method, input_id)] = _run_single_attack(*args[:4], method, input_id)

    report = BenchmarkReport(suite_size=len(suite), baseline=baseline)
    baseline_successes = {
        idx for idx in range(len(suite)) if results[(baseline, idx)][0].success
    }
    for method, config in methods.items():
        records = [results[(method, idx)][0] for idx in range(len(suite))]
        traces = [results[(method, idx)][1] for idx in range(len(suite))]
        report.methods[method] = _aggregate_method(
            method, records, traces, config, baseline_successes, len(suite)
        )
    return report


def _aggregate_method(name, records, traces, config, baseline_successes, suite_size):
    succ = [r for r in records if r.success]
    success_rate = len(succ) / suite_size
    sq = sorted(r.queries for r in succ)
    avg_success = float(np.mean([r.queries for r in succ])) if succ else math.nan
    inter = [r.queries for r in records if r.success and r.input_id in baseline_successes]
    avg_inter = float(np.mean(inter)) if inter else math.nan
    median_all = float(np.median([r.queries for r in records]))

    cdf = []
    for i, q in enumerate(sq, start=1):
        cdf.append((q, i / suite_size))
    curve = []
    if sq:
        running = np.cumsum(sq) / np.arange(1, len(sq) + 1)
        curve = [((i + 1) / suite_size, float(running[i])) for i in range(len(sq))]

    loss_series = [[row.loss for row in t.rows] for t in traces]
    cos_series = [[row.cosine for row in t.rows] for t in traces]
    return MethodReport(
        name=name,
        runs=records,
        traces=traces,
        success_rate=success_rate,
        failure_rate=1.0 - success_rate,
        avg_queries_success=avg_success,
        avg_queries_on_baseline_successes=avg_inter,
        median_queries_all=median_all,
        query_cdf=cdf,
        avg_queries_by_success_rate=curve,
        mean_loss_by_iteration_carried=_carried_means(loss_series),
        mean_cosine_by_iteration_carried=_carried_means(cos_series),
    )


# --- CSV serialization -------------------------------------------------------
# Header row mandatory, UTF-8, '.' decimal. Floats use repr (shortest
# round-trip) so identical runs produce identical bytes.


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_attacks_csv(path, report: BenchmarkReport) -> None:
    rows = [
        (r.method, r.input_id, r.seed, r.success, r.queries, r.iterations)
        for method in report.methods.values()
        for r in method.runs
    ]
    _write_rows(path, ["method", "input_id", "seed", "success", "queries", "iterations"], rows)


def write_trace_csv(path, report: BenchmarkReport) -> None:
    rows = []
    for method in report.methods.values():
        for r, trace in zip(method.runs, method.traces):
            for t in trace.rows:
                rows.append((r.method, r.input_id, t.iteration, t.queries, t.loss, t.cosine))
    _write_rows(
        path,
        ["method", "input_id", "iteration", "queries", "loss", "cosine_latent_vs_true"],
        rows,
    )


def write_signexp_csv(path, rows: list[SignFractionRow]) -> None:
    _write_rows(
        path,
        ["selection", "fraction", "adversarial_rate", "stderr"],
        [(r.selection, r.fraction, r.adversarial_rate, r.stderr) for r in rows],
    )


def write_cosine_csv(path, rows: list[CosineRow]) -> None:
    _write_rows(
        path,
        ["step_size", "step_index", "mean_cosine", "stderr"],
        [(r.step_size, r.step_index, r.mean_cosine, r.stderr) for r in rows],
    )


def write_tiling_csv(path, rows: list[TileRow]) -> None:
    _write_rows(
        path,
        ["tile", "mean_cosine", "stderr"],
        [(r.tile, r.mean_cosine, r.stderr) for r in rows],
    )


def write_sparsity_csv(path, rows: list[SparsityRow]) -> None:
    _write_rows(
        path,
        ["k", "mean_mass_fraction", "stderr"],
        [(r.k, r.mean_mass_fraction, r.stderr) for r in rows],
    )
