"""Command-line entry point: attacks and experiments with presets and CSVs.

Exit codes: 0 on completed runs (even when individual attacks fail),
1 for transport failures against a remote oracle, 2 for configuration
problems (unknown keys, bad values, malformed files).
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .attack import AttackConfig, Nes
from .errors import BlackBanditError, ConfigError, TransportError
from .estimators import BoundInputs, ProbeMatrix, equivalence_bound, equivalence_gap, gaussian_probe
from .experiments import (
    attack_benchmark,
    sign_fraction_experiment,
    sparsity_mass_experiment,
    successive_cosine_experiment,
    tiling_cosine_experiment,
    write_attacks_csv,
    write_cosine_csv,
    write_signexp_csv,
    write_sparsity_csv,
    write_tiling_csv,
    write_trace_csv,
    _write_rows,
)

EXPERIMENT_KINDS = ("signfrac", "cosine", "tiling", "sparsity", "bench", "nes-lsq-equiv")

# Flags generated for every config key; comma-separated values for lists.
_FLAG_HELP = {
    "methods": "comma-separated method names",
    "tiles": "comma-separated tile side lengths",
    "fractions": "comma-separated sign fractions in [0,1]",
    "step_sizes": "comma-separated PGD step sizes",
    "k_values": "comma-separated top-k values",
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--preset", help=f"named preset ({', '.join(sorted(cfgmod.PRESETS))})")
    parser.add_argument("--out", help="output directory (default $BLACKBANDIT_OUT or ./out)")
    parser.add_argument("--oracle", dest="oracle_kind", help="oracle kind (mlp, softmax, ...)")
    for key in cfgmod.KEY_TYPES:
        if key in ("oracle_kind", "out"):
            continue
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=f"key_{key}", metavar="V", help=_FLAG_HELP.get(key))
    parser.add_argument(
        "overrides", nargs="*", metavar="KEY=VALUE", help="extra config overrides"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blackbandit",
        description="Query-counted black-box gradient estimation and attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    attack = sub.add_parser("attack", help="run the attack suite, write attacks/trace CSVs")
    _add_common_flags(attack)
    experiment = sub.add_parser("experiment", help="run one measurement experiment")
    experiment.add_argument("kind", choices=EXPERIMENT_KINDS)
    _add_common_flags(experiment)
    return parser


def _collect_overrides(args: argparse.Namespace) -> dict:
    values = {}
    if args.oracle_kind is not None:
        values["oracle_kind"] = args.oracle_kind
    for key in cfgmod.KEY_TYPES:
        raw = getattr(args, f"key_{key}", None)
        if raw is not None:
            values[key] = cfgmod.parse_scalar(key, raw)
    for pair in args.overrides:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not KEY=VALUE")
        key, _, raw = pair.partition("=")
        values[key] = cfgmod.parse_scalar(key, raw)
    if args.out is not None:
        values["out"] = args.out
    return values


def _resolve_out(cfg: dict) -> Path:
    out = cfg["out"] or os.environ.get("BLACKBANDIT_OUT") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    cfg["out"] = str(path)
    return path


def _progress(note: str) -> None:
    print(note, file=sys.stderr)


def _run_attack_suite(cfg: dict, out: Path) -> None:
    oracle = cfgmod.build_oracle(cfg)
    suite = cfgmod.build_suite(oracle, cfg)
    methods = cfgmod.build_methods(cfg)
    _progress(f"attack suite: {len(suite)} inputs x {len(methods)} methods")
    report = attack_benchmark(
        oracle, suite, methods, seed=cfg["seed"], workers=cfg["workers"]
    )
    write_attacks_csv(out / "attacks.csv", report)
    write_trace_csv(out / "trace.csv", report)
    for name, method in report.methods.items():
        _progress(
            f"  {name}: success {method.success_rate:.2f}, "
            f"median queries {method.median_queries_all:.0f}"
        )


def _run_experiment(kind: str, cfg: dict, out: Path) -> None:
    if kind == "bench":
        _run_attack_suite(cfg, out)
        return
    if kind == "nes-lsq-equiv":
        _run_equivalence(cfg, out)
        return

    oracle = cfgmod.build_oracle(cfg)
    suite = cfgmod.build_suite(oracle, cfg)
    rng = np.random.default_rng(cfg["seed"])
    _progress(f"experiment {kind}: {len(suite)} inputs")
    if kind == "signfrac":
        rows = []
        for selection in ("top_k", "random_k"):
            rows.extend(
                sign_fraction_experiment(
                    oracle, suite, cfg["epsilon"], cfg["fractions"], selection, rng
                )
            )
        write_signexp_csv(out / "signexp.csv", rows)
    elif kind == "cosine":
        walk = AttackConfig(
            norm=cfg["norm"],
            epsilon=cfg["epsilon"],
            h=cfg["h"],
            estimator=Nes(k=cfg["nes_k"], delta=cfg["nes_delta"], lr=cfg["nes_lr"]),
            max_queries=cfg["max_queries"],
        )
        rows, baseline = successive_cosine_experiment(
            oracle, suite, walk, cfg["step_sizes"], cfg["steps"], rng
        )
        write_cosine_csv(out / "cosine.csv", rows + baseline)
    elif kind == "tiling":
        rows = tiling_cosine_experiment(oracle, suite, cfg["tiles"])
        write_tiling_csv(out / "tiling.csv", rows)
    elif kind == "sparsity":
        rows, skipped = sparsity_mass_experiment(oracle, suite, cfg["k_values"])
        if skipped:
            _progress(f"  skipped {skipped} zero-gradient inputs")
        write_sparsity_csv(out / "sparsity.csv", rows)
    else:
        raise ConfigError(f"unknown experiment kind: {kind}")


def _run_equivalence(cfg: dict, out: Path) -> None:
    k, d, p, trials = cfg["k"], cfg["d"], cfg["p"], cfg["trials"]
    _progress(f"equivalence suite: k={k} d={d} p={p} trials={trials}")
    gaps = []
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], trial]))
        g_star = rng.standard_normal(d)
        g_star /= np.linalg.norm(g_star)
        rows = gaussian_probe(k, d, rng)
        probe = ProbeMatrix(rows=rows, responses=rows @ g_star)
        gaps.append(abs(equivalence_gap(g_star, probe)))
    gap_q99 = float(np.quantile(np.asarray(gaps), 0.99))
    bound = equivalence_bound(BoundInputs(k=k, d=d, p=p))
    _write_rows(
        out / "equiv.csv",
        ["k", "d", "p", "trials", "gap_q99", "bound"],
        [(k, d, p, trials, gap_q99, bound)],
    )
    _progress(f"  gap_q99 {gap_q99:.4f} vs bound {bound:.4f}")


def main(argv=None) -> int:
    parser = build_parser()
    # argparse cannot route KEY=VALUE pairs past interleaved flags into the
    # trailing positional, so stray pairs come back as unknown args.
    args, extras = parser.parse_known_args(argv)
    stray = [tok for tok in extras if tok.startswith("-") or "=" not in tok]
    if stray:
        parser.error(f"unrecognized arguments: {' '.join(stray)}")
    args.overrides.extend(extras)
    try:
        file_values = cfgmod.load_config_file(args.config) if args.config else None
        overrides = _collect_overrides(args)
        cfg = cfgmod.resolve_config(args.preset, file_values, overrides)

        tiles_in_play = []
        if args.command == "attack" or (args.command == "experiment" and args.kind == "bench"):
            if cfgmod.needs_tiling(cfg):
                tiles_in_play = [cfg["tile"]]
        elif args.command == "experiment" and args.kind == "tiling":
            tiles_in_play = list(cfg["tiles"])
        if tiles_in_play:
            for note in cfgmod.pad_dims_for_tiles(cfg, tiles_in_play):
                _progress(note)

        out = _resolve_out(cfg)
        cfgmod.write_resolved(cfg, out / "resolved.json")
        if args.command == "attack":
            _run_attack_suite(cfg, out)
        else:
            _run_experiment(args.kind, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 1
    except BlackBanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
