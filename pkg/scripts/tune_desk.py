#!/usr/bin/env python3
"""Hyperparameter sweep behind the desk presets.

Runs candidate NES and bandit configurations on a 30-input prefix suite and
prints success rate and median queries per candidate. The shipped desk-linf
and desk-l2 presets were selected from these grids on the full 100-input
suite; see run_benchmark.py for the frozen medians.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from blackbandit import OracleDescriptor, make_oracle
from blackbandit.attack import AttackConfig, Bandit, Nes
from blackbandit.bandit import BanditHyper
from blackbandit.experiments import attack_benchmark, make_suite


def report_line(tag, method_report):
    print(
        f"  {tag}: success {method_report.success_rate:.2f} "
        f"median {method_report.median_queries_all:.0f}"
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--suite-size", type=int, default=30)
    parser.add_argument("--budget", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=404)
    args = parser.parse_args()

    oracle = make_oracle(
        OracleDescriptor(kind="mlp", dimension=256, num_classes=10, seed=7)
    )
    suite = make_suite(oracle, args.suite_size, seed=101)

    print("linf (epsilon 0.1):")
    for lr in (0.01, 0.02, 0.05):
        for k in (20, 50):
            cfg = {"nes": AttackConfig("linf", 0.1, lr, Nes(k=k, delta=0.1),
                                       max_queries=args.budget)}
            rep = attack_benchmark(oracle, suite, cfg, seed=args.seed)
            report_line(f"nes k={k} lr={lr}", rep.methods["nes"])
    for eta in (10.0, 30.0, 100.0):
        for h in (0.01, 0.02):
            hyper = BanditHyper(eta_oco=eta, delta_explore=1.0, fd_probe=0.1, h_image=h)
            cfg = {
                "bandits_t": AttackConfig("linf", 0.1, 0.01, Bandit(hyper=hyper),
                                          max_queries=args.budget),
                "bandits_td": AttackConfig(
                    "linf", 0.1, 0.01, Bandit(hyper=hyper, data_prior=True, tile=2),
                    max_queries=args.budget),
            }
            rep = attack_benchmark(oracle, suite, cfg, seed=args.seed)
            report_line(f"bandits_t  eta={eta} h={h}", rep.methods["bandits_t"])
            report_line(f"bandits_td eta={eta} h={h}", rep.methods["bandits_td"])

    print("l2 (epsilon 1.0):")
    for lr in (0.1, 0.3):
        for k in (10, 20):
            cfg = {"nes": AttackConfig("l2", 1.0, lr, Nes(k=k, delta=0.01),
                                       max_queries=args.budget)}
            rep = attack_benchmark(oracle, suite, cfg, seed=args.seed)
            report_line(f"nes k={k} lr={lr}", rep.methods["nes"])
    for h in (0.2, 0.5):
        hyper = BanditHyper(eta_oco=0.1, delta_explore=0.1, fd_probe=0.01, h_image=h)
        cfg = {
            "bandits_t": AttackConfig("l2", 1.0, 0.3, Bandit(hyper=hyper),
                                      max_queries=args.budget),
            "bandits_td": AttackConfig(
                "l2", 1.0, 0.3, Bandit(hyper=hyper, data_prior=True, tile=2),
                max_queries=args.budget),
        }
        rep = attack_benchmark(oracle, suite, cfg, seed=args.seed)
        report_line(f"bandits_t  h={h}", rep.methods["bandits_t"])
        report_line(f"bandits_td h={h}", rep.methods["bandits_td"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
