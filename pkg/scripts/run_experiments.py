"""Trajectory-recovery and test-localization tables on the default desk scenario.

For every seed and noise level: fit on a training walk, report recovery error
against the genie-aided fit and WCL, then localize an independent test walk
with the learned map against KNN and WCL. Usage:

    python scripts/run_experiments.py --seeds 0 1 2 --noise 0.2 0.4 --out results.json
"""
from __future__ import annotations

import argparse
import json
import logging
import time

import numpy as np

from radiomap import pipeline as P
from radiomap.cli import format_table
from radiomap.config import load_config
from radiomap.localize import KnnLocalizer, evaluate, feature_matrix, ml_localize_all, wcl_all


def run_one(cfg) -> dict:
    env = P.load_environment(cfg)
    train = P.simulate(cfg, run=0, env=env)
    test = P.simulate(cfg, run=1, env=env)
    t0 = time.perf_counter()
    report, rmap = P.fit(train, env, cfg)
    runtime = time.perf_counter() - t0
    genie, _ = P.fit(train, env, cfg, fixed_params=P.genie_params(train))
    recovery = {
        "proposed": evaluate(report.trajectory, train.truth, env, report.params.labels, train.true_labels),
        "genie": evaluate(genie.trajectory, train.truth, env),
        "WCL": evaluate(wcl_all(train.features, env.aps), train.truth, env),
    }
    knn = KnnLocalizer(feature_matrix(train.features), train.truth.points, cfg.fit.knn_k)
    testing = {
        "proposed": evaluate(ml_localize_all(test.features, rmap), test.truth, env),
        "KNN": evaluate(knn.predict(feature_matrix(test.features)), test.truth, env),
        "WCL": evaluate(wcl_all(test.features, env.aps), test.truth, env),
    }
    return {"recovery": recovery, "testing": testing, "runtime_s": runtime, "start": report.start,
            "iterations": report.iterations, "converged": report.converged}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="run configuration (default: shipped)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--noise", type=float, nargs="+", default=[0.2, 0.4])
    ap.add_argument("--out", default=None, help="write all numbers as JSON here")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    results = []
    for seed in args.seeds:
        for noise in args.noise:
            cfg = load_config(args.config)
            cfg.seed, cfg.channel.noise_variance = seed, noise
            r = run_one(cfg)
            acc = r["recovery"]["proposed"].los_accuracy
            print(f"\n=== seed {seed}, noise variance {noise}: fit {r['runtime_s']:.0f} s, "
                  f"{r['iterations']} iterations ({r['start']} start), LOS/NLOS accuracy {acc:.3f}")
            print(format_table(r["recovery"], "trajectory recovery (training walk)"))
            print(format_table(r["testing"], "test walk"))
            results.append({"seed": seed, "noise_variance": noise, "runtime_s": r["runtime_s"],
                            "start": r["start"], "iterations": r["iterations"], "converged": r["converged"],
                            "recovery": {k: v.summary() for k, v in r["recovery"].items()},
                            "testing": {k: v.summary() for k, v in r["testing"].items()}})

    print("\n=== mean test E_loc over seeds (m)")
    for noise in args.noise:
        rows = [r for r in results if r["noise_variance"] == noise]
        cells = {m: np.mean([r["testing"][m]["mean_error"] for r in rows]) for m in rows[0]["testing"]}
        print(f"noise {noise}: " + ", ".join(f"{m} {v:.3f}" for m, v in cells.items()))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
