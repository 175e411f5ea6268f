"""Command-line entry point: simulate, extract, fit, localize, eval and the full pipeline.

Exit codes: 0 success, 2 validation error, 3 fit did not converge, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import pipeline as P
from .channel import read_csi, write_csi
from .config import RunConfig, dump_config, load_config
from .features import FeatureSet, extract_all, read_features, write_features
from .localize import (REGIONS, EvalReport, KnnLocalizer, RadioMap, evaluate, feature_matrix,
                       ml_localize_all, smooth_localize_all, wcl_all)
from .scene import Bounds, Environment, Trajectory, load_trajectory, save_trajectory

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("radiomap")


class NotConverged(Exception):
    pass


# --- helpers ------------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        cfg.set(*item.split("=", 1))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "scene", None):
        cfg.scene = args.scene
    if getattr(args, "noise", None) is not None:
        cfg.channel.noise_variance = args.noise
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    cfg.validate()
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_featureset(path, env: Environment, slots: int | None = None) -> FeatureSet:
    recs = read_features(path)
    if not recs:
        raise ValueError(f"{path}: no feature records")
    Q = len(env.aps)
    if any(not 0 <= r.ap_index < Q for r in recs):
        raise ValueError(f"{path}: AP index outside the scene's roster")
    T = max(r.slot_index for r in recs) + 1
    return FeatureSet.from_records(recs, max(T, slots or 0), Q)


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)


def _fmt(v) -> str:
    return "   n/a" if v is None or not np.isfinite(v) else f"{v:6.3f}"


def format_table(rows: dict[str, EvalReport], title: str = "") -> str:
    """Rows: method name -> report; columns: overall and per-region mean error (m)."""
    head = f"{'method':<12}{'E_loc':>8}" + "".join(f"{r:>12}" for r in REGIONS)
    lines = [title] if title else []
    lines += [head, "-" * len(head)]
    for name, rep in rows.items():
        lines.append(f"{name:<12}{_fmt(rep.mean_error):>8}"
                     + "".join(f"{_fmt(rep.region_means[r]):>12}" for r in REGIONS))
    return "\n".join(lines)


# --- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg)
    ds = P.simulate(cfg, run=args.run)
    if len(ds.truth) != cfg.mobility.num_slots:
        raise ValueError("trajectory length does not match mobility.num_slots")
    write_csi(ds.csi, out / args.csi_name)
    save_trajectory(ds.truth, out / "truth.jsonl")
    (out / "config.cfg").write_text(dump_config(cfg))
    print(f"wrote {len(ds.csi)} CSI records for {len(ds.truth)} slots and {len(ds.env.aps)} APs to {out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args)
    env = P.load_environment(cfg)
    records = read_csi(args.csi)
    for H in records:
        if not 0 <= H.ap_index < len(env.aps):
            raise ValueError(f"CSI record t={H.slot_index} references unknown AP {H.ap_index}")
        if H.shape != (env.aps[H.ap_index].num_antennas, cfg.radio.num_subcarriers):
            raise ValueError(f"CSI record t={H.slot_index} q={H.ap_index} has shape {H.shape}")
    feats = extract_all(records, env.aps, math.radians(cfg.fit.music_step_deg), P.radio_config(cfg).wavelength)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_features(feats, out)
    print(f"wrote {len(feats)} feature records to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    env = P.load_environment(cfg)
    fs = _load_featureset(args.features, env, args.slots)
    out = _outdir(cfg)
    report, rmap = P.fit(fs, env, cfg)
    _write_json(report.to_dict(), out / "fit_report.json")
    rmap.save(out / "radio_map.json")
    save_trajectory(report.trajectory, out / "trajectory.jsonl")
    trace = report.objective_trace
    print(f"{report.iterations} iterations, objective {trace[0]:.3f} -> {trace[-1]:.3f}, "
          f"converged={report.converged}")
    if not report.converged:
        raise NotConverged(f"no convergence within {cfg.fit.max_iter} iterations")
    return EXIT_OK


def cmd_localize(args) -> int:
    rmap = RadioMap.load(args.map)
    env = Environment(rmap.aps, [], _bounds_of(rmap))
    fs = _load_featureset(args.features, env, args.slots)
    est = smooth_localize_all(fs, rmap) if args.smooth else ml_localize_all(fs, rmap)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    slot = rmap.mobility.slot_duration if rmap.mobility is not None else 0.2
    save_trajectory(Trajectory(est, slot), out)
    print(f"wrote {len(est)} position estimates to {out}")
    return EXIT_OK


def _bounds_of(rmap: RadioMap):
    g = rmap.grid
    return Bounds(g.origin[0], g.origin[1], g.origin[0] + g.cols * g.resolution,
                  g.origin[1] + g.rows * g.resolution)


def cmd_eval(args) -> int:
    cfg = _config(args)
    env = P.load_environment(cfg)
    est, truth = load_trajectory(args.estimates), load_trajectory(args.truth)
    labels = None
    if args.report:
        with open(args.report) as fh:
            labels = np.asarray(json.load(fh)["indicators"], dtype=np.int8)
    rep = evaluate(est, truth, env, labels)
    out = _outdir(cfg)
    rep.write_csv(out / "eval.csv")
    _write_json(rep.summary(), out / "eval.json")
    print(format_table({"estimate": rep}))
    if rep.los_accuracy is not None:
        print(f"LOS/NLOS accuracy: {rep.los_accuracy:.3f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """Train on one simulated walk, test on an independent one, compare against WCL and KNN."""
    cfg = _config(args)
    out = _outdir(cfg)
    env = P.load_environment(cfg)
    train = P.simulate(cfg, run=0, env=env)
    test = P.simulate(cfg, run=1, env=env)
    write_csi(train.csi, out / "train_csi.bin")
    write_csi(test.csi, out / "test_csi.bin")
    save_trajectory(train.truth, out / "train_truth.jsonl")
    save_trajectory(test.truth, out / "test_truth.jsonl")
    write_features(train.features.records(), out / "train_features.jsonl")
    write_features(test.features.records(), out / "test_features.jsonl")

    report, rmap = P.fit(train, env, cfg)
    _write_json(report.to_dict(), out / "fit_report.json")
    rmap.save(out / "radio_map.json")

    genie, _ = P.fit(train, env, cfg, fixed_params=P.genie_params(train))
    recovery = {
        "proposed": evaluate(report.trajectory, train.truth, env, report.params.labels, train.true_labels),
        "genie": evaluate(genie.trajectory, train.truth, env),
        "WCL": evaluate(wcl_all(train.features, env.aps), train.truth, env),
    }
    knn = KnnLocalizer(feature_matrix(train.features), train.truth.points, cfg.fit.knn_k)
    est = ml_localize_all(test.features, rmap)
    save_trajectory(Trajectory(est, cfg.mobility.slot_duration), out / "test_estimates.jsonl")
    testing = {
        "proposed": evaluate(est, test.truth, env),
        "KNN": evaluate(knn.predict(feature_matrix(test.features)), test.truth, env),
        "WCL": evaluate(wcl_all(test.features, env.aps), test.truth, env),
    }
    testing["proposed"].write_csv(out / "eval.csv")
    summary = {
        "converged": report.converged, "iterations": report.iterations,
        "los_accuracy": recovery["proposed"].los_accuracy,
        "trajectory_recovery": {k: v.summary() for k, v in recovery.items()},
        "test_localization": {k: v.summary() for k, v in testing.items()},
    }
    _write_json(summary, out / "summary.json")
    print(format_table(recovery, "trajectory recovery (training walk)"))
    print(f"LOS/NLOS accuracy: {recovery['proposed'].los_accuracy:.3f}")
    print()
    print(format_table(testing, f"test walk, noise variance {cfg.channel.noise_variance}"))
    if not report.converged:
        raise NotConverged(f"no convergence within {cfg.fit.max_iter} iterations")
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radiomap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="config file (default: shipped defaults)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scene", help="scene JSON (default: shipped scene)")
        if out:
            sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="simulate a walk and its CSI")
    common(sp)
    sp.add_argument("--noise", type=float, help="noise variance")
    sp.add_argument("--run", type=int, default=0, help="independent walk index")
    sp.add_argument("--csi-name", default="csi.bin", help="CSI file name (.bin or .jsonl)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("extract", help="CSI file -> feature file")
    common(sp, out=False)
    sp.add_argument("csi")
    sp.add_argument("-o", "--output", default="features.jsonl")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("fit", help="learn the radio map from unlabeled features")
    common(sp)
    sp.add_argument("features")
    sp.add_argument("--slots", type=int, help="number of slots (default: last slot in the file + 1)")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("localize", help="per-slot position estimates from a radio map")
    sp.add_argument("features")
    sp.add_argument("map")
    sp.add_argument("-o", "--output", default="estimates.jsonl")
    sp.add_argument("--slots", type=int)
    sp.add_argument("--smooth", action="store_true", help="decode the whole sequence with the mobility prior")
    sp.set_defaults(func=cmd_localize)

    sp = sub.add_parser("eval", help="compare estimates with ground truth")
    common(sp)
    sp.add_argument("estimates")
    sp.add_argument("truth")
    sp.add_argument("--report", help="fit report whose indicators are scored against geometry")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("pipeline", help="simulate, fit, localize and evaluate end to end")
    common(sp)
    sp.add_argument("--noise", type=float, help="noise variance")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
