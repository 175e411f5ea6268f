"""Acceptance criteria 1-8; each test prints one PASS/FAIL line and the session summary repeats them."""
import itertools
import math
import time

import numpy as np
import pytest

from radiomap import pipeline
from radiomap.channel import MultipathComponent, RadioConfig, synth_csi
from radiomap.config import RunConfig
from radiomap.features import DEFAULT_GRID_STEP, local_angle_grid, music_aod
from radiomap.inference import objective, viterbi2
from radiomap.inference.fit import delay_design, fit_delay_params
from radiomap.inference.model import Grid
from radiomap.localize import KnnLocalizer, evaluate, feature_matrix, ml_localize_all, wcl_all
from radiomap.scene import AccessPoint, MobilityParams, wrap_angle

from helpers import random_features, random_params

NOISE_LEVELS = (0.2, 0.4)


def _cfg(noise):
    cfg = RunConfig()
    cfg.channel.noise_variance = noise
    return cfg


@pytest.fixture(scope="session")
def scenario():
    """Default desk scenario at both noise levels: training fit, genie fit and test-walk localization."""
    out = {}
    for noise in NOISE_LEVELS:
        cfg = _cfg(noise)
        env = pipeline.load_environment(cfg)
        train = pipeline.simulate(cfg, run=0, env=env)
        test = pipeline.simulate(cfg, run=1, env=env)
        t0 = time.perf_counter()
        report, rmap = pipeline.fit(train, env, cfg)
        runtime = time.perf_counter() - t0
        knn = KnnLocalizer(feature_matrix(train.features), train.truth.points, cfg.fit.knn_k)
        r = {
            "cfg": cfg, "env": env, "train": train, "report": report, "runtime": runtime,
            "proposed": evaluate(report.trajectory, train.truth, env, report.params.labels, train.true_labels),
            "wcl_train": evaluate(wcl_all(train.features, env.aps), train.truth, env),
            "test": {
                "proposed": evaluate(ml_localize_all(test.features, rmap), test.truth, env),
                "KNN": evaluate(knn.predict(feature_matrix(test.features)), test.truth, env),
                "WCL": evaluate(wcl_all(test.features, env.aps), test.truth, env),
            },
        }
        if noise == 0.2:
            genie, _ = pipeline.fit(train, env, cfg, fixed_params=pipeline.genie_params(train))
            r["genie"] = evaluate(genie.trajectory, train.truth, env)
        out[noise] = r
    return out


# --- 1: second-order Viterbi equals exhaustive enumeration -----------------------

SHAPES = [(1, 2), (2, 1), (1, 3), (3, 1), (2, 2), (1, 4), (4, 1)]


def test_criterion_1_viterbi_oracle(criterion):
    rng = np.random.default_rng(0)
    aps = [AccessPoint((-1.0, -1.0), 0.8), AccessPoint((3.0, -1.0), 2.3), AccessPoint((1.0, 3.0), 4.7)]
    n, exact = 120, 0
    t0 = time.perf_counter()
    for _ in range(n):
        rows, cols = SHAPES[rng.integers(len(SHAPES))]
        grid = Grid((0.0, 0.0), 0.5, rows, cols)
        T = int(rng.integers(1, 6))
        fs = random_features(rng, T, 3, missing=0.2)
        p = random_params(rng, fs)
        mob = MobilityParams(rng.uniform(0.05, 0.95), tuple(rng.normal(size=2)), rng.uniform(0.2, 3), 0.2)
        v_max = float(rng.choice([2.5, 3.6, 20.0]))
        traj = viterbi2(fs, p, mob, grid, aps, v_max)
        centers = grid.centers()
        best = -math.inf
        for path in itertools.product(range(grid.size), repeat=T):
            pts = centers[list(path)]
            if T > 1 and np.any(np.hypot(*np.diff(pts, axis=0).T) > v_max * 0.2 + 1e-9):
                continue
            best = max(best, objective(pts, p, mob, fs, aps))
        exact += objective(traj, p, mob, fs, aps) == best
    elapsed = time.perf_counter() - t0
    criterion(1, exact == n and elapsed < 10.0,
              f"{exact}/{n} random instances match enumeration exactly, {elapsed:.2f} s total")


# --- 2: delay regression equals the pseudo-inverse oracle -------------------------

def test_criterion_2_wls_oracle(criterion):
    rng = np.random.default_rng(1)
    n, worst = 60, 0.0
    for _ in range(n):
        m = int(rng.integers(10, 400))
        s = rng.normal(-45, 12, m)
        lab = rng.integers(0, 2, m).astype(np.int8)
        lab[:3], lab[3:6] = 0, 1
        nu = np.where(lab == 0, -40, -30) + 0.2 * s + rng.normal(0, 2, m)
        fs = random_features(rng, m, 1)
        fs.s[:, 0], fs.nu[:, 0] = s, nu
        got = np.array(fit_delay_params(fs, lab[:, None]))
        S = delay_design(s, lab)
        coef = np.linalg.pinv(S) @ nu
        want = np.r_[coef, np.mean((nu - S @ coef) ** 2)]
        worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    criterion(2, worst <= 1e-8, f"{n} random instances, worst relative deviation {worst:.2e} (limit 1e-8)")


# --- 3-7: default scenario --------------------------------------------------------

def test_criterion_3_monotone_ascent(scenario, criterion):
    rep = scenario[0.2]["report"]
    trace = np.array(rep.objective_trace)
    drop = float(np.max(trace[:-1] - trace[1:])) if len(trace) > 1 else 0.0
    ok = drop <= 1e-9 and rep.converged and rep.iterations <= 50
    criterion(3, ok, f"largest objective drop {max(drop, 0.0):.1e}, converged={rep.converged} "
                     f"after {rep.iterations} iterations ({rep.start} start)")


def test_criterion_4_los_recovery(scenario, criterion):
    r = scenario[0.2]
    acc, runtime = r["proposed"].los_accuracy, r["runtime"]
    criterion(4, acc >= 0.90 and runtime < 300, f"indicator accuracy {acc:.3f} (>= 0.90), fit {runtime:.0f} s (< 300 s)")


def test_criterion_5_relative_ordering(scenario, criterion):
    r = scenario[0.2]
    prop, wcl = r["proposed"], r["wcl_train"]
    nlos, dlos = prop.region_means["NLOS"], prop.region_means["double-LOS"]
    ok = prop.mean_error <= 0.5 * wcl.mean_error and nlos >= dlos
    criterion(5, ok, f"proposed {prop.mean_error:.3f} m vs WCL {wcl.mean_error:.3f} m; "
                     f"NLOS {nlos:.3f} m (n={prop.region_counts['NLOS']}) vs double-LOS {dlos:.3f} m")


def test_criterion_6_genie_gap(scenario, criterion):
    r = scenario[0.2]
    e, g = r["proposed"].mean_error, r["genie"].mean_error
    criterion(6, e <= g + 0.25, f"unsupervised {e:.3f} m vs genie-aided {g:.3f} m (gap {e - g:+.3f}, limit 0.25)")


def test_criterion_7_noise_robustness(scenario, criterion):
    lo, hi = scenario[0.2]["test"], scenario[0.4]["test"]
    order = {m: hi[m].mean_error >= lo[m].mean_error for m in lo}
    slack = {n: scenario[n]["test"]["proposed"].mean_error <= scenario[n]["test"]["KNN"].mean_error + 0.1
             for n in NOISE_LEVELS}
    cells = ", ".join(f"{m} {lo[m].mean_error:.3f}->{hi[m].mean_error:.3f}" for m in lo)
    criterion(7, all(order.values()) and all(slack.values()),
              f"test E_loc at noise 0.2->0.4: {cells}; "
              f"non-increasing for {[m for m, ok in order.items() if not ok] or 'none'}")


# --- 8: MUSIC exactness -----------------------------------------------------------

def test_criterion_8_music_exactness(criterion):
    rng = np.random.default_rng(0)
    cfg = RadioConfig()
    step = DEFAULT_GRID_STEP
    span = local_angle_grid(step)[-1]
    errs = []
    for _ in range(1000):
        orient = rng.uniform(0, 2 * math.pi)
        ap = AccessPoint((0.0, 0.0), orient, 8, cfg.wavelength / 2)
        phi = rng.uniform(-span, span)
        gain = rng.uniform(0.1, 3) * np.exp(1j * rng.uniform(0, 2 * math.pi))
        H = synth_csi([MultipathComponent(gain, rng.uniform(0, 1e-7), orient + phi)], ap, cfg)
        errs.append(abs(wrap_angle(music_aod(H, ap, step) - (orient + phi))))
    errs = np.array(errs)
    over = int(np.sum(errs > step / 2))
    criterion(8, over == 0, f"MUSIC: {1000 - over}/1000 random single-path angles within grid_step/2, "
                            f"worst {errs.max():.3e} rad vs {step / 2:.3e}")
