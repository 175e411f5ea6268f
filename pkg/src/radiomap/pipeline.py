"""Scenario plumbing shared by the CLI, the experiment scripts and the acceptance suite."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .channel import STREAM_SCENE, CsiMatrix, RadioConfig, simulate_csi, substream
from .config import RunConfig
from .features import FeatureSet, extract_all
from .inference import AlternateConfig, FitReport, Grid, PropagationParams, alternate
from .inference.fit import MIN_CELL, VAR_FLOOR, angle_residuals, fit_delay_params, fit_power_params
from .localize import RadioMap
from .scene import Environment, MobilityParams, Trajectory, gen_trajectory, load_scene, los_labels


@dataclass
class Dataset:
    env: Environment
    truth: Trajectory
    csi: list[CsiMatrix]
    features: FeatureSet
    true_labels: np.ndarray     # geometric LOS (0) / NLOS (1), -1 where no CSI was recorded


def radio_config(cfg: RunConfig) -> RadioConfig:
    r = cfg.radio
    return RadioConfig(r.carrier_freq, r.bandwidth, r.num_subcarriers)


def load_environment(cfg: RunConfig) -> Environment:
    """Scene file with every AP's element spacing overridden by the run config."""
    env = load_scene(cfg.scene_path())
    aps = [dataclasses.replace(ap, element_spacing=cfg.radio.element_spacing) for ap in env.aps]
    return Environment(aps, env.obstacles, env.bounds)


def mobility_params(cfg: RunConfig) -> MobilityParams:
    m = cfg.mobility
    return MobilityParams(m.gamma, m.mean_velocity, m.speed, m.slot_duration)


def make_grid(cfg: RunConfig, env: Environment) -> Grid:
    return Grid.covering(env.bounds, cfg.fit.resolution)


def alternate_config(cfg: RunConfig) -> AlternateConfig:
    f = cfg.fit
    return AlternateConfig(f.max_iter, f.tol, f.v_max, cfg.mobility.slot_duration, f.restarts, cfg.seed,
                           f.bearing_start)


def simulate_trajectory(cfg: RunConfig, env: Environment, run: int = 0) -> Trajectory:
    m = cfg.mobility
    seed = substream(cfg.seed, STREAM_SCENE, run, 0)
    return gen_trajectory(mobility_params(cfg), m.num_slots, env, seed, m.start,
                          v_max=cfg.fit.v_max, margin=m.margin)


def featurize(csi: list[CsiMatrix], env: Environment, cfg: RunConfig, T: int) -> FeatureSet:
    feats = extract_all(csi, env.aps, math.radians(cfg.fit.music_step_deg), radio_config(cfg).wavelength)
    return FeatureSet.from_records(feats, T, len(env.aps))


def simulate(cfg: RunConfig, run: int = 0, env: Environment | None = None) -> Dataset:
    """Walk, CSI and features for one run; `run` selects an independent trajectory and channel draw."""
    env = env or load_environment(cfg)
    truth = simulate_trajectory(cfg, env, run)
    ch = cfg.channel
    csi = simulate_csi(env, truth.points, radio_config(cfg), seed=_run_seed(cfg.seed, run),
                       noise_variance=ch.noise_variance, path_loss_exponent=ch.path_loss_exponent,
                       gain=ch.gain)
    fs = featurize(csi, env, cfg, len(truth))
    labels = los_labels(env, truth.points)
    labels[~fs.mask] = -1
    return Dataset(env, truth, csi, fs, labels)


def _run_seed(seed: int, run: int) -> int:
    # run 0 keeps the bare seed so a single-run CLI invocation matches the library call
    if run == 0:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), run]).generate_state(1)[0])


def fit(ds_or_fs, env: Environment, cfg: RunConfig,
        fixed_params: PropagationParams | None = None) -> tuple[FitReport, RadioMap]:
    fs = ds_or_fs.features if isinstance(ds_or_fs, Dataset) else ds_or_fs
    grid = make_grid(cfg, env)
    report = alternate(fs, env, grid, alternate_config(cfg), fixed_params=fixed_params)
    return report, RadioMap(report.params, grid, list(env.aps), report.mobility)


def genie_params(ds: Dataset) -> PropagationParams:
    """Propagation parameters fitted with the true positions and true LOS/NLOS classes.

    A class the walk never produces copies the pooled fit, so the parameter
    set stays complete.
    """
    fs, aps, labels = ds.features, ds.env.aps, ds.true_labels
    if min(np.sum(labels == k) for k in (0, 1)) >= MIN_CELL:
        b0, b1, a, var = fit_delay_params(fs, labels)
    else:
        S = np.column_stack([np.ones(fs.mask.sum()), fs.s[fs.mask]])
        coef, *_ = np.linalg.lstsq(S, fs.nu[fs.mask], rcond=None)
        b0 = b1 = float(coef[0])
        a = float(coef[1])
        var = max(float(np.mean((fs.nu[fs.mask] - S @ coef) ** 2)), VAR_FLOOR)
    beta, alpha, rss_var = fit_power_params(fs, ds.truth, aps, labels)
    r2 = angle_residuals(fs, ds.truth, aps) ** 2
    angle_var = np.array([max(float(np.mean(r2[sel] if sel.any() else r2[fs.mask])), VAR_FLOOR)
                          for sel in (fs.mask & (labels == 0), fs.mask & (labels == 1))])
    return PropagationParams(beta, alpha, rss_var, angle_var, [b0, b1], a, var, labels)
