"""Alternating maximisation of the joint HMM log-likelihood."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureSet
from ..scene import Environment, MobilityParams, Trajectory, mobility_to_dict
from .fit import DelayFit, fit_angle_vars, fit_delay_block, fit_mobility, fit_power_params
from .model import Grid, PropagationParams, pointwise_emissions, trajectory_mobility_logpdf
from .viterbi import viterbi2

log = logging.getLogger(__name__)


@dataclass
class AlternateConfig:
    max_iter: int = 50
    tol: float = 1e-4
    v_max: float = 5.0
    slot_duration: float = 0.2
    restarts: int = 0
    seed: int = 0
    bearing_start: bool = True


@dataclass
class FitReport:
    objective_trace: list[float]
    iterations: int
    converged: bool
    params: PropagationParams
    mobility: MobilityParams
    trajectory: Trajectory
    delay_trace: list[float] = field(default_factory=list)
    start: str = "wcl"

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "objective_trace": self.objective_trace,
            "iterations": self.iterations,
            "converged": self.converged,
            "params": self.params.to_dict(),
            "mobility": mobility_to_dict(self.mobility),
            "trajectory": self.trajectory.points.tolist(),
            "indicators": self.params.labels.tolist(),
        }


def objective(X, params: PropagationParams, mob: MobilityParams, fs: FeatureSet, aps) -> float:
    """Joint log-likelihood: labelled emissions over all slots plus mobility from the third slot."""
    pts = X.points if isinstance(X, Trajectory) else np.asarray(X, dtype=float)
    return float(np.sum(pointwise_emissions(fs, pts, aps, params)) + trajectory_mobility_logpdf(pts, mob))


def _best_delay_fit(fs: FeatureSet, cfg: AlternateConfig) -> DelayFit:
    best = fit_delay_block(fs)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        init = rng.integers(0, 2, size=fs.mask.shape).astype(np.int8)
        try:
            cand = fit_delay_block(fs, init=np.where(fs.mask, init, -1))
        except ValueError:
            continue
        if cand.trace[-1] > best.trace[-1]:
            best = cand
    return best


def _propagation(fs, X, aps, delay: DelayFit) -> PropagationParams:
    beta, alpha, rss_var = fit_power_params(fs, X, aps, delay.labels)
    angle_var = fit_angle_vars(fs, X, aps, delay.labels)
    return PropagationParams(beta, alpha, rss_var, angle_var, delay.b, delay.a, delay.var, delay.labels)


def _ascend(fs: FeatureSet, aps, grid: Grid, cfg: AlternateConfig, X0: np.ndarray,
            delay: DelayFit | None, fixed_params: PropagationParams | None, start: str) -> FitReport:
    """One run of the alternating loop from the provisional trajectory X0."""
    params = _propagation(fs, X0, aps, delay) if fixed_params is None else fixed_params
    params.check_indicators(fs.mask)
    mob = fit_mobility(Trajectory(X0, cfg.slot_duration))

    def L(X, p, m):
        return objective(X, p, m, fs, aps)

    trace: list[float] = []
    best = None
    converged = False
    it = 0
    while it < cfg.max_iter:
        it += 1
        traj = viterbi2(fs, params, mob, grid, aps, cfg.v_max)
        X = traj.points
        cur = L(X, params, mob)
        if fixed_params is None:
            try:
                cand = _propagation(fs, X, aps, delay)
            except ValueError:
                cand = None
            if cand is not None:
                val = L(X, cand, mob)
                if val >= cur:
                    params, cur = cand, val
        try:
            cand_mob = fit_mobility(traj)
        except ValueError:
            cand_mob = None
        if cand_mob is not None:
            val = L(X, params, cand_mob)
            if val >= cur:
                mob, cur = cand_mob, val
        params.check_indicators(fs.mask)
        log.info("%s start, iteration %d: objective %.6f", start, it, cur)
        improvement = cur - trace[-1] if trace else math.inf
        trace.append(cur)
        best = (traj, params, mob)
        if improvement < cfg.tol:
            converged = True
            break
    traj, params, mob = best
    return FitReport(trace, it, converged, params, mob, traj,
                     list(delay.trace) if delay is not None else [], start)


def alternate(fs: FeatureSet, env: Environment, grid: Grid, cfg: AlternateConfig | None = None,
              *, init_trajectory: np.ndarray | None = None,
              fixed_params: PropagationParams | None = None) -> FitReport:
    """Block-coordinate ascent over trajectory, propagation and mobility parameters.

    The delay/indicator block does not involve the trajectory, so it is solved
    once up front. Each outer iteration then decodes the trajectory and refits
    path loss, angle spread and mobility; a parameter update is kept only if it
    does not lower the objective. With `fixed_params` the propagation model is
    frozen and only trajectory and mobility alternate.

    The provisional trajectory is the WCL track. Unless disabled, a second run
    starts from the angle-only grid fix and the run with the higher final
    objective is returned. An explicit `init_trajectory` replaces both.
    """
    from ..localize import bearing_all, wcl_all

    cfg = cfg or AlternateConfig()
    if fs.T < 4:
        raise ValueError("need T >= 4 slots")
    if not fs.mask.any():
        raise ValueError("no measurements")
    aps = env.aps
    delay = _best_delay_fit(fs, cfg) if fixed_params is None else None

    if init_trajectory is not None:
        starts = [("given", np.asarray(init_trajectory, dtype=float))]
    else:
        starts = [("wcl", wcl_all(fs, aps))]
        if cfg.bearing_start:
            starts.append(("bearing", bearing_all(fs, aps, grid)))
    best = None
    for name, X0 in starts:
        rep = _ascend(fs, aps, grid, cfg, X0, delay, fixed_params, name)
        if best is None or rep.objective_trace[-1] > best.objective_trace[-1]:
            best = rep
    return best
