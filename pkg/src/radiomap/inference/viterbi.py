"""Second-order Viterbi decoding on a lattice.

The Gauss-Markov prior conditions x_t on (x_{t-1}, x_{t-2}), so the decoder
runs ordinary Viterbi over pair states. A pair state is stored as
(current cell, step offset to the previous cell); because the lattice is
uniform, the transition score depends only on the two consecutive offsets
and is precomputed as an (E, E) kernel.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from ..features import FeatureSet
from ..scene import AccessPoint, MobilityParams, Trajectory
from .model import Geometry, Grid, PropagationParams, transition_variance, labelled_emissions


def step_offsets(grid: Grid, reach: float) -> np.ndarray:
    """Integer (dcol, drow) offsets with length <= reach, sorted by (drow, dcol)."""
    if reach < grid.resolution:
        raise ValueError("v_max * delta must be at least the grid resolution")
    r = int(math.floor(reach / grid.resolution + 1e-9))
    out = [(dj, di) for di in range(-r, r + 1) for dj in range(-r, r + 1)
           if grid.resolution * math.hypot(di, dj) <= reach + 1e-9]
    return np.array(out, dtype=np.int64)


def predecessor_table(grid: Grid, offsets: np.ndarray) -> np.ndarray:
    """prev[c, e] = cell reached from c by stepping back along offset e, or -1."""
    i, j = np.divmod(np.arange(grid.size), grid.cols)
    pi = i[:, None] - offsets[None, :, 1]
    pj = j[:, None] - offsets[None, :, 0]
    ok = (pi >= 0) & (pi < grid.rows) & (pj >= 0) & (pj < grid.cols)
    return np.where(ok, pi * grid.cols + pj, -1).astype(np.int64)


def transition_kernel(grid: Grid, offsets: np.ndarray, mob: MobilityParams) -> np.ndarray:
    """K[f, e]: mobility log-density of step e following step f."""
    var = transition_variance(mob)
    steps = offsets * grid.resolution
    drift = (1.0 - mob.gamma) * mob.slot_duration * np.asarray(mob.mean_velocity)
    r = steps[None, :, :] - mob.gamma * steps[:, None, :] - drift
    return -math.log(2 * math.pi * var) - np.sum(r * r, axis=-1) / (2 * var)


@numba.njit(cache=True)
def _forward(em, prev, K, bp):
    T, C = em.shape
    E = prev.shape[1]
    dp = np.full((C, E), -np.inf)
    for c in range(C):
        for e in range(E):
            p = prev[c, e]
            if p >= 0:
                dp[c, e] = em[1, c] + em[0, p]
    for t in range(2, T):
        new = np.full((C, E), -np.inf)
        for c in range(C):
            for e in range(E):
                p = prev[c, e]
                if p < 0:
                    continue
                best = -np.inf
                arg = 0
                for f in range(E):
                    v = dp[p, f] + K[f, e]
                    if v > best:
                        best = v
                        arg = f
                bp[t, c, e] = arg
                new[c, e] = best + em[t, c]
        dp = new
    return dp


def decode(em: np.ndarray, grid: Grid, mob: MobilityParams, v_max: float) -> np.ndarray:
    """Cell indices maximising sum(em[t, x_t]) + sum_{t>=3} mobility terms.

    Steps longer than ``v_max * slot_duration`` are infeasible. Ties go to the
    lowest flattened (cell, offset) index.
    """
    em = np.ascontiguousarray(em, dtype=float)
    T, C = em.shape
    if C != grid.size:
        raise ValueError("emission table does not match the grid")
    if T == 1:
        return np.array([int(np.argmax(em[0]))])
    offsets = step_offsets(grid, v_max * mob.slot_duration)
    prev = predecessor_table(grid, offsets)
    K = np.ascontiguousarray(transition_kernel(grid, offsets, mob))
    E = len(offsets)
    bp = np.zeros((T, C, E), dtype=np.int8 if E <= 127 else np.int16)
    dp = _forward(em, prev, K, bp)
    flat = int(np.argmax(dp))
    if not np.isfinite(dp.flat[flat]):
        raise ValueError("disconnected state graph: no feasible trajectory")
    c, e = divmod(flat, E)
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = c
    for t in range(T - 1, 1, -1):
        p, f = prev[c, e], int(bp[t, c, e])
        path[t - 1] = p
        c, e = p, f
    path[0] = prev[c, e]
    return path


def viterbi2(fs: FeatureSet, params: PropagationParams, mob: MobilityParams, grid: Grid,
             aps: list[AccessPoint], v_max: float = 5.0) -> Trajectory:
    """Most likely lattice trajectory given frozen per-measurement LOS/NLOS classes."""
    centers = grid.centers()
    em = labelled_emissions(fs, Geometry.build(centers, aps), params)
    return Trajectory(centers[decode(em, grid, mob, v_max)], mob.slot_duration)
