"""2-D indoor scene: access points, wall segments, LOS visibility and mobility.

Angles are radians everywhere in this module; the scene file stores AP
orientation in degrees and is converted on load.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
_EPS = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = math.pi - np.mod(math.pi - np.asarray(a, dtype=float), TWO_PI)
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class AccessPoint:
    position: Point2
    orientation: float
    num_antennas: int = 8
    element_spacing: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "position", Point2(float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "orientation", float(self.orientation) % TWO_PI)
        if self.num_antennas < 2:
            raise ValueError("an AP needs at least 2 antennas")
        if self.element_spacing <= 0:
            raise ValueError("element spacing must be positive")


@dataclass(frozen=True)
class Obstacle:
    a: Point2
    b: Point2
    reflectivity: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "a", Point2(float(self.a[0]), float(self.a[1])))
        object.__setattr__(self, "b", Point2(float(self.b[0]), float(self.b[1])))
        if self.a == self.b:
            raise ValueError("obstacle endpoints must be distinct")
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError("reflectivity must lie in [0, 1]")


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("empty bounds")

    def contains(self, p, margin: float = 0.0) -> bool:
        return (self.xmin + margin <= p[0] <= self.xmax - margin
                and self.ymin + margin <= p[1] <= self.ymax - margin)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


@dataclass
class Environment:
    aps: list[AccessPoint]
    obstacles: list[Obstacle]
    bounds: Bounds

    def __post_init__(self):
        if not self.aps:
            raise ValueError("environment needs at least one AP")
        for ap in self.aps:
            if not self.bounds.contains(ap.position):
                raise ValueError(f"AP at {ap.position} lies outside the bounds")

    @property
    def ap_positions(self) -> np.ndarray:
        return np.array([ap.position for ap in self.aps], dtype=float)


@dataclass(frozen=True)
class MobilityParams:
    gamma: float
    mean_velocity: tuple[float, float] = (0.0, 0.0)
    velocity_sigma: float = 1.0
    slot_duration: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.velocity_sigma < 0:
            raise ValueError("velocity_sigma must be non-negative")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be positive")
        object.__setattr__(self, "mean_velocity",
                           (float(self.mean_velocity[0]), float(self.mean_velocity[1])))


@dataclass
class Trajectory:
    points: np.ndarray
    slot_duration: float = 0.2

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("trajectory contains non-finite coordinates")

    def __len__(self) -> int:
        return len(self.points)


# --- geometry -----------------------------------------------------------------

def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def segment_blocks(o, x, a, b) -> bool:
    """Whether wall segment [a, b] (closed) meets the sight segment (o, x) (open)."""
    dx, dy = x[0] - o[0], x[1] - o[1]
    ex, ey = b[0] - a[0], b[1] - a[1]
    wx, wy = a[0] - o[0], a[1] - o[1]
    denom = _cross(dx, dy, ex, ey)
    scale = max(math.hypot(dx, dy) * math.hypot(ex, ey), _EPS)
    if abs(denom) > _EPS * scale:
        s = _cross(wx, wy, ex, ey) / denom
        u = _cross(wx, wy, dx, dy) / denom
        tol = 1e-12
        return tol < s < 1.0 - tol and -tol <= u <= 1.0 + tol
    # parallel: only a collinear overlap with the open sight segment blocks
    if abs(_cross(wx, wy, dx, dy)) > _EPS * max(math.hypot(dx, dy) * math.hypot(wx, wy), _EPS):
        return False
    dd = dx * dx + dy * dy
    ta = (wx * dx + wy * dy) / dd
    tb = ((b[0] - o[0]) * dx + (b[1] - o[1]) * dy) / dd
    lo, hi = min(ta, tb), max(ta, tb)
    return hi > 0.0 and lo < 1.0


def path_clear(obstacles: Sequence[Obstacle], o, x, skip: Obstacle | None = None) -> bool:
    return not any(segment_blocks(o, x, w.a, w.b) for w in obstacles if w is not skip)


def los_visible(env: Environment, o, x) -> bool:
    """True when no wall of `env` cuts the open segment between `o` and `x`."""
    if o[0] == x[0] and o[1] == x[1]:
        raise ValueError("degenerate pair: coincident endpoints")
    return path_clear(env.obstacles, o, x)


def geometric_azimuth(x, o) -> float:
    """Azimuth of `x` seen from `o`, wrapped to (-pi, pi]."""
    dx, dy = x[0] - o[0], x[1] - o[1]
    if dx == 0 and dy == 0:
        raise ValueError("degenerate pair: coincident endpoints")
    return float(wrap_angle(math.atan2(dy, dx)))


def los_labels(env: Environment, points: np.ndarray) -> np.ndarray:
    """Ground-truth region labels k[t, q]: 0 for LOS, 1 for NLOS."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.ones((len(points), len(env.aps)), dtype=np.int8)
    for t, x in enumerate(points):
        for q, ap in enumerate(env.aps):
            if los_visible(env, ap.position, x):
                out[t, q] = 0
    return out


# --- mobility -----------------------------------------------------------------

def _reflect_into(p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    p = p.copy()
    for i in range(2):
        if p[i] < lo[i]:
            p[i] = 2 * lo[i] - p[i]
        elif p[i] > hi[i]:
            p[i] = 2 * hi[i] - p[i]
    return p


def gen_trajectory(mob: MobilityParams, T: int, env: Environment, seed: int,
                   start, start_velocity=(0.0, 0.0), *, v_max: float | None = None,
                   margin: float = 0.0, max_retries: int = 100) -> Trajectory:
    """Sample a Gauss-Markov walk of `T` points that stays inside the scene bounds.

    Steps that leave the (margin-shrunk) bounds or exceed ``v_max * delta`` are
    re-drawn up to `max_retries` times; after that the step is mirrored off the
    boundary and clipped to the speed limit.
    """
    if T < 3:
        raise ValueError("a trajectory needs T >= 3")
    b = env.bounds
    lo = np.array([b.xmin + margin, b.ymin + margin])
    hi = np.array([b.xmax - margin, b.ymax - margin])
    start = np.asarray(start, dtype=float)
    if np.any(start < lo) or np.any(start > hi):
        raise ValueError("start point outside bounds")

    rng = np.random.default_rng(seed)
    g, dt = mob.gamma, mob.slot_duration
    vbar = np.asarray(mob.mean_velocity, dtype=float)
    noise_scale = math.sqrt(max(1.0 - g * g, 0.0)) * dt * mob.velocity_sigma
    max_step = None if v_max is None else v_max * dt

    pts = np.empty((T, 2))
    pts[0] = start
    prev_step = np.asarray(start_velocity, dtype=float) * dt
    for t in range(1, T):
        drift = g * prev_step + (1.0 - g) * dt * vbar
        for _ in range(max_retries):
            step = drift + noise_scale * rng.standard_normal(2)
            cand = pts[t - 1] + step
            ok_speed = max_step is None or np.hypot(*step) <= max_step
            if ok_speed and np.all(cand >= lo) and np.all(cand <= hi):
                break
        else:
            if max_step is not None:
                n = np.hypot(*step)
                if n > max_step:
                    step = step * (max_step / n)
            cand = _reflect_into(pts[t - 1] + step, lo, hi)
            if np.any(cand < lo) or np.any(cand > hi):
                raise RuntimeError("trajectory stuck: step cannot be brought back inside bounds")
        pts[t] = cand
        prev_step = cand - pts[t - 1]
    return Trajectory(pts, dt)


# --- file formats -------------------------------------------------------------

def load_scene(path) -> Environment:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))


def ap_from_dict(a: dict) -> AccessPoint:
    return AccessPoint(tuple(a["position"]), math.radians(a["orientation_deg"]),
                       int(a.get("num_antennas", 8)), float(a.get("element_spacing_m", 0.15)))


def ap_to_dict(ap: AccessPoint) -> dict:
    return {"position": list(ap.position), "orientation_deg": math.degrees(ap.orientation),
            "num_antennas": ap.num_antennas, "element_spacing_m": ap.element_spacing}


def mobility_to_dict(m: MobilityParams) -> dict:
    return {"gamma": m.gamma, "mean_velocity": list(m.mean_velocity),
            "velocity_sigma": m.velocity_sigma, "slot_duration": m.slot_duration}


def mobility_from_dict(d: dict) -> MobilityParams:
    return MobilityParams(float(d["gamma"]), tuple(d["mean_velocity"]), float(d["velocity_sigma"]),
                          float(d["slot_duration"]))


def scene_from_dict(d: dict) -> Environment:
    (x0, y0), (x1, y1) = d["bounds"]
    aps = [ap_from_dict(a) for a in d["aps"]]
    walls = [Obstacle(tuple(w["a"]), tuple(w["b"]), float(w.get("reflectivity", 0.5)))
             for w in d.get("obstacles", [])]
    return Environment(aps, walls, Bounds(x0, y0, x1, y1))


def scene_to_dict(env: Environment) -> dict:
    b = env.bounds
    return {
        "bounds": [[b.xmin, b.ymin], [b.xmax, b.ymax]],
        "aps": [ap_to_dict(ap) for ap in env.aps],
        "obstacles": [{"a": list(w.a), "b": list(w.b), "reflectivity": w.reflectivity}
                      for w in env.obstacles],
    }


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for t, (x, y) in enumerate(traj.points):
            fh.write(json.dumps({"t": t, "x": float(x), "y": float(y)}) + "\n")


def load_trajectory(path, slot_duration: float = 0.2) -> Trajectory:
    recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    recs.sort(key=lambda r: r["t"])
    return Trajectory(np.array([[r["x"], r["y"]] for r in recs]), slot_duration)
