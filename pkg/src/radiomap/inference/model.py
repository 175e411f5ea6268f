"""HMM building blocks: parameter containers, the candidate grid, emission and mobility densities."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureSet, FeatureVec
from ..scene import AccessPoint, Bounds, MobilityParams, geometric_azimuth, wrap_angle

LOG_2PI = math.log(2 * math.pi)
MIN_DISTANCE = 1e-3


@dataclass
class PropagationParams:
    """Emission parameters; arrays indexed [q, k] or [k] with k = 0 (LOS), 1 (NLOS).

    `labels[t, q]` holds the hard class of each measurement (-1 where missing).
    The one-hot view is :attr:`u`.
    """
    beta: np.ndarray
    alpha: np.ndarray
    rss_var: np.ndarray
    angle_var: np.ndarray
    b: np.ndarray
    a: float
    delay_var: float
    labels: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.rss_var = np.asarray(self.rss_var, dtype=float)
        self.angle_var = np.asarray(self.angle_var, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.a = float(self.a)
        self.delay_var = float(self.delay_var)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if np.any(self.rss_var <= 0) or np.any(self.angle_var <= 0) or self.delay_var <= 0:
            raise ValueError("variances must be positive")

    @property
    def u(self) -> np.ndarray:
        """Indicators u[t, q, k]; rows of missing measurements are all zero."""
        u = np.zeros(self.labels.shape + (2,), dtype=np.int8)
        for k in (0, 1):
            u[..., k] = self.labels == k
        return u

    def check_indicators(self, mask: np.ndarray) -> None:
        s = self.u.sum(axis=-1)
        assert np.all(s[mask] == 1) and np.all(s[~mask] == 0), "indicator constraint violated"

    def to_dict(self) -> dict:
        return {"beta": self.beta.tolist(), "alpha": self.alpha.tolist(), "rss_var": self.rss_var.tolist(),
                "angle_var": self.angle_var.tolist(), "b": self.b.tolist(), "a": self.a,
                "delay_var": self.delay_var, "labels": self.labels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PropagationParams":
        return cls(d["beta"], d["alpha"], d["rss_var"], d["angle_var"], d["b"], d["a"],
                   d["delay_var"], np.asarray(d.get("labels", []), dtype=np.int8))

    def replace_labels(self, labels: np.ndarray) -> "PropagationParams":
        return PropagationParams(self.beta, self.alpha, self.rss_var, self.angle_var,
                                 self.b, self.a, self.delay_var, labels)


@dataclass(frozen=True)
class Grid:
    """Cell-centred lattice: cell (i, j) sits at origin + ((j + 1/2) tau, (i + 1/2) tau)."""
    origin: tuple[float, float]
    resolution: float
    rows: int
    cols: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("grid resolution must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid must have at least one cell")

    @classmethod
    def covering(cls, bounds: Bounds, resolution: float) -> "Grid":
        cols = max(1, math.ceil(bounds.width / resolution - 1e-9))
        rows = max(1, math.ceil(bounds.height / resolution - 1e-9))
        return cls((bounds.xmin, bounds.ymin), resolution, rows, cols)

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def dims(self) -> tuple[int, int]:
        return self.rows, self.cols

    def centers(self) -> np.ndarray:
        i, j = np.divmod(np.arange(self.size), self.cols)
        return np.column_stack([self.origin[0] + (j + 0.5) * self.resolution,
                                self.origin[1] + (i + 0.5) * self.resolution])

    def snap(self, points: np.ndarray) -> np.ndarray:
        """Index of the nearest cell centre for each point (clamped to the lattice)."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        j = np.clip(np.floor((p[:, 0] - self.origin[0]) / self.resolution), 0, self.cols - 1)
        i = np.clip(np.floor((p[:, 1] - self.origin[1]) / self.resolution), 0, self.rows - 1)
        return (i * self.cols + j).astype(np.int64)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "resolution": self.resolution, "rows": self.rows, "cols": self.cols}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(d["origin"]), float(d["resolution"]), int(d["rows"]), int(d["cols"]))


# --- emission -----------------------------------------------------------------

def emission_logpdf(y: FeatureVec, x, ap: AccessPoint, k: int, params: PropagationParams) -> float:
    """Log-density of one measurement under class k with the user at x."""
    q = y.ap_index
    d = math.hypot(x[0] - ap.position[0], x[1] - ap.position[1])
    if d == 0.0:
        raise ValueError("user position coincides with the AP")
    mu_s = params.beta[q, k] - params.alpha[q, k] * math.log10(d)
    r_s = y.rss_db - mu_s
    r_th = wrap_angle(y.aod - geometric_azimuth(x, ap.position))
    r_nu = y.delay_var_db - (params.b[k] + params.a * y.rss_db)
    vs, vt, vn = params.rss_var[q, k], params.angle_var[k], params.delay_var
    return (-0.5 * (r_s * r_s / vs + r_th * r_th / vt + r_nu * r_nu / vn)
            - 0.5 * math.log(vs * vt * vn) - 1.5 * LOG_2PI)


@dataclass
class Geometry:
    """log10 distance and azimuth from every AP to a set of candidate points, shape (Q, C)."""
    logd: np.ndarray
    azimuth: np.ndarray

    @classmethod
    def build(cls, points: np.ndarray, aps: list[AccessPoint]) -> "Geometry":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        o = np.array([ap.position for ap in aps], dtype=float)
        diff = pts[None, :, :] - o[:, None, :]
        d = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), MIN_DISTANCE)
        return cls(np.log10(d), np.arctan2(diff[..., 1], diff[..., 0]))


def class_emission(fs: FeatureSet, geom: Geometry, params: PropagationParams, t, q: int, k: int) -> np.ndarray:
    """Emission log-density of measurements (t, q) under class k at every geometry point.

    `t` may be an index array; the result has shape (len(t), C).
    """
    s = fs.s[t, q][..., None]
    th = fs.aod[t, q][..., None]
    nu = fs.nu[t, q][..., None]
    vs, vt, vn = params.rss_var[q, k], params.angle_var[k], params.delay_var
    r_s = s - (params.beta[q, k] - params.alpha[q, k] * geom.logd[q][None, :])
    r_th = wrap_angle(th - geom.azimuth[q][None, :])
    r_nu = nu - (params.b[k] + params.a * s)
    return (-0.5 * (r_s ** 2 / vs + r_th ** 2 / vt + r_nu ** 2 / vn)
            - 0.5 * math.log(vs * vt * vn) - 1.5 * LOG_2PI)


def labelled_emissions(fs: FeatureSet, geom: Geometry, params: PropagationParams) -> np.ndarray:
    """Sum over APs of the emission under each measurement's own class, shape (T, C)."""
    C = geom.logd.shape[1]
    out = np.zeros((fs.T, C))
    for q in range(fs.Q):
        for k in (0, 1):
            rows = np.nonzero(fs.mask[:, q] & (params.labels[:, q] == k))[0]
            if rows.size:
                out[rows] += class_emission(fs, geom, params, rows, q, k)
    return out


def pointwise_emissions(fs: FeatureSet, X: np.ndarray, aps: list[AccessPoint],
                        params: PropagationParams) -> np.ndarray:
    """Labelled emission sum for slot t evaluated at its own position X[t], shape (T,)."""
    geom = Geometry.build(X, aps)
    total = np.zeros(fs.T)
    for q in range(fs.Q):
        for k in (0, 1):
            rows = np.nonzero(fs.mask[:, q] & (params.labels[:, q] == k))[0]
            if rows.size == 0:
                continue
            vs, vt, vn = params.rss_var[q, k], params.angle_var[k], params.delay_var
            s = fs.s[rows, q]
            r_s = s - (params.beta[q, k] - params.alpha[q, k] * geom.logd[q, rows])
            r_th = wrap_angle(fs.aod[rows, q] - geom.azimuth[q, rows])
            r_nu = fs.nu[rows, q] - (params.b[k] + params.a * s)
            total[rows] += (-0.5 * (r_s ** 2 / vs + r_th ** 2 / vt + r_nu ** 2 / vn)
                            - 0.5 * math.log(vs * vt * vn) - 1.5 * LOG_2PI)
    return total


def best_class_emissions(fs: FeatureSet, geom: Geometry, params: PropagationParams) -> np.ndarray:
    """Sum over APs of max_k emission, shape (T, C); missing measurements contribute nothing."""
    C = geom.logd.shape[1]
    out = np.zeros((fs.T, C))
    for q in range(fs.Q):
        rows = np.nonzero(fs.mask[:, q])[0]
        if rows.size:
            out[rows] += np.maximum(class_emission(fs, geom, params, rows, q, 0),
                                    class_emission(fs, geom, params, rows, q, 1))
    return out


# --- mobility -----------------------------------------------------------------

def transition_variance(mob: MobilityParams) -> float:
    g = mob.gamma
    if not 0.0 < g < 1.0:
        raise ValueError("degenerate mobility: gamma must lie strictly inside (0, 1)")
    if mob.velocity_sigma <= 0:
        raise ValueError("degenerate mobility: velocity_sigma must be positive")
    return (1.0 - g * g) * mob.slot_duration ** 2 * mob.velocity_sigma ** 2


def mobility_residual(x_t, x_prev, x_prev2, mob: MobilityParams) -> np.ndarray:
    g, dt = mob.gamma, mob.slot_duration
    return (np.asarray(x_t, float) - (1 + g) * np.asarray(x_prev, float) + g * np.asarray(x_prev2, float)
            - (1 - g) * dt * np.asarray(mob.mean_velocity))


def mobility_logpdf(x_t, x_prev, x_prev2, mob: MobilityParams) -> float:
    """2-D isotropic Gaussian log-density of the Gauss-Markov step residual."""
    var = transition_variance(mob)
    r = mobility_residual(x_t, x_prev, x_prev2, mob)
    return float(-math.log(2 * math.pi * var) - (r @ r) / (2 * var))


def trajectory_mobility_logpdf(X: np.ndarray, mob: MobilityParams) -> float:
    X = np.asarray(X, dtype=float)
    if len(X) < 3:
        return 0.0
    var = transition_variance(mob)
    r = mobility_residual(X[2:], X[1:-1], X[:-2], mob)
    return float(-(len(r)) * math.log(2 * math.pi * var) - np.sum(r * r) / (2 * var))
