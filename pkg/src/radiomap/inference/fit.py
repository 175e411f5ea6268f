"""Closed-form and scalar-search parameter updates for the alternating fit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureSet
from ..scene import AccessPoint, MobilityParams, Trajectory, wrap_angle
from .model import LOG_2PI, MIN_DISTANCE, trajectory_mobility_logpdf

GAMMA_BRACKET = (1e-3, 1.0 - 1e-6)
SIGMA_V_FLOOR = 1e-6
VAR_FLOOR = 1e-6
MIN_CELL = 3

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Maximiser of a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    cands = [(f(lo), lo), (fc, c), (fd, d), (f(hi), hi)]
    return max(cands, key=lambda p: p[0])[1]


# --- mobility (P1) ------------------------------------------------------------

def _mobility_profile(steps: np.ndarray, gamma: float, dt: float):
    """v_bar, sigma_v and log-likelihood with gamma fixed."""
    cur, prev = steps[1:], steps[:-1]
    n = len(cur)
    z = cur - gamma * prev
    c = z.mean(axis=0)
    rss = float(np.sum((z - c) ** 2))
    one_m_g2 = 1.0 - gamma * gamma
    sigma2 = max(rss / (2 * n * one_m_g2 * dt * dt), SIGMA_V_FLOOR ** 2)
    var = one_m_g2 * dt * dt * sigma2
    ll = -n * math.log(2 * math.pi * var) - rss / (2 * var)
    vbar = c / ((1.0 - gamma) * dt)
    return vbar, math.sqrt(sigma2), ll


def fit_mobility(X, slot_duration: float | None = None) -> MobilityParams:
    """Maximum-likelihood Gauss-Markov parameters for a trajectory.

    gamma is found by golden-section search on the profile likelihood;
    v_bar and sigma_v are closed-form given gamma.
    """
    if isinstance(X, Trajectory):
        pts, dt = X.points, X.slot_duration if slot_duration is None else slot_duration
    else:
        pts, dt = np.asarray(X, dtype=float), 0.2 if slot_duration is None else slot_duration
    if len(pts) < 4:
        raise ValueError("fit_mobility needs T >= 4")
    steps = np.diff(pts, axis=0)
    if not np.any(steps):
        raise ValueError("static trajectory")
    gamma = golden_section_max(lambda g: _mobility_profile(steps, g, dt)[2], *GAMMA_BRACKET)
    vbar, sigma, _ = _mobility_profile(steps, gamma, dt)
    return MobilityParams(gamma, (float(vbar[0]), float(vbar[1])), sigma, dt)


def mobility_objective(X, mob: MobilityParams) -> float:
    pts = X.points if isinstance(X, Trajectory) else X
    return trajectory_mobility_logpdf(pts, mob)


# --- delay block (P2.1) -------------------------------------------------------

def wls_solve(S: np.ndarray, c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least squares via the normal equation (S^T W S)^{-1} S^T W c."""
    S = np.asarray(S, dtype=float)
    SW = S.T * np.asarray(w, dtype=float)
    A = SW @ S
    if np.linalg.matrix_rank(A) < A.shape[0] or np.linalg.cond(A) > 1e12:
        raise ValueError("degenerate regression: singular normal matrix")
    return np.linalg.solve(A, SW @ np.asarray(c, dtype=float))


def _flat(fs: FeatureSet, labels: np.ndarray):
    m = fs.mask
    return fs.s[m], fs.nu[m], np.asarray(labels)[m]


def delay_design(s: np.ndarray, lab: np.ndarray) -> np.ndarray:
    """Columns: indicator of class 0, indicator of class 1, RSS."""
    return np.column_stack([lab == 0, lab == 1, s]).astype(float)


@dataclass
class DelayFit:
    b: np.ndarray
    a: float
    var: float
    labels: np.ndarray
    trace: list[float] = field(default_factory=list)
    iterations: int = 0


def fit_delay_params(fs: FeatureSet, labels: np.ndarray) -> tuple[float, float, float, float]:
    """Shared-slope, per-class-intercept regression of delay-variance on RSS.

    Returns (b0, b1, a, sigma2_nu); the variance is the mean squared residual
    over every measurement.
    """
    s, nu, lab = _flat(fs, labels)
    for k in (0, 1):
        if np.sum(lab == k) < MIN_CELL:
            raise ValueError(f"class {k} has fewer than {MIN_CELL} measurements")
    S = delay_design(s, lab)
    b0, b1, a = wls_solve(S, nu, np.ones(len(nu)))
    res = nu - S @ np.array([b0, b1, a])
    return float(b0), float(b1), float(a), max(float(np.mean(res ** 2)), VAR_FLOOR)


def classify_los(fs: FeatureSet, b0: float, b1: float, a: float, var: float) -> np.ndarray:
    """Hard class per measurement: nearest delay line, ties to class 0; -1 where missing."""
    if var <= 0:
        raise ValueError("delay variance must be positive")
    r0 = (fs.nu - b0 - a * fs.s) ** 2
    r1 = (fs.nu - b1 - a * fs.s) ** 2
    lab = (r1 < r0).astype(np.int8)
    lab[~fs.mask] = -1
    return lab


def delay_objective(fs: FeatureSet, labels, b0, b1, a, var) -> float:
    s, nu, lab = _flat(fs, labels)
    r = nu - np.where(lab == 0, b0, b1) - a * s
    return float(-0.5 * np.sum(r * r / var + math.log(var) + LOG_2PI))


def median_split(fs: FeatureSet) -> np.ndarray:
    lab = (fs.nu > np.median(fs.nu[fs.mask])).astype(np.int8)
    lab[~fs.mask] = -1
    return lab


def _reseed(fs: FeatureSet, labels: np.ndarray, b, a) -> np.ndarray:
    """Move the 5% most extreme residuals of the populated class into the empty one."""
    labels = labels.copy()
    counts = [np.sum(labels == k) for k in (0, 1)]
    empty = int(np.argmin(counts))
    full = 1 - empty
    idx = np.argwhere(labels == full)
    res = np.abs(fs.nu[labels == full] - b[full] - a * fs.s[labels == full])
    n = max(MIN_CELL, int(math.ceil(0.05 * len(idx))))
    for t, q in idx[np.argsort(-res, kind="stable")[:n]]:
        labels[t, q] = empty
    return labels


def fit_delay_block(fs: FeatureSet, init: np.ndarray | None = None, max_iter: int = 50,
                    max_reseeds: int = 3) -> DelayFit:
    """Alternate the delay regression and LOS/NLOS reassignment until labels settle.

    The two clusters are unnamed until the end, where class 0 (LOS) is taken
    to be the one with the higher mean received power.
    """
    if fs.mask.sum() < 6:
        raise ValueError("need at least 6 measurements")
    labels = median_split(fs) if init is None else np.asarray(init, dtype=np.int8).copy()
    labels[~fs.mask] = -1
    trace: list[float] = []
    b, a = np.full(2, np.median(fs.nu[fs.mask])), 0.0
    reseeds = it = 0
    while True:
        if min(np.sum(labels == k) for k in (0, 1)) < MIN_CELL:
            if reseeds >= max_reseeds:
                raise ValueError("delay classes collapsed after re-seeding")
            labels = _reseed(fs, labels, b, a)
            reseeds += 1
            continue
        b0, b1, a, var = fit_delay_params(fs, labels)
        b = np.array([b0, b1])
        trace.append(delay_objective(fs, labels, b0, b1, a, var))
        it += 1
        new = classify_los(fs, b0, b1, a, var)
        if np.array_equal(new, labels) or it >= max_iter:
            break
        labels = new
    if np.mean(fs.s[labels == 0]) < np.mean(fs.s[labels == 1]):
        b0, b1 = b1, b0
        labels = np.where(labels >= 0, 1 - labels, -1).astype(np.int8)
    return DelayFit(np.array([b0, b1]), a, var, labels, trace, it)


# --- power block (P2.2) -------------------------------------------------------

def _positions(X) -> np.ndarray:
    return X.points if isinstance(X, Trajectory) else np.asarray(X, dtype=float)


def fit_power_params(fs: FeatureSet, X, aps: list[AccessPoint], labels: np.ndarray):
    """Per-(AP, class) log-distance path-loss regression.

    Returns (beta, alpha, rss_var) arrays of shape (Q, 2), with the mean
    modelled as beta - alpha * log10(d). Cells with fewer than three
    measurements copy the other class of the same AP with a 4x variance.
    """
    pts = _positions(X)
    Q = fs.Q
    beta, alpha, var = np.zeros((Q, 2)), np.zeros((Q, 2)), np.zeros((Q, 2))
    fitted = np.zeros((Q, 2), dtype=bool)
    for q, ap in enumerate(aps):
        d = np.maximum(np.hypot(pts[:, 0] - ap.position[0], pts[:, 1] - ap.position[1]), MIN_DISTANCE)
        logd = np.log10(d)
        for k in (0, 1):
            rows = fs.mask[:, q] & (labels[:, q] == k)
            if rows.sum() < MIN_CELL:
                continue
            xk, yk = logd[rows], fs.s[rows, q]
            if np.ptp(xk) < 1e-12:
                raise ValueError(f"collinear design for AP {q}, class {k}")
            S = np.column_stack([np.ones_like(xk), xk])
            coef, *_ = np.linalg.lstsq(S, yk, rcond=None)
            res = yk - S @ coef
            beta[q, k], alpha[q, k] = coef[0], -coef[1]
            var[q, k] = max(float(np.mean(res ** 2)), VAR_FLOOR)
            fitted[q, k] = True
        for k in (0, 1):
            if not fitted[q, k]:
                if not fitted[q, 1 - k]:
                    raise ValueError(f"AP {q} has too few measurements in both classes")
                beta[q, k], alpha[q, k] = beta[q, 1 - k], alpha[q, 1 - k]
                var[q, k] = 4.0 * var[q, 1 - k]
    return beta, alpha, var


# --- angle block (P2.3) -------------------------------------------------------

def angle_residuals(fs: FeatureSet, X, aps: list[AccessPoint]) -> np.ndarray:
    pts = _positions(X)
    o = np.array([ap.position for ap in aps])
    az = np.arctan2(pts[:, None, 1] - o[None, :, 1], pts[:, None, 0] - o[None, :, 0])
    return wrap_angle(fs.aod - az)


def fit_angle_vars(fs: FeatureSet, X, aps: list[AccessPoint], labels: np.ndarray) -> np.ndarray:
    """Per-class mean squared wrapped angle residual, floored at 1e-6 rad^2."""
    r = angle_residuals(fs, X, aps)
    out = np.zeros(2)
    for k in (0, 1):
        sel = fs.mask & (labels == k)
        if not sel.any():
            raise ValueError(f"class {k} is empty")
        out[k] = max(float(np.mean(r[sel] ** 2)), VAR_FLOOR)
    return out
