"""Localization on a learned radio map, baseline localizers and error metrics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import FeatureSet, FeatureVec
from .inference.model import Geometry, Grid, PropagationParams, best_class_emissions
from .inference.viterbi import decode
from .scene import (AccessPoint, Environment, MobilityParams, Point2, ap_from_dict, ap_to_dict, los_labels,
                    mobility_from_dict, mobility_to_dict, wrap_angle)


@dataclass
class RadioMap:
    params: PropagationParams
    grid: Grid
    aps: list[AccessPoint]
    mobility: MobilityParams | None = None
    _geom: Geometry | None = field(default=None, repr=False, compare=False)

    @property
    def geometry(self) -> Geometry:
        if self._geom is None:
            self._geom = Geometry.build(self.grid.centers(), self.aps)
        return self._geom

    def to_dict(self) -> dict:
        d = {"params": self.params.to_dict(), "grid": self.grid.to_dict(),
             "aps": [ap_to_dict(ap) for ap in self.aps]}
        if self.mobility is not None:
            d["mobility"] = mobility_to_dict(self.mobility)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadioMap":
        mob = mobility_from_dict(d["mobility"]) if "mobility" in d else None
        return cls(PropagationParams.from_dict(d["params"]), Grid.from_dict(d["grid"]),
                   [ap_from_dict(a) for a in d["aps"]], mob)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "RadioMap":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _as_featureset(y: FeatureSet | Sequence[FeatureVec], Q: int) -> FeatureSet:
    if isinstance(y, FeatureSet):
        return y
    y = list(y)
    if not y:
        raise ValueError("no measurements for this slot")
    return FeatureSet.from_records([FeatureVec(r.rss_db, r.aod, r.delay_var_db, 0, r.ap_index) for r in y], 1, Q)


def ml_scores(fs: FeatureSet, rmap: RadioMap) -> np.ndarray:
    """Per-slot grid scores sum_q max_k log p(y_q | x), shape (T, C)."""
    return best_class_emissions(fs, rmap.geometry, rmap.params)


def ml_localize(y, rmap: RadioMap) -> Point2:
    """Grid cell with the highest hard-max class likelihood for one slot's measurements."""
    fs = _as_featureset(y, len(rmap.aps))
    if fs.T != 1:
        raise ValueError("ml_localize takes a single slot; use ml_localize_all")
    if not fs.mask.any():
        raise ValueError("no measurements for this slot")
    c = int(np.argmax(ml_scores(fs, rmap)[0]))
    return Point2(*rmap.grid.centers()[c])


def ml_localize_all(fs: FeatureSet, rmap: RadioMap) -> np.ndarray:
    """Memoryless ML estimate for every slot; slots without measurements get the grid centre."""
    centers = rmap.grid.centers()
    scores = ml_scores(fs, rmap)
    out = centers[np.argmax(scores, axis=1)]
    empty = ~fs.mask.any(axis=1)
    out[empty] = centers.mean(axis=0)
    return out


def smooth_localize_all(fs: FeatureSet, rmap: RadioMap, v_max: float = 5.0) -> np.ndarray:
    """Sequence estimate: second-order Viterbi over hard-max class scores with the map's mobility model."""
    if rmap.mobility is None:
        raise ValueError("radio map carries no mobility model")
    cells = decode(ml_scores(fs, rmap), rmap.grid, rmap.mobility, v_max)
    return rmap.grid.centers()[cells]


def wcl_weights(s_db: np.ndarray) -> np.ndarray:
    s = np.asarray(s_db, dtype=float)
    w = 10.0 ** ((s - s.max()) / 20.0)
    return w / w.sum()


def wcl(s_all, aps: Sequence[AccessPoint]) -> Point2:
    """Weighted centroid of AP positions with amplitude weights 10^(s/20)."""
    s_all = np.asarray(s_all, dtype=float)
    if len(aps) == 0 or len(s_all) != len(aps):
        raise ValueError("need one RSS value per AP")
    w = wcl_weights(s_all)
    o = np.array([ap.position for ap in aps], dtype=float)
    return Point2(*(w @ o))


def wcl_all(fs: FeatureSet, aps: Sequence[AccessPoint]) -> np.ndarray:
    """WCL per slot over the APs measured at that slot."""
    o = np.array([ap.position for ap in aps], dtype=float)
    out = np.tile(o.mean(axis=0), (fs.T, 1))
    for t in range(fs.T):
        m = fs.mask[t]
        if m.any():
            out[t] = wcl_weights(fs.s[t, m]) @ o[m]
    return out


def bearing_all(fs: FeatureSet, aps: Sequence[AccessPoint], grid: Grid) -> np.ndarray:
    """Angle-only grid fix per slot: the cell minimising the summed squared wrapped AoD residuals."""
    centers = grid.centers()
    geom = Geometry.build(centers, list(aps))
    cost = np.zeros((fs.T, len(centers)))
    for q in range(fs.Q):
        rows = np.nonzero(fs.mask[:, q])[0]
        if rows.size:
            cost[rows] += wrap_angle(fs.aod[rows, q][:, None] - geom.azimuth[q][None, :]) ** 2
    return centers[np.argmin(cost, axis=1)]


# --- KNN fingerprinting -------------------------------------------------------

def feature_matrix(fs: FeatureSet) -> np.ndarray:
    """(T, 3Q) matrix [s_q, aod_q, nu_q for q ...]; missing entries are NaN."""
    return np.stack([fs.s, fs.aod, fs.nu], axis=-1).reshape(fs.T, -1)


@dataclass
class KnnLocalizer:
    """k-nearest-neighbour fingerprinting on z-scored features (missing entries -> training mean)."""
    train: np.ndarray
    labels: np.ndarray
    k: int = 8

    def __post_init__(self):
        self.train = np.asarray(self.train, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float).reshape(len(self.train), -1)
        if len(self.train) == 0:
            raise ValueError("empty training set")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.k > len(self.train):
            raise ValueError("k exceeds the training set size")
        self.mean = np.nanmean(self.train, axis=0)
        std = np.nanstd(self.train, axis=0)
        self.std = np.where(std > 0, std, 1.0)
        self._z = self._standardize(self.train)

    def _standardize(self, F: np.ndarray) -> np.ndarray:
        z = (np.asarray(F, dtype=float) - self.mean) / self.std
        return np.nan_to_num(z, nan=0.0)

    def neighbors(self, query: np.ndarray) -> np.ndarray:
        zq = self._standardize(np.atleast_2d(query))
        d2 = np.sum((zq[:, None, :] - self._z[None, :, :]) ** 2, axis=-1)
        return np.argsort(d2, axis=1, kind="stable")[:, :self.k]

    def predict(self, query: np.ndarray) -> np.ndarray:
        return self.labels[self.neighbors(query)].mean(axis=1)


def knn_localize(query, train, train_labels, k: int = 8) -> Point2:
    return Point2(*KnnLocalizer(train, train_labels, k).predict(query)[0])


# --- evaluation ---------------------------------------------------------------

REGIONS = ("NLOS", "single-LOS", "double-LOS")


@dataclass
class EvalReport:
    mean_error: float
    errors: np.ndarray
    regions: np.ndarray
    region_means: dict[str, float]
    region_counts: dict[str, int]
    los_accuracy: float | None = None

    def summary(self) -> dict:
        return {"mean_error": self.mean_error, "region_means": self.region_means,
                "region_counts": self.region_counts, "los_accuracy": self.los_accuracy}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "err_m", "region"])
            for t, (e, r) in enumerate(zip(self.errors, self.regions)):
                w.writerow([t, repr(float(e)), REGIONS[r]])


def region_of_counts(visible: np.ndarray) -> np.ndarray:
    """0 visible APs -> NLOS (0), exactly one -> single-LOS (1), two or more -> double-LOS (2)."""
    return np.minimum(np.asarray(visible), 2)


def los_accuracy(labels: np.ndarray, true_labels: np.ndarray, mask: np.ndarray | None = None) -> float:
    labels, true_labels = np.asarray(labels), np.asarray(true_labels)
    sel = (labels >= 0) if mask is None else np.asarray(mask, dtype=bool)
    return float(np.mean(labels[sel] == true_labels[sel]))


def evaluate(estimates, truth, env: Environment, labels: np.ndarray | None = None,
             true_labels: np.ndarray | None = None) -> EvalReport:
    """Per-slot errors, region breakdown from geometric visibility and LOS/NLOS accuracy."""
    est = estimates.points if hasattr(estimates, "points") else np.asarray(estimates, dtype=float)
    tru = truth.points if hasattr(truth, "points") else np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth lengths differ")
    err = np.hypot(*(est - tru).T)
    geo = los_labels(env, tru)
    reg = region_of_counts(np.sum(geo == 0, axis=1))
    means, counts = {}, {}
    for r, name in enumerate(REGIONS):
        sel = reg == r
        counts[name] = int(sel.sum())
        means[name] = float(err[sel].mean()) if sel.any() else float("nan")
    ref = geo if true_labels is None else np.asarray(true_labels)
    acc = None if labels is None else los_accuracy(labels, ref)
    return EvalReport(float(err.mean()), err, reg, means, counts, acc)
