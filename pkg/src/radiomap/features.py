"""Per-snapshot channel features: RSS, MUSIC dominant AoD, delay-variance proxy."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import CsiMatrix, RadioConfig, steering_matrix
from .scene import AccessPoint, wrap_angle

DEFAULT_GRID_STEP = math.radians(0.5)
DELAY_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureVec:
    rss_db: float
    aod: float
    delay_var_db: float
    slot_index: int = 0
    ap_index: int = 0


def _entries(H) -> np.ndarray:
    return H.entries if isinstance(H, CsiMatrix) else np.asarray(H, dtype=complex)


def _energy(E: np.ndarray) -> float:
    e = float(np.sum(E.real ** 2 + E.imag ** 2))
    if e == 0.0:
        raise ValueError("zero channel")
    return e


def rss(H) -> float:
    """10*log10 of the squared Frobenius norm."""
    return 10.0 * math.log10(_energy(_entries(H)))


def spatial_covariance(H) -> np.ndarray:
    E = _entries(H)
    R = E @ E.conj().T / E.shape[1]
    return 0.5 * (R + R.conj().T)


def local_angle_grid(grid_step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    """Symmetric grid k*step over the open interval (-pi/2, pi/2), including 0."""
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    kmax = math.ceil((math.pi / 2) / grid_step) - 1
    if kmax * grid_step >= math.pi / 2:
        kmax -= 1
    return np.arange(-kmax, kmax + 1) * grid_step


def noise_subspace(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and the eigenvectors 2..N_t spanning the noise subspace."""
    w, V = np.linalg.eigh(R)
    w, V = w[::-1], V[:, ::-1]
    return w, V[:, 1:]


def music_spectrum(H, ap: AccessPoint, wavelength: float, grid: np.ndarray) -> np.ndarray:
    """Pseudospectrum 1 / (a^H U U^H a) at the local angles in `grid`."""
    _, U = noise_subspace(spatial_covariance(H))
    A = steering_matrix(grid, ap.num_antennas, ap.element_spacing, wavelength)
    proj = U.conj().T @ A
    denom = np.sum(proj.real ** 2 + proj.imag ** 2, axis=0)
    return 1.0 / np.maximum(denom, np.finfo(float).tiny)


def music_aod(H, ap: AccessPoint, grid_step: float = DEFAULT_GRID_STEP,
              wavelength: float = RadioConfig().wavelength) -> float:
    """Global-frame AoD of the dominant path via single-source MUSIC.

    The grid argmax (first index on exact ties) is shifted by the AP
    orientation and wrapped to (-pi, pi].
    """
    if ap.num_antennas < 2:
        raise ValueError("MUSIC needs at least two antennas")
    E = _entries(H)
    R = spatial_covariance(E)
    w = np.linalg.eigvalsh(R)[::-1]
    if w[1] > 0 and w[0] / w[1] < 1 + 1e-9:
        warnings.warn("ambiguous dominant path: top two eigenvalues nearly equal", RuntimeWarning)
    grid = local_angle_grid(grid_step)
    ps = music_spectrum(E, ap, wavelength, grid)
    return float(wrap_angle(grid[int(np.argmax(ps))] + ap.orientation))


def delay_variance(H) -> float:
    """Log-variance (dB) of CSI magnitudes after Frobenius normalization.

    Population variance over all N_t*M entries, floored at 1e-12.
    """
    E = _entries(H)
    mags = np.abs(E) / math.sqrt(_energy(E))
    return 10.0 * math.log10(max(float(np.var(mags)), DELAY_VAR_FLOOR))


def extract(H: CsiMatrix, ap: AccessPoint, grid_step: float = DEFAULT_GRID_STEP,
            wavelength: float = RadioConfig().wavelength) -> FeatureVec:
    return FeatureVec(rss(H), music_aod(H, ap, grid_step, wavelength), delay_variance(H),
                      int(H.slot_index), int(H.ap_index))


def extract_all(records: Iterable[CsiMatrix], aps: Sequence[AccessPoint],
                grid_step: float = DEFAULT_GRID_STEP,
                wavelength: float = RadioConfig().wavelength) -> list[FeatureVec]:
    return [extract(H, aps[H.ap_index], grid_step, wavelength) for H in records]


@dataclass
class FeatureSet:
    """Dense (T, Q) view of a feature list; missing pairs are NaN with mask False."""
    s: np.ndarray
    aod: np.ndarray
    nu: np.ndarray
    mask: np.ndarray

    @property
    def T(self) -> int:
        return self.s.shape[0]

    @property
    def Q(self) -> int:
        return self.s.shape[1]

    @classmethod
    def from_records(cls, records: Sequence[FeatureVec], T: int | None = None,
                     Q: int | None = None) -> "FeatureSet":
        T = T if T is not None else 1 + max(r.slot_index for r in records)
        Q = Q if Q is not None else 1 + max(r.ap_index for r in records)
        s, aod, nu = (np.full((T, Q), np.nan) for _ in range(3))
        for r in records:
            s[r.slot_index, r.ap_index] = r.rss_db
            aod[r.slot_index, r.ap_index] = r.aod
            nu[r.slot_index, r.ap_index] = r.delay_var_db
        return cls(s, aod, nu, ~np.isnan(s))

    def records(self) -> list[FeatureVec]:
        return [FeatureVec(float(self.s[t, q]), float(self.aod[t, q]), float(self.nu[t, q]), int(t), int(q))
                for t, q in zip(*np.nonzero(self.mask))]

    def slot(self, t: int) -> "FeatureSet":
        return FeatureSet(self.s[t:t + 1], self.aod[t:t + 1], self.nu[t:t + 1], self.mask[t:t + 1])


def write_features(records: Iterable[FeatureVec], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"t": int(r.slot_index), "q": int(r.ap_index), "s_db": float(r.rss_db),
                                 "aod_rad": float(r.aod), "nu_db": float(r.delay_var_db)}) + "\n")


def read_features(path) -> list[FeatureVec]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            out.append(FeatureVec(float(r["s_db"]), float(r["aod_rad"]), float(r["nu_db"]),
                                  int(r["t"]), int(r["q"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{n}: malformed feature record ({exc})") from exc
    return out
