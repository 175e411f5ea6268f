"""MIMO-OFDM CSI synthesis from a single-bounce image-method path model."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .scene import AccessPoint, Environment, Obstacle, geometric_azimuth, los_visible, path_clear, wrap_angle

SPEED_OF_LIGHT = 3e8

# named random substreams; mixed into SeedSequence entropy with (t, q)
STREAM_SCENE, STREAM_CHANNEL, STREAM_NOISE, STREAM_INIT = 0, 1, 2, 3


class RadioSilence(RuntimeError):
    """No propagation path survives between an AP and a user position."""


@dataclass(frozen=True)
class RadioConfig:
    carrier_freq: float = 2.4e9
    bandwidth: float = 20e6
    num_subcarriers: int = 64

    def __post_init__(self):
        if self.bandwidth <= 0 or self.carrier_freq <= 0:
            raise ValueError("carrier frequency and bandwidth must be positive")
        if self.num_subcarriers < 1:
            raise ValueError("need at least one subcarrier")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    def check_env(self, env: Environment) -> None:
        for ap in env.aps:
            if self.num_subcarriers <= ap.num_antennas:
                raise ValueError("need more subcarriers than antennas (M > N_t)")


@dataclass(frozen=True)
class MultipathComponent:
    gain: complex
    delay: float
    aod_global: float

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("negative delay")
        if not np.isfinite(abs(self.gain)):
            raise ValueError("non-finite path gain")


@dataclass
class CsiMatrix:
    entries: np.ndarray
    ap_index: int = 0
    slot_index: int = 0

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        if self.entries.ndim != 2:
            raise ValueError("CSI must be an N_t x M matrix")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("CSI contains non-finite entries")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def steering_vector(aod_local: float, num_antennas: int, spacing: float, wavelength: float) -> np.ndarray:
    """ULA response with element n at phase ``-2*pi/lambda * n * spacing * sin(aod)``."""
    if not -math.pi / 2 < aod_local < math.pi / 2:
        raise ValueError("outside ULA field of view")
    if spacing <= 0:
        raise ValueError("element spacing must be positive")
    n = np.arange(num_antennas)
    return np.exp(-1j * (2 * math.pi / wavelength) * n * spacing * math.sin(aod_local))


def steering_matrix(aods_local: np.ndarray, num_antennas: int, spacing: float, wavelength: float) -> np.ndarray:
    """Steering vectors for many local angles, shape (N_t, len(aods))."""
    n = np.arange(num_antennas)[:, None]
    return np.exp(-1j * (2 * math.pi / wavelength) * spacing * n * np.sin(np.asarray(aods_local))[None, :])


def _in_fov(aod_global: float, ap: AccessPoint) -> bool:
    return abs(wrap_angle(aod_global - ap.orientation)) < math.pi / 2


def _reflection(ap_pos: np.ndarray, x: np.ndarray, wall: Obstacle):
    """Image-method bounce point and unfolded length, or None when geometry is invalid."""
    a, b = np.asarray(wall.a), np.asarray(wall.b)
    e = b - a
    elen = math.hypot(*e)
    n = np.array([-e[1], e[0]]) / elen
    so, sx = n @ (ap_pos - a), n @ (x - a)
    if so * sx <= 0:
        return None
    image = ap_pos - 2.0 * so * n
    r = image + (x - image) * (so / (so + sx))
    u = (r - a) @ e / (elen * elen)
    if not 0.0 <= u <= 1.0:
        return None
    return r, float(math.hypot(*(x - image)))


def synth_paths(env: Environment, ap: AccessPoint, x, config: RadioConfig,
                path_loss_exponent: float = 2.0, seed=None, *, gain: float = 1.0) -> list[MultipathComponent]:
    """Direct path (when visible) plus one specular bounce per wall.

    Amplitudes follow ``gain * length**(-path_loss_exponent/2)``; bounces are
    further scaled by the wall reflectivity. Each path gets a uniform random
    phase. Paths leaving the array outside its +-90 degree field are dropped.
    """
    o = np.asarray(ap.position, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.all(o == x):
        raise ValueError("degenerate pair: user on the AP")
    rng = np.random.default_rng(seed)
    # phases drawn for every candidate so a path keeps its phase regardless of which others survive
    phases = rng.uniform(0.0, 2 * math.pi, size=len(env.obstacles) + 1)
    half_eta = path_loss_exponent / 2.0

    paths = []
    if los_visible(env, o, x):
        d = float(math.hypot(*(x - o)))
        aod = geometric_azimuth(x, o)
        if _in_fov(aod, ap):
            paths.append(MultipathComponent(gain * d ** -half_eta * np.exp(1j * phases[0]),
                                            d / SPEED_OF_LIGHT, aod))
    for i, wall in enumerate(env.obstacles):
        if wall.reflectivity == 0.0:
            continue
        hit = _reflection(o, x, wall)
        if hit is None:
            continue
        r, length = hit
        if not (path_clear(env.obstacles, o, r, skip=wall) and path_clear(env.obstacles, r, x, skip=wall)):
            continue
        aod = geometric_azimuth(r, o)
        if not _in_fov(aod, ap):
            continue
        amp = gain * wall.reflectivity * length ** -half_eta
        paths.append(MultipathComponent(amp * np.exp(1j * phases[i + 1]), length / SPEED_OF_LIGHT, aod))
    if not paths:
        raise RadioSilence(f"radio silence between AP at {ap.position} and {tuple(x)}")
    return paths


def synth_csi(paths: Sequence[MultipathComponent], ap: AccessPoint, config: RadioConfig,
              *, ap_index: int = 0, slot_index: int = 0) -> CsiMatrix:
    """Render paths into an N_t x M CSI matrix (subcarriers m = 1..M)."""
    if not paths:
        raise ValueError("empty path list")
    gains = np.array([p.gain for p in paths], dtype=complex)
    delays = np.array([p.delay for p in paths])
    local = np.array([wrap_angle(p.aod_global - ap.orientation) for p in paths])
    if np.any(np.abs(local) >= math.pi / 2):
        raise ValueError("outside ULA field of view")
    A = steering_matrix(local, ap.num_antennas, ap.element_spacing, config.wavelength)
    m = np.arange(1, config.num_subcarriers + 1)
    F = gains[:, None] * np.exp(-2j * math.pi * (m[None, :] / config.num_subcarriers)
                                * config.bandwidth * delays[:, None])
    return CsiMatrix(A @ F, ap_index, slot_index)


def add_noise(H: CsiMatrix, variance: float, seed=None) -> CsiMatrix:
    """Add circular complex Gaussian noise with total per-entry variance `variance`."""
    if variance < 0:
        raise ValueError("noise variance must be non-negative")
    if variance == 0:
        return CsiMatrix(H.entries.copy(), H.ap_index, H.slot_index)
    rng = np.random.default_rng(seed)
    scale = math.sqrt(variance / 2.0)
    noise = scale * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))
    return CsiMatrix(H.entries + noise, H.ap_index, H.slot_index)


def substream(seed: int, stream: int, t: int, q: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), stream, int(t), int(q)])


def simulate_csi(env: Environment, points: np.ndarray, config: RadioConfig, *, seed: int,
                 noise_variance: float = 0.0, path_loss_exponent: float = 2.0,
                 gain: float = 1.0) -> list[CsiMatrix]:
    """CSI for every (slot, AP) pair along `points`; silent pairs are omitted."""
    config.check_env(env)
    out = []
    for t, x in enumerate(np.asarray(points, dtype=float)):
        for q, ap in enumerate(env.aps):
            try:
                paths = synth_paths(env, ap, x, config, path_loss_exponent,
                                    substream(seed, STREAM_CHANNEL, t, q), gain=gain)
            except RadioSilence:
                continue
            H = synth_csi(paths, ap, config, ap_index=q, slot_index=t)
            out.append(add_noise(H, noise_variance, substream(seed, STREAM_NOISE, t, q)))
    return out


# --- dataset files ------------------------------------------------------------

_HEADER = struct.Struct("<IHHH")


def write_csi(records: Iterable[CsiMatrix], path) -> None:
    path = Path(path)
    if path.suffix == ".jsonl":
        with open(path, "w") as fh:
            for H in records:
                fh.write(json.dumps({"t": H.slot_index, "q": H.ap_index,
                                     "re": H.entries.real.tolist(), "im": H.entries.imag.tolist()}) + "\n")
        return
    with open(path, "wb") as fh:
        for H in records:
            nt, m = H.shape
            fh.write(_HEADER.pack(H.slot_index, H.ap_index, nt, m))
            fh.write(np.ascontiguousarray(H.entries, dtype="<c8").tobytes())


def read_csi(path) -> list[CsiMatrix]:
    path = Path(path)
    if path.suffix == ".jsonl":
        out = []
        for line in path.read_text().splitlines():
            if line.strip():
                r = json.loads(line)
                out.append(CsiMatrix(np.array(r["re"]) + 1j * np.array(r["im"]), r["q"], r["t"]))
        return out
    buf = path.read_bytes()
    out, pos = [], 0
    while pos < len(buf):
        if pos + _HEADER.size > len(buf):
            raise ValueError(f"truncated CSI header at byte {pos}")
        t, q, nt, m = _HEADER.unpack_from(buf, pos)
        pos += _HEADER.size
        nbytes = nt * m * 8
        if pos + nbytes > len(buf):
            raise ValueError(f"truncated CSI payload for record t={t} q={q}")
        data = np.frombuffer(buf, dtype="<c8", count=nt * m, offset=pos).reshape(nt, m)
        out.append(CsiMatrix(data.astype(complex), q, t))
        pos += nbytes
    return out
