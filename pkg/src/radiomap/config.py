"""Run configuration: nested dataclasses read from a flat ``section.key = value`` text file."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

DEFAULT_SCENE = "default_scene.json"
DEFAULT_CONFIG = "default.cfg"


@dataclass
class RadioSection:
    carrier_freq: float = 2.4e9
    bandwidth: float = 20e6
    num_subcarriers: int = 64
    element_spacing: float = 0.0625


@dataclass
class MobilitySection:
    slot_duration: float = 0.2
    gamma: float = 0.9
    speed: float = 1.0          # velocity noise scale sigma_v, m/s
    mean_velocity: tuple[float, float] = (0.0, 0.0)
    start: tuple[float, float] = (8.0, 6.5)
    num_slots: int = 500
    margin: float = 0.3


@dataclass
class ChannelSection:
    gain: float = 100.0
    path_loss_exponent: float = 2.0
    noise_variance: float = 0.2


@dataclass
class FitSection:
    resolution: float = 0.25
    v_max: float = 5.0
    max_iter: int = 50
    tol: float = 1e-4
    restarts: int = 0
    bearing_start: bool = True
    music_step_deg: float = 0.5
    knn_k: int = 8


@dataclass
class RunConfig:
    scene: str = ""
    seed: int = 0
    output_dir: str = "out"
    radio: RadioSection = field(default_factory=RadioSection)
    mobility: MobilitySection = field(default_factory=MobilitySection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    fit: FitSection = field(default_factory=FitSection)

    def scene_path(self) -> Path:
        if self.scene:
            return Path(self.scene)
        return Path(str(resources.files("radiomap") / "data" / DEFAULT_SCENE))

    def validate(self) -> None:
        if not self.scene_path().is_file():
            raise ValueError(f"scene file not found: {self.scene_path()}")
        if self.fit.resolution <= 0:
            raise ValueError("fit.resolution must be positive")
        if self.channel.noise_variance < 0:
            raise ValueError("channel.noise_variance must be non-negative")
        if self.mobility.num_slots < 4:
            raise ValueError("mobility.num_slots must be at least 4")
        if self.fit.knn_k < 1:
            raise ValueError("fit.knn_k must be positive")

    def set(self, key: str, raw: str) -> None:
        """Assign a dotted key from its text form, coercing to the field's type."""
        obj, name = self, key.strip()
        if "." in name:
            section, name = name.split(".", 1)
            if section not in _SECTIONS:
                raise ValueError(f"unknown config section: {section}")
            obj = getattr(self, section)
        fields = {f.name: f for f in dataclasses.fields(obj)}
        if name not in fields or name in _SECTIONS:
            raise ValueError(f"unknown config key: {key}")
        setattr(obj, name, _coerce(getattr(obj, name), raw, key))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = ("radio", "mobility", "channel", "fit")


def _coerce(current, raw: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return raw.lower() in ("true", "1", "yes")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
            if len(parts) != len(current):
                raise ValueError
            return tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, ``[section]`` prefixes later keys."""
    cfg = base if base is not None else RunConfig()
    prefix = ""
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            prefix = line[1:-1].strip() + "."
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip()
        cfg.set(key if "." in key else prefix + key if prefix else key, value)
    return cfg


def load_config(path=None) -> RunConfig:
    """Read a config file on top of the defaults; None gives the shipped default."""
    if path is None:
        text = (resources.files("radiomap") / "data" / DEFAULT_CONFIG).read_text()
    else:
        text = Path(path).read_text()
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    lines = [f"scene = {cfg.scene}", f"seed = {cfg.seed}", f"output_dir = {cfg.output_dir}"]
    for sec in _SECTIONS:
        lines.append("")
        for f in dataclasses.fields(getattr(cfg, sec)):
            v = getattr(getattr(cfg, sec), f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(float(x)) for x in v)
            lines.append(f"{sec}.{f.name} = {v}")
    return "\n".join(lines) + "\n"
