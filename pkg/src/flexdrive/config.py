"""Experiment configuration: flat key-value files with dotted sections.

The format is one `key = value` pair per line, `#` comments, blank lines
ignored.  Every key has a documented default, so an empty file is a valid
configuration.  Duplicate and unknown keys are rejected by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .cascade import FrameGeometry
from .dynamic import DynGains
from .geometry import Posture
from .kinematic import KinematicGains
from .plant import AxleParams, DisturbanceSampler, FrameStiffness, PlantParams, SensorModel


class ConfigError(Exception):
    """Malformed or inconsistent configuration; message names the key."""


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run bit-exactly."""

    case: int = 1
    duration: float = 60.0
    seed: int = 0
    out_dir: str = "runs"
    dt_plant: float = 1e-3
    dt_ctrl: float = 2e-3
    start: Posture = Posture(-1.5, -1.0, 0.0)
    start_deflection: float = 0.0
    target: Posture = Posture(0.0, 0.0, 0.0)
    kinematic: KinematicGains = field(default_factory=lambda: KinematicGains(v_des=0.0))
    dynamic: DynGains = field(default_factory=DynGains)
    geometry: FrameGeometry = field(default_factory=FrameGeometry)
    axle: AxleParams = field(default_factory=AxleParams)
    stiffness: FrameStiffness = field(default_factory=FrameStiffness)
    sensor_ticks_per_rev: int = 65536
    sensor_sigma: float = 0.0
    sensor_quantize: bool = True
    sensor_seed: int | None = None
    disturbance_mode: str = "off"
    disturbance_seed: int | None = None
    disturbance_rate_hz: float = 10.0
    disturbance_const_v: float = 0.0
    disturbance_const_w: float = 0.0
    case2_true_velocity: bool = False
    full_rate: bool = False

    def resolved_sensor_seed(self) -> int:
        return self.seed + 101 if self.sensor_seed is None else self.sensor_seed

    def resolved_disturbance_seed(self) -> int:
        return self.seed + 202 if self.disturbance_seed is None else self.disturbance_seed

    def make_sensor(self) -> SensorModel:
        return SensorModel(
            ticks_per_rev=self.sensor_ticks_per_rev,
            sigma_noise=self.sensor_sigma,
            seed=self.resolved_sensor_seed(),
            quantize=self.sensor_quantize,
        )

    def make_disturbance(self) -> DisturbanceSampler:
        return DisturbanceSampler(
            tau_d_max=self.axle.tau_d_max,
            mode=self.disturbance_mode,
            rate_hz=self.disturbance_rate_hz,
            seed=self.resolved_disturbance_seed(),
            constant=(self.disturbance_const_v, self.disturbance_const_w),
        )

    def make_plant_params(self) -> PlantParams:
        return PlantParams(axle=replace(self.axle, geo=self.geometry),
                           stiffness=self.stiffness)

    def validate(self) -> None:
        if self.case not in (1, 2, 3):
            raise ConfigError(f"case: must be 1, 2 or 3, got {self.case}")
        if self.duration < 0.0:
            raise ConfigError("duration: must be >= 0")
        if self.dt_plant <= 0.0 or self.dt_ctrl <= 0.0:
            raise ConfigError("dt.plant / dt.ctrl: must be positive")
        ratio = self.dt_ctrl / self.dt_plant
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("dt.ctrl: must be an integer multiple of dt.plant")
        try:
            self.kinematic.validate()
        except ValueError as exc:
            raise ConfigError(f"kinematic.r: {exc}") from exc
        try:
            self.dynamic.validate()
            self.geometry.validate()
            replace(self.axle, geo=self.geometry).validate()
            self.stiffness.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.sensor_ticks_per_rev <= 0:
            raise ConfigError("sensor.ticks_per_rev: must be positive")
        if self.sensor_sigma < 0.0:
            raise ConfigError("sensor.sigma: must be >= 0")
        if self.disturbance_mode not in ("off", "ball", "sphere", "constant"):
            raise ConfigError(
                f"disturbance.mode: unknown mode {self.disturbance_mode!r}"
            )
        if self.disturbance_rate_hz <= 0.0:
            raise ConfigError("disturbance.rate_hz: must be positive")
        for name, value in (("start", self.start), ("target", self.target)):
            for coord in value:
                if not math.isfinite(coord):
                    raise ConfigError(f"{name}: coordinates must be finite")


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected boolean, got {raw!r}")


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected number, got {raw!r}") from exc


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected integer, got {raw!r}") from exc


def parse_config_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines into a dict, rejecting duplicates."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        pairs[key] = value
    return pairs


def config_from_pairs(pairs: dict[str, str]) -> ExperimentConfig:
    """Build a validated ExperimentConfig from parsed key-value pairs."""
    cfg = ExperimentConfig()
    kin = {}
    dyn = {}
    geo = {}
    axle = {}
    stiff = {}

    handlers = {
        "case": lambda v: setattr(cfg, "case", _parse_int("case", v)),
        "duration": lambda v: setattr(cfg, "duration", _parse_float("duration", v)),
        "seed": lambda v: setattr(cfg, "seed", _parse_int("seed", v)),
        "out": lambda v: setattr(cfg, "out_dir", v),
        "dt.plant": lambda v: setattr(cfg, "dt_plant", _parse_float("dt.plant", v)),
        "dt.ctrl": lambda v: setattr(cfg, "dt_ctrl", _parse_float("dt.ctrl", v)),
        "start.x": lambda v: setattr(cfg, "start", cfg.start._replace(x=_parse_float("start.x", v))),
        "start.y": lambda v: setattr(cfg, "start", cfg.start._replace(y=_parse_float("start.y", v))),
        "start.phi": lambda v: setattr(cfg, "start", cfg.start._replace(phi=_parse_float("start.phi", v))),
        "start.deflection": lambda v: setattr(cfg, "start_deflection", _parse_float("start.deflection", v)),
        "target.x": lambda v: setattr(cfg, "target", cfg.target._replace(x=_parse_float("target.x", v))),
        "target.y": lambda v: setattr(cfg, "target", cfg.target._replace(y=_parse_float("target.y", v))),
        "target.phi": lambda v: setattr(cfg, "target", cfg.target._replace(phi=_parse_float("target.phi", v))),
        "kinematic.v_des": lambda v: kin.__setitem__("v_des", _parse_float("kinematic.v_des", v)),
        "kinematic.kappa_des": lambda v: kin.__setitem__("kappa_des", _parse_float("kinematic.kappa_des", v)),
        "kinematic.r": lambda v: kin.__setitem__("r", _parse_float("kinematic.r", v)),
        "kinematic.epsilon": lambda v: kin.__setitem__("epsilon", _parse_float("kinematic.epsilon", v)),
        "kinematic.v_max": lambda v: kin.__setitem__("v_max", _parse_float("kinematic.v_max", v)),
        "kinematic.kappa_max": lambda v: kin.__setitem__("kappa_max", _parse_float("kinematic.kappa_max", v)),
        "dynamic.k_x": lambda v: dyn.__setitem__("k_x", _parse_float("dynamic.k_x", v)),
        "dynamic.k_y": lambda v: dyn.__setitem__("k_y", _parse_float("dynamic.k_y", v)),
        "dynamic.k_phi": lambda v: dyn.__setitem__("k_phi", _parse_float("dynamic.k_phi", v)),
        "dynamic.K1": lambda v: dyn.__setitem__("K1", _parse_float("dynamic.K1", v)),
        "dynamic.K2": lambda v: dyn.__setitem__("K2", _parse_float("dynamic.K2", v)),
        "dynamic.compensate_frame": lambda v: dyn.__setitem__("compensate_frame", _parse_bool("dynamic.compensate_frame", v)),
        "dynamic.tau_max": lambda v: dyn.__setitem__("tau_max", None if v.lower() == "none" else _parse_float("dynamic.tau_max", v)),
        "frame.L": lambda v: geo.__setitem__("L", _parse_float("frame.L", v)),
        "frame.d": lambda v: geo.__setitem__("d", _parse_float("frame.d", v)),
        "frame.r_w": lambda v: geo.__setitem__("r_w", _parse_float("frame.r_w", v)),
        "plant.m": lambda v: axle.__setitem__("m", _parse_float("plant.m", v)),
        "plant.inertia": lambda v: axle.__setitem__("I", _parse_float("plant.inertia", v)),
        "plant.b_v": lambda v: axle.__setitem__("b_v", _parse_float("plant.b_v", v)),
        "plant.b_w": lambda v: axle.__setitem__("b_w", _parse_float("plant.b_w", v)),
        "plant.tau_d_max": lambda v: axle.__setitem__("tau_d_max", _parse_float("plant.tau_d_max", v)),
        "stiffness.k_bend": lambda v: stiff.__setitem__("k_bend", _parse_float("stiffness.k_bend", v)),
        "stiffness.k_axial": lambda v: stiff.__setitem__("k_axial", _parse_float("stiffness.k_axial", v)),
        "stiffness.c_bend": lambda v: stiff.__setitem__("c_bend", _parse_float("stiffness.c_bend", v)),
        "stiffness.c_axial": lambda v: stiff.__setitem__("c_axial", _parse_float("stiffness.c_axial", v)),
        "sensor.ticks_per_rev": lambda v: setattr(cfg, "sensor_ticks_per_rev", _parse_int("sensor.ticks_per_rev", v)),
        "sensor.sigma": lambda v: setattr(cfg, "sensor_sigma", _parse_float("sensor.sigma", v)),
        "sensor.quantize": lambda v: setattr(cfg, "sensor_quantize", _parse_bool("sensor.quantize", v)),
        "sensor.seed": lambda v: setattr(cfg, "sensor_seed", _parse_int("sensor.seed", v)),
        "disturbance.mode": lambda v: setattr(cfg, "disturbance_mode", v),
        "disturbance.seed": lambda v: setattr(cfg, "disturbance_seed", _parse_int("disturbance.seed", v)),
        "disturbance.rate_hz": lambda v: setattr(cfg, "disturbance_rate_hz", _parse_float("disturbance.rate_hz", v)),
        "disturbance.const_v": lambda v: setattr(cfg, "disturbance_const_v", _parse_float("disturbance.const_v", v)),
        "disturbance.const_w": lambda v: setattr(cfg, "disturbance_const_w", _parse_float("disturbance.const_w", v)),
        "loop.case2_true_velocity": lambda v: setattr(cfg, "case2_true_velocity", _parse_bool("loop.case2_true_velocity", v)),
        "log.full_rate": lambda v: setattr(cfg, "full_rate", _parse_bool("log.full_rate", v)),
    }

    for key, raw in pairs.items():
        handler = handlers.get(key)
        if handler is None:
            raise ConfigError(f"unknown key {key!r}")
        handler(raw)

    cfg.kinematic = KinematicGains(**{"v_des": 0.0, **kin})
    cfg.dynamic = DynGains(**dyn)
    cfg.geometry = FrameGeometry(**geo)
    cfg.axle = AxleParams(**{**axle, "geo": cfg.geometry})
    cfg.stiffness = FrameStiffness(**stiff)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    """Load and validate a configuration file (empty file = all defaults)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return config_from_pairs(parse_config_text(text))


def snapshot_config(cfg: ExperimentConfig) -> str:
    """Serialize a config (with resolved seeds) back to key-value text.

    The snapshot is written into every run directory; feeding it back to
    load_config reproduces the run bit-exactly.
    """
    k, d, g, a, s = cfg.kinematic, cfg.dynamic, cfg.geometry, cfg.axle, cfg.stiffness
    lines = [
        f"case = {cfg.case}",
        f"duration = {cfg.duration!r}",
        f"seed = {cfg.seed}",
        f"dt.plant = {cfg.dt_plant!r}",
        f"dt.ctrl = {cfg.dt_ctrl!r}",
        f"start.x = {cfg.start.x!r}",
        f"start.y = {cfg.start.y!r}",
        f"start.phi = {cfg.start.phi!r}",
        f"start.deflection = {cfg.start_deflection!r}",
        f"target.x = {cfg.target.x!r}",
        f"target.y = {cfg.target.y!r}",
        f"target.phi = {cfg.target.phi!r}",
        f"kinematic.v_des = {k.v_des!r}",
        f"kinematic.kappa_des = {k.kappa_des!r}",
        f"kinematic.r = {k.r!r}",
        f"kinematic.epsilon = {k.epsilon!r}",
        f"kinematic.v_max = {k.v_max!r}",
        f"kinematic.kappa_max = {k.kappa_max!r}",
        f"dynamic.k_x = {d.k_x!r}",
        f"dynamic.k_y = {d.k_y!r}",
        f"dynamic.k_phi = {d.k_phi!r}",
        f"dynamic.K1 = {d.K1!r}",
        f"dynamic.K2 = {d.K2!r}",
        f"dynamic.compensate_frame = {d.compensate_frame}",
        f"dynamic.tau_max = {'none' if d.tau_max is None else repr(d.tau_max)}",
        f"frame.L = {g.L!r}",
        f"frame.d = {g.d!r}",
        f"frame.r_w = {g.r_w!r}",
        f"plant.m = {a.m!r}",
        f"plant.inertia = {a.I!r}",
        f"plant.b_v = {a.b_v!r}",
        f"plant.b_w = {a.b_w!r}",
        f"plant.tau_d_max = {a.tau_d_max!r}",
        f"stiffness.k_bend = {s.k_bend!r}",
        f"stiffness.k_axial = {s.k_axial!r}",
        f"stiffness.c_bend = {s.c_bend!r}",
        f"stiffness.c_axial = {s.c_axial!r}",
        f"sensor.ticks_per_rev = {cfg.sensor_ticks_per_rev}",
        f"sensor.sigma = {cfg.sensor_sigma!r}",
        f"sensor.quantize = {cfg.sensor_quantize}",
        f"sensor.seed = {cfg.resolved_sensor_seed()}",
        f"disturbance.mode = {cfg.disturbance_mode}",
        f"disturbance.seed = {cfg.resolved_disturbance_seed()}",
        f"disturbance.rate_hz = {cfg.disturbance_rate_hz!r}",
        f"disturbance.const_v = {cfg.disturbance_const_v!r}",
        f"disturbance.const_w = {cfg.disturbance_const_w!r}",
        f"loop.case2_true_velocity = {cfg.case2_true_velocity}",
        f"log.full_rate = {cfg.full_rate}",
    ]
    return "\n".join(lines) + "\n"
