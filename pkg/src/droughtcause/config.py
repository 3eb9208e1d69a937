"""Run configuration: an INI file with one section per stage.

Every key is optional; unknown sections or keys are rejected. Example::

    [run]
    stages = ingest, spi, modes, pcmci, forecast
    seed = 0

    [paths]
    rain = rain.csv
    sst = sst.csv

    [pcmci]
    tau_max = 12
    alpha_pc = auto

Optional values accept ``auto`` or ``none`` for "not set".
"""
import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .errors import ConfigError

STAGES = ("ingest", "spi", "modes", "pcmci", "forecast")


@dataclass
class RunSection:
    stages: Tuple[str, ...] = STAGES
    seed: int = 0
    threads: int = 1


@dataclass
class PathsSection:
    rain: Optional[str] = None
    sst: Optional[str] = None


@dataclass
class IngestSection:
    rain_bbox: Optional[Tuple[float, ...]] = None
    sst_bbox: Optional[Tuple[float, ...]] = None
    missing: str = "reject"


@dataclass
class SpiSection:
    ref_len: int = 360
    window: int = 12
    threshold: float = -1.0


@dataclass
class ModesSection:
    phase_average: bool = True
    latitude_weight: bool = True
    normalize: bool = True
    rotate: bool = True
    scaled_rotation: bool = True
    n_modes: Optional[int] = None
    varimax_tol: float = 1e-7
    varimax_max_sweeps: int = 1000


@dataclass
class PcmciSection:
    tau_max: int = 12
    alpha: float = 0.05
    alpha_pc: Optional[float] = None
    alpha_pc_grid: Tuple[float, ...] = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
    max_conds_dim: Optional[int] = 3
    max_combinations: int = 1
    max_conds_px: Optional[int] = None
    fdr_scope: str = "all"
    fdr_monotone: bool = False


@dataclass
class ForecastSection:
    train: int = 360
    test: int = 12
    step: int = 1
    n_lags: int = 12
    ridge: float = 1.0
    units: str = "count"
    driver: str = "auto"


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    paths: PathsSection = field(default_factory=PathsSection)
    ingest: IngestSection = field(default_factory=IngestSection)
    spi: SpiSection = field(default_factory=SpiSection)
    modes: ModesSection = field(default_factory=ModesSection)
    pcmci: PcmciSection = field(default_factory=PcmciSection)
    forecast: ForecastSection = field(default_factory=ForecastSection)
    #: keys given explicitly, as "section.key"
    explicit: frozenset = field(default_factory=frozenset, compare=False)
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    def section_names(self):
        return [f.name for f in dataclasses.fields(self) if f.name not in ("explicit", "base_dir")]

    def resolve(self, path) -> Optional[Path]:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def defaults_applied(self) -> list:
        keys = []
        for sec in self.section_names():
            for f in dataclasses.fields(getattr(self, sec)):
                k = f"{sec}.{f.name}"
                if k not in self.explicit:
                    keys.append(k)
        return keys

    def as_dict(self) -> dict:
        return {sec: dataclasses.asdict(getattr(self, sec)) for sec in self.section_names()}

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for sec in self.section_names():
            obj = getattr(self, sec)
            cp[sec] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_BOOLS = {"true": True, "yes": True, "on": True, "1": True,
          "false": False, "no": False, "off": False, "0": False}


def _coerce(raw: str, default, type_hint: str, key: str):
    text = raw.strip()
    optional = type_hint.startswith("Optional")
    if optional and text.lower() in ("auto", "none", ""):
        return None
    inner = type_hint[len("Optional["):-1] if optional else type_hint
    try:
        if inner == "bool":
            if text.lower() not in _BOOLS:
                raise ValueError(f"not a boolean: {text!r}")
            return _BOOLS[text.lower()]
        if inner == "int":
            return int(text)
        if inner == "float":
            return float(text)
        if inner == "str":
            return text
        if inner == "Tuple[str, ...]":
            return tuple(s.strip() for s in text.split(",") if s.strip())
        if inner == "Tuple[float, ...]":
            return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unsupported type {type_hint}")


def _type_names(cls):
    hints = {}
    for f in dataclasses.fields(cls):
        t = f.type if isinstance(f.type, str) else (
            f.type.__name__ if isinstance(f.type, type) else str(f.type))
        hints[f.name] = t.replace("typing.", "")
    return hints


def parse_config(text: str, base_dir=None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    cfg = RunConfig()
    if base_dir is not None:
        cfg.base_dir = Path(base_dir)
    known = cfg.section_names()
    explicit = set()
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
        obj = getattr(cfg, sec)
        hints = _type_names(type(obj))
        values = {}
        for key, raw in cp[sec].items():
            if key not in hints:
                raise ConfigError(f"unknown key {sec}.{key}")
            values[key] = _coerce(raw, getattr(obj, key), hints[key], f"{sec}.{key}")
            explicit.add(f"{sec}.{key}")
        setattr(cfg, sec, dataclasses.replace(obj, **values))
    cfg.explicit = frozenset(explicit)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(cfg: RunConfig) -> None:
    for s in cfg.run.stages:
        _check(s in STAGES, f"run.stages: unknown stage {s!r}")
    _check(cfg.run.seed >= 0, "run.seed must be non-negative")
    _check(cfg.run.threads >= 1, "run.threads must be >= 1")
    for name in ("rain_bbox", "sst_bbox"):
        bbox = getattr(cfg.ingest, name)
        if bbox is not None:
            _check(len(bbox) == 4, f"ingest.{name} needs lat_min, lat_max, lon_min, lon_max")
            _check(-90 <= bbox[0] < bbox[1] <= 90, f"ingest.{name}: bad latitude bounds")
    _check(cfg.ingest.missing in ("reject", "drop-point"), "ingest.missing must be reject or drop-point")
    _check(cfg.spi.ref_len >= 20, "spi.ref_len must be >= 20")
    _check(1 <= cfg.spi.window <= cfg.spi.ref_len, "spi.window must be in [1, ref_len]")
    _check(-5 <= cfg.spi.threshold <= 5, "spi.threshold must be in [-5, 5]")
    _check(cfg.modes.n_modes is None or cfg.modes.n_modes >= 1, "modes.n_modes must be >= 1")
    _check(0 < cfg.modes.varimax_tol < 1, "modes.varimax_tol must be in (0, 1)")
    _check(cfg.modes.varimax_max_sweeps >= 1, "modes.varimax_max_sweeps must be >= 1")
    p = cfg.pcmci
    _check(1 <= p.tau_max <= 120, "pcmci.tau_max must be in [1, 120]")
    _check(0 < p.alpha <= 1, "pcmci.alpha must be in (0, 1]")
    _check(p.alpha_pc is None or 0 <= p.alpha_pc <= 1, "pcmci.alpha_pc must be in [0, 1]")
    _check(len(p.alpha_pc_grid) > 0 and all(0 < a <= 1 for a in p.alpha_pc_grid),
           "pcmci.alpha_pc_grid levels must be in (0, 1]")
    _check(p.max_conds_dim is None or p.max_conds_dim >= 0, "pcmci.max_conds_dim must be >= 0")
    _check(p.max_combinations >= 1, "pcmci.max_combinations must be >= 1")
    _check(p.max_conds_px is None or p.max_conds_px >= 0, "pcmci.max_conds_px must be >= 0")
    _check(p.fdr_scope in ("all", "significant"), "pcmci.fdr_scope must be all or significant")
    f = cfg.forecast
    _check(f.n_lags >= 1, "forecast.n_lags must be >= 1")
    _check(f.train >= 30, "forecast.train must be >= 30")
    _check(1 <= f.test <= f.n_lags, "forecast.test must be in [1, n_lags]")
    _check(f.step >= 1, "forecast.step must be >= 1")
    _check(f.ridge >= 0, "forecast.ridge must be >= 0")
    _check(f.units in ("count", "fraction"), "forecast.units must be count or fraction")
