"""Experiment configuration: defaults, plain-text config files, sweeps, seeds.

Config files are INI-style "key = value" with sections; every unspecified
field takes the standard default (10 Hz beacons, MCS B, 23 dBm, 10 MHz
channel, 1 s sensing window, and so on). A [sweep] section turns the file
into a Cartesian parameter sweep. Every run echoes the fully resolved
configuration into its metadata so defaults are never implicit in outputs.
"""

from __future__ import annotations

import configparser
import dataclasses
import zlib
from dataclasses import dataclass, field, fields

import numpy as np

from .mac_csma import CsmaConfig
from .mac_sps import SpsConfig
from .phy import BEACON_PAYLOAD_BYTES, Mcs, PhyError, Technology
from .propagation import PathLossCoefficients, PropagationConfig


class ConfigError(ValueError):
    """Invalid or unparsable configuration."""


@dataclass(frozen=True)
class MetricsConfig:
    bin_width_m: float = 10.0
    max_distance_m: float = 1000.0
    awareness_range_m: float = 100.0
    # long enough to ride out one full reservation-collision run (RC <= 15)
    neighbor_expiry_periods: float = 20.0
    cbr_update_s: float = 0.1
    tau_sense_s: float = 1.0
    # interference aggregation over a packet: time-weighted mean (default) or
    # worst overlapping segment; sidelink packets see constant interference
    # within a subframe, so the choice only matters for 802.11p*
    sinr_policy: str = "mean"

    def __post_init__(self):
        if self.sinr_policy not in ("worst", "mean"):
            raise ConfigError(f"sinr_policy must be 'worst' or 'mean', got {self.sinr_policy!r}")


@dataclass(frozen=True)
class SpsRunConfig(SpsConfig):
    selection_window_cap_sf: int = 100
    sensing_window_sf: int = 1000


@dataclass(frozen=True)
class SimConfig:
    technology: Technology = Technology.IEEE80211P_STAR
    density_veh_per_km: float = 300.0
    beacon_rate_hz: int = 10
    mcs: Mcs = Mcs.B
    tx_power_dbm: float = 23.0
    payload_bytes: int = BEACON_PAYLOAD_BYTES
    channel_bandwidth_mhz: float = 10.0
    road_length_m: float = 2000.0
    wraparound: bool = True
    positions_file: str = ""
    sim_time_s: float = 20.0
    warmup_s: float = -1.0  # negative -> max(tau_sense, 2 / f_b)
    replications: int = 10
    seed: int = 1
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    csma: CsmaConfig = field(default_factory=CsmaConfig)
    sps: SpsRunConfig = field(default_factory=SpsRunConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    # -- derived quantities ------------------------------------------------

    @property
    def beacon_period_us(self) -> int:
        if self.technology is Technology.LTEV2X:
            return self.period_sf * 1000
        return int(round(1e6 / self.beacon_rate_hz))

    @property
    def period_sf(self) -> int:
        """Beacon period in whole subframes (sidelink beacons are subframe aligned)."""
        return max(1, int(round(1000.0 / self.beacon_rate_hz)))

    @property
    def effective_warmup_s(self) -> float:
        if self.warmup_s >= 0:
            return self.warmup_s
        return max(self.metrics.tau_sense_s, 2.0 / self.beacon_rate_hz)

    @property
    def channel_bandwidth_hz(self) -> float:
        return self.channel_bandwidth_mhz * 1e6

    def validate(self) -> list[str]:
        """Raise ConfigError on hard violations; return a list of warnings."""
        warnings = []
        if self.payload_bytes != BEACON_PAYLOAD_BYTES:
            raise ConfigError(
                f"payload_bytes must be {BEACON_PAYLOAD_BYTES}: the MCS airtime table is "
                f"specific to that size (got {self.payload_bytes})")
        if not 1 <= self.beacon_rate_hz <= 10:
            raise ConfigError(f"beacon_rate_hz must be within 1..10, got {self.beacon_rate_hz}")
        if self.density_veh_per_km < 0:
            raise ConfigError("density must be non-negative")
        if self.road_length_m <= 0:
            raise ConfigError("road length must be positive")
        if self.sim_time_s <= 0 or self.replications < 1:
            raise ConfigError("sim_time_s must be positive and replications >= 1")
        if self.effective_warmup_s < self.metrics.tau_sense_s:
            raise ConfigError(
                f"warmup_s must be at least tau_sense ({self.metrics.tau_sense_s} s) "
                "so sensing windows are full when metrics start")
        if self.sim_time_s <= self.effective_warmup_s:
            raise ConfigError("sim_time_s must exceed the warmup")
        if not 8.0 <= self.tx_power_dbm <= 23.0:
            warnings.append(
                f"tx_power_dbm={self.tx_power_dbm} is outside the studied 8..23 dBm range")
        return warnings

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["technology"] = self.technology.value
        out["mcs"] = self.mcs.value
        return out


# -- INI mapping -------------------------------------------------------------

_SECTION_FIELDS = {
    "scenario": ["density_veh_per_km", "road_length_m", "wraparound", "positions_file"],
    "phy": ["technology", "mcs", "tx_power_dbm", "beacon_rate_hz",
            "payload_bytes", "channel_bandwidth_mhz"],
    "run": ["sim_time_s", "warmup_s", "replications", "seed"],
}
_NESTED_SECTIONS = {
    "propagation": ("propagation", PropagationConfig),
    "pathloss": ("propagation.pathloss", PathLossCoefficients),
    "csma": ("csma", CsmaConfig),
    "sps": ("sps", SpsRunConfig),
    "metrics": ("metrics", MetricsConfig),
}

_TECH_ALIASES = {
    "80211p": Technology.IEEE80211P_STAR, "802.11p": Technology.IEEE80211P_STAR,
    "11p": Technology.IEEE80211P_STAR, "ieee80211p_star": Technology.IEEE80211P_STAR,
    "ltev2x": Technology.LTEV2X, "lte": Technology.LTEV2X, "lte-v2x": Technology.LTEV2X,
}


def parse_technology(text: str) -> Technology:
    key = text.strip().lower()
    if key not in _TECH_ALIASES:
        raise ConfigError(f"unknown technology {text!r} (use 80211p or ltev2x)")
    return _TECH_ALIASES[key]


def _parse_value(raw: str, py_type):
    raw = raw.strip()
    try:
        if py_type is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if py_type is int:
            return int(raw)
        if py_type is float:
            return float(raw)
        if py_type is Technology:
            return parse_technology(raw)
        if py_type is Mcs:
            return Mcs(raw.upper())
        return raw
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot parse {raw!r} as {py_type.__name__}") from exc


def _field_types(cls) -> dict:
    """Settable scalar fields of a config dataclass; nested dataclasses excluded."""
    scalar = {"int": int, "float": float, "bool": bool, "str": str,
              "Technology": Technology, "Mcs": Mcs}
    types = {}
    for f in fields(cls):
        t = f.type if isinstance(f.type, type) else scalar.get(str(f.type).strip())
        if t is not None and not dataclasses.is_dataclass(t):
            types[f.name] = t
    return types


def _line_of_key(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
        elif current == section and "=" in stripped:
            if stripped.split("=", 1)[0].strip().lower() == key:
                return lineno
    return None


def load_config(path) -> tuple[SimConfig, "SweepAxes"]:
    """Parse a config file; unspecified fields keep the standard defaults."""
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))


def parse_config_text(text: str, source: str = "<config>") -> tuple[SimConfig, "SweepAxes"]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    values: dict[str, object] = {}
    nested: dict[str, dict] = {}
    sweep = SweepAxes()

    for section in parser.sections():
        sec = section.lower()
        if sec == "sweep":
            for key, raw in parser.items(section):
                sweep.add(key, raw)
            continue
        if sec in _SECTION_FIELDS:
            types = _field_types(SimConfig)
            for key, raw in parser.items(section):
                if key not in _SECTION_FIELDS[sec]:
                    line = _line_of_key(text, sec, key)
                    raise ConfigError(f"{source}: unknown key '{key}' in [{section}]"
                                      + (f" (line {line})" if line else ""))
                values[key] = _parse_value(raw, types[key])
            continue
        if sec in _NESTED_SECTIONS:
            _, cls = _NESTED_SECTIONS[sec]
            types = _field_types(cls)
            out = nested.setdefault(sec, {})
            for key, raw in parser.items(section):
                if key not in types:
                    line = _line_of_key(text, sec, key)
                    raise ConfigError(f"{source}: unknown key '{key}' in [{section}]"
                                      + (f" (line {line})" if line else ""))
                out[key] = _parse_value(raw, types[key])
            continue
        raise ConfigError(f"{source}: unknown section [{section}]")

    if "pathloss" in nested:
        pl = PathLossCoefficients(**nested["pathloss"])
        prop_kwargs = nested.get("propagation", {})
        values["propagation"] = PropagationConfig(pathloss=pl, **prop_kwargs)
    elif "propagation" in nested:
        values["propagation"] = PropagationConfig(**nested["propagation"])
    if "csma" in nested:
        values["csma"] = CsmaConfig(**nested["csma"])
    if "sps" in nested:
        values["sps"] = SpsRunConfig(**nested["sps"])
    if "metrics" in nested:
        values["metrics"] = MetricsConfig(**nested["metrics"])

    try:
        cfg = SimConfig(**values)
    except (TypeError, PhyError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg, sweep


def apply_overrides(cfg: SimConfig, overrides: list[str]) -> SimConfig:
    """Apply repeatable --set section.key=value (or bare key=value) flags."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip().lower()
        section, _, name = key.rpartition(".")
        if not section:
            section = _section_of(name)
        if section in _SECTION_FIELDS:
            if name not in _SECTION_FIELDS[section]:
                raise ConfigError(f"unknown key '{name}' in section [{section}]")
            value = _parse_value(raw, _field_types(SimConfig)[name])
            cfg = dataclasses.replace(cfg, **{name: value})
        elif section in _NESTED_SECTIONS:
            attr_path, cls = _NESTED_SECTIONS[section]
            types = _field_types(cls)
            if name not in types:
                raise ConfigError(f"unknown key '{name}' in section [{section}]")
            value = _parse_value(raw, types[name])
            parts = attr_path.split(".")
            if len(parts) == 1:
                inner = dataclasses.replace(getattr(cfg, parts[0]), **{name: value})
                cfg = dataclasses.replace(cfg, **{parts[0]: inner})
            else:  # propagation.pathloss
                outer = getattr(cfg, parts[0])
                inner = dataclasses.replace(getattr(outer, parts[1]), **{name: value})
                cfg = dataclasses.replace(cfg, **{parts[0]: dataclasses.replace(
                    outer, **{parts[1]: inner})})
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg


def _section_of(name: str) -> str:
    for sec, keys in _SECTION_FIELDS.items():
        if name in keys:
            return sec
    for sec, (_, cls) in _NESTED_SECTIONS.items():
        if name in _field_types(cls):
            return sec
    raise ConfigError(f"unknown configuration key {name!r}")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (Technology, Mcs)):
        return value.value
    return repr(value) if isinstance(value, float) else str(value)


def _emit_ini(cfg: SimConfig) -> str:
    lines = []
    for sec, keys in _SECTION_FIELDS.items():
        lines.append(f"[{sec}]")
        for key in keys:
            lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
        lines.append("")
    for sec, (attr_path, cls) in _NESTED_SECTIONS.items():
        obj = cfg
        for part in attr_path.split("."):
            obj = getattr(obj, part)
        lines.append(f"[{sec}]")
        for f in fields(cls):
            val = getattr(obj, f.name)
            if dataclasses.is_dataclass(val):
                continue  # nested dataclasses get their own section
            lines.append(f"{f.name} = {_fmt(val)}")
        lines.append("")
    return "\n".join(lines)


def emit_config(cfg: SimConfig) -> str:
    """Text form that load()/parse round-trips to an equal SimConfig."""
    return _emit_ini(cfg)


# -- sweeps ------------------------------------------------------------------

_SWEEP_PARAMS = {
    "technology": ("technology", Technology),
    "tech": ("technology", Technology),
    "rho": ("density_veh_per_km", float),
    "density_veh_per_km": ("density_veh_per_km", float),
    "fb": ("beacon_rate_hz", int),
    "beacon_rate_hz": ("beacon_rate_hz", int),
    "pt": ("tx_power_dbm", float),
    "tx_power_dbm": ("tx_power_dbm", float),
    "mcs": ("mcs", Mcs),
    "seed": ("seed", int),
}

_SHORT_NAME = {"density_veh_per_km": "rho", "beacon_rate_hz": "fb",
               "tx_power_dbm": "pt", "mcs": "mcs", "technology": "tech", "seed": "seed"}


@dataclass
class SweepAxes:
    axes: dict = field(default_factory=dict)  # field name -> list of values

    def add(self, key: str, raw: str) -> None:
        key = key.strip().lower()
        if key not in _SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {key!r} "
                              f"(one of {sorted(set(_SWEEP_PARAMS))})")
        name, py_type = _SWEEP_PARAMS[key]
        if py_type is Technology and raw.strip().lower() == "both":
            values = [Technology.IEEE80211P_STAR, Technology.LTEV2X]
        else:
            values = [_parse_value(part, py_type) for part in raw.split(",") if part.strip()]
        if not values:
            raise ConfigError(f"sweep axis {key!r} has no values")
        self.axes[name] = values

    def __bool__(self) -> bool:
        return bool(self.axes)


@dataclass
class SweepPoint:
    config: SimConfig
    label: str
    index: int


@dataclass
class SweepSpec:
    base: SimConfig
    axes: SweepAxes
    output_dir: str

    def expand(self) -> list[SweepPoint]:
        import itertools

        names = list(self.axes.axes)
        points = []
        for index, combo in enumerate(itertools.product(*self.axes.axes.values())):
            cfg = self.base
            for name, value in zip(names, combo):
                cfg = dataclasses.replace(cfg, **{name: value})
            parts = [f"{_SHORT_NAME[n]}={_fmt(v)}" for n, v in zip(names, combo)]
            cfg = dataclasses.replace(cfg, seed=derive_point_seed(self.base.seed, parts))
            cfg.validate()
            points.append(SweepPoint(config=cfg, label="_".join(parts), index=index))
        return points


def derive_point_seed(master_seed: int, label_parts: list[str]) -> int:
    """Per-point seed keyed on the point's parameter values, so adding sweep
    points never changes the seeds of existing ones."""
    tag = zlib.crc32(",".join(label_parts).encode())
    ss = np.random.SeedSequence([master_seed, tag])
    return int(ss.generate_state(1, dtype=np.uint32)[0])
