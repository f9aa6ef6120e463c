"""Scenario configuration: dataclasses per module, INI round-trip, desk/paper profiles.

Defaults reproduce the full evaluation setup (M=32, P=Q=11, 60 kHz numerology).
The desk profile shrinks the array, the model orders and the waveform so that the
acceptance campaigns finish on a laptop.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from .channel import ChannelConfig
from .errors import ConfigurationError
from .waveform import OfdmConfig

SCENARIOS = (
    "intended_ue",
    "subarray_decomposition",
    "isolation_sweep",
    "spatial_sweep",
    "crosstalk_sweep",
    "imperfect_csi",
    "complexity_table",
)


@dataclass(frozen=True)
class SystemConfig:
    n_users: int = 2
    n_subarrays: int = 2
    subarray_size: int = 32
    antenna_spacing: float = 0.5
    carrier_bandwidth: float = 200e6
    user_angles_deg: Tuple[float, ...] = (-15.0, 24.0)
    beam_mode: str = "multi_beam"
    beam_search_step_deg: float = 5.0
    precoder: str = "ZF"
    rzf_delta: float = 0.1

    def __post_init__(self):
        if self.beam_mode not in ("single_beam", "multi_beam"):
            raise ConfigurationError(f"unknown beam mode {self.beam_mode!r}")
        if len(self.user_angles_deg) != self.n_users:
            raise ConfigurationError("one angle per intended user is required")
        if self.beam_mode == "single_beam" and self.n_users != self.n_subarrays:
            raise ConfigurationError("single-beam mode assigns one user to each subarray")


@dataclass(frozen=True)
class WaveformConfig:
    papr_db: float = 8.3
    icf_iterations: int = 10
    n_symbols: int = 14


@dataclass(frozen=True)
class PaConfig:
    base_model_path: str = ""
    order: int = 11
    memory: int = 3
    mag_spread_db: float = 0.25
    phase_spread_deg: float = 2.5
    drive_db: float = -1.8  # mean input power per chain relative to the model's unit amplitude


@dataclass(frozen=True)
class CrosstalkConfig:
    enabled: bool = False
    input_db: float = -20.0
    antenna_db: float = -10.0
    sweep_antenna_db: Tuple[float, ...] = (-15.0, -14.0, -13.0, -12.0, -11.0, -10.0)


@dataclass(frozen=True)
class DpdConfig:
    order: int = 11
    memory: int = 3
    mu: float = 0.5
    cl_blocks: int = 15
    cl_block_size: int = 20000
    ila_iterations: int = 3
    ila_block_size: int = 100000
    linear_taps: int = 3
    probe_backoff_db: float = 60.0
    methods: Tuple[str, ...] = ("CL", "ILA")

    def __post_init__(self):
        bad = [m for m in self.methods if m not in ("CL", "ILA")]
        if bad:
            raise ConfigurationError(f"unknown DPD methods {bad}")


@dataclass(frozen=True)
class CsiConfig:
    """Channel-estimate quality and analog phase resolution.

    Both impairments are dormant unless `enabled` is set; the imperfect_csi scenario
    switches them on regardless. phase_bits = 0 means unquantized phases.
    """

    enabled: bool = False
    chi: float = 0.9
    phase_bits: int = 5

    def __post_init__(self):
        if not 0.0 <= self.chi <= 1.0:
            raise ConfigurationError("chi must lie in [0, 1]")
        if self.phase_bits < 0:
            raise ConfigurationError("phase_bits must be >= 0")


@dataclass(frozen=True)
class SweepConfig:
    n_drops: int = 50
    n_victims: int = 1000
    victim_range_deg: float = 60.0
    user_range_deg: float = 60.0
    min_user_separation_deg: float = 10.0
    max_pair_condition: float = 4.0  # LOS equivalent-channel condition bound for a user pair; 0 disables
    dpd_mode: str = "relearn"  # relearn | freeze | both
    separations_deg: Tuple[float, ...] = (2.0, 10.0, 20.0, 30.0, 45.0, 60.0)
    isolation_drops: int = 100

    def __post_init__(self):
        if self.dpd_mode not in ("relearn", "freeze", "both"):
            raise ConfigurationError(f"unknown DPD mode {self.dpd_mode!r}")
        if self.max_pair_condition < 0 or 0 < self.max_pair_condition < 1:
            raise ConfigurationError("max_pair_condition must be 0 (off) or >= 1")
        if self.n_drops < 1 or self.n_victims < 0 or self.isolation_drops < 1:
            raise ConfigurationError("drop counts must be >= 1 and victim count >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "intended_ue"
    seed: int = 2024
    system: SystemConfig = field(default_factory=SystemConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    pa: PaConfig = field(default_factory=PaConfig)
    crosstalk: CrosstalkConfig = field(default_factory=CrosstalkConfig)
    dpd: DpdConfig = field(default_factory=DpdConfig)
    csi: CsiConfig = field(default_factory=CsiConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        lm = self.system.n_subarrays * self.system.subarray_size
        if self.channel.array_size != lm:
            raise ConfigurationError(f"channel array size {self.channel.array_size} != L*M = {lm}")
        if not math.isclose(self.channel.sample_rate, self.ofdm.sample_rate, rel_tol=1e-12):
            raise ConfigurationError("channel and waveform sample rates differ")
        if self.channel.antenna_spacing != self.system.antenna_spacing:
            raise ConfigurationError("channel and array antenna spacings differ")
        if self.system.n_users > self.system.n_subarrays:
            raise ConfigurationError("more users than TX chains")
        if self.waveform.n_symbols * self.ofdm.symbol_length < 4096:
            raise ConfigurationError("waveform is shorter than one PSD segment")
        if self.channel_spacing + self.ofdm.bandwidth / 2 > self.ofdm.sample_rate / 2:
            raise ConfigurationError("adjacent channel exceeds the simulation Nyquist band")

    @property
    def channel_spacing(self) -> float:
        return self.system.carrier_bandwidth

    @property
    def csi_active(self) -> bool:
        return self.csi.enabled or self.scenario == "imperfect_csi"

    @property
    def chi(self) -> float:
        return self.csi.chi if self.csi_active else 1.0

    @property
    def phase_bits(self) -> int:
        return self.csi.phase_bits if self.csi_active else 0

    @property
    def stream_length(self) -> int:
        return self.waveform.n_symbols * self.ofdm.symbol_length


_SECTIONS = {
    "system": SystemConfig,
    "waveform": OfdmConfig,
    "icf": WaveformConfig,
    "channel": ChannelConfig,
    "pa": PaConfig,
    "crosstalk": CrosstalkConfig,
    "dpd": DpdConfig,
    "csi": CsiConfig,
    "sweep": SweepConfig,
}
_ATTR = {"waveform": "ofdm", "icf": "waveform"}


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, default, name: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            return configparser.ConfigParser.BOOLEAN_STATES[text.lower()]
        if isinstance(default, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], str):
                return tuple(parts)
            return tuple(float(p) for p in parts)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"cannot parse {name} = {text!r}") from exc


def _section_from(parser, section: str, base):
    if not parser.has_section(section):
        return base
    known = {f.name: f for f in fields(base)}
    updates = {}
    for key, raw in parser.items(section):
        if key not in known:
            raise ConfigurationError(f"unknown key [{section}] {key}")
        updates[key] = _parse(raw, getattr(base, key), f"[{section}] {key}")
    return replace(base, **updates)


def _sync_channel(parts: dict, explicit: set) -> None:
    """Let the channel follow the array size, spacing and sample rate unless set explicitly."""
    sysc, ofdm = parts["system"], parts["ofdm"]
    derived = {
        "array_size": sysc.n_subarrays * sysc.subarray_size,
        "antenna_spacing": sysc.antenna_spacing,
        "sample_rate": ofdm.sample_rate,
    }
    upd = {k: v for k, v in derived.items() if k not in explicit and getattr(parts["channel"], k) != v}
    if upd:
        parts["channel"] = replace(parts["channel"], **upd)


def profile(name: str = "desk") -> ScenarioConfig:
    """Resolved default configuration for 'desk' or 'paper' scale."""
    if name == "paper":
        return ScenarioConfig()
    if name != "desk":
        raise ConfigurationError(f"unknown profile {name!r}")
    ofdm = OfdmConfig(fft_size=2048, active_subcarriers=1584, subcarrier_spacing=120e3, cp_length=144)
    m = 8
    return ScenarioConfig(
        system=SystemConfig(subarray_size=m),
        ofdm=ofdm,
        waveform=WaveformConfig(n_symbols=20),
        channel=ChannelConfig(array_size=2 * m, sample_rate=ofdm.sample_rate),
        pa=PaConfig(order=7),
        dpd=DpdConfig(order=7),
    )


def load(path: Optional[str | Path] = None, profile_name: str = "desk", **overrides) -> ScenarioConfig:
    """Read an INI file on top of a profile. Unknown sections or keys are errors."""
    cfg = profile(profile_name)
    parts = {attr: getattr(cfg, attr) for attr in ("system", "ofdm", "waveform", "channel", "pa",
                                                  "crosstalk", "dpd", "csi", "sweep")}
    top = {"scenario": cfg.scenario, "seed": cfg.seed}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section not in _SECTIONS and section != "run":
                raise ConfigurationError(f"unknown config section [{section}]")
        if parser.has_section("run"):
            for key, raw in parser.items("run"):
                if key not in top:
                    raise ConfigurationError(f"unknown key [run] {key}")
                top[key] = _parse(raw, top[key], f"[run] {key}")
        try:
            for section in _SECTIONS:
                attr = _ATTR.get(section, section)
                parts[attr] = _section_from(parser, section, parts[attr])
            explicit = set(parser.options("channel")) if parser.has_section("channel") else set()
            _sync_channel(parts, explicit)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc
    top.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig(**top, **parts)


def dumps(cfg: ScenarioConfig) -> str:
    """INI text of a fully resolved configuration (used for run manifests)."""
    lines = ["[run]", f"scenario = {cfg.scenario}", f"seed = {cfg.seed}", ""]
    for section in _SECTIONS:
        obj = getattr(cfg, _ATTR.get(section, section))
        lines.append(f"[{section}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def as_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)


def override(cfg: ScenarioConfig, items: dict) -> ScenarioConfig:
    """Apply dotted overrides such as {'system.subarray_size': 32} in one step.

    The channel array size, spacing and sample rate follow the system and waveform
    sections unless they are overridden explicitly.
    """
    parts = {attr: getattr(cfg, attr) for attr in ("system", "ofdm", "waveform", "channel", "pa",
                                                  "crosstalk", "dpd", "csi", "sweep")}
    top = {"scenario": cfg.scenario, "seed": cfg.seed}
    grouped: dict = {}
    for key, value in items.items():
        if "." not in key:
            if key not in top:
                raise ConfigurationError(f"unknown override {key!r}")
            top[key] = value
            continue
        section, name = key.split(".", 1)
        attr = _ATTR.get(section, section)
        if attr not in parts:
            raise ConfigurationError(f"unknown override section {section!r}")
        if name not in {f.name for f in fields(parts[attr])}:
            raise ConfigurationError(f"unknown override {key!r}")
        grouped.setdefault(attr, {})[name] = value
    try:
        for attr, upd in grouped.items():
            parts[attr] = replace(parts[attr], **upd)
        _sync_channel(parts, set(grouped.get("channel", {})))
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
    return ScenarioConfig(**top, **parts)
