"""Experiment configuration: TOML or JSON in, validated frozen dataclasses out.

A config file has up to six sections, all optional::

    [frame]    N, cp_len, blocks, sample_rate
    [modem]    M (bits per symbol)
    [channel]  profile, rms_ds_ns, rms_range_ns, normalize
    [noise]    ebn0_db
    [optim]    any OptimConfig field
    [run]      seed, workers, out_dir, ccdf_blocks, ber_channels, schemes

Unknown sections or keys are rejected with the dotted field path.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli

from .channel import BUILTIN_PROFILES, NORMALIZE_MODES
from .errors import ConfigError
from .link import SCHEMES
from .optimizer import OptimConfig
from .transceiver import FrameConfig

MANIFEST_KIND = "flexwave-run-manifest"

PAPER_SCALE = {
    "optim.batch_size": 9000,
    "optim.fine_tune_batch_size": 14000,
    "run.ber_channels": 1000,
    "run.ccdf_blocks": 100_000,
}


@dataclass(frozen=True)
class FrameSection:
    N: int = 32
    cp_len: int = 8
    # blocks per channel realization in BER runs
    blocks: int = 100
    sample_rate: float = 1e6

    def frame(self, blocks: int | None = None) -> FrameConfig:
        return FrameConfig(self.N, self.cp_len, blocks or self.blocks, self.sample_rate)


@dataclass(frozen=True)
class ModemSection:
    M: int = 4


@dataclass(frozen=True)
class ChannelSection:
    profile: str = "tdl-a"
    # delay spreads for per-channel runs (papr-ccdf, waveform-report, optimize)
    rms_ds_ns: tuple[float, ...] = (10.0, 130.0, 250.0, 580.0)
    # uniform mixture for BER sweeps
    rms_range_ns: tuple[float, float] = (10.0, 600.0)
    normalize: str = "per-realization"


@dataclass(frozen=True)
class NoiseSection:
    ebn0_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    workers: int = 1
    out_dir: str = "out"
    ccdf_blocks: int = 10_000
    ber_channels: int = 100
    schemes: tuple[str, ...] = SCHEMES


@dataclass(frozen=True)
class ExperimentConfig:
    frame: FrameSection = field(default_factory=FrameSection)
    modem: ModemSection = field(default_factory=ModemSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    optim: OptimConfig = field(default_factory=OptimConfig)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def replace(self, **dotted) -> "ExperimentConfig":
        """Copy with overrides given as ``section__key=value``."""
        data = self.to_dict()
        for key, value in dotted.items():
            section, name = key.split("__", 1)
            data[section][name] = value
        return config_from_dict(data)


SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig)}


def _coerce(cls, name: str, value, path: str):
    """Turn JSON/TOML scalars and lists into the field's declared type."""
    default = next(f for f in fields(cls) if f.name == name)
    template = (default.default if default.default is not dataclasses.MISSING
                else default.default_factory())
    if isinstance(template, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(value)
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(template, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(template, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(template, str) and not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _build_section(name: str, data: Any):
    cls = SECTIONS[name]
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected a table of keys")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
    kwargs = {k: _coerce(cls, k, v, f"{name}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _validate(cfg: ExperimentConfig) -> None:
    ch, run = cfg.channel, cfg.run
    try:
        cfg.frame.frame()
    except ConfigError as exc:
        raise ConfigError(f"frame: {exc}") from exc
    if cfg.frame.sample_rate <= 0:
        raise ConfigError("frame.sample_rate: must be positive")
    if cfg.modem.M < 1 or cfg.modem.M % 2:
        raise ConfigError(f"modem.M: square QAM needs an even number of bits, got {cfg.modem.M}")
    if ch.profile not in BUILTIN_PROFILES and not Path(ch.profile).is_file():
        raise ConfigError(f"channel.profile: no built-in profile or file named {ch.profile!r}")
    if not ch.rms_ds_ns:
        raise ConfigError("channel.rms_ds_ns: list must not be empty")
    if any(r < 0 for r in ch.rms_ds_ns):
        raise ConfigError("channel.rms_ds_ns: delay spreads must be non-negative")
    if len(ch.rms_range_ns) != 2 or not 0 <= ch.rms_range_ns[0] <= ch.rms_range_ns[1]:
        raise ConfigError(f"channel.rms_range_ns: need [lo, hi] with 0 <= lo <= hi, got "
                          f"{list(ch.rms_range_ns)}")
    if ch.normalize not in NORMALIZE_MODES:
        raise ConfigError(f"channel.normalize: must be one of {NORMALIZE_MODES}")
    if not cfg.noise.ebn0_db:
        raise ConfigError("noise.ebn0_db: list must not be empty")
    if run.workers < 1:
        raise ConfigError("run.workers: must be >= 1")
    if run.ccdf_blocks < 1 or run.ber_channels < 1:
        raise ConfigError("run.ccdf_blocks and run.ber_channels must be >= 1")
    unknown = [s for s in run.schemes if s not in SCHEMES]
    if unknown or not run.schemes:
        raise ConfigError(f"run.schemes: choose from {SCHEMES}, got {list(run.schemes)}")


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    for name in data:
        if name not in SECTIONS:
            raise ConfigError(f"unknown key '{name}'")
    cfg = ExperimentConfig(**{name: _build_section(name, value) for name, value in data.items()})
    _validate(cfg)
    return cfg


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Parse a ``.toml`` or ``.json`` config; ``None`` gives the defaults.

    A run manifest written by the CLI is also accepted; its embedded
    config is loaded.
    """
    if path is None:
        return config_from_dict({})
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomli.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if isinstance(data, dict) and data.get("kind") == MANIFEST_KIND:
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return config_from_dict(data)


def apply_paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg.replace(**{k.replace(".", "__"): v for k, v in PAPER_SCALE.items()})
