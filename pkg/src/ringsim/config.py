"""Experiment configuration: a schema-versioned key tree loaded from
TOML (or JSON as an alternate encoding) that feeds every CLI command.

All randomness flows from one root seed through named substreams
(device-gen, noise, training-init, data-gen) so any component can be
varied independently by renaming nothing and reseeding once.
"""

from __future__ import annotations

import json
import zlib

try:
    import tomllib
except ModuleNotFoundError:        # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .calibration import ControllerConfig
from .devices import OsaConfig
from .training import TrainingConfig

CONFIG_SCHEMA_VERSION = 1

RNG_STREAMS = ("device-gen", "noise", "training-init", "data-gen")

# plain SGD drifts after convergence, so the CLI default stops at the
# criterion's error target instead of running the full epoch budget
CLI_TRAINING_DEFAULTS = {"eta": 0.01, "epochs": 500, "target_error": 0.02}


class ConfigError(ValueError):
    """The configuration file is missing, malformed or out of schema."""


def substream_seed(root_seed: int, name: str) -> int:
    """Deterministic child seed for a named random substream."""
    if name not in RNG_STREAMS:
        raise ValueError(f"unknown rng stream {name!r}")
    ss = np.random.SeedSequence([root_seed, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class SweepConfig:
    """Grid-sweep settings for the physical 2-3-1 network.

    Parameters
    ----------
    params_file : str
        Path to a trained-parameter JSON document; empty string selects
        the built-in deployed reference parameters.
    grid_n : int
        Measured grid points per axis, >= 2.
    """

    params_file: str = ""
    grid_n: int = 10

    def __post_init__(self):
        if self.grid_n < 2:
            raise ConfigError("grid_n must be >= 2")


@dataclass(frozen=True)
class MdmConfig:
    """Interferometer-report settings.

    Parameters
    ----------
    sweep_dir : str
        Directory of width_length.csv spectra to analyze.
    """

    sweep_dir: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated tree of every tunable the CLI commands consume."""

    seed: int = 0
    osa: OsaConfig = field(default_factory=lambda: OsaConfig(0.1, 0.01, 0.2))
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    training: TrainingConfig = field(
        default_factory=lambda: TrainingConfig(**CLI_TRAINING_DEFAULTS))
    sweep: SweepConfig = field(default_factory=SweepConfig)
    mdm: MdmConfig = field(default_factory=MdmConfig)

    def stream_seed(self, name: str) -> int:
        """Seed of the named substream under this config's root seed."""
        return substream_seed(self.seed, name)


def _build_section(cls, doc: dict, section: str, extra: dict | None = None):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(
            f"unknown field(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**{**doc, **(extra or {})})
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a parsed key tree into an ExperimentConfig.

    Raises
    ------
    ConfigError
        On a missing or unsupported schema_version, unknown fields at
        any level, or field values rejected by a section's invariants.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    doc = dict(doc)
    version = doc.pop("schema_version", None)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}")
    seed = doc.pop("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    sections = {
        "osa": OsaConfig,
        "controller": ControllerConfig,
        "training": TrainingConfig,
        "sweep": SweepConfig,
        "mdm": MdmConfig,
    }
    unknown = set(doc) - set(sections)
    if unknown:
        raise ConfigError(
            f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    built = {}
    for name, cls in sections.items():
        body = doc.get(name, {})
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table")
        if name == "training":
            if "seed" in body:
                raise ConfigError(
                    "[training] seed is derived from the root seed via the "
                    "training-init substream; set the top-level seed instead")
            body = {**CLI_TRAINING_DEFAULTS, **body}
        built[name] = _build_section(cls, body, name)
    return ExperimentConfig(seed=seed, **built)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a TOML (.toml) or JSON (.json) config file; None yields the
    defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            doc = json.loads(path.read_text())
        elif path.suffix == ".toml":
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        else:
            raise ConfigError(
                f"config must be .toml or .json, got {path.suffix!r}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(doc)
