"""Experiment configuration: strict JSON <-> dataclass mapping and bundled presets.

Field names in the JSON files are exactly the dataclass field names; unknown
keys are rejected so that a typo in a physics parameter cannot silently fall
back to a default.
"""
from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

from .detection import PolarimeterSpec
from .errors import ConfigError, SnsimError
from .quantum_optics import StokesNoiseState, apply_optical_loss, squeezed_state
from .spin_dynamics import EnsembleSpec, IsotopeSpec, ProbeGeometry
from .spectral import WINDOWS

__all__ = [
    "SqueezedSource",
    "AcquisitionSpec",
    "ExperimentConfig",
    "SweepSpec",
    "SweepConfig",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "dump_config",
    "sweep_from_dict",
    "sweep_to_dict",
    "load_sweep",
    "list_presets",
    "load_preset",
    "load_sweep_preset",
    "SWEEP_PRESETS",
]

SWEEP_PRESETS = ("fig5a", "fig5b")
SWEEP_VARIABLES = ("power", "density")


@dataclass(frozen=True)
class SqueezedSource:
    """Squeezed probe described by its source squeezing and the cell transmission.

    The state seen by the polarimeter is the minimum-uncertainty state with
    ``squeezing_db`` on S2 after a beam-splitter loss of ``cell_transmission``.
    """

    squeezing_db: float
    cell_transmission: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.cell_transmission <= 1.0):
            raise ConfigError("cell_transmission", "must lie in [0, 1]")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Digitizer and averaging settings.

    ``n_averages`` independent records of ``duration_s`` are simulated; each
    is split into Welch segments of ``segment_len`` samples (the whole record
    when ``None``).  ``duration_s=None`` picks the shortest power-of-two
    record that resolves the narrowest expected line (RBW <= FWHM / 10) and
    spans at least 50 T2.
    """

    sample_rate_hz: float
    duration_s: float | None = None
    n_averages: int = 200
    segment_len: int | None = None
    window: str = "hann"
    overlap: float = 0.5

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz", "must be > 0")
        if self.duration_s is not None and not self.duration_s > 0:
            raise ConfigError("duration_s", "must be > 0")
        if self.n_averages < 1:
            raise ConfigError("n_averages", "must be >= 1")
        if self.segment_len is not None and self.segment_len < 2:
            raise ConfigError("segment_len", "must be >= 2")
        if self.window not in WINDOWS:
            raise ConfigError("window", f"must be one of {sorted(WINDOWS)}")
        if not (0.0 <= self.overlap <= 0.9):
            raise ConfigError("overlap", "must lie in [0, 0.9]")


@dataclass(frozen=True)
class ExperimentConfig:
    ensemble: EnsembleSpec
    probe: ProbeGeometry
    optics: Union[StokesNoiseState, SqueezedSource]
    acquisition: AcquisitionSpec
    polarimeter: PolarimeterSpec = field(default_factory=PolarimeterSpec)
    seed: int = 0

    def optical_state(self) -> StokesNoiseState:
        """Stokes noise state at the polarimeter."""
        if isinstance(self.optics, StokesNoiseState):
            return self.optics
        src = squeezed_state(self.optics.squeezing_db, self.probe.power_mw)
        return apply_optical_loss(src, self.optics.cell_transmission)

    @property
    def xi2(self) -> float:
        return self.optical_state().s2_var_rel_snl


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError("sweep.variable", f"must be one of {SWEEP_VARIABLES}")
        if len(self.values) < 3:
            raise ConfigError("sweep.values", "a sweep needs at least three values")
        if len(set(self.values)) < 2:
            raise ConfigError("sweep.values", "values must not all coincide")


@dataclass(frozen=True)
class SweepConfig:
    experiment: ExperimentConfig
    sweep: SweepSpec


# --- generic strict (de)serialization -------------------------------------

def _type_name(tp):
    return getattr(tp, "__name__", str(tp))


def _convert(tp, value, path):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(path, "must not be null")
        candidates = [a for a in args if a is not type(None)]
        if len(candidates) == 1:
            return _convert(candidates[0], value, path)
        errors = []
        for cand in candidates:
            try:
                return _convert(cand, value, path)
            except ConfigError as exc:
                errors.append(f"as {_type_name(cand)}: {exc}")
        raise ConfigError(path, "matches no accepted form (" + "; ".join(errors) + ")")
    if origin is tuple:
        (item_tp, _ellipsis) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return tuple(_convert(item_tp, v, f"{path}[{i}]") for i, v in enumerate(value))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config field type {tp!r}")


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(path or cls.__name__, "expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown key")
    kwargs = {}
    for name, f in names.items():
        sub = f"{path}.{name}" if path else name
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(sub, "missing required key")
            continue
        kwargs[name] = _convert(hints[name], data[name], sub)
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if path and exc.field and not exc.field.startswith(path):
            raise ConfigError(f"{path}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
        raise
    except (SnsimError, ValueError, TypeError) as exc:
        raise ConfigError(path or cls.__name__, str(exc)) from None


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def config_from_dict(data) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def config_to_dict(config: ExperimentConfig) -> dict:
    return _to_plain(config)


def sweep_from_dict(data) -> SweepConfig:
    return _build(SweepConfig, data)


def sweep_to_dict(config: SweepConfig) -> dict:
    return _to_plain(config)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None


def load_config(path) -> ExperimentConfig:
    return config_from_dict(_read_json(path))


def load_sweep(path) -> SweepConfig:
    return sweep_from_dict(_read_json(path))


def dump_config(config, path=None) -> str:
    data = _to_plain(config)
    text = json.dumps(data, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# --- presets --------------------------------------------------------------

def _preset_text(name):
    res = resources.files("snsim") / "presets" / f"{name}.json"
    if not res.is_file():
        raise ConfigError("preset", f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return res.read_text()


def list_presets() -> list[str]:
    root = resources.files("snsim") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _strip_doc(data):
    # presets carry a free-text provenance note next to the config
    data = dict(data)
    data.pop("description", None)
    return data


def load_preset(name: str) -> ExperimentConfig:
    if name in SWEEP_PRESETS:
        return load_sweep_preset(name).experiment
    return config_from_dict(_strip_doc(json.loads(_preset_text(name))))


def load_sweep_preset(name: str) -> SweepConfig:
    if name not in SWEEP_PRESETS:
        raise ConfigError("preset", f"{name!r} is not a sweep preset; sweeps: {', '.join(SWEEP_PRESETS)}")
    return sweep_from_dict(_strip_doc(json.loads(_preset_text(name))))


def preset_description(name: str) -> str:
    return json.loads(_preset_text(name)).get("description", "")
