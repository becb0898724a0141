"""Flat ``key = value`` run configuration with command-line overrides."""

from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from sfvrom.config import ArtifactIOError, ConfigurationError, raise_error
from sfvrom.problems import Preset
from sfvrom.solver import ATOL, FRAMES, RTOL, Method, TimeIntegratorConfig
from sfvrom.weno import DEFAULT_EPSILON

SNAPSHOT_MODES = ("intrusive", "nonintrusive")
TRUE = ("1", "true", "yes", "on")
FALSE = ("0", "false", "no", "off")


@dataclass(frozen=True)
class RunConfig:
    problem: str = Preset.burgers_sine.value
    nx: Optional[int] = None
    ny: Optional[Tuple[int, ...]] = None
    """Stochastic cells per dimension; ``None`` takes the problem default."""
    method: str = Method.fom_flux.value
    n_modes: Optional[int] = None
    n_hyper: Optional[int] = None
    rtol: float = RTOL
    atol: float = ATOL
    t_final: Optional[float] = None
    frames: int = FRAMES
    epsilon: float = DEFAULT_EPSILON
    max_steps: int = 200000
    output: Optional[str] = None
    basis: Optional[str] = None
    snapshots: Optional[str] = None
    snapshot_mode: str = "intrusive"
    dedupe: bool = True
    fom_run: Optional[str] = None
    reference: Optional[str] = None
    workers: int = 1
    slice_value: Optional[Tuple[float, ...]] = None
    y: Optional[Tuple[float, ...]] = None
    custom_problem: Optional[str] = None
    levels: Optional[Tuple[int, ...]] = None
    modes: Optional[Tuple[int, ...]] = None
    hyper: Optional[Tuple[int, ...]] = None

    def validate(self):
        if self.problem not in [p.value for p in Preset]:
            raise_error(ConfigurationError, f"Unknown problem {self.problem!r}.")
        if self.problem == Preset.custom.value and not self.custom_problem:
            raise_error(ConfigurationError, "problem=custom requires custom_problem.")
        try:
            method = Method(self.method)
        except ValueError:
            raise_error(
                ConfigurationError,
                f"Unknown method {self.method!r}; choose from {[m.value for m in Method]}.",
            )
        if self.snapshot_mode not in SNAPSHOT_MODES:
            raise_error(ConfigurationError, f"snapshot_mode must be one of {SNAPSHOT_MODES}.")
        if method in (Method.rom, Method.rom_hr) and not (
            self.basis or (self.snapshots and self.n_modes)
        ):
            raise_error(
                ConfigurationError,
                f"{method.value} needs basis=<dir> or snapshots=<dir> with n_modes.",
            )
        if method is Method.rom_hr:
            if self.n_hyper is None:
                raise_error(ConfigurationError, "rom-hr needs n_hyper.")
            if self.n_modes is not None and self.n_hyper < self.n_modes:
                raise_error(
                    ConfigurationError,
                    f"n_hyper={self.n_hyper} must be at least n_modes={self.n_modes}.",
                )
        if method is Method.det_1d and self.y is None:
            raise_error(ConfigurationError, "det-1d needs the parameter point y.")
        if self.workers < 1:
            raise_error(ConfigurationError, "workers must be at least 1.")
        self.integrator(0.2)
        return self

    def integrator(self, t_final) -> TimeIntegratorConfig:
        return TimeIntegratorConfig(
            rtol=self.rtol,
            atol=self.atol,
            t_final=self.t_final if self.t_final is not None else t_final,
            max_steps=self.max_steps,
            frames=self.frames,
        )

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: dict):
        return replace(self, **_convert(overrides))


_INT_TUPLES = {"ny", "levels", "modes", "hyper"}
_FLOAT_TUPLES = {"slice_value", "y"}
_INTS = {"nx", "n_modes", "n_hyper", "frames", "max_steps", "workers"}
_FLOATS = {"rtol", "atol", "t_final", "epsilon"}
_BOOLS = {"dedupe"}


def _convert_value(key, text):
    text = text.strip()
    if text.lower() in ("", "none"):
        return None
    try:
        if key in _INT_TUPLES:
            return tuple(int(v) for v in text.split(","))
        if key in _FLOAT_TUPLES:
            return tuple(float(v) for v in text.split(","))
        if key in _INTS:
            return int(text)
        if key in _FLOATS:
            return float(text)
    except ValueError:
        raise_error(ConfigurationError, f"Bad value {text!r} for {key}.")
    if key in _BOOLS:
        if text.lower() not in TRUE + FALSE:
            raise_error(ConfigurationError, f"Bad boolean {text!r} for {key}.")
        return text.lower() in TRUE
    return text


def _convert(mapping: dict):
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise_error(ConfigurationError, f"Unknown configuration keys: {unknown}.")
    return {
        key: value if not isinstance(value, str) else _convert_value(key, value)
        for key, value in mapping.items()
    }


def parse_pairs(lines):
    """``key = value`` lines (``#`` starts a comment) into a dict of strings."""
    pairs = {}
    for number, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise_error(ConfigurationError, f"Line {number}: expected key = value, got {line!r}.")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def parse_config_text(text) -> RunConfig:
    return RunConfig(**_convert(parse_pairs(text.splitlines())))


def load_config(path=None, overrides=()) -> RunConfig:
    """Config file (optional) with ``key=value`` overrides applied on top."""
    config = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as error:
            raise_error(ArtifactIOError, f"Cannot read config {path}: {error}")
        config = parse_config_text(text)
    return config.with_overrides(parse_pairs(overrides)).validate()
