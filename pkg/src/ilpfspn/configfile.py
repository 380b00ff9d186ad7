"""Experiment files: TOML documents with [model], [sweep], [replications] and [output].

Parsing is strict: unknown sections or keys, wrongly typed values and invalid
model parameters all raise :class:`ConfigFileError`.  Syntax errors carry the
line and column reported by the TOML parser.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .experiments import DEFAULT_REPLICATIONS, SWEEP_AXES
from .pipeline import ConfigError, SimConfig

SECTIONS = ("model", "sweep", "replications", "output")
OUTPUT_KEYS = ("csv", "svg", "trace")
REPLICATION_KEYS = ("n", "base_seed")

_INT_FIELDS = {"W", "C_BR", "seed"}
_BOOL_FIELDS = {"pass_through", "defer_reexecution"}
_OPTIONAL_FIELDS = {"buffer_capacity"}


class ConfigFileError(ValueError):
    """Bad experiment file or override; ``where`` is ``"line L, column C"`` or a key path."""

    def __init__(self, message: str, where: Optional[str] = None, field: Optional[str] = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where
        self.field = field


@dataclass(frozen=True)
class ExperimentFile:
    model: SimConfig = field(default_factory=SimConfig)
    sweep: Optional[dict] = None
    baseline: bool = True
    n: int = DEFAULT_REPLICATIONS
    base_seed: int = 0
    csv: Optional[str] = None
    svg: Optional[str] = None
    trace: Optional[str] = None

    def replace(self, **changes) -> "ExperimentFile":
        from dataclasses import replace

        return replace(self, **changes)


def _type_name(value) -> str:
    return type(value).__name__


def coerce_model_value(name: str, value: Any) -> Any:
    """Check and normalise one [model] value; integers are accepted for real fields."""
    if name not in SimConfig.field_names():
        raise ConfigFileError(f"unknown model key {name!r}", f"model.{name}", name)
    where = f"model.{name}"
    if name in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigFileError(f"expected a boolean, got {_type_name(value)}", where, name)
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigFileError(f"expected a number, got {_type_name(value)}", where, name)
    if name in _INT_FIELDS:
        if not isinstance(value, int):
            raise ConfigFileError(f"expected an integer, got {value!r}", where, name)
        return value
    return float(value)


def build_model(values: Mapping[str, Any], base: Optional[SimConfig] = None) -> SimConfig:
    changes = {k: coerce_model_value(k, v) for k, v in values.items()}
    try:
        return (base or SimConfig()).replace(**changes)
    except ConfigError as exc:
        raise ConfigFileError(str(exc), f"model.{exc.field}", exc.field) from exc


def _check_keys(table: Mapping, allowed, section: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigFileError(f"unknown key {key!r}", f"[{section}]", key)


def _parse_sweep(table: Mapping) -> tuple[Optional[dict], bool]:
    _check_keys(table, SWEEP_AXES + ("baseline",), "sweep")
    baseline = table.get("baseline", True)
    if not isinstance(baseline, bool):
        raise ConfigFileError("expected a boolean", "sweep.baseline", "baseline")
    axes = {}
    for name in SWEEP_AXES:  # canonical order keeps round trips and outputs stable
        if name not in table:
            continue
        values = table[name]
        where = f"sweep.{name}"
        if not isinstance(values, list) or not values:
            raise ConfigFileError("expected a non-empty array", where, name)
        out = []
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigFileError(f"expected numbers, got {_type_name(v)}", where, name)
            if name == "W":
                if not isinstance(v, int):
                    raise ConfigFileError(f"W values must be integers, got {v!r}", where, name)
                out.append(v)
            else:
                out.append(float(v))
        axes[name] = out
    return (axes or None), baseline


def _nonneg_int(table: Mapping, key: str, section: str, default: int, minimum: int) -> int:
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum or value >= 2**64:
        raise ConfigFileError(f"expected an integer >= {minimum}, got {value!r}", f"{section}.{key}", key)
    return value


def from_dict(doc: Mapping[str, Any]) -> ExperimentFile:
    _check_keys(doc, SECTIONS, "document")
    for name in SECTIONS:
        if name in doc and not isinstance(doc[name], dict):
            raise ConfigFileError("expected a table", f"[{name}]", name)
    model = build_model(doc.get("model", {}))
    axes, baseline = _parse_sweep(doc.get("sweep", {}))
    reps = doc.get("replications", {})
    _check_keys(reps, REPLICATION_KEYS, "replications")
    n = _nonneg_int(reps, "n", "replications", DEFAULT_REPLICATIONS, 1)
    base_seed = _nonneg_int(reps, "base_seed", "replications", 0, 0)
    out = doc.get("output", {})
    _check_keys(out, OUTPUT_KEYS, "output")
    paths = {}
    for key in OUTPUT_KEYS:
        value = out.get(key)
        if value is not None and not isinstance(value, str):
            raise ConfigFileError("expected a path string", f"output.{key}", key)
        paths[key] = value
    return ExperimentFile(model=model, sweep=axes, baseline=baseline, n=n, base_seed=base_seed, **paths)


def loads(text: str) -> ExperimentFile:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        lineno = getattr(exc, "lineno", None)
        colno = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        if lineno is None:
            raise ConfigFileError(str(exc)) from exc
        raise ConfigFileError(msg, f"line {lineno}, column {colno}") from exc
    return from_dict(doc)


def load(path) -> ExperimentFile:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigFileError(f"not UTF-8: {exc}") from exc
    return loads(text)


def to_dict(exp: ExperimentFile) -> dict:
    model = {f.name: getattr(exp.model, f.name) for f in fields(exp.model)}
    model = {k: v for k, v in model.items() if v is not None}
    doc: dict[str, Any] = {"model": model}
    if exp.sweep is not None:
        doc["sweep"] = {**{k: list(v) for k, v in exp.sweep.items()}, "baseline": exp.baseline}
    doc["replications"] = {"n": exp.n, "base_seed": exp.base_seed}
    out = {k: getattr(exp, k) for k in OUTPUT_KEYS if getattr(exp, k) is not None}
    if out:
        doc["output"] = out
    return doc


def dumps(exp: ExperimentFile) -> str:
    return tomli_w.dumps(to_dict(exp))


def parse_override(item: str) -> tuple[str, Any]:
    """``key=value`` for a [model] field; the value is read as a TOML literal.

    ``buffer_capacity=none`` restores the default capacity of 2W.
    """
    key, sep, raw = item.partition("=")
    key = key.strip()
    raw = raw.strip()
    if not sep or not key:
        raise ConfigFileError(f"override {item!r} is not of the form key=value")
    if key.startswith("model."):
        key = key[len("model."):]
    if key not in SimConfig.field_names():
        raise ConfigFileError(f"unknown model key {key!r}", f"--set {key}", key)
    if key in _OPTIONAL_FIELDS and raw.lower() == "none":
        return key, None
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError as exc:
        raise ConfigFileError(f"cannot parse value {raw!r}", f"--set {key}", key) from exc
    return key, value


def apply_overrides(model: SimConfig, items) -> SimConfig:
    changes = {}
    for item in items:
        key, value = parse_override(item)
        changes[key] = value
    none_keys = {k for k, v in changes.items() if v is None}
    model = build_model({k: v for k, v in changes.items() if v is not None}, model)
    if none_keys:
        model = model.replace(**{k: None for k in none_keys})
    return model
