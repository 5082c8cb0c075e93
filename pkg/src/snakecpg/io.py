"""Config files and plot-ready output writers.

Parameter files are YAML key-value maps mirroring the dataclass fields.
Every data file starts with '# key = value' comment lines carrying the
resolved configuration and seed, so a run can be reproduced from its output
alone; no timestamps, so identical invocations are byte-identical.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import yaml

from .cpg import OscillatorParams
from .robot import PhysicsParams

__all__ = [
    "ConfigError",
    "load_params",
    "save_params",
    "load_physics",
    "save_physics",
    "write_csv",
    "write_ndjson",
    "write_json",
    "default_out_dir",
]

OUTDIR_ENV = "SNAKECPG_OUTDIR"


class ConfigError(ValueError):
    """Bad configuration file or override."""


def _from_mapping(cls, mapping: dict, source: str):
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(mapping) - fields
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    try:
        obj = cls(**mapping)
        obj.validate()
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{source}: {err}") from err
    return obj


def _load_yaml(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"{path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key-value mapping")
    return data


def load_params(path=None, overrides: dict | None = None) -> OscillatorParams:
    """Oscillator parameters from YAML (defaults when path is None) + overrides."""
    data = _load_yaml(path) if path else {}
    data.update(overrides or {})
    n = data.get("n_oscillators")
    if n is not None:
        data["n_oscillators"] = int(n)
    return _from_mapping(OscillatorParams, data, str(path or "<defaults>"))


def save_params(params: OscillatorParams, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(params.to_dict(), fh, sort_keys=False)


def load_physics(path=None, overrides: dict | None = None) -> PhysicsParams:
    data = _load_yaml(path) if path else {}
    data.update(overrides or {})
    return _from_mapping(PhysicsParams, data, str(path or "<defaults>"))


def save_physics(phys: PhysicsParams, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(phys.to_dict(), fh, sort_keys=False)


def default_out_dir(cli_value=None) -> Path:
    out = Path(cli_value) if cli_value else Path(os.environ.get(OUTDIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{x:.12g}"
    return str(x)


def _header_lines(header: dict | None):
    for key, val in (header or {}).items():
        if isinstance(val, dict):
            for k2, v2 in val.items():
                yield f"# {key}.{k2} = {_fmt(v2)}"
        else:
            yield f"# {key} = {_fmt(val)}"


def write_csv(path, columns, rows, header: dict | None = None) -> None:
    """CSV with '# key = value' comment headers, then a column-name row."""
    with open(path, "w") as fh:
        for line in _header_lines(header):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_ndjson(path, records, header: dict | None = None) -> None:
    """Newline-delimited JSON; the header (if any) rides in a first record."""
    with open(path, "w") as fh:
        if header:
            fh.write(json.dumps({"_config": _jsonable(header)}) + "\n")
        for rec in records:
            fh.write(json.dumps(_jsonable(rec)) + "\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
