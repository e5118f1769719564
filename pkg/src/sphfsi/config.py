"""Scenario configuration: INI-style sections of key = value pairs.

Grammar: ``configparser`` sections; every key is validated against the
schema below, values are parsed by declared type (float, int, bool, string,
or a whitespace-separated float vector).  ``[scenario] preset`` picks one of
the built-in benchmark scenarios; all other keys override preset defaults.
A written run manifest is itself a valid configuration file.
"""

from __future__ import annotations

import configparser
import io

from .errors import ConfigError

PRESETS = ("hydrostatic", "taylor_couette", "flow_around_cylinder",
           "isochoric_box", "cylinder_shear_flow", "fsi2_beam")

# key -> (type, default or None meaning preset-specific)
_SCHEMA = {
    "scenario": {
        "preset": ("str", None),
        "resolution_scale": ("float", 1.0),
        "u_max": ("float", None),          # inflow peak (cylinder channels)
        "cylinder_y": ("float", None),     # cylinder center height override
    },
    "fluid": {
        "dx": ("float", None),
        "rho0": ("float", None),
        "sound_speed": ("float", None),
        "viscosity": ("float", None),
        "background_pressure": ("float", None),
        "body_force": ("vec", None),
    },
    "solid": {
        "youngs": ("float", None),
        "poisson": ("float", None),
        "density": ("float", None),
        "rigid": ("bool", None),
        "rho_inf": ("float", 0.8),
    },
    "coupling": {
        "tolerance": ("float", 1e-8),
        "relaxation": ("float", 1.0),
        "max_iterations": ("int", 100),
    },
    "run": {
        "t_end": ("float", None),
        "dt": ("float", None),             # omit: derived from step limits
        "output_interval": ("float", None),
        "output_dir": ("str", "out"),
        "vtk": ("bool", False),
        "seed": ("int", 0),
    },
    "meta": {                              # written into manifests
        "version": ("str", None),
        "backend": ("str", None),
    },
}


def _parse_value(raw, kind, section, key, problems):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "vec":
            return tuple(float(x) for x in raw.split())
        return raw
    except ValueError:
        problems.append(f"[{section}] {key}: cannot parse {raw!r} as {kind}")
        return None


class ScenarioConfig:
    """Validated configuration: ``cfg[section][key]`` with schema defaults."""

    def __init__(self, data):
        self.data = data

    def __getitem__(self, section):
        return self.data.get(section, {})

    def get(self, section, key, default=None):
        val = self.data.get(section, {}).get(key)
        return default if val is None else val

    @property
    def preset(self):
        return self.data["scenario"]["preset"]

    def override(self, section, key, value):
        self.data.setdefault(section, {})[key] = value

    def to_text(self):
        out = io.StringIO()
        for section in _SCHEMA:
            items = {k: v for k, v in self.data.get(section, {}).items()
                     if v is not None}
            if not items:
                continue
            out.write(f"[{section}]\n")
            for k, v in items.items():
                if isinstance(v, tuple):
                    v = " ".join(repr(float(x)) for x in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                out.write(f"{k} = {v}\n")
            out.write("\n")
        return out.getvalue()


def parse_text(text) -> ScenarioConfig:
    """Parse and validate; raises :class:`ConfigError` listing every
    offending key."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax error: {exc}"]) from exc

    problems = []
    data = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        data[section] = {}
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                problems.append(f"unknown key [{section}] {key}")
                continue
            kind, _ = _SCHEMA[section][key]
            val = _parse_value(raw, kind, section, key, problems)
            if val is not None:
                data[section][key] = val

    preset = data.get("scenario", {}).get("preset")
    if preset is None:
        problems.append("[scenario] preset is required")
    elif preset not in PRESETS:
        problems.append(
            f"[scenario] preset {preset!r} is not one of {', '.join(PRESETS)}")

    for section, keys in _SCHEMA.items():
        data.setdefault(section, {})
        for key, (kind, default) in keys.items():
            data[section].setdefault(key, default)

    for key in ("resolution_scale",):
        v = data["scenario"][key]
        if v is not None and v <= 0:
            problems.append(f"[scenario] {key} must be positive")
    for key in ("dx", "rho0", "sound_speed"):
        v = data["fluid"][key]
        if v is not None and v <= 0:
            problems.append(f"[fluid] {key} must be positive")
    for key in ("viscosity", "background_pressure"):
        v = data["fluid"][key]
        if v is not None and v < 0:
            problems.append(f"[fluid] {key} must be non-negative")
    if data["coupling"]["tolerance"] <= 0:
        problems.append("[coupling] tolerance must be positive")
    if not 0 < data["coupling"]["relaxation"] <= 1:
        problems.append("[coupling] relaxation must lie in (0, 1]")
    for key in ("t_end", "dt", "output_interval"):
        v = data["run"][key]
        if v is not None and v <= 0:
            problems.append(f"[run] {key} must be positive")

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(data)


def parse_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_text(fh.read())
