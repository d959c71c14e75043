"""
Run configuration files.

INI-style text with four sections::

    [model]
    kind = allen_cahn
    M = 1
    alpha0 = 1e-4
    manufactured = exp_sin

    [grid]
    dim = 2
    extents = 2, 2
    modes = 32, 32

    [scheme]
    name = eop_sav
    dt = 0.01
    T = 0.5

    [output]
    dir = runs/ac_caseA

Unknown sections or keys, missing required keys and malformed values are
rejected with the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .integrators import ConfigurationError, Scheme
from .models import MANUFACTURED, ModelKind, _REQUIRED

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "serialize_config",
    "apply_overrides",
    "config_from_dict",
    "SCHEME_ALIASES",
]


class ConfigError(ConfigurationError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


SCHEME_ALIASES = {
    "sav": Scheme.SAV_BDF,
    "rsav": Scheme.RSAV_CN,
    "eop_sav": Scheme.EOPSAV_CN,
    "gsav": Scheme.GSAV_BDF,
    "eop_gsav": Scheme.EOPGSAV_BDF,
    "ns_eop_gsav": Scheme.NS_EOPGSAV_BDF,
}
SCHEME_ALIASES.update({s.value: s for s in Scheme})


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_INIT_FLOATS = ("alpha", "r0", "spacing", "phibar", "C1", "C2", "side", "rho", "perturbation", "amplitude")

SCHEMA = {
    "model": {
        "kind": str, "initial": str, "manufactured": str,
        "M": float, "alpha0": float, "eps": float, "beta": float, "nu": float, "delta": float,
        "count": int, **{k: float for k in _INIT_FLOATS},
    },
    "grid": {"dim": int, "extents": _floats, "modes": _ints},
    "scheme": {
        "name": str, "k": int, "dt": float, "T": float, "t0": float, "C": float, "C0": float,
        "eta": float, "exponent_override": int, "dealias": str, "startup": str,
        "substeps_pow": int, "cn_denominator": str,
    },
    "output": {
        "dir": str, "csv": str, "snapshot_times": _floats, "snapshot_format": str,
        "plot_scripts": _bool, "seed": int,
    },
}

REQUIRED = {
    "model": ("kind",),
    "grid": ("dim", "extents", "modes"),
    "scheme": ("name", "dt", "T"),
    "output": (),
}

DEFAULTS = {
    "scheme": {"t0": 0.0, "eta": 0.95, "dealias": "none", "substeps_pow": 0, "cn_denominator": "half"},
    "output": {
        "dir": "out", "csv": "energy.csv", "snapshot_times": (), "snapshot_format": "savf1",
        "plot_scripts": False, "seed": 0,
    },
}

_CHOICES = {
    ("scheme", "dealias"): ("none", "two_thirds"),
    ("scheme", "startup"): ("cold_bdf1_substeps", "exact_history"),
    ("scheme", "cn_denominator"): ("half", "full"),
    ("output", "snapshot_format"): ("savf1",),
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with every default filled in."""

    model: dict
    grid: dict
    scheme: dict
    output: dict
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def scheme_kind(self) -> Scheme:
        return SCHEME_ALIASES[self.scheme["name"]]

    @property
    def model_params(self) -> dict:
        """Physical parameters handed to :func:`savflow.models.make_model`."""
        return {k: v for k, v in self.model.items() if k in ("M", "alpha0", "eps", "beta", "nu")}

    @property
    def initial_params(self) -> dict:
        skip = ("kind", "initial", "manufactured")
        return {k: v for k, v in self.model.items() if k not in skip}

    def section(self, name):
        return getattr(self, name)


_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_map(text):
    lines, section = {}, None
    for number, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault(section, number)
            continue
        m = _KEY_RE.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1)), number)
    return lines


def _unquote(value):
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    lines = _line_map(text)
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), comment_prefixes=("#", ";"),
        default_section="__none__", strict=True,
    )
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None

    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get(section))
        raw[section] = {key: _unquote(val) for key, val in parser.items(section)}
    return _build(raw, lines)


def _coerce(section, key, value, line):
    schema = SCHEMA[section]
    if key not in schema:
        raise ConfigError(f"unknown key {key!r} in [{section}]", line)
    if not isinstance(value, str):
        return value
    try:
        return schema[key](value)
    except ValueError:
        kind = getattr(schema[key], "__name__", "value").lstrip("_")
        raise ConfigError(f"{section}.{key}: cannot read {value!r} as {kind}", line) from None


def _build(raw, lines):
    sections = {}
    for section in SCHEMA:
        values = dict(DEFAULTS.get(section, {}))
        for key, value in raw.get(section, {}).items():
            values[key] = _coerce(section, key, value, lines.get((section, key)))
        for key in REQUIRED[section]:
            if key not in values:
                raise ConfigError(f"missing required key {section}.{key}", lines.get(section))
        sections[section] = values
    _validate(sections, lines)
    return RunConfig(**sections, lines=lines)


def _validate(s, lines):
    def where(section, key):
        return lines.get((section, key), lines.get(section))

    for (section, key), allowed in _CHOICES.items():
        if key in s[section] and s[section][key] not in allowed:
            raise ConfigError(f"{section}.{key} must be one of {allowed}", where(section, key))

    model = s["model"]
    try:
        kind = ModelKind(model["kind"])
    except ValueError:
        names = [k.value for k in ModelKind]
        raise ConfigError(f"unknown model kind {model['kind']!r}; expected one of {names}",
                          where("model", "kind")) from None
    for p in _REQUIRED[kind]:
        if p not in model:
            raise ConfigError(f"missing required key model.{p} for {kind.value}", lines.get("model"))
    if "manufactured" in model and model["manufactured"] not in MANUFACTURED:
        raise ConfigError(f"unknown manufactured solution {model['manufactured']!r}",
                          where("model", "manufactured"))
    if "initial" not in model:
        if "manufactured" not in model:
            raise ConfigError("missing required key model.initial", lines.get("model"))
        model["initial"] = "manufactured"

    grid = s["grid"]
    dim = grid["dim"]
    if dim not in (1, 2, 3):
        raise ConfigError(f"grid.dim must be 1, 2 or 3, got {dim}", where("grid", "dim"))
    for key in ("extents", "modes"):
        if len(grid[key]) != dim:
            raise ConfigError(f"grid.{key} needs {dim} entries", where("grid", key))
    if any(e <= 0 for e in grid["extents"]):
        raise ConfigError("grid.extents must be positive", where("grid", "extents"))
    if any(n < 4 or n % 2 for n in grid["modes"]):
        raise ConfigError("grid.modes must be even and at least 4", where("grid", "modes"))

    sch = s["scheme"]
    if sch["name"] not in SCHEME_ALIASES:
        raise ConfigError(f"unknown scheme {sch['name']!r}", where("scheme", "name"))
    scheme = SCHEME_ALIASES[sch["name"]]
    if (scheme is Scheme.NS_EOPGSAV_BDF) != (kind is ModelKind.NAVIER_STOKES):
        raise ConfigError(f"scheme {sch['name']} does not apply to {kind.value}", where("scheme", "name"))
    orders = scheme.orders
    sch.setdefault("k", orders[0] if len(orders) == 1 else (2 if scheme.is_cn else 1))
    if sch["k"] not in orders:
        raise ConfigError(f"k out of range {orders[0]}..{orders[-1]}", where("scheme", "k"))
    if not sch["dt"] > 0:
        raise ConfigError("scheme.dt must be positive", where("scheme", "dt"))
    if not sch["T"] - sch["t0"] >= sch["dt"] * (1 - 1e-12):
        raise ConfigError("scheme.T must be at least t0 + dt", where("scheme", "T"))
    if not 0.0 <= sch["eta"] <= 1.0:
        raise ConfigError("scheme.eta must lie in [0, 1]", where("scheme", "eta"))
    if sch["substeps_pow"] < 0:
        raise ConfigError("scheme.substeps_pow must be nonnegative", where("scheme", "substeps_pow"))
    if "exponent_override" in sch and sch["exponent_override"] < 1:
        raise ConfigError("scheme.exponent_override must be positive", where("scheme", "exponent_override"))
    if "startup" not in sch:
        sch["startup"] = "exact_history" if "manufactured" in model else "cold_bdf1_substeps"
    if sch["startup"] == "exact_history" and "manufactured" not in model:
        raise ConfigError("exact_history startup needs model.manufactured", where("scheme", "startup"))
    n = (sch["T"] - sch["t0"]) / sch["dt"]
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError("T - t0 must be an integer multiple of dt", where("scheme", "T"))

    out = s["output"]
    for t in out["snapshot_times"]:
        if t < sch["t0"] or t > sch["T"] + 1e-12:
            raise ConfigError(f"snapshot time {t} lies outside [t0, T]", where("output", "snapshot_times"))


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Text that :func:`parse_config` maps back to an equal config."""
    out = []
    for section in SCHEMA:
        out.append(f"[{section}]")
        for key, value in config.section(section).items():
            out.append(f"{key} = {_format(value)}")
        out.append("")
    return "\n".join(out)


def config_from_dict(sections: dict) -> RunConfig:
    """Build a config from ``{section: {key: value}}`` (values typed or text)."""
    raw = {}
    for section, values in sections.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        raw[section] = {k: (_format(v) if not isinstance(v, str) else v) for k, v in values.items()}
    return _build(raw, {})


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """Apply ``section.key=value`` strings and revalidate."""
    raw = {s: {k: _format(v) for k, v in config.section(s).items()} for s in SCHEMA}
    for item in overrides:
        target, sep, value = item.partition("=")
        section, dot, key = target.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}] in override {item!r}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}] (override)")
        raw[section][key] = value.strip()
    # derived defaults are recomputed from the new values
    if not any(o.strip().startswith("scheme.startup") for o in overrides):
        raw["scheme"].pop("startup", None)
    if not any(o.strip().startswith("scheme.k") for o in overrides) and any(
        o.strip().startswith("scheme.name") for o in overrides
    ):
        raw["scheme"].pop("k", None)
    return _build(raw, {})
