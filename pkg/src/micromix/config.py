"""Run configuration: TOML sections with mandatory unit suffixes.

Every dimensional key carries its unit in the name (``spacing_um``,
``flow_rate_ul_min``, ``diffusivity_m2s``...).  Unknown keys are rejected and
errors name the offending key and its line in the file.
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .flow import FlowConditions, FluidSpec, SolverConfig
from .geometry import UnitParams, build_plain_network, build_sgm_network, build_snr_network
from .lamination import ReducedConfig
from .transport import ReactionSystem, TransportConfig


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = f" (line {line})" if line else ""
        super().__init__(f"{message}{where}")
        self.key = key
        self.line = line


def _pos(x):
    return None if x > 0 else "must be > 0"


def _nonneg(x):
    return None if x >= 0 else "must be >= 0"


def _atleast1(x):
    return None if x >= 1 else "must be >= 1"


def _frac(x):
    return None if 0 < x < 1 else "must lie in (0, 1)"


def _choice(*opts):
    def check(x):
        return None if x in opts else f"must be one of {', '.join(map(repr, opts))}"
    return check


def _list_of(kind, check=None):
    def inner(xs):
        for x in xs:
            if not isinstance(x, kind) or isinstance(x, bool):
                return "must be a list of numbers" if kind is not str else "must be a list of strings"
            if check and check(x):
                return check(x)
        return None
    return inner


NUM = (int, float)

# section -> key -> (type, default, check); default None means optional
SCHEMA = {
    "run": {
        "mode": (str, "cfd", _choice("cfd", "reduced", "both")),
        "name": (str, "run", None),
    },
    "geometry": {
        "device_kind": (str, "SNR", _choice("SNR", "SGM", "PLAIN")),
        "units": (int, 10, _atleast1),
        "spacing_um": (NUM, 10.0, _pos),
        "length_um": (NUM, 6100.0, _pos),
        "unit_pitch_um": (NUM, 610.0, _pos),
        "channel_width_um": (NUM, 100.0, _pos),
        "channel_height_um": (NUM, 100.0, _pos),
        "branch_width_um": (NUM, 100.0, _pos),
        "overlap_length_um": (NUM, 150.0, _pos),
        "wall_thickness_um": (NUM, 20.0, _pos),
        "groove_depth_ratio": (NUM, 0.3, _frac),
        "groove_angle_deg": (NUM, 45.0, lambda x: None if 0 < x < 90 else "must lie in (0, 90)"),
        "groove_pitch_um": (NUM, 120.0, _pos),
        "grooves_per_unit": (int, 6, _atleast1),
        "stack_axis": (str, "vertical", _choice("vertical", "lateral")),
        "lead_in": (bool, False, None),
        "lead_out": (bool, False, None),
    },
    "fluid": {
        "density_kg_m3": (NUM, 998.0, _pos),
        "viscosity_pa_s": (NUM, 1.0e-3, _pos),
    },
    "flow": {
        "flow_rate_ul_min": (NUM, None, _nonneg),
        "reynolds": (NUM, None, _nonneg),
    },
    "solver": {
        "tolerance": (NUM, 1e-6, _pos),
        "poisson_tolerance": (NUM, 1e-8, _pos),
        "max_iterations": (int, 2000, _atleast1),
        "dt_factor": (NUM, 0.1, _pos),
        "convection_scheme": (str, "upwind", _choice("upwind", "blend")),
        "central_blend": (NUM, 0.5, lambda x: None if 0 <= x <= 1 else "must lie in [0, 1]"),
        "transport_scheme": (str, "upwind", _choice("upwind", "limited")),
        "transport_tolerance": (NUM, 1e-6, _pos),
        "transport_max_iterations": (int, 200, _atleast1),
    },
    "chemistry": {
        "mode": (str, "passive", _choice("passive", "fast", "finite")),
        "diffusivity_m2s": (NUM, 1.0e-9, _nonneg),
        "peclet": (NUM, None, _pos),
        "oxidant_mol_l": (NUM, 0.35, _nonneg),
        "reductant_mol_l": (NUM, 0.5, _nonneg),
        "rate_constant_l_mol_s": (NUM, 1.0e3, _pos),
    },
    "diagnostics": {
        "station_spacing_um": (NUM, None, _pos),
        "stations_mm": (list, None, _list_of(NUM, _nonneg)),
        "mixing_threshold": (NUM, 0.9, lambda x: None if 0 <= x <= 1 else "must lie in [0, 1]"),
        "reaction_fraction": (NUM, 0.01, _frac),
        "weighting": (str, "flux", _choice("flux", "area")),
        "pattern_stations_mm": (list, [0.0], _list_of(NUM, _nonneg)),
        "view_axis": (str, "auto", _choice("auto", "x", "z")),
        "projection_fraction": (NUM, 0.1, _frac),
    },
    "reduced": {
        "unit_count": (int, 10, _atleast1),
        "fourier_per_unit": (NUM, 3.7e-3, _nonneg),
        "map_kind": (str, "SNR", _choice("SNR", "SGM_rotation")),
        "sgm_angle_rad": (NUM, math.pi / 3, None),
        "resolution": (int, 64, lambda x: None if x >= 2 and x % 2 == 0 else "must be even and >= 2"),
        "frames": (bool, False, None),
    },
    "output": {
        "directory": (str, "out", None),
        "formats": (list, ["csv", "json", "pgm"], _list_of(str, _choice("csv", "json", "pgm", "vtk"))),
    },
}

DEFAULT_FLOW_RATE_UL_MIN = 10.0


def _line_of(text: str, section: str | None, key: str) -> int | None:
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if re.match(rf"^{re.escape(key)}\s*=", line) and (section is None or current == section):
            return n
    return None


def _check_value(section, key, value, spec, text):
    kind, _, check = spec
    line = _line_of(text, section, key)
    ok = isinstance(value, kind) and not (isinstance(value, bool) and kind is not bool)
    if kind is NUM and isinstance(value, bool):
        ok = False
    if not ok:
        raise ConfigError(f"[{section}] {key}: wrong type {type(value).__name__}", key, line)
    if check is not None:
        msg = check(value)
        if msg:
            raise ConfigError(f"[{section}] {key} = {value!r}: {msg}", key, line)


@dataclass
class RunConfig:
    sections: dict
    source: str | None = None
    explicit: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.sections == other.sections

    # builders --------------------------------------------------------
    def unit_params(self) -> UnitParams:
        g = self["geometry"]
        return UnitParams(
            unit_pitch=g["unit_pitch_um"], channel_width=g["channel_width_um"],
            channel_height=g["channel_height_um"], branch_width=g["branch_width_um"],
            overlap_length=g["overlap_length_um"], groove_depth_ratio=g["groove_depth_ratio"],
            groove_angle=g["groove_angle_deg"], groove_pitch=g["groove_pitch_um"],
            stack_axis=g["stack_axis"], wall_thickness=g["wall_thickness_um"],
            grooves_per_unit=g["grooves_per_unit"])

    def network(self):
        g = self["geometry"]
        p = self.unit_params()
        kind = g["device_kind"]
        if kind == "SNR":
            return build_snr_network(p, g["units"], g["lead_in"], g["lead_out"])
        if kind == "SGM":
            return build_sgm_network(p, g["units"], g["lead_in"], g["lead_out"])
        return build_plain_network(p, g["length_um"])

    def fluid(self) -> FluidSpec:
        f = self["fluid"]
        return FluidSpec(f["density_kg_m3"], f["viscosity_pa_s"])

    def conditions(self) -> FlowConditions:
        g, f = self["geometry"], self["flow"]
        w, h = g["channel_width_um"], g["channel_height_um"]
        if f.get("reynolds") is not None:
            return FlowConditions.from_reynolds(f["reynolds"], w, h, self.fluid())
        q = f.get("flow_rate_ul_min")
        q = DEFAULT_FLOW_RATE_UL_MIN if q is None else q
        return FlowConditions.from_total(q, w, h, self.fluid())

    def solver(self) -> SolverConfig:
        s = self["solver"]
        return SolverConfig(tolerance=s["tolerance"], poisson_tolerance=s["poisson_tolerance"],
                            max_iterations=s["max_iterations"], dt_factor=s["dt_factor"],
                            scheme=s["convection_scheme"], central_blend=s["central_blend"])

    def transport(self) -> TransportConfig:
        s = self["solver"]
        return TransportConfig(tolerance=s["transport_tolerance"],
                               max_iterations=s["transport_max_iterations"],
                               scheme=s["transport_scheme"])

    def diffusivity(self) -> float:
        c = self["chemistry"]
        if c.get("peclet") is not None:
            cond = self.conditions()
            return cond.mean_velocity * self["geometry"]["channel_width_um"] * 1e-6 / c["peclet"]
        return c["diffusivity_m2s"]

    def peclet(self) -> float:
        d = self.diffusivity()
        cond = self.conditions()
        if d == 0:
            return math.inf
        return cond.mean_velocity * self["geometry"]["channel_width_um"] * 1e-6 / d

    def reaction_system(self) -> ReactionSystem:
        c = self["chemistry"]
        k = c["rate_constant_l_mol_s"] if c["mode"] == "finite" else math.inf
        return ReactionSystem.redox(c["oxidant_mol_l"], c["reductant_mol_l"], self.diffusivity(), k)

    def reduced(self) -> ReducedConfig:
        r = self["reduced"]
        return ReducedConfig(r["unit_count"], r["fourier_per_unit"], r["map_kind"],
                             r["sgm_angle_rad"], r["resolution"], self["geometry"]["unit_pitch_um"])

    # echo ------------------------------------------------------------
    def to_toml(self) -> str:
        return dumps_toml(self.sections)

    def with_value(self, dotted: str, value) -> "RunConfig":
        """Copy with ``section.key`` replaced (validated)."""
        section, _, key = dotted.partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown parameter {dotted!r}", dotted)
        spec = SCHEMA[section][key]
        if spec[0] is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        _check_value(section, key, value, spec, "")
        new = copy.deepcopy(self.sections)
        new[section][key] = value
        if section == "flow":
            other = "reynolds" if key == "flow_rate_ul_min" else "flow_rate_ul_min"
            new[section].pop(other, None)
        if section == "chemistry" and key == "diffusivity_m2s":
            new[section].pop("peclet", None)
        return RunConfig(new, self.source)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_toml(sections: dict) -> str:
    out = []
    for sec in SCHEMA:
        if sec not in sections:
            continue
        out.append(f"[{sec}]")
        for key in SCHEMA[sec]:
            if key in sections[sec] and sections[sec][key] is not None:
                out.append(f"{key} = {_toml_value(sections[sec][key])}")
        out.append("")
    return "\n".join(out)


def parse_config(text: str, source: str | None = None) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    resolved = {}
    for section, values in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", section, _section_line(text, section))
        if not isinstance(values, dict):
            raise ConfigError(f"{section} must be a table", section, _line_of(text, None, section))
        for key, value in values.items():
            if key not in SCHEMA[section]:
                line = _line_of(text, section, key)
                suffixed = [k for k in SCHEMA[section] if k.startswith(key + "_")]
                if suffixed:
                    raise ConfigError(f"[{section}] {key}: missing unit suffix "
                                      f"(expected e.g. {suffixed[0]!r})", key, line)
                raise ConfigError(f"[{section}] unknown key {key!r}", key, line)
            spec = SCHEMA[section][key]
            if spec[0] is NUM and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            _check_value(section, key, value, spec, text)
            if isinstance(value, list) and spec[0] is list:
                value = [float(x) if isinstance(x, int) else x for x in value]
            resolved.setdefault(section, {})[key] = value
    explicit = copy.deepcopy(resolved)
    flow = resolved.get("flow", {})
    if flow.get("flow_rate_ul_min") is not None and flow.get("reynolds") is not None:
        raise ConfigError("[flow] give either flow_rate_ul_min or reynolds, not both", "reynolds",
                          _line_of(text, "flow", "reynolds"))
    chem = resolved.get("chemistry", {})
    if "peclet" in chem and "diffusivity_m2s" in chem:
        raise ConfigError("[chemistry] give either diffusivity_m2s or peclet, not both", "peclet",
                          _line_of(text, "chemistry", "peclet"))
    for section, keys in SCHEMA.items():
        sec = resolved.setdefault(section, {})
        for key, (_, default, _) in keys.items():
            if key not in sec and default is not None:
                sec[key] = copy.deepcopy(default)
    if "flow_rate_ul_min" not in flow and "reynolds" not in flow:
        resolved["flow"]["flow_rate_ul_min"] = DEFAULT_FLOW_RATE_UL_MIN
    if "peclet" in chem:
        resolved["chemistry"].pop("diffusivity_m2s", None)
    return RunConfig(resolved, source, explicit)


def _section_line(text, section):
    for n, raw in enumerate(text.splitlines(), start=1):
        if raw.strip().startswith(f"[{section}]"):
            return n
    return None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def preset_path(name: str) -> Path:
    p = Path(__file__).parent / "presets" / f"{name}.toml"
    if not p.exists():
        raise ConfigError(f"unknown preset {name!r}")
    return p
