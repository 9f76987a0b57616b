"""End-to-end runs: geometry -> flow -> transport -> diagnostics, plus the reduced model."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import io
from .config import RunConfig
from .flow import FlowError, pressure_drop, solve_flow
from .geometry import voxelize
from .lamination import CrossField, evolve, predict_curve
from .transport import (TransportError, solve_fast_reaction, solve_finite_rate,
                        solve_passive_scalar)

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage, message, report=None, payload=None):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
        self.report = report
        self.payload = payload or {}


@dataclass
class RunReport:
    config_echo: str
    device: str
    re: float | None = None
    pe: float | None = None
    pressure_drop_pa: float | None = None
    mixing_length_mm: float | None = None
    reaction_length_mm: float | None = None
    residence_period_s: float | None = None
    reasons: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    curve: list | None = None
    reduced_curve: list | None = None
    projection_length_mm: float | None = None
    manifest: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "device": self.device, "re": self.re, "pe": self.pe,
            "mixing_length_mm": self.mixing_length_mm,
            "reaction_length_mm": self.reaction_length_mm,
            "residence_period_s": self.residence_period_s,
            "pressure_drop_pa": self.pressure_drop_pa,
            "projection_length_mm": self.projection_length_mm,
            "reasons": self.reasons, "convergence": self.convergence,
            "mixing_curve": self.curve, "reduced_curve": self.reduced_curve,
            "stages": self.stages, "status": self.status,
            "failed_stage": self.failed_stage, "error": self.error,
            "manifest": self.manifest, "config": self.config_echo,
        }


class _Writer:
    def __init__(self, directory: Path, formats):
        self.dir = directory
        self.formats = set(formats)
        self.manifest: list[str] = []

    def _path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest.append(name)
        return self.dir / name

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            io.write_csv(self._path(name), header, rows)

    def pgm(self, name, image):
        if "pgm" in self.formats:
            io.write_pgm(self._path(name), image)

    def vtk(self, name, grid, data):
        if "vtk" in self.formats:
            io.write_vtk(self._path(name), grid, data)

    def text(self, name, text):
        self._path(name).write_text(text, encoding="utf-8")

    def json(self, name, obj):
        if "json" in self.formats:
            io.write_json(self._path(name), obj)


def _stations(cfg: RunConfig, network) -> np.ndarray:
    d = cfg["diagnostics"]
    if d.get("stations_mm"):
        return np.array(sorted(d["stations_mm"]), dtype=float)
    if d.get("station_spacing_um"):
        step = d["station_spacing_um"]
        n = int(math.floor(network.length / step + 1e-9))
        return np.arange(n + 1) * step / 1000.0
    return dg.default_stations(network)


def _tag(y):
    return f"{y:.3f}".replace(".", "p")


def _stage(report, name, fn, payload=None):
    report.stages.append(name)
    try:
        return fn()
    except (FlowError, TransportError, dg.DiagnosticsError, ValueError) as exc:
        report.status = "failed"
        report.failed_stage = name
        report.error = str(exc)
        extra = dict(payload or {})
        hist = getattr(exc, "residual_history", None)
        if hist:
            extra["residual_tail"] = list(hist[-10:])
        raise PipelineError(name, str(exc), report, extra) from exc


def run_pipeline(cfg: RunConfig, directory: str | Path | None = None) -> RunReport:
    """Execute the configured stages and write artifacts; returns the report.

    On a stage failure a ``PipelineError`` carrying the partial report is
    raised after whatever was already produced has been written.
    """
    out = Path(directory if directory is not None else cfg["output"]["directory"])
    writer = _Writer(out, cfg["output"]["formats"])
    mode = cfg["run"]["mode"]
    device = cfg["geometry"]["device_kind"]
    report = RunReport(cfg.to_toml(), device)
    writer.text("config.toml", report.config_echo)
    try:
        if mode in ("cfd", "both"):
            _run_cfd(cfg, report, writer)
        if mode in ("reduced", "both"):
            _run_reduced(cfg, report, writer)
    except PipelineError:
        _finish(report, writer)
        raise
    _finish(report, writer)
    return report


def _finish(report, writer):
    if "json" in writer.formats:
        writer.manifest.append("report.json")
    report.manifest = list(writer.manifest)
    if "json" in writer.formats:
        io.write_json(writer.dir / "report.json", report.to_dict())


def _run_cfd(cfg, report, writer):
    network = _stage(report, "geometry", cfg.network)
    grid = _stage(report, "voxelize", lambda: voxelize(network, cfg["geometry"]["spacing_um"]))
    cond = _stage(report, "conditions", cfg.conditions)
    report.re = cond.reynolds
    report.pe = cfg.peclet()
    flow = _stage(report, "flow", lambda: solve_flow(grid, cond, cfg.fluid(), cfg.solver()))
    report.convergence["flow_iterations"] = flow.iterations
    report.convergence["flow_residual"] = flow.residual_history[-1]
    report.convergence["max_divergence"] = flow.max_normalized_divergence()
    report.pressure_drop_pa = pressure_drop(flow)

    chem = cfg["chemistry"]
    tcfg = cfg.transport()

    def transport():
        if chem["mode"] == "passive":
            return solve_passive_scalar(flow, grid, cfg.diffusivity(), cfg=tcfg)
        system = cfg.reaction_system()
        if chem["mode"] == "fast":
            return solve_fast_reaction(flow, grid, system, tcfg)
        return solve_finite_rate(flow, grid, system)

    fields = _stage(report, "transport", transport)
    report.convergence["transport_residual"] = fields.residual_history[-1]

    d = cfg["diagnostics"]
    stations = _stations(cfg, network)
    meta = {"re": report.re, "pe": report.pe, "device_kind": report.device}

    def diagnose():
        curve = dg.mixing_curve(fields, flow, stations, d["weighting"], d["mixing_threshold"],
                                metadata=meta)
        report.curve = [list(s) for s in curve.stations]
        report.mixing_length_mm = curve.mixing_length
        if curve.mixing_length is None:
            report.reasons["mixing_length_mm"] = "threshold never reached"
        writer.csv("mixing_curve.csv", ["y_mm", "mixing_index"], curve.stations)
        if chem["mode"] == "passive":
            report.reasons["reaction_length_mm"] = "no reaction present"
        else:
            prof = dg.reaction_profile(fields, flow, stations)
            writer.csv("reaction_profile.csv", ["y_mm", "oxidant_mixed_cup_mol_m3"], prof)
            report.reaction_length_mm = dg.reaction_length(fields, flow, stations,
                                                           d["reaction_fraction"])
            if report.reaction_length_mm is None:
                report.reasons["reaction_length_mm"] = "oxidant threshold never reached"
        length = report.reaction_length_mm if chem["mode"] != "passive" else report.mixing_length_mm
        if length is not None and cond.mean_velocity > 0:
            report.residence_period_s = dg.residence_period(length, cond.mean_velocity)
        else:
            report.reasons["residence_period_s"] = "no length available"
        proj = dg.graylevel_projection(fields, flow, d["view_axis"], d["projection_fraction"])
        report.projection_length_mm = proj.length
        writer.csv("projection.csv", ["y_mm", "projected_std"], zip(proj.y, proj.std))
        for y in d["pattern_stations_mm"]:
            if y * 1000.0 > network.length:
                report.reasons[f"pattern_y{_tag(y)}mm"] = "station beyond device end"
                continue
            writer.pgm(f"pattern_y{_tag(y)}mm.pgm", dg.cross_section_pattern(fields, y))
        data = {"tags": grid.cell_tags.astype(np.int32), "pressure": flow.pressure,
                "velocity": flow.cell_velocity()}
        data.update(fields.concentrations)
        if fields.mixture_fraction is not None:
            data["Z"] = fields.mixture_fraction
        writer.vtk("fields.vtk", grid, data)

    _stage(report, "diagnostics", diagnose)


def _run_reduced(cfg, report, writer):
    rc = _stage(report, "reduced", cfg.reduced)
    curve = _stage(report, "reduced", lambda: predict_curve(rc))
    report.reduced_curve = [list(s) for s in curve.stations]
    writer.csv("reduced_curve.csv", ["y_mm", "mixing_index"], curve.stations)
    if cfg["run"]["mode"] == "reduced":
        report.mixing_length_mm = curve.mixing_length
        if curve.mixing_length is None:
            report.reasons["mixing_length_mm"] = "threshold never reached"
        report.reasons.setdefault("reaction_length_mm", "reduced model has no chemistry")
        report.reasons.setdefault("pressure_drop_pa", "no flow stage")
    if cfg["reduced"]["frames"]:
        for k, f in enumerate(evolve(rc, CrossField.half_half(rc.resolution)), start=1):
            img = np.rint(255 * f.values.T[::-1]).astype(np.uint8)
            writer.pgm(f"reduced_unit{k:02d}.pgm", img)


def _resolve_axis(cfg: RunConfig, axis: str) -> str:
    from .config import SCHEMA, ConfigError
    if "." in axis:
        return axis
    hits = [f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys if k == axis]
    if len(hits) != 1:
        raise ConfigError(f"sweep axis {axis!r} is unknown or ambiguous", axis)
    return hits[0]


def _sweep_point(args):
    cfg, dotted, value, sub = args
    try:
        rep = run_pipeline(cfg.with_value(dotted, value), sub)
        return value, rep, None
    except PipelineError as exc:
        return value, exc.report, str(exc)


def sweep(cfg: RunConfig, axis: str, values, directory: str | Path | None = None,
          jobs: int = 1):
    """One run per value; writes sweep.csv and returns [(value, report, error)]."""
    from .config import SCHEMA, ConfigError
    dotted = _resolve_axis(cfg, axis)
    sec, _, key = dotted.partition(".")
    if sec not in SCHEMA or key not in SCHEMA[sec] or SCHEMA[sec][key][0] not in ((int, float), int):
        raise ConfigError(f"sweep axis {dotted!r} is not a numeric parameter", axis)
    for v in values:
        cfg.with_value(dotted, v)
    out = Path(directory if directory is not None else cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, dotted, v, out / f"point_{i:02d}") for i, v in enumerate(values)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = []
    for v, rep, _ in results:
        rows.append([v, rep.mixing_length_mm if rep else None, rep.reaction_length_mm if rep else None,
                     rep.pressure_drop_pa if rep else None])
    io.write_csv(out / "sweep.csv", ["value", "mixing_length_mm", "reaction_length_mm",
                                     "pressure_drop_pa"], rows)
    summary = {"axis": dotted, "points": [
        {"value": v, "directory": f"point_{i:02d}", "status": "ok" if err is None else "failed",
         "error": err} for i, (v, _, err) in enumerate(results)]}
    io.write_json(out / "sweep.json", summary)
    return results
