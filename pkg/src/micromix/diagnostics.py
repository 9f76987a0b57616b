"""Figures of merit: mixing index, mixing/reaction lengths, patterns, projections.

Stations are streamwise positions in millimetres measured from the start of
the first mixing unit (the first confluence).  A station samples the cell
slab that contains it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowSolution
from .geometry import CellTag, DeviceKind, DomainGrid
from .transport import SpeciesFields

HYSTERESIS = 0.01


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class StationProfile:
    y: float                       # mm
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.values) == 0 or w.shape != np.shape(self.values):
            raise DiagnosticsError("profile needs matching, non-empty values and weights")
        if np.any(w < 0) or not w.sum() > 0:
            raise DiagnosticsError("weights must be non-negative with a positive sum")


@dataclass(frozen=True)
class MixingCurve:
    stations: tuple                 # ((y_mm, M), ...)
    threshold: float = 0.9
    mixing_length: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def y(self) -> np.ndarray:
        return np.array([s[0] for s in self.stations])

    @property
    def values(self) -> np.ndarray:
        return np.array([s[1] for s in self.stations])


def weighted_mean_std(values, weights):
    w = np.asarray(weights, dtype=float)
    c = np.asarray(values, dtype=float)
    mean = float((w * c).sum() / w.sum())
    var = float((w * (c - mean) ** 2).sum() / w.sum())
    return mean, math.sqrt(max(var, 0.0))


def mixing_index(profile: StationProfile) -> float:
    """M = 1 - sigma_w / sqrt(cbar (1 - cbar)) for values normalized to [0, 1]."""
    mean, std = weighted_mean_std(profile.values, profile.weights)
    smax2 = mean * (1.0 - mean)
    if smax2 <= 1e-14:
        raise DiagnosticsError("degenerate inlet contrast")
    return float(min(max(1.0 - std / math.sqrt(smax2), 0.0), 1.0))


def _y_um(grid: DomainGrid, y_mm: float) -> float:
    return y_mm * 1000.0


def _slab(grid, y_mm):
    try:
        return grid.slab_index(_y_um(grid, y_mm))
    except ValueError as exc:
        raise DiagnosticsError(str(exc)) from None


def slab_weights(flow: FlowSolution, j: int, weighting: str = "flux") -> np.ndarray:
    """Per-cell weights on slab ``j`` (nx, nz); zero on solid cells."""
    fluid = flow.grid.fluid[:, j, :]
    area = flow.grid.spacing_m ** 2
    if weighting == "area":
        return np.where(fluid, area, 0.0)
    if weighting != "flux":
        raise DiagnosticsError(f"unknown weighting {weighting!r}")
    vel = 0.5 * (flow.v[:, j, :] + flow.v[:, j + 1, :])
    return np.where(fluid, np.maximum(vel, 0.0) * area, 0.0)


def _normalized(fields: SpeciesFields, name: str) -> np.ndarray:
    c = fields[name]
    lo, hi = _contrast(fields, name)
    return (c - lo) / (hi - lo)


def _contrast(fields, name):
    if name in fields.inlet_values:
        v1, v2 = fields.inlet_values[name]
        if v1 != v2:
            return v2, v1
    raise DiagnosticsError("degenerate inlet contrast")


def _default_scalar(fields: SpeciesFields) -> tuple[str, np.ndarray]:
    if fields.mixture_fraction is not None:
        return "Z", fields.mixture_fraction
    if fields.mode == "passive":
        name = next(iter(fields.concentrations))
        return name, _normalized(fields, name)
    # finite rate: A and B together define a conserved fraction
    s = fields.system
    za = fields[s.oxidant.name] / s.c_a0
    zb = fields[s.reductant.name] / s.c_b0
    return "Z", (1.0 + za - zb) / 2.0


def station_profile(fields: SpeciesFields, flow: FlowSolution, y_mm: float,
                    weighting: str = "flux", name: str | None = None) -> StationProfile:
    j = _slab(fields.grid, y_mm)
    if name is None:
        _, norm = _default_scalar(fields)
    else:
        norm = _normalized(fields, name)
    fluid = fields.grid.fluid[:, j, :]
    w = slab_weights(flow, j, weighting)[fluid]
    return StationProfile(float(y_mm), norm[:, j, :][fluid], w)


def default_stations(network, fraction: float = 0.25) -> np.ndarray:
    """Stations every ``fraction`` of a unit pitch from 0 to the device end (mm)."""
    step = network.unit_params.unit_pitch * fraction
    n = int(math.floor(network.length / step + 1e-9))
    return np.arange(n + 1) * step / 1000.0


def mixing_curve(fields: SpeciesFields, flow: FlowSolution, stations, weighting: str = "flux",
                 threshold: float = 0.9, name: str | None = None,
                 metadata: dict | None = None) -> MixingCurve:
    pts = []
    for y in stations:
        m = mixing_index(station_profile(fields, flow, float(y), weighting, name))
        pts.append((float(y), m))
    pts.sort()
    for a, b in zip(pts[:-1], pts[1:]):
        if not b[0] > a[0]:
            raise DiagnosticsError("stations must be strictly increasing")
    curve = MixingCurve(tuple(pts), threshold, None, dict(metadata or {}))
    return MixingCurve(curve.stations, threshold, mixing_length(curve, threshold), curve.metadata)


def mixing_length(curve: MixingCurve, threshold: float = 0.9) -> float | None:
    """First sustained crossing of ``threshold`` (linear interpolation).

    After the crossing every later station must stay above ``threshold - 0.01``.
    """
    y, m = curve.y, curve.values
    if len(y) == 0:
        raise DiagnosticsError("empty mixing curve")
    for i in range(len(y)):
        if m[i] < threshold:
            continue
        if np.any(m[i:] < threshold - HYSTERESIS):
            continue
        if i == 0 or m[i - 1] >= threshold:
            return float(y[i])
        t = (threshold - m[i - 1]) / (m[i] - m[i - 1])
        return float(y[i - 1] + t * (y[i] - y[i - 1]))
    return None


def inlet_mixed_cup(fields: SpeciesFields, flow: FlowSolution, name: str) -> float:
    """Flux-weighted inlet concentration from the boundary data."""
    tags = fields.grid.cell_tags[:, 0, :]
    v = flow.v[:, 0, :]
    c1, c2 = fields.inlet_values[name]
    q1 = v[tags == CellTag.INLET1].sum()
    q2 = v[tags == CellTag.INLET2].sum()
    return float((q1 * c1 + q2 * c2) / (q1 + q2))


def mixed_cup(fields: SpeciesFields, flow: FlowSolution, name: str, y_mm: float) -> float:
    j = _slab(fields.grid, y_mm)
    w = slab_weights(flow, j, "flux")
    if not w.sum() > 0:
        raise DiagnosticsError("no forward flux through station")
    return float((fields[name][:, j, :] * w).sum() / w.sum())


def first_crossing_below(y, values, level) -> float | None:
    y = np.asarray(y, float)
    values = np.asarray(values, float)
    for i in range(len(y)):
        if values[i] <= level:
            if i == 0:
                return float(y[0])
            t = (values[i - 1] - level) / (values[i - 1] - values[i])
            return float(y[i - 1] + t * (y[i] - y[i - 1]))
    return None


def reaction_length(fields: SpeciesFields, flow: FlowSolution, stations, fraction: float = 0.01):
    """Distance (mm) where the mixed-cup oxidant drops to ``fraction`` of its inlet value."""
    if fields.mode == "passive" or fields.system is None:
        raise DiagnosticsError("no reaction present")
    name = fields.system.oxidant.name
    ref = inlet_mixed_cup(fields, flow, name)
    ys = sorted(float(s) for s in stations)
    vals = [mixed_cup(fields, flow, name, y) for y in ys]
    return first_crossing_below(ys, vals, fraction * ref)


def reaction_profile(fields: SpeciesFields, flow: FlowSolution, stations):
    name = fields.system.oxidant.name
    return [(float(y), mixed_cup(fields, flow, name, float(y))) for y in sorted(stations)]


def residence_period(length_mm: float, mean_velocity: float) -> float:
    """Time (s) to travel ``length_mm`` at ``mean_velocity`` (m/s)."""
    if not mean_velocity > 0:
        raise ValueError("mean velocity must be positive")
    if length_mm < 0:
        raise ValueError("length must be non-negative")
    return length_mm * 1e-3 / mean_velocity


def cross_section_pattern(fields: SpeciesFields, y_mm: float, name: str | None = None):
    """Transverse slice at ``y_mm`` as an 8-bit image, rows top (max z) to bottom.

    Returns a masked uint8 array of shape (nz, nx); solid cells are masked.
    """
    j = _slab(fields.grid, y_mm)
    if name is None:
        _, norm = _default_scalar(fields)
    else:
        norm = _normalized(fields, name)
    sl = np.clip(norm[:, j, :], 0.0, 1.0)
    img = np.rint(255.0 * sl).astype(np.uint8).T[::-1]
    mask = ~fields.grid.fluid[:, j, :].T[::-1]
    return np.ma.MaskedArray(img, mask=mask)


@dataclass(frozen=True)
class GrayCurve:
    y: np.ndarray              # mm
    std: np.ndarray
    length: float | None
    view_axis: str


def default_view_axis(grid: DomainGrid) -> str:
    """Look along the lamella planes: from the side for vertically stacked SNR, else from the top."""
    net = grid.network
    if net is not None and net.device_kind == DeviceKind.SNR and net.unit_params.stack_axis == "vertical":
        return "x"
    return "z"


def graylevel_projection(fields: SpeciesFields, flow: FlowSolution | None = None,
                         view_axis: str = "auto", fraction: float = 0.1,
                         name: str | None = None) -> GrayCurve:
    """Depth-averaged image along ``view_axis`` and its per-slab transverse std.

    The projection length is the first position where the std falls to
    ``fraction`` of its value on the first slab.  ``view_axis="auto"`` picks
    the axis lying in the lamella planes (see ``default_view_axis``).
    """
    grid = fields.grid
    if view_axis == "auto":
        view_axis = default_view_axis(grid)
    if view_axis not in ("x", "z"):
        raise DiagnosticsError("view_axis must be 'x', 'z' or 'auto'")
    axis = {"x": 0, "z": 2}[view_axis]
    if name is None:
        _, norm = _default_scalar(fields)
    else:
        norm = _normalized(fields, name)
    fluid = grid.fluid
    depth = fluid.sum(axis=axis)
    proj = np.where(depth > 0, np.where(fluid, norm, 0.0).sum(axis=axis) / np.maximum(depth, 1), np.nan)
    if axis == 0:
        proj = proj.T
    ny = grid.dims[1]
    std = np.zeros(ny)
    for j in range(ny):
        col = proj[:, j]
        col = col[np.isfinite(col)]
        std[j] = float(col.std()) if col.size else 0.0
    y = (grid.origin[1] + (np.arange(ny) + 0.5) * grid.spacing) / 1000.0
    length = None
    if std[0] > 0:
        length = first_crossing_below(y, std, fraction * std[0])
    return GrayCurve(y, std, length, view_axis)
