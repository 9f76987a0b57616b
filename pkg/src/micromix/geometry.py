"""Parametric channel networks and their voxelization.

Coordinates are in micrometres throughout this module: ``x`` is the lateral
(transverse) axis, ``y`` the streamwise axis and ``z`` the vertical axis.
A network is described as a union of non-overlapping fluid primitives
(axis-aligned boxes, plus slanted floor grooves for the SGM), which
``voxelize`` samples at cell centres on a uniform isotropic grid.

SNR unit layout (local streamwise coordinate ``s`` in ``[0, unit_pitch)``)::

    [0, Lo/2)            half confluence: full W x H section, streams stacked
    [Lo/2, Lo/2+Ls)      split: dividing edge (wall) along the stack axis
    [.., +Lt)            transfer: branch 1 keeps its upper quadrant only,
                         branch 2 its lower quadrant only
    [.., P - Lo/2)       stack: two layers separated by a wall, each spanning
                         ``branch_width`` along the split axis
    [P - Lo/2, P)        half confluence (recombination)

Adjacent units join their half confluences into one of ``overlap_length``.
With ``stack_axis='vertical'`` the split axis is ``x`` and the stack axis is
``z``; ``'lateral'`` swaps the two.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage


class GeometryError(ValueError):
    """Invalid geometry parameters or an unusable voxelization."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class DeviceKind(str, enum.Enum):
    SNR = "SNR"
    SGM = "SGM"
    PLAIN = "PLAIN"


class CellTag(enum.IntEnum):
    SOLID = 0
    FLUID = 1
    INLET1 = 2
    INLET2 = 3
    OUTLET = 4


@dataclass(frozen=True)
class UnitParams:
    unit_pitch: float = 610.0
    channel_width: float = 100.0
    channel_height: float = 100.0
    branch_width: float = 100.0
    overlap_length: float = 150.0
    groove_depth_ratio: float = 0.3
    groove_angle: float = 45.0
    groove_pitch: float = 120.0
    stack_axis: str = "vertical"
    wall_thickness: float = 20.0
    grooves_per_unit: int = 6

    def validate(self) -> None:
        for name in ("unit_pitch", "channel_width", "channel_height", "branch_width",
                     "overlap_length", "groove_pitch", "wall_thickness"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise GeometryError(f"must be a positive length, got {value!r}", name)
        if not 0 < self.groove_depth_ratio <= 0.8:
            raise GeometryError("must lie in (0, 0.8]", "groove_depth_ratio")
        if not 0 < self.groove_angle < 90:
            raise GeometryError("must lie in (0, 90) degrees", "groove_angle")
        if self.stack_axis not in ("vertical", "lateral"):
            raise GeometryError("must be 'vertical' or 'lateral'", "stack_axis")
        if self.branch_width > self.split_extent:
            raise GeometryError(
                f"must not exceed the channel extent along the split axis ({self.split_extent})",
                "branch_width")
        if int(self.grooves_per_unit) != self.grooves_per_unit or self.grooves_per_unit < 1:
            raise GeometryError("must be a positive integer", "grooves_per_unit")

    @property
    def split_extent(self) -> float:
        """Channel extent along the axis cut by the dividing edge."""
        return self.channel_width if self.stack_axis == "vertical" else self.channel_height

    @property
    def stack_extent(self) -> float:
        return self.channel_height if self.stack_axis == "vertical" else self.channel_width

    @property
    def groove_depth(self) -> float:
        return self.groove_depth_ratio * self.channel_height

    @property
    def groove_direction(self) -> np.ndarray:
        """Unit vector of the groove axis in the floor plane, (x, y, z)."""
        a = math.radians(self.groove_angle)
        return np.array([math.sin(a), math.cos(a), 0.0])


@dataclass(frozen=True)
class Box:
    x0: float
    x1: float
    y0: float
    y1: float
    z0: float
    z1: float
    label: str = ""

    @property
    def volume(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0) * (self.z1 - self.z0)

    def mirrored(self, width: float) -> "Box":
        return replace(self, x0=width - self.x1, x1=width - self.x0)

    def contains(self, x, y, z):
        return ((x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)
                & (z >= self.z0) & (z < self.z1))


@dataclass(frozen=True)
class SlantedGroove:
    """Floor groove: a band of streamwise thickness ``thickness`` around the line
    ``y = y_center + (x - x_center) * slope`` for ``x`` in ``[0, width)``, clipped
    to ``[y_min, y_max)`` and recessed over ``z`` in ``[-depth, 0)``."""

    y_center: float
    x_center: float
    slope: float
    thickness: float
    width: float
    depth: float
    y_min: float
    y_max: float

    def contains(self, x, y, z):
        yc = self.y_center + (x - self.x_center) * self.slope
        return ((x >= 0) & (x < self.width) & (z >= -self.depth) & (z < 0)
                & (y >= yc - self.thickness / 2) & (y < yc + self.thickness / 2)
                & (y >= self.y_min) & (y < self.y_max))

    def mirrored(self, width: float) -> "SlantedGroove":
        return replace(self, x_center=width - self.x_center, slope=-self.slope)

    @property
    def volume(self) -> float:
        """Exact volume of the clipped band (piecewise-linear integrand)."""
        lo = lambda x: max(self.y_min, self.y_center + (x - self.x_center) * self.slope - self.thickness / 2)
        hi = lambda x: min(self.y_max, self.y_center + (x - self.x_center) * self.slope + self.thickness / 2)
        breaks = {0.0, self.width}
        if self.slope != 0:
            for edge in (self.y_min, self.y_max):
                for off in (-self.thickness / 2, self.thickness / 2):
                    xb = self.x_center + (edge - off - self.y_center) / self.slope
                    if 0 < xb < self.width:
                        breaks.add(xb)
        xs = sorted(breaks)
        area = 0.0
        for a, b in zip(xs[:-1], xs[1:]):
            la = max(hi(a) - lo(a), 0.0)
            lb = max(hi(b) - lo(b), 0.0)
            # length is linear between breakpoints except where it crosses zero
            if (la > 0) == (lb > 0) or la == 0 == lb:
                area += 0.5 * (la + lb) * (b - a)
            else:
                m = 0.5 * (a + b)
                lm = max(hi(m) - lo(m), 0.0)
                area += (la + 4 * lm + lb) * (b - a) / 6
        return area * self.depth


@dataclass(frozen=True)
class ChannelNetwork:
    device_kind: DeviceKind
    unit_params: UnitParams
    unit_count: int
    length: float
    primitives: tuple = ()
    features: tuple = ()
    lead_in: bool = False
    lead_out: bool = False
    mirrored: bool = False
    inlet_count: int = 2

    @property
    def total_length(self) -> float:
        extra = self.unit_params.unit_pitch * (int(self.lead_in) + int(self.lead_out))
        return self.length + extra

    @property
    def y_start(self) -> float:
        return -self.unit_params.unit_pitch if self.lead_in else 0.0

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float], tuple[float, float]]:
        p = self.unit_params
        z0 = -p.groove_depth if self.device_kind is DeviceKind.SGM else 0.0
        return ((0.0, p.channel_width), (self.y_start, self.y_start + self.total_length),
                (z0, p.channel_height))

    @property
    def cross_section(self) -> tuple[float, float]:
        """Reference (width, height) of the main channel in micrometres."""
        return self.unit_params.channel_width, self.unit_params.channel_height

    def analytic_volume(self) -> float:
        return float(sum(p.volume for p in self.primitives))

    def features_of(self, kind: str) -> list:
        return [f for f in self.features if f[0] == kind]

    def reflected(self) -> "ChannelNetwork":
        """Same network reflected through the lateral midplane x = W/2."""
        w = self.unit_params.channel_width
        return replace(self, primitives=tuple(p.mirrored(w) for p in self.primitives),
                       mirrored=not self.mirrored)


def _check_units(units) -> int:
    if isinstance(units, bool) or int(units) != units or units < 1:
        raise GeometryError(f"must be an integer >= 1, got {units!r}", "units")
    return int(units)


def _lead_boxes(params: UnitParams, length: float, lead_in: bool, lead_out: bool):
    w, h, p = params.channel_width, params.channel_height, params.unit_pitch
    boxes = []
    if lead_in:
        boxes.append(Box(0, w, -p, 0, 0, h, "lead_in"))
    if lead_out:
        boxes.append(Box(0, w, length, length + p, 0, h, "lead_out"))
    return boxes


def _snr_section_lengths(params: UnitParams) -> tuple[float, float, float]:
    rest = params.unit_pitch - params.overlap_length
    transfer = params.stack_extent
    if rest - transfer <= 0:
        raise GeometryError(
            "unit_pitch leaves no room for split/transfer/stack sections after the overlap",
            "unit_pitch")
    return (rest - transfer) / 2, transfer, (rest - transfer) / 2


def build_snr_network(params: UnitParams, units: int, lead_in: bool = False,
                      lead_out: bool = False) -> ChannelNetwork:
    params.validate()
    units = _check_units(units)
    t_ext, s_ext = params.split_extent, params.stack_extent
    wall = params.wall_thickness
    if wall >= min(t_ext, s_ext) / 2:
        raise GeometryError("dividing walls leave no room for branches", "wall_thickness")
    ls, lt, lk = _snr_section_lengths(params)
    half = params.overlap_length / 2
    col = (t_ext - wall) / 2          # branch column width along the split axis
    lay = (s_ext - wall) / 2          # layer thickness along the stack axis
    b0 = (t_ext - params.branch_width) / 2
    b1 = b0 + params.branch_width
    if b0 >= col or b1 <= t_ext - col:
        raise GeometryError("stack layers do not overlap the transfer quadrants", "branch_width")

    # (t0, t1, s0, s1) in split/stack coordinates
    def place(t0, t1, y0, y1, s0, s1, label):
        if params.stack_axis == "vertical":
            return Box(t0, t1, y0, y1, s0, s1, label)
        return Box(s0, s1, y0, y1, t0, t1, label)

    prims, feats = [], []
    for u in range(units):
        y = u * params.unit_pitch
        seq = [
            ("confluence", half, [(0, t_ext, 0, s_ext)]),
            ("split", ls, [(0, col, 0, s_ext), (t_ext - col, t_ext, 0, s_ext)]),
            ("transfer", lt, [(0, col, s_ext - lay, s_ext), (t_ext - col, t_ext, 0, lay)]),
            ("stack", lk, [(b0, b1, s_ext - lay, s_ext), (b0, b1, 0, lay)]),
            ("confluence", half, [(0, t_ext, 0, s_ext)]),
        ]
        for kind, length, rects in seq:
            for t0, t1, s0, s1 in rects:
                prims.append(place(t0, t1, y, y + length, s0, s1, f"{kind}{u}"))
            feats.append((kind, y, y + length))
            y += length
    # interior half confluences of neighbouring units form one confluence
    merged = []
    for f in feats:
        if merged and f[0] == "confluence" and merged[-1][0] == "confluence" and merged[-1][2] == f[1]:
            merged[-1] = ("confluence", merged[-1][1], f[2])
        else:
            merged.append(f)
    length = units * params.unit_pitch
    prims.extend(_lead_boxes(params, length, lead_in, lead_out))
    return ChannelNetwork(DeviceKind.SNR, params, units, length, tuple(prims), tuple(merged),
                          lead_in, lead_out)


def build_sgm_network(params: UnitParams, units: int, lead_in: bool = False,
                      lead_out: bool = False) -> ChannelNetwork:
    """Straight channel with ``grooves_per_unit`` slanted floor grooves per unit.

    The SGM unit length is ``grooves_per_unit * groove_pitch``; the returned
    network carries that value as its ``unit_pitch``.
    """
    params.validate()
    units = _check_units(units)
    pitch = params.grooves_per_unit * params.groove_pitch
    params = replace(params, unit_pitch=pitch)
    w, h = params.channel_width, params.channel_height
    length = units * pitch
    slope = 1.0 / math.tan(math.radians(params.groove_angle))
    thickness = params.groove_pitch / 2
    prims: list = [Box(0, w, 0, length, 0, h, "channel")]
    feats = [("channel", 0.0, length)]
    for g in range(units * params.grooves_per_unit):
        yc = (g + 0.5) * params.groove_pitch
        prims.append(SlantedGroove(yc, w / 2, slope, thickness, w, params.groove_depth, 0.0, length))
        feats.append(("groove", yc - thickness / 2, yc + thickness / 2))
    prims.extend(_lead_boxes(params, length, lead_in, lead_out))
    return ChannelNetwork(DeviceKind.SGM, params, units, length, tuple(prims), tuple(feats),
                          lead_in, lead_out)


def build_plain_network(params: UnitParams, length: float) -> ChannelNetwork:
    params.validate()
    if not length > 0:
        raise GeometryError(f"must be positive, got {length!r}", "length")
    w, h = params.channel_width, params.channel_height
    return ChannelNetwork(DeviceKind.PLAIN, params, 1, float(length),
                          (Box(0, w, 0, length, 0, h, "duct"),), (("channel", 0.0, float(length)),))


@dataclass(frozen=True)
class DomainGrid:
    spacing: float
    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    cell_tags: np.ndarray = field(repr=False)
    network: ChannelNetwork | None = field(default=None, repr=False, compare=False)

    @property
    def fluid(self) -> np.ndarray:
        return self.cell_tags != CellTag.SOLID

    @property
    def spacing_m(self) -> float:
        return self.spacing * 1e-6

    def centers(self, axis: int) -> np.ndarray:
        n = self.dims[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.spacing

    def fluid_volume(self) -> float:
        return float(np.count_nonzero(self.fluid)) * self.spacing ** 3

    def slab_index(self, y: float) -> int:
        """Index of the cell slab containing streamwise position ``y`` (um)."""
        y0 = self.origin[1]
        y1 = y0 + self.dims[1] * self.spacing
        tol = 1e-9 * self.spacing
        if y < y0 - tol or y > y1 + tol:
            raise GeometryError(f"station y={y} um outside domain [{y0}, {y1}]", "y")
        return int(min(max(math.floor((y - y0) / self.spacing), 0), self.dims[1] - 1))


def voxelize(network: ChannelNetwork, spacing: float) -> DomainGrid:
    p = network.unit_params
    if not spacing > 0 or spacing > min(p.channel_width, p.channel_height) / 4:
        raise GeometryError(
            f"spacing {spacing} um too coarse; need <= min(width, height)/4 = "
            f"{min(p.channel_width, p.channel_height) / 4}", "spacing")
    if network.device_kind is DeviceKind.SNR and spacing > p.wall_thickness:
        raise GeometryError(f"spacing {spacing} um cannot resolve wall_thickness {p.wall_thickness} um",
                            "spacing")
    if network.device_kind is DeviceKind.SGM:
        if p.groove_pitch / 2 < spacing:
            raise GeometryError(
                f"groove_pitch {p.groove_pitch} um gives grooves narrower than one cell at {spacing} um",
                "groove_pitch")
        if p.groove_depth < spacing / 2:
            raise GeometryError("groove depth below half a cell", "groove_depth_ratio")

    (x0, x1), (y0, y1), (z0, z1) = network.bounds
    dims = tuple(max(1, int(round((b - a) / spacing))) for a, b in ((x0, x1), (y0, y1), (z0, z1)))
    xc = x0 + (np.arange(dims[0]) + 0.5) * spacing
    yc = y0 + (np.arange(dims[1]) + 0.5) * spacing
    zc = z0 + (np.arange(dims[2]) + 0.5) * spacing
    X, Y, Z = np.meshgrid(xc, yc, zc, indexing="ij")
    fluid = np.zeros(dims, dtype=bool)
    for prim in network.primitives:
        fluid |= prim.contains(X, Y, Z)
    if dims[1] < 2:
        raise GeometryError("domain must span at least two cells streamwise", "spacing")

    tags = np.where(fluid, CellTag.FLUID, CellTag.SOLID).astype(np.uint8)
    tags[:, -1, :][fluid[:, -1, :]] = CellTag.OUTLET

    # inlet plane: main cross-section cells of the first slab
    w, h = p.channel_width, p.channel_height
    xs, zs = X[:, 0, :], Z[:, 0, :]
    if network.mirrored:
        xs = w - xs
    in_main = fluid[:, 0, :] & (zs >= 0) & (zs < h)
    if network.device_kind is DeviceKind.SNR:
        if p.stack_axis == "vertical":
            first = zs >= h / 2
        else:
            first = xs >= w / 2
    else:
        first = xs < w / 2
    slab = tags[:, 0, :]
    slab[in_main & first] = CellTag.INLET1
    slab[in_main & ~first] = CellTag.INLET2
    tags[:, 0, :] = slab

    if not (tags == CellTag.INLET1).any() or not (tags == CellTag.INLET2).any():
        raise GeometryError("both inlet streams need at least one cell", "spacing")
    _check_connected(fluid, tags)
    tags.setflags(write=False)
    return DomainGrid(float(spacing), dims, (x0, y0, z0), tags, network)


def _check_connected(fluid: np.ndarray, tags: np.ndarray) -> None:
    labels, count = ndimage.label(fluid)  # default structure is 6-connectivity
    outlet_labels = set(np.unique(labels[tags == CellTag.OUTLET])) - {0}
    if not outlet_labels:
        raise GeometryError("no fluid cell reaches the outlet plane")
    stray = fluid & ~np.isin(labels, list(outlet_labels))
    if stray.any():
        cells = np.argwhere(stray)
        raise GeometryError(
            f"{len(cells)} fluid cells are disconnected from the outlet, e.g. (i, j, k) = "
            f"{tuple(int(c) for c in cells[0])}")


def reflect_tags(tags: np.ndarray) -> np.ndarray:
    """Reflect a tag array through the lateral midplane x = W/2."""
    return tags[::-1, :, :].copy()
