"""Reduced cross-section model of split-and-recombine lamination.

A concentration field on the unit square (index ``[i, j]`` with ``i`` along
the transverse x axis and ``j`` along the stack axis y) is pushed through a
baker-type map once per unit and then diffused for one Fourier number.  The
slanted-groove device is caricatured as a rigid rotation per unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .diagnostics import MixingCurve, StationProfile, mixing_index, mixing_length


class MapKind(str, Enum):
    SNR = "SNR"
    SGM_ROTATION = "SGM_rotation"


@dataclass(frozen=True)
class CrossField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("cross field must be a square n x n array")
        if v.shape[0] % 2:
            raise ValueError(f"cross field size must be even, got n={v.shape[0]}")
        if v.size and (v.min() < -1e-12 or v.max() > 1 + 1e-12):
            raise ValueError("cross field values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def mean(self) -> float:
        return float(self.values.mean())

    @classmethod
    def half_half(cls, n: int = 64, split_axis: str = "x") -> "CrossField":
        """1 on the low half, 0 on the high half, split normal to ``split_axis``."""
        v = np.zeros((n, n))
        if split_axis == "x":
            v[: n // 2, :] = 1.0
        elif split_axis == "y":
            v[:, : n // 2] = 1.0
        else:
            raise ValueError("split_axis must be 'x' or 'y'")
        return cls(v)


@dataclass(frozen=True)
class ReducedConfig:
    unit_count: int = 10
    fourier_per_unit: float = 3.7e-3
    map_kind: MapKind = MapKind.SNR
    sgm_angle: float = math.pi / 3
    resolution: int = 64
    unit_pitch: float = 610.0        # um

    def __post_init__(self):
        object.__setattr__(self, "map_kind", MapKind(self.map_kind))
        if self.unit_count < 1:
            raise ValueError("unit_count must be >= 1")
        if not self.fourier_per_unit >= 0:
            raise ValueError("fourier_per_unit must be >= 0")
        if self.resolution < 2 or self.resolution % 2:
            raise ValueError("resolution must be even")

    @staticmethod
    def fourier_number(diffusivity: float, unit_pitch_um: float, mean_velocity: float,
                       height_um: float) -> float:
        """Fo = D t_unit / h^2 with t_unit = pitch / U."""
        t_unit = unit_pitch_um * 1e-6 / mean_velocity
        return diffusivity * t_unit / (height_um * 1e-6) ** 2


def snr_map(f: CrossField) -> CrossField:
    """Split left/right, stretch each half to full width, stack left below right.

    On an even grid this is an exact cell permutation: old cell (i, j) of the
    left half lands at (2i + j mod 2, j // 2); the right half fills the top.
    """
    v = f.values
    n = v.shape[0]
    if n % 2:
        raise ValueError("snr_map needs an even grid")
    h = n // 2
    out = np.empty_like(v)
    # left half: (h, n) -> bottom (n, h)
    out[:, :h] = v[:h].reshape(h, h, 2).transpose(0, 2, 1).reshape(n, h)
    out[:, h:] = v[h:].reshape(h, h, 2).transpose(0, 2, 1).reshape(n, h)
    return CrossField(out)


def _shift_rows(v: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Cyclically shift each row of ``v`` (axis 1) by a fractional amount."""
    n = v.shape[1]
    out = np.empty_like(v)
    for r, s in enumerate(shifts):
        k = math.floor(s)
        a = s - k
        row = np.roll(v[r], k)
        out[r] = (1.0 - a) * row + a * np.roll(row, 1) if a > 0 else row
    return out


def _shear(v: np.ndarray, amount: float, along: int) -> np.ndarray:
    """Push the field by x += amount * y (along=0) or y += amount * x (along=1)."""
    n = v.shape[0]
    c = (np.arange(n) + 0.5) - n / 2.0
    shifts = amount * c
    if along == 0:
        return _shift_rows(v.T, shifts).T
    return _shift_rows(v, shifts)


def sgm_rotation_map(f: CrossField, angle: float) -> CrossField:
    """Rotate the field counter-clockwise about the section centre.

    Quarter turns are exact permutations; the remainder (|r| <= pi/4) uses
    three cyclic linear-interpolation shears, which conserve the mean and
    never leave the input range.
    """
    q = int(round(angle / (math.pi / 2)))
    r = angle - q * (math.pi / 2)
    v = np.rot90(f.values, q % 4)
    if abs(r) > 1e-15:
        t = -math.tan(r / 2)
        v = _shear(v, t, 0)
        v = _shear(v, math.sin(r), 1)
        v = _shear(v, t, 0)
    return CrossField(np.clip(v, 0.0, 1.0))


def diffuse(f: CrossField, fo: float) -> CrossField:
    """Explicit zero-flux diffusion on the unit square for dimensionless time ``fo``."""
    if fo < 0:
        raise ValueError("Fourier number must be >= 0")
    v = f.values.copy()
    if fo == 0:
        return CrossField(v)
    n = v.shape[0]
    dx2 = (1.0 / n) ** 2
    steps = max(1, math.ceil(fo / (dx2 / 4.0)))
    lam = fo / steps / dx2
    fx = np.zeros((n + 1, n))
    fy = np.zeros((n, n + 1))
    for _ in range(steps):
        fx[1:-1] = v[1:] - v[:-1]
        fy[:, 1:-1] = v[:, 1:] - v[:, :-1]
        v += lam * (fx[1:] - fx[:-1] + fy[:, 1:] - fy[:, :-1])
    return CrossField(np.clip(v, 0.0, 1.0))


def area_mixing_index(f: CrossField) -> float:
    v = f.values.ravel()
    return mixing_index(StationProfile(0.0, v, np.ones_like(v)))


def evolve(config: ReducedConfig, initial: CrossField | None = None):
    """Yield the field after each unit (map then diffuse)."""
    f = initial if initial is not None else CrossField.half_half(config.resolution)
    for _ in range(config.unit_count):
        if config.map_kind is MapKind.SNR:
            f = snr_map(f)
        else:
            f = sgm_rotation_map(f, config.sgm_angle)
        f = diffuse(f, config.fourier_per_unit)
        yield f


def predict_curve(config: ReducedConfig, initial: CrossField | None = None) -> MixingCurve:
    """Area-weighted mixing index after each unit, at y = unit index x pitch (mm)."""
    pts = []
    for k, f in enumerate(evolve(config, initial), start=1):
        pts.append((k * config.unit_pitch / 1000.0, area_mixing_index(f)))
    curve = MixingCurve(tuple(pts), 0.9, None,
                        {"model": "reduced", "map_kind": config.map_kind.value,
                         "fourier_per_unit": config.fourier_per_unit})
    return MixingCurve(curve.stations, 0.9, mixing_length(curve), curve.metadata)


def striation_count(f: CrossField, axis: str = "y", threshold: float = 0.5) -> int:
    """Number of threshold crossings along the centre line parallel to ``axis``."""
    v = f.values
    n = v.shape[0]
    if axis == "y":
        line = v[n // 2, :]
    elif axis == "x":
        line = v[:, n // 2]
    else:
        raise ValueError("axis must be 'x' or 'y'")
    b = line >= threshold
    return int(np.count_nonzero(b[1:] != b[:-1]))


def dominant_wavelength(f: CrossField, axis: str = "y") -> float | None:
    """Wavelength (unit-square lengths) of the strongest mode along ``axis``.

    The field is averaged across the other axis first; None for a constant profile.
    """
    v = f.values
    prof = v.mean(axis=0) if axis == "y" else v.mean(axis=1)
    prof = prof - prof.mean()
    if np.allclose(prof, 0.0, atol=1e-14):
        return None
    spec = np.abs(np.fft.rfft(prof))
    spec[0] = 0.0
    m = int(np.argmax(spec))
    return 1.0 / m
