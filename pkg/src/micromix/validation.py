"""Analytic-oracle checks for the flow solver, scalar transport and reduced model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .flow import (FlowConditions, SolverConfig, analytic_duct_profile, mixed_cup_pressure,
                   plug_flow, solve_flow)
from .geometry import UnitParams, build_plain_network, voxelize
from .lamination import (CrossField, MapKind, ReducedConfig, diffuse, dominant_wavelength,
                         predict_curve, snr_map, striation_count)
from .transport import solve_passive_scalar


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    expected: float
    tolerance: float
    relative: bool = True

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.measured):
            return False
        err = abs(self.measured - self.expected)
        if self.relative:
            err /= abs(self.expected)
        return err <= self.tolerance

    def line(self) -> str:
        kind = "rel" if self.relative else "abs"
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<40s} measured {self.measured:.6g}  expected {self.expected:.6g}"
                f"  tol {self.tolerance:g} ({kind})")


def duct_flow(spacing: float = 3.125, length: float = 200.0, reynolds: float = 1.0):
    """Square duct at >= 32 cells across; returns (fRe, umax/U) and the solution."""
    p = UnitParams()
    grid = voxelize(build_plain_network(p, length), spacing)
    cond = FlowConditions.from_reynolds(reynolds, p.channel_width, p.channel_height)
    sol = solve_flow(grid, cond, solver_cfg=SolverConfig())
    ny = grid.dims[1]
    half = max(2, ny // 8)
    j1, j2 = ny // 2 - half, ny // 2 + half
    grad = (mixed_cup_pressure(sol, j1) - mixed_cup_pressure(sol, j2)) / ((j2 - j1) * grid.spacing_m)
    u = cond.mean_velocity
    dh = cond.hydraulic_diameter
    fre = 2.0 * grad * dh ** 2 / (cond.fluid.viscosity * u)
    umax = float(sol.cell_velocity()[1][:, ny // 2, :].max() / u)
    return fre, umax, sol


def duct_checks() -> list[Check]:
    _, fre0, umax0 = analytic_duct_profile(1.0)
    fre, umax, _ = duct_flow()
    return [Check("duct fRe (Darcy)", fre, fre0, 0.02),
            Check("duct u_max / U_mean", umax, umax0, 0.02)]


def interdiffusion_profile(x_um, y_um, width_um, diffusivity, velocity, images: int = 20):
    """Two-stream plug-flow profile with zero-flux side walls (image sum of erfc)."""
    x = np.asarray(x_um, float) * 1e-6
    w = width_um * 1e-6
    s = math.sqrt(4.0 * diffusivity * y_um * 1e-6 / velocity)
    c = np.zeros_like(x)
    # source strip [0, w/2) mirrored across both walls -> period 2w
    for k in range(-images, images + 1):
        a, b = 2 * k * w - w / 2, 2 * k * w + w / 2
        c += 0.5 * (erfc((x - b) / s) - erfc((x - a) / s))
    return c


def interdiffusion_run(peclet: float = 100.0, spacing: float = 2.0, station_um: float = 200.0,
                       length_um: float = 300.0, height_um: float = 10.0):
    p = UnitParams(channel_height=height_um)
    grid = voxelize(build_plain_network(p, length_um), spacing)
    cond = FlowConditions.from_total(10.0, p.channel_width, height_um)
    flow = plug_flow(grid, cond)
    u = cond.mean_velocity
    d = u * p.channel_width * 1e-6 / peclet
    fields = solve_passive_scalar(flow, grid, d)
    j = grid.slab_index(station_um)
    y = grid.origin[1] + (j + 0.5) * grid.spacing
    x = grid.centers(0)
    sim = fields["c"][:, j, :].mean(axis=1)
    exact = interdiffusion_profile(x, y, p.channel_width, d, u)
    return x, sim, exact


def interdiffusion_checks() -> list[Check]:
    _, sim, exact = interdiffusion_run()
    err = float(np.abs(sim - exact).max())
    return [Check("interdiffusion erfc L_inf error", err, 0.0, 0.03, relative=False)]


def lamination_checks() -> list[Check]:
    checks = []
    f = CrossField.half_half(128)
    exact = True
    for k in range(1, 7):
        f = snr_map(f)
        exact &= striation_count(f) == 2 ** k - 1
        exact &= dominant_wavelength(f) == 2.0 ** (1 - k)
    checks.append(Check("striation doubling k <= 6 (exact)", float(exact), 1.0, 0.0, relative=False))
    n = 64
    y = (np.arange(n) + 0.5) / n
    mode = CrossField(np.tile(0.5 + 0.5 * np.cos(np.pi * y), (n, 1)))
    amp = float((diffuse(mode, 0.01).values[0, 0] - 0.5) / (0.5 * np.cos(np.pi * y[0])))
    checks.append(Check("Neumann eigenmode decay", amp, math.exp(-math.pi ** 2 * 0.01), 0.01))
    zero = predict_curve(ReducedConfig(10, 0.0, MapKind.SNR, resolution=64))
    checks.append(Check("Fo=0 keeps M = 0", float(np.abs(zero.values).max()), 0.0, 1e-12,
                        relative=False))
    c64 = predict_curve(ReducedConfig(10, 0.01, MapKind.SNR, resolution=64))
    c128 = predict_curve(ReducedConfig(10, 0.01, MapKind.SNR, resolution=128))
    checks.append(Check("Fo=0.01 reaches M >= 0.9 in 10 units", float(c64.values.max() >= 0.9),
                        1.0, 0.0, relative=False))
    checks.append(Check("2x resolution agreement", float(np.abs(c64.values - c128.values).max()),
                        0.0, 0.02, relative=False))
    sgm = predict_curve(ReducedConfig(10, 0.01, MapKind.SGM_ROTATION, resolution=64))
    gap = float((c64.values[2:] - sgm.values[2:]).min())
    checks.append(Check("M_SNR - M_SGM for n >= 3 (min)", float(gap >= 0), 1.0, 0.0,
                        relative=False))
    return checks


SUITES = {"duct": duct_checks, "interdiffusion": interdiffusion_checks,
          "lamination": lamination_checks}


def validate(suite: str) -> list[Check]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    return SUITES[suite]()
