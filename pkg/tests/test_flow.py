import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from micromix.flow import (FlowConditions, FlowError, FluidSpec, SolverConfig, analytic_duct_profile,
                           duct_pressure_drop, hydraulic_diameter, plug_flow, pressure_drop,
                           reynolds_number, solve_flow)
from micromix.geometry import UnitParams, build_plain_network, build_snr_network, voxelize

# Square-duct values from the Fourier series, cross-checked below by an
# independent finite-difference Poisson solve.
FRE_SQUARE = 56.908
UMAX_SQUARE = 2.0963


def _fd_duct(aspect, n=240):
    """Second-order FD solution of lap(u) = -1 on a (aspect x 1) rectangle."""
    nx, ny = int(round(n * aspect)), n
    hx, hy = aspect / (nx + 1), 1.0 / (ny + 1)     # interior nodes, zero on the walls
    lap = sp.kronsum(_d2(ny, hy), _d2(nx, hx), format="csc")
    u = spla.spsolve(-lap, np.ones(nx * ny)).reshape(nx, ny)
    area, perim = aspect, 2 * (aspect + 1)
    dh = 4 * area / perim
    mean = u.sum() * hx * hy / area
    # G = 1, mu = 1:  fRe = 2 G Dh^2 / (mu U)
    return 2 * dh ** 2 / mean, u.max() / mean


def _d2(n, h):
    return sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h ** 2


def test_series_matches_independent_fd_oracle():
    _, fre, umax = analytic_duct_profile(1.0)
    fre_fd, umax_fd = _fd_duct(1.0)
    assert fre == pytest.approx(fre_fd, rel=2e-3)
    assert umax == pytest.approx(umax_fd, rel=2e-3)
    assert fre == pytest.approx(FRE_SQUARE, rel=1e-4)
    assert umax == pytest.approx(UMAX_SQUARE, rel=1e-4)


def test_series_aspect_two_against_fd():
    _, fre, umax = analytic_duct_profile(2.0)
    fre_fd, umax_fd = _fd_duct(2.0, 120)
    assert fre == pytest.approx(fre_fd, rel=3e-3)
    assert umax == pytest.approx(umax_fd, rel=3e-3)


def test_series_plate_limit_and_convergence():
    prof, fre, umax = analytic_duct_profile(np.inf)
    assert fre == 96.0 and umax == 1.5
    _, f50, u50 = analytic_duct_profile(1.0, 50)
    _, f200, u200 = analytic_duct_profile(1.0, 200)
    assert abs(f50 - f200) / f200 < 1e-6 and abs(u50 - u200) / u200 < 1e-6
    with pytest.raises(ValueError):
        analytic_duct_profile(1.0, 5)


def test_reynolds_calibration():
    assert reynolds_number(10.0, 100.0, 100.0) == pytest.approx(1.66, abs=0.01)
    assert reynolds_number(10.0, 200.0, 100.0) == pytest.approx(1.11, abs=0.01)
    assert reynolds_number(0.0, 100.0, 100.0) == 0.0
    assert hydraulic_diameter(200.0, 100.0) == pytest.approx(133.333e-6, rel=1e-5)
    with pytest.raises(ValueError):
        reynolds_number(10.0, 0.0, 100.0)


def test_conditions_consistency():
    c = FlowConditions.from_total(10.0)
    assert c.flow_rate_per_inlet == 5.0
    assert c.mean_velocity == pytest.approx(10e-9 / 60 / 1e-8, rel=1e-12)
    r = FlowConditions.from_reynolds(c.reynolds)
    assert r.flow_rate_per_inlet == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(ValueError):
        FlowConditions(-1.0)
    with pytest.raises(ValueError):
        FluidSpec(0.0, 1e-3)


def test_duct_pressure_drop_arithmetic():
    dp = duct_pressure_drop(FRE_SQUARE, 1e-3, 16.67e-3, 6.1e-3, 100e-6)
    assert dp == pytest.approx(2.9e2, rel=0.05)
    assert dp == pytest.approx(289.3, rel=1e-3)


def test_zero_flow():
    grid = voxelize(build_snr_network(UnitParams(), 1), 10.0)
    sol = solve_flow(grid, FlowConditions(0.0))
    assert not np.any(sol.u) and not np.any(sol.v) and not np.any(sol.w)
    assert np.ptp(sol.pressure[grid.fluid]) == 0.0
    assert pressure_drop(sol) == 0.0


def test_refuses_high_reynolds():
    grid = voxelize(build_plain_network(UnitParams(), 200.0), 20.0)
    with pytest.raises(FlowError):
        solve_flow(grid, FlowConditions.from_reynolds(60.0))


def test_non_convergence_carries_history():
    grid = voxelize(build_plain_network(UnitParams(), 200.0), 20.0)
    with pytest.raises(FlowError) as err:
        solve_flow(grid, FlowConditions.from_reynolds(1.0), solver_cfg=SolverConfig(max_iterations=3))
    assert len(err.value.residual_history) == 3


def test_unconverged_pressure_drop_rejected(duct_flow):
    _, sol = duct_flow
    with pytest.raises(FlowError):
        pressure_drop(dataclasses.replace(sol, converged=False))


def test_duct_invariants(duct_flow):
    grid, sol = duct_flow
    assert sol.converged
    assert sol.max_normalized_divergence() < 1e-6
    q_in = sol.station_flux(0)
    fluxes = np.array([sol.station_flux(j) for j in range(grid.dims[1] + 1)])
    assert np.abs(fluxes / q_in - 1).max() < 1e-3
    assert q_in == pytest.approx(sol.conditions.total_flow_rate, rel=1e-12)


def test_duct_pressure_drop_close_to_series(duct_flow):
    grid, sol = duct_flow
    c = sol.conditions
    expected = duct_pressure_drop(FRE_SQUARE, 1e-3, c.mean_velocity, 400e-6, 100e-6)
    # coarse 10x10 grid plus the developing entrance: within 10 %
    assert pressure_drop(sol) == pytest.approx(expected, rel=0.10)


def test_device_invariants(snr_flow, sgm_flow):
    for grid, sol in (snr_flow, sgm_flow):
        assert sol.max_normalized_divergence() < 1e-6
        q = sol.conditions.total_flow_rate
        for j in range(grid.dims[1] + 1):
            assert sol.station_flux(j) == pytest.approx(q, rel=5e-3)


def test_sgm_secondary_flow(sgm_flow):
    grid, sol = sgm_flow
    vel = sol.cell_velocity()
    z = grid.centers(2)
    above = grid.fluid & (z > 0)[None, None, :]
    cross = np.hypot(vel[0], vel[2])[above]
    assert cross.max() > 0.01 * sol.conditions.mean_velocity


def _centre_velocity(sol):
    grid = sol.grid
    nx, ny, nz = grid.dims
    v = sol.cell_velocity()[1][:, ny // 2, :]
    return v[nx // 2 - 1:nx // 2 + 1, nz // 2 - 1:nz // 2 + 1].mean() / sol.conditions.mean_velocity


def test_grid_convergence_of_centreline_velocity():
    errs = []
    for h in (25.0, 12.5, 6.25):
        grid = voxelize(build_plain_network(UnitParams(), 200.0), h)
        sol = solve_flow(grid, FlowConditions.from_reynolds(1.0))
        errs.append(abs(_centre_velocity(sol) - UMAX_SQUARE))
    assert errs[0] > errs[1] > errs[2]


def test_stokes_linearity():
    grid = voxelize(build_snr_network(UnitParams(), 1), 10.0)
    a = solve_flow(grid, FlowConditions.from_reynolds(0.2))
    b = solve_flow(grid, FlowConditions.from_reynolds(0.4))
    assert pressure_drop(b) / pressure_drop(a) == pytest.approx(2.0, rel=0.01)
    scale = np.abs(a.v).max()
    assert np.abs(b.v - 2 * a.v).max() < 0.01 * 2 * scale
    assert np.abs(b.w - 2 * a.w).max() < 0.01 * 2 * scale


def test_mirror_symmetry_of_velocity():
    net = build_snr_network(UnitParams(stack_axis="lateral"), 1)
    cond = FlowConditions.from_reynolds(1.0)
    a = solve_flow(voxelize(net, 10.0), cond)
    b = solve_flow(voxelize(net.reflected(), 10.0), cond)
    scale = np.abs(a.v).max()
    assert np.abs(b.v - a.v[::-1]).max() < 1e-4 * scale
    assert np.abs(b.w - a.w[::-1]).max() < 1e-4 * scale
    assert np.abs(b.u + a.u[::-1]).max() < 1e-4 * scale


def test_plug_flow_requires_straight_duct():
    grid = voxelize(build_snr_network(UnitParams(), 1), 10.0)
    with pytest.raises(ValueError):
        plug_flow(grid, FlowConditions.from_total(10.0))


def test_deterministic_rerun():
    grid = voxelize(build_plain_network(UnitParams(), 200.0), 20.0)
    a = solve_flow(grid, FlowConditions.from_reynolds(1.0))
    b = solve_flow(grid, FlowConditions.from_reynolds(1.0))
    assert a.v.tobytes() == b.v.tobytes() and a.pressure.tobytes() == b.pressure.tobytes()
