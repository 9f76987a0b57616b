"""Steady laminar flow on voxel domains plus rectangular-duct oracles.

The solver marches a pseudo-transient incremental projection scheme on the
MAC grid of :mod:`micromix.mac` until the steady momentum residual falls
below ``SolverConfig.tolerance``.  Each pseudo step solves a backward-Euler
Oseen problem per velocity component, then a pressure Poisson problem by
algebraic-multigrid preconditioned CG, and projects the face velocities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import CellTag, DomainGrid
from .mac import AXES, StaggeredLayout

log = logging.getLogger(__name__)

UL_MIN = 1e-9 / 60.0   # m^3/s per uL/min
RE_LIMIT = 50.0


class FlowError(RuntimeError):
    """Flow solve failed; ``residual_history`` holds the iteration record."""

    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class FluidSpec:
    density: float = 998.0       # kg/m^3
    viscosity: float = 1.0e-3    # Pa s

    def __post_init__(self):
        if not (self.density > 0 and self.viscosity > 0):
            raise ValueError("density and viscosity must be positive")

    @property
    def kinematic_viscosity(self) -> float:
        return self.viscosity / self.density


def hydraulic_diameter(width_um: float, height_um: float) -> float:
    """D_h = 4A/P in metres."""
    w, h = width_um * 1e-6, height_um * 1e-6
    if w <= 0 or h <= 0:
        raise ValueError("cross-section has zero area")
    return 4 * w * h / (2 * (w + h))


def reynolds_number(total_flow_rate_ul_min: float, width_um: float = 100.0,
                    height_um: float = 100.0, fluid: FluidSpec = FluidSpec()) -> float:
    """Re = rho U D_h / mu with U = Q / A on the rectangular reference section."""
    area = width_um * height_um * 1e-12
    if not area > 0:
        raise ValueError("cross-section has zero area")
    u = total_flow_rate_ul_min * UL_MIN / area
    return fluid.density * u * hydraulic_diameter(width_um, height_um) / fluid.viscosity


@dataclass(frozen=True)
class FlowConditions:
    flow_rate_per_inlet: float          # uL/min
    width_um: float = 100.0
    height_um: float = 100.0
    fluid: FluidSpec = FluidSpec()

    def __post_init__(self):
        if self.flow_rate_per_inlet < 0:
            raise ValueError("flow_rate_per_inlet must be >= 0")

    @classmethod
    def from_total(cls, total_ul_min, width_um=100.0, height_um=100.0, fluid=FluidSpec()):
        return cls(total_ul_min / 2.0, width_um, height_um, fluid)

    @classmethod
    def from_reynolds(cls, re, width_um=100.0, height_um=100.0, fluid=FluidSpec()):
        unit = reynolds_number(1.0, width_um, height_um, fluid)
        return cls.from_total(re / unit, width_um, height_um, fluid)

    @property
    def total_flow_rate(self) -> float:
        """m^3/s"""
        return 2.0 * self.flow_rate_per_inlet * UL_MIN

    @property
    def area(self) -> float:
        return self.width_um * self.height_um * 1e-12

    @property
    def mean_velocity(self) -> float:
        return self.total_flow_rate / self.area

    @property
    def hydraulic_diameter(self) -> float:
        return hydraulic_diameter(self.width_um, self.height_um)

    @property
    def reynolds(self) -> float:
        return reynolds_number(2.0 * self.flow_rate_per_inlet, self.width_um, self.height_um, self.fluid)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-6          # relative steady momentum residual
    poisson_tolerance: float = 1e-8
    max_iterations: int = 2000
    dt_factor: float = 0.1           # pseudo step in units of h_ref^2 / (12 nu)
    scheme: str = "upwind"           # or "blend"
    central_blend: float = 0.0
    convection: bool = True

    def __post_init__(self):
        if not (self.tolerance > 0 and self.poisson_tolerance > 0 and self.max_iterations > 0):
            raise ValueError("solver tolerances and max_iterations must be positive")
        if self.scheme not in ("upwind", "blend"):
            raise ValueError("scheme must be 'upwind' or 'blend'")
        if not 0 <= self.central_blend <= 1:
            raise ValueError("central_blend must lie in [0, 1]")


@dataclass(frozen=True)
class FlowSolution:
    grid: DomainGrid = field(repr=False)
    conditions: FlowConditions
    u: np.ndarray = field(repr=False)           # x-faces, m/s
    v: np.ndarray = field(repr=False)           # y-faces, m/s
    w: np.ndarray = field(repr=False)           # z-faces, m/s
    pressure: np.ndarray = field(repr=False)    # cells, Pa (0 in solid)
    residual_history: tuple = ()
    converged: bool = True
    iterations: int = 0

    @property
    def faces(self):
        return (self.u, self.v, self.w)

    @property
    def mean_velocity(self) -> float:
        return self.conditions.mean_velocity

    def divergence(self) -> np.ndarray:
        """Cell divergence (1/s) on the full cell array; zero in solid."""
        h = self.grid.spacing_m
        div = (np.diff(self.u, axis=0) + np.diff(self.v, axis=1) + np.diff(self.w, axis=2)) / h
        return np.where(self.grid.fluid, div, 0.0)

    def max_normalized_divergence(self) -> float:
        if self.mean_velocity == 0:
            return float(np.abs(self.divergence()).max())
        return float(np.abs(self.divergence()).max() * self.grid.spacing_m / self.mean_velocity)

    def station_flux(self, j: int) -> float:
        """Volumetric flux (m^3/s) through the y-face plane with index ``j``."""
        return float(self.v[:, j, :].sum() * self.grid.spacing_m ** 2)

    def cell_velocity(self) -> np.ndarray:
        """Cell-centred velocity, shape (3, nx, ny, nz)."""
        return np.stack([0.5 * (self.u[1:] + self.u[:-1]),
                         0.5 * (self.v[:, 1:] + self.v[:, :-1]),
                         0.5 * (self.w[:, :, 1:] + self.w[:, :, :-1])])


def inlet_face_velocities(grid: DomainGrid, conditions: FlowConditions) -> np.ndarray:
    """Plug velocities on the j=0 y-faces carrying Q/2 through each inlet."""
    v = np.zeros((grid.dims[0], grid.dims[1] + 1, grid.dims[2]))
    area = grid.spacing_m ** 2
    q = conditions.flow_rate_per_inlet * UL_MIN
    slab = grid.cell_tags[:, 0, :]
    for tag in (CellTag.INLET1, CellTag.INLET2):
        m = slab == tag
        v[:, 0, :][m] = q / (np.count_nonzero(m) * area)
    return v


def _reference_height(grid: DomainGrid) -> float:
    if grid.network is not None:
        w, h = grid.network.cross_section
        return min(w, h) * 1e-6
    return min(grid.dims[0], grid.dims[2]) * grid.spacing_m


def _amg_hierarchy(A):
    """SA hierarchy built under a fixed seed.

    pyamg estimates spectral radii from a random start vector drawn from the
    global numpy state; seeding makes reruns bitwise identical.
    """
    state = np.random.get_state()
    try:
        np.random.seed(0)
        return pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500)
    finally:
        np.random.set_state(state)


def solve_flow(grid: DomainGrid, conditions: FlowConditions, fluid: FluidSpec | None = None,
               solver_cfg: SolverConfig = SolverConfig()) -> FlowSolution:
    fluid = fluid or conditions.fluid
    if fluid != conditions.fluid:
        conditions = FlowConditions(conditions.flow_rate_per_inlet, conditions.width_um,
                                    conditions.height_um, fluid)
    re = conditions.reynolds
    if re > RE_LIMIT:
        raise FlowError(f"Re = {re:.3g} exceeds the laminar design envelope (Re <= {RE_LIMIT})")
    lay = StaggeredLayout.build(grid)
    shape = grid.dims
    if conditions.flow_rate_per_inlet == 0:
        zeros = [np.zeros((shape[0] + 1, shape[1], shape[2])),
                 np.zeros((shape[0], shape[1] + 1, shape[2])),
                 np.zeros((shape[0], shape[1], shape[2] + 1))]
        return FlowSolution(grid, conditions, *zeros, np.zeros(shape), (0.0,), True, 0)

    nu = fluid.kinematic_viscosity
    v_in = inlet_face_velocities(grid, conditions)
    fixed = [np.zeros((shape[0] + 1, shape[1], shape[2])), v_in,
             np.zeros((shape[0], shape[1], shape[2] + 1))]
    G = lay.gradient()
    D = lay.divergence()
    lap = sum(D[a] @ G[a] for a in AXES).tocsr()
    amg = _amg_hierarchy((-lap).tocsr())
    d_in = lay.inlet_divergence(v_in)
    stencils = lay.momentum_operators(nu, fixed)
    dt = solver_cfg.dt_factor * _reference_height(grid) ** 2 / (12 * nu)
    blend = solver_cfg.central_blend if solver_cfg.scheme == "blend" else 0.0

    u = [np.zeros(lay.n_dof[a]) for a in AXES]
    P = np.zeros(lay.n_cells)      # kinematic pressure p/rho
    history = []
    converged = False
    eye = [sp.identity(lay.n_dof[a], format="csr") / dt for a in AXES]
    it = 0
    for it in range(1, solver_cfg.max_iterations + 1):
        faces = [lay.scatter(a, u[a], fixed[a]) for a in AXES]
        res, ops, rhs_b = [], [], []
        for a in AXES:
            st = stencils[a]
            A = st.K
            b = st.b
            if solver_cfg.convection:
                C, bc = st.convection(faces, blend)
                A = A + C
                b = b + bc
            ops.append(A)
            rhs_b.append(b)
            res.append(b - A @ u[a] - G[a] @ P)
        gp = np.sqrt(sum(np.dot(G[a] @ P, G[a] @ P) for a in AXES))
        au = np.sqrt(sum(np.dot(ops[a] @ u[a], ops[a] @ u[a]) for a in AXES))
        rnorm = np.sqrt(sum(np.dot(r, r) for r in res))
        bn = np.sqrt(sum(np.dot(b, b) for b in rhs_b))
        rel = rnorm / max(gp, au, bn, 1e-300)
        history.append(float(rel))
        if it > 1 and rel < solver_cfg.tolerance:
            converged = True
            break
        if not np.isfinite(rel):
            raise FlowError("flow solve diverged", history)
        ustar = []
        for a in AXES:
            M = (eye[a] + ops[a]).tocsr()
            jac = sp.diags(1.0 / M.diagonal())
            delta, info = spla.bicgstab(M, res[a], rtol=1e-8, atol=0.0, M=jac, maxiter=2000)
            if info != 0:
                delta = spla.spsolve(M.tocsc(), res[a])
            ustar.append(u[a] + delta)
        rhs = (sum(D[a] @ ustar[a] for a in AXES) + d_in) / dt
        phi = amg.solve(-rhs, x0=None, tol=solver_cfg.poisson_tolerance, accel="cg", maxiter=500)
        u = [ustar[a] - dt * (G[a] @ phi) for a in AXES]
        # rotational correction keeps high-wavenumber pressure errors from stalling
        P = P + phi - nu * dt * rhs
        if it % 50 == 0:
            log.info("flow iteration %d: residual %.3e", it, rel)
    if not converged:
        raise FlowError(f"flow solver did not converge in {solver_cfg.max_iterations} iterations "
                        f"(last residual {history[-1]:.3e})", history)

    faces = [lay.scatter(a, u[a], fixed[a]) for a in AXES]
    pressure = np.zeros(shape)
    pressure[lay.fluid] = fluid.density * P
    return FlowSolution(grid, conditions, faces[0], faces[1], faces[2], pressure,
                        tuple(history), True, it)


def plug_flow(grid: DomainGrid, conditions: FlowConditions) -> FlowSolution:
    """Uniform streamwise velocity in a straight duct (validation toggle)."""
    if not np.all(grid.fluid == grid.fluid[:, :1, :]):
        raise ValueError("plug flow requires a straight duct")
    shape = grid.dims
    u = np.zeros((shape[0] + 1, shape[1], shape[2]))
    w = np.zeros((shape[0], shape[1], shape[2] + 1))
    n = np.count_nonzero(grid.fluid[:, 0, :])
    vel = conditions.total_flow_rate / (n * grid.spacing_m ** 2)
    v = np.zeros((shape[0], shape[1] + 1, shape[2]))
    v[:, :, :] = np.where(grid.fluid[:, :1, :], vel, 0.0)
    return FlowSolution(grid, conditions, u, v, w, np.zeros(shape), (0.0,), True, 0)


def analytic_duct_profile(aspect_ratio: float, n_terms: int = 50, points: int = 65):
    """Fourier-series Poiseuille flow in a rectangular duct.

    ``aspect_ratio`` is width/height (either orientation; values < 1 are
    inverted).  Returns ``(profile, fRe, umax_over_umean)`` where ``profile``
    is u/U_mean sampled on a ``points`` x ``points`` grid spanning the section
    and ``fRe`` is the Darcy friction factor times Reynolds number.
    ``aspect_ratio = inf`` gives the parallel-plate limit.
    """
    if n_terms < 10:
        raise ValueError("n_terms must be >= 10")
    alpha = aspect_ratio if aspect_ratio >= 1 else 1.0 / aspect_ratio
    # half-gap a = 1 across the short side, half-width b = alpha
    n = np.arange(1, 2 * n_terms, 2, dtype=float)
    sign = (-1.0) ** ((n - 1) // 2)
    x = np.linspace(-1.0, 1.0, points)
    if math.isinf(alpha):
        umean = 2.0 / 3.0
        prof = np.tile((1 - x ** 2) / 2 / umean, (points, 1)).T
        return prof, 96.0, 1.5
    y = np.linspace(-alpha, alpha, points)
    X, Y = np.meshgrid(x, y, indexing="ij")
    u = np.zeros_like(X)
    for nk, sk in zip(n, sign):
        arg = nk * np.pi / 2
        ratio = np.exp(arg * (np.abs(Y) - alpha)) * (1 + np.exp(-2 * arg * np.abs(Y))) / (1 + np.exp(-2 * arg * alpha))
        u += sk * (1 - ratio) * np.cos(arg * X) / nk ** 3
    u *= 16 / np.pi ** 3
    t = np.tanh(n * np.pi * alpha / 2)
    q = 4 * alpha / 3 * (1 - 192 / (np.pi ** 5 * alpha) * np.sum(t / n ** 5))
    umean = q / (4 * alpha)
    umax = 16 / np.pi ** 3 * np.sum(sign * (1 - 1 / np.cosh(n * np.pi * alpha / 2)) / n ** 3)
    dh = 4 * (4 * alpha) / (4 * (1 + alpha))
    fre = 2 * dh ** 2 / umean
    return u / umean, float(fre), float(umax / umean)


def duct_pressure_drop(fre: float, viscosity: float, mean_velocity: float, length_m: float,
                       dh_m: float) -> float:
    """Fully developed Darcy pressure drop."""
    return fre * viscosity * mean_velocity * length_m / (2 * dh_m ** 2)


def mixed_cup_pressure(solution: FlowSolution, j: int) -> float:
    """Flux-weighted mean pressure over the fluid cells of slab ``j``."""
    vel = solution.cell_velocity()[1][:, j, :]
    m = solution.grid.fluid[:, j, :]
    wgt = np.where(m, np.maximum(vel, 0.0), 0.0)
    if wgt.sum() == 0:
        return float(solution.pressure[:, j, :][m].mean()) if m.any() else 0.0
    return float((solution.pressure[:, j, :] * wgt).sum() / wgt.sum())


def pressure_drop(solution: FlowSolution, grid: DomainGrid | None = None) -> float:
    """Mixed-cup pressure difference between the inlet plane and the outlet plane (Pa).

    The inlet-plane value is extrapolated half a cell upstream from the first
    two slabs; the outlet plane carries the pinned gauge pressure 0.
    """
    if not solution.converged:
        raise FlowError("pressure drop requested for an unconverged solution", solution.residual_history)
    if solution.conditions.flow_rate_per_inlet == 0:
        return 0.0
    p0 = mixed_cup_pressure(solution, 0)
    p1 = mixed_cup_pressure(solution, 1)
    return float(p0 + 0.5 * (p0 - p1))
