"""Steady species transport on a frozen flow field.

Finite-volume discretization on the voxel cells: first-order upwind
convection written in advective form (row sums vanish, so the discrete
maximum principle holds exactly), two-point diffusion between fluid
neighbours, and zero diffusive flux through walls, inlet and outlet planes.
Steady states are reached by implicit pseudo-time marching.

Three chemistry modes share this machinery: a passive scalar, infinitely
fast 1:1 bimolecular reaction through the mixture fraction, and finite-rate
kinetics ``A + B -> P`` with rate ``k c_A c_B``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .flow import FlowSolution
from .geometry import CellTag, DomainGrid

log = logging.getLogger(__name__)

MOLAR = 1000.0          # mol/m^3 per mol/L
MAP_TOLERANCE = 1e-9


class TransportError(RuntimeError):
    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    diffusivity: float                              # m^2/s
    inlet_concentration: tuple[float, float]        # mol/m^3 at (inlet1, inlet2)

    def __post_init__(self):
        if not self.diffusivity >= 0:
            raise ValueError(f"{self.name}: diffusivity must be >= 0")
        if min(self.inlet_concentration) < 0:
            raise ValueError(f"{self.name}: inlet concentrations must be >= 0")


@dataclass(frozen=True)
class ReactionSystem:
    oxidant: SpeciesSpec            # A, stream 1
    reductant: SpeciesSpec          # B, stream 2
    rate_constant: float = math.inf  # m^3/(mol s); inf selects fast chemistry
    product: SpeciesSpec | None = None

    def __post_init__(self):
        if not self.rate_constant >= 0:
            raise ValueError("rate_constant must be >= 0 or inf")
        if self.oxidant.inlet_concentration[1] != 0 or self.reductant.inlet_concentration[0] != 0:
            raise ValueError("oxidant must enter through inlet1 only and reductant through inlet2 only")
        if self.product is None:
            object.__setattr__(self, "product",
                               SpeciesSpec("P", self.oxidant.diffusivity, (0.0, 0.0)))

    @classmethod
    def redox(cls, oxidant_molar, reductant_molar, diffusivity, k_per_molar_s=math.inf,
              reductant_diffusivity=None):
        """Build from concentrations in mol/L and a rate constant in 1/(M s)."""
        d_b = diffusivity if reductant_diffusivity is None else reductant_diffusivity
        return cls(SpeciesSpec("I2", diffusivity, (oxidant_molar * MOLAR, 0.0)),
                   SpeciesSpec("AA", d_b, (0.0, reductant_molar * MOLAR)),
                   k_per_molar_s / MOLAR,
                   SpeciesSpec("P", diffusivity, (0.0, 0.0)))

    @property
    def c_a0(self) -> float:
        return self.oxidant.inlet_concentration[0]

    @property
    def c_b0(self) -> float:
        return self.reductant.inlet_concentration[1]


@dataclass(frozen=True)
class TransportConfig:
    tolerance: float = 1e-6
    max_iterations: int = 200
    pseudo_cfl: float = 1e4          # pseudo step in units of h / U_mean
    scheme: str = "upwind"           # or "limited" (van Leer, deferred correction)

    def __post_init__(self):
        if self.scheme not in ("upwind", "limited"):
            raise ValueError("scheme must be 'upwind' or 'limited'")


@dataclass(frozen=True)
class SpeciesFields:
    grid: DomainGrid = field(repr=False)
    mode: str                                   # passive | fast | finite
    concentrations: dict = field(repr=False)    # name -> (nx, ny, nz) array
    mixture_fraction: np.ndarray | None = field(default=None, repr=False)
    system: ReactionSystem | None = None
    inlet_values: dict = field(default_factory=dict)   # name -> (c_inlet1, c_inlet2)
    residual_history: tuple = ()

    def __getitem__(self, name):
        return self.concentrations[name]

    @property
    def oxidant_name(self):
        return None if self.system is None else self.system.oxidant.name


class _ScalarOperator:
    """Assembled advection-diffusion operator A (m^3/s units) for one diffusivity."""

    def __init__(self, flow: FlowSolution, diffusivity: float):
        grid = flow.grid
        self.grid = grid
        fluid = grid.fluid
        self.fluid = fluid
        h = grid.spacing_m
        self.h = h
        self.volume = h ** 3
        ids = np.full(grid.dims, -1, dtype=np.int64)
        ids[fluid] = np.arange(np.count_nonzero(fluid))
        self.ids = ids
        n = int(np.count_nonzero(fluid))
        self.n = n
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        faces = flow.faces
        self.links = []
        for a in range(3):
            F = faces[a] * h * h        # volumetric flux, positive along +axis
            sl_lo = [slice(None)] * 3
            sl_hi = [slice(None)] * 3
            sl_lo[a] = slice(0, grid.dims[a] - 1)
            sl_hi[a] = slice(1, grid.dims[a])
            lo_ids = ids[tuple(sl_lo)]
            hi_ids = ids[tuple(sl_hi)]
            sl_f = [slice(None)] * 3
            sl_f[a] = slice(1, grid.dims[a])
            f_int = F[tuple(sl_f)]
            m = (lo_ids >= 0) & (hi_ids >= 0)
            lo, hi, f = lo_ids[m], hi_ids[m], f_int[m]
            self.links.append((lo, hi, f))
            pos = np.maximum(f, 0.0)   # flow lo -> hi: inflow into hi
            neg = np.maximum(-f, 0.0)  # flow hi -> lo: inflow into lo
            dcoef = diffusivity * h
            np.add.at(diag, hi, pos + dcoef)
            np.add.at(diag, lo, neg + dcoef)
            rows += [hi, lo, hi, lo]
            cols += [lo, hi, lo, hi]
            vals += [-pos, -neg, np.full(len(lo), -dcoef), np.full(len(lo), -dcoef)]
        # inlet plane (y faces j = 0)
        slab = grid.cell_tags[:, 0, :]
        inlet = np.isin(slab, (CellTag.INLET1, CellTag.INLET2))
        self.inlet_ids = ids[:, 0, :][inlet]
        self.inlet_flux = np.maximum(faces[1][:, 0, :][inlet] * h * h, 0.0)
        self.inlet_stream = np.where(slab[inlet] == CellTag.INLET1, 0, 1)
        np.add.at(diag, self.inlet_ids, self.inlet_flux)
        rows.append(np.arange(n)); cols.append(np.arange(n)); vals.append(diag)
        self.A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n))
        self.diag = diag

    def inlet_rhs(self, values):
        b = np.zeros(self.n)
        np.add.at(b, self.inlet_ids, self.inlet_flux * np.asarray(values, float)[self.inlet_stream])
        return b

    def to_grid(self, x):
        out = np.zeros(self.grid.dims)
        out[self.fluid] = x
        return out

    def limited_correction(self, c):
        """Deferred-correction rhs turning upwind face values into van Leer TVD ones."""
        corr = np.zeros(self.n)
        for a, (lo, hi, f) in enumerate(self.links):
            # upwind/downwind along each link; far-upwind by walking one link back
            up = np.where(f >= 0, lo, hi)
            dn = np.where(f >= 0, hi, lo)
            far = _far_upwind(self.ids, self.grid.dims, a, up, f >= 0)
            cu, cd = c[up], c[dn]
            cf = np.where(far >= 0, c[np.maximum(far, 0)], cu)
            d_dn = cd - cu
            d_up = cu - cf
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(np.abs(d_dn) > 1e-300, d_up / d_dn, 0.0)
            psi = (r + np.abs(r)) / (1 + np.abs(r))
            flux = np.abs(f) * 0.5 * psi * d_dn
            # outflow of extra flux from up cell into dn cell, advective form
            np.add.at(corr, up, -flux)
            np.add.at(corr, dn, flux)
        return corr


def _far_upwind(ids, dims, axis, up, forward):
    """Cell id one step further upstream of ``up`` along ``axis`` (or -1)."""
    flat = np.flatnonzero(ids.ravel() >= 0)
    pos = np.array(np.unravel_index(flat[up], dims))
    step = np.where(forward, -1, 1)
    pos[axis] = pos[axis] + step
    ok = (pos[axis] >= 0) & (pos[axis] < dims[axis])
    pos[axis] = np.clip(pos[axis], 0, dims[axis] - 1)
    far = ids[tuple(pos)]
    return np.where(ok, far, -1)


def _march_linear(op: _ScalarOperator, b: np.ndarray, cfg: TransportConfig, velocity: float,
                  x0=None, name="scalar"):
    """Pseudo-time march A c = b (+ optional TVD correction) to a steady state."""
    dtau = cfg.pseudo_cfl * op.h / max(velocity, 1e-30)
    mass = op.volume / dtau
    M = (op.A + sp.identity(op.n, format="csr") * mass).tocsc()
    lu = spla.splu(M)
    x = np.zeros(op.n) if x0 is None else x0.copy()
    bnorm = max(np.linalg.norm(b), 1e-300)
    history = []
    for it in range(cfg.max_iterations):
        rhs = b + (op.limited_correction(x) if cfg.scheme == "limited" else 0.0)
        r = rhs - op.A @ x
        rel = float(np.linalg.norm(r) / bnorm)
        history.append(rel)
        if rel < cfg.tolerance:
            return x, history
        x = x + lu.solve(r)
    raise TransportError(f"{name} transport did not converge (residual {history[-1]:.3e})", history)


def _mean_speed(flow: FlowSolution) -> float:
    u = flow.mean_velocity
    return u if u > 0 else float(np.abs(flow.v).max() or 1.0)


def _bounded(x, lo, hi):
    over = max(float(x.max(initial=lo) - hi), float(lo - x.min(initial=hi)), 0.0)
    if over > 1e-8 * max(abs(hi - lo), 1.0):
        log.warning("scalar exceeds inlet bounds by %.3e before clipping", over)
    return np.clip(x, lo, hi)


def solve_passive_scalar(flow: FlowSolution, grid: DomainGrid | None, diffusivity: float,
                         inlet_pattern=(1.0, 0.0), cfg: TransportConfig = TransportConfig(),
                         name: str = "c") -> SpeciesFields:
    grid = grid or flow.grid
    if not flow.converged:
        raise TransportError("flow solution is not converged")
    op = _ScalarOperator(flow, diffusivity)
    x, hist = _march_linear(op, op.inlet_rhs(inlet_pattern), cfg, _mean_speed(flow), name=name)
    lo, hi = min(inlet_pattern), max(inlet_pattern)
    c = op.to_grid(_bounded(x, lo, hi))
    return SpeciesFields(grid, "passive", {name: c}, None, None,
                         {name: tuple(float(v) for v in inlet_pattern)}, tuple(hist))


def stoichiometric_fraction(system: ReactionSystem) -> float:
    a0, b0 = system.c_a0, system.c_b0
    if a0 + b0 <= 0:
        raise ValueError("both inlet concentrations are zero")
    return b0 / (a0 + b0)


def fast_chemistry_map(Z, system: ReactionSystem):
    """Map mixture fraction to (c_A, c_B, c_P) for infinitely fast A + B -> P."""
    Z = np.asarray(Z, dtype=float)
    if np.any(Z < -MAP_TOLERANCE) or np.any(Z > 1 + MAP_TOLERANCE):
        raise ValueError("mixture fraction outside [0, 1]")
    Z = np.clip(Z, 0.0, 1.0)
    a = Z * system.c_a0
    b = (1.0 - Z) * system.c_b0
    xi = np.minimum(a, b)
    return a - xi, b - xi, xi


def solve_fast_reaction(flow: FlowSolution, grid: DomainGrid | None, system: ReactionSystem,
                        cfg: TransportConfig = TransportConfig()) -> SpeciesFields:
    if system.oxidant.diffusivity != system.reductant.diffusivity:
        raise ValueError("fast-chemistry mode requires equal diffusivities")
    z = solve_passive_scalar(flow, grid, system.oxidant.diffusivity, (1.0, 0.0), cfg, name="Z")
    Z = z["Z"]
    ca, cb, cp = fast_chemistry_map(Z, system)
    fluid = z.grid.fluid
    conc = {system.oxidant.name: np.where(fluid, ca, 0.0),
            system.reductant.name: np.where(fluid, cb, 0.0),
            system.product.name: np.where(fluid, cp, 0.0)}
    inlet = {system.oxidant.name: system.oxidant.inlet_concentration,
             system.reductant.name: system.reductant.inlet_concentration,
             system.product.name: (0.0, 0.0), "Z": (1.0, 0.0)}
    return SpeciesFields(z.grid, "fast", conc, Z, system, inlet, z.residual_history)


def solve_finite_rate(flow: FlowSolution, grid: DomainGrid | None, system: ReactionSystem,
                      cfg: TransportConfig = TransportConfig(max_iterations=400),
                      initial: SpeciesFields | None = None) -> SpeciesFields:
    """Steady A + B -> P with rate k c_A c_B by damped Newton pseudo-time marching."""
    grid = grid or flow.grid
    if not math.isfinite(system.rate_constant):
        raise ValueError("finite-rate mode needs a finite rate constant; use solve_fast_reaction")
    if not flow.converged:
        raise TransportError("flow solution is not converged")
    op_a = _ScalarOperator(flow, system.oxidant.diffusivity)
    op_b = op_a if system.reductant.diffusivity == system.oxidant.diffusivity else \
        _ScalarOperator(flow, system.reductant.diffusivity)
    n = op_a.n
    V = op_a.volume
    k = system.rate_constant
    b_a = op_a.inlet_rhs(system.oxidant.inlet_concentration)
    b_b = op_b.inlet_rhs(system.reductant.inlet_concentration)
    scale = max(np.linalg.norm(b_a), np.linalg.norm(b_b), 1e-300)
    speed = _mean_speed(flow)

    if initial is not None:
        ca = initial[system.oxidant.name][grid.fluid].copy()
        cb = initial[system.reductant.name][grid.fluid].copy()
    else:
        plain = TransportConfig(cfg.tolerance, cfg.max_iterations, cfg.pseudo_cfl, "upwind")
        ca, _ = _march_linear(op_a, b_a, plain, speed, name=system.oxidant.name)
        cb, _ = _march_linear(op_b, b_b, plain, speed, name=system.reductant.name)
    history = []
    dtau = 10.0 * op_a.h / speed
    prev = None
    for it in range(cfg.max_iterations):
        rate = k * ca * cb * V
        ra = b_a - op_a.A @ ca - rate
        rb = b_b - op_b.A @ cb - rate
        rel = float(np.sqrt(ra @ ra + rb @ rb) / scale)
        history.append(rel)
        if rel < cfg.tolerance:
            break
        if not np.isfinite(rel):
            raise TransportError("finite-rate solve diverged; try fast-chemistry mode", history)
        if prev is not None:
            dtau = min(dtau * min(max(prev / rel, 0.5), 10.0), 1e12)
        prev = rel
        m = V / dtau
        J = sp.bmat([[op_a.A + sp.diags(k * V * cb + m), sp.diags(k * V * ca)],
                     [sp.diags(k * V * cb), op_b.A + sp.diags(k * V * ca + m)]], format="csc")
        dx = spla.spsolve(J, np.concatenate([ra, rb]))
        ca = np.maximum(ca + dx[:n], 0.0)
        cb = np.maximum(cb + dx[n:], 0.0)
    else:
        raise TransportError(
            f"finite-rate solve did not converge in {cfg.max_iterations} iterations "
            f"(residual {history[-1]:.3e}); the kinetics may be too stiff, consider fast-chemistry mode",
            history)
    # product: linear transport with the converged source
    op_p = op_a if system.product.diffusivity == system.oxidant.diffusivity else \
        _ScalarOperator(flow, system.product.diffusivity)
    src = k * ca * cb * V
    plain = TransportConfig(cfg.tolerance, cfg.max_iterations, cfg.pseudo_cfl, "upwind")
    cp, _ = _march_linear(op_p, src + op_p.inlet_rhs((0.0, 0.0)), plain, speed, name="P") \
        if src.any() else (np.zeros(n), [])
    conc = {system.oxidant.name: op_a.to_grid(ca), system.reductant.name: op_a.to_grid(cb),
            system.product.name: op_a.to_grid(np.maximum(cp, 0.0))}
    inlet = {system.oxidant.name: system.oxidant.inlet_concentration,
             system.reductant.name: system.reductant.inlet_concentration,
             system.product.name: (0.0, 0.0)}
    return SpeciesFields(grid, "finite", conc, None, system, inlet, tuple(history))
