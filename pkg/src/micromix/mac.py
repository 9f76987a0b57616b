"""Staggered (MAC) grid bookkeeping and sparse operators on a voxel domain.

Cells are indexed ``(i, j, k)`` on ``(nx, ny, nz)``.  Face arrays follow the
usual MAC convention: x-faces have shape ``(nx+1, ny, nz)`` and face ``i`` lies
between cells ``i-1`` and ``i``; likewise for y and z.  The inflow plane is
``j = 0`` (prescribed face velocities on inlet cells) and the outflow plane is
``j = ny`` (unknown face velocities, zero streamwise gradient, pressure pinned
to zero on the plane).  Everything else bounding the fluid is a no-slip wall.

Operators are built once per grid in SI units (``h`` in metres).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import CellTag, DomainGrid

AXES = (0, 1, 2)
INLET_TAGS = (CellTag.INLET1, CellTag.INLET2)

# neighbour classes for a face DOF
_COUPLED, _KNOWN, _ZERO, _MIRROR, _ZEROGRAD = range(5)


def face_shape(dims, axis):
    shape = list(dims)
    shape[axis] += 1
    return tuple(shape)


def _shift(a, axis, s, fill):
    """Return b with b[idx] = a[idx + s*e_axis], ``fill`` where out of range."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if s > 0:
        src[axis], dst[axis] = slice(s, None), slice(None, -s)
    else:
        src[axis], dst[axis] = slice(None, s), slice(-s, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


@dataclass
class StaggeredLayout:
    """Face/cell numbering for one voxel domain."""

    grid: DomainGrid
    h: float
    fluid: np.ndarray
    cell_id: np.ndarray          # (nx, ny, nz) -> fluid cell index or -1
    n_cells: int
    face_dof: list               # per axis: face array -> DOF index (component local) or -1
    face_fixed: list             # per axis: bool array of prescribed faces
    n_dof: list
    inlet_mask: np.ndarray       # (nx, nz) inlet cells of slab 0
    outlet_mask: np.ndarray      # (nx, nz) fluid cells of last slab

    @classmethod
    def build(cls, grid: DomainGrid) -> "StaggeredLayout":
        tags = grid.cell_tags
        fluid = tags != CellTag.SOLID
        nx, ny, nz = grid.dims
        cell_id = np.full(grid.dims, -1, dtype=np.int64)
        cell_id[fluid] = np.arange(np.count_nonzero(fluid))
        inlet = np.isin(tags[:, 0, :], INLET_TAGS)
        outlet = fluid[:, -1, :]
        face_dof, face_fixed, n_dof = [], [], []
        for a in AXES:
            lo = _shift(fluid, a, -1, False)      # cell on the low side of face idx (same idx cell is high side)
            active = np.zeros(face_shape(grid.dims, a), dtype=bool)
            sl_int = [slice(None)] * 3
            sl_int[a] = slice(1, grid.dims[a])
            active[tuple(sl_int)] = (fluid & lo)[tuple(sl_int)]
            fixed = np.zeros_like(active)
            if a == 1:
                active[:, ny, :] = outlet
                fixed[:, 0, :] = inlet
            dof = np.full(active.shape, -1, dtype=np.int64)
            dof[active] = np.arange(np.count_nonzero(active))
            face_dof.append(dof)
            face_fixed.append(fixed)
            n_dof.append(int(np.count_nonzero(active)))
        return cls(grid, grid.spacing_m, fluid, cell_id, int(np.count_nonzero(fluid)),
                   face_dof, face_fixed, n_dof, inlet, outlet)

    # ------------------------------------------------------------------
    def gather(self, axis, full):
        return full[self.face_dof[axis] >= 0]

    def scatter(self, axis, values, fixed_values=None):
        full = np.zeros(face_shape(self.grid.dims, axis))
        if fixed_values is not None:
            full[self.face_fixed[axis]] = fixed_values[self.face_fixed[axis]]
        full[self.face_dof[axis] >= 0] = values
        return full

    def cells_adjacent(self, axis):
        """For each DOF face of ``axis``: (low cell id, high cell id), -1 if none."""
        dof = self.face_dof[axis]
        idx = np.nonzero(dof >= 0)
        order = np.argsort(dof[idx])
        idx = tuple(i[order] for i in idx)
        lo = list(idx)
        lo[axis] = idx[axis] - 1
        hi = list(idx)
        n = self.grid.dims[axis]
        valid_hi = idx[axis] < n
        hi_ids = np.full(len(idx[0]), -1, dtype=np.int64)
        hi_clip = list(hi)
        hi_clip[axis] = np.minimum(idx[axis], n - 1)
        hi_ids[valid_hi] = self.cell_id[tuple(hi_clip)][valid_hi]
        lo_ids = self.cell_id[tuple(lo)]
        return lo_ids, hi_ids

    # ------------------------------------------------------------------
    def gradient(self):
        """Sparse G: cell pressure -> DOF face gradients, stacked over components."""
        blocks = []
        h = self.h
        for a in AXES:
            lo, hi = self.cells_adjacent(a)
            n = self.n_dof[a]
            rows = np.arange(n)
            outlet = hi < 0
            data_lo = np.where(outlet, -2.0 / h, -1.0 / h)
            r = np.concatenate([rows, rows[~outlet]])
            c = np.concatenate([lo, hi[~outlet]])
            d = np.concatenate([data_lo, np.full(np.count_nonzero(~outlet), 1.0 / h)])
            blocks.append(sp.csr_matrix((d, (r, c)), shape=(n, self.n_cells)))
        return blocks

    def divergence(self):
        """Sparse D per component (cells x DOFs) and the inlet contribution factor.

        div = sum_a D_a @ u_a + D_in @ v_inlet_faces, with D_in folded by the caller.
        """
        blocks = []
        h = self.h
        for a in AXES:
            lo, hi = self.cells_adjacent(a)
            n = self.n_dof[a]
            cols = np.arange(n)
            has_hi = hi >= 0
            r = np.concatenate([lo, hi[has_hi]])
            c = np.concatenate([cols, cols[has_hi]])
            d = np.concatenate([np.full(n, 1.0 / h), np.full(np.count_nonzero(has_hi), -1.0 / h)])
            blocks.append(sp.csr_matrix((d, (r, c)), shape=(self.n_cells, n)))
        return blocks

    def inlet_divergence(self, v_faces):
        """Divergence contribution of prescribed inlet face velocities (y-faces j=0)."""
        out = np.zeros(self.n_cells)
        ids = self.cell_id[:, 0, :][self.inlet_mask]
        out[ids] = -v_faces[:, 0, :][self.inlet_mask] / self.h
        return out

    # ------------------------------------------------------------------
    def _neighbour_classes(self, c):
        """Classify the six neighbours of every DOF face of component ``c``.

        Returns a list of (d, s, cls, nb_dof, nb_index) with per-DOF arrays.
        """
        dof = self.face_dof[c]
        fixed = self.face_fixed[c]
        idx = np.nonzero(dof >= 0)
        order = np.argsort(dof[idx])
        idx = tuple(i[order] for i in idx)
        shape = dof.shape
        out = []
        for d in AXES:
            for s in (-1, 1):
                nb = list(idx)
                nb[d] = idx[d] + s
                inb = (nb[d] >= 0) & (nb[d] < shape[d])
                nbc = list(nb)
                nbc[d] = np.clip(nb[d], 0, shape[d] - 1)
                nbc = tuple(nbc)
                nb_dof = np.where(inb, dof[nbc], -1)
                nb_fixed = inb & fixed[nbc]
                cls = np.full(len(idx[0]), _MIRROR, dtype=np.int8)
                if d == c:
                    cls[:] = _ZERO
                cls[nb_fixed] = _KNOWN
                cls[nb_dof >= 0] = _COUPLED
                if d == 1:
                    if s > 0:
                        cls[~inb] = _ZEROGRAD
                    elif c != 1:
                        cls[~inb] = _MIRROR
                out.append((d, s, cls, nb_dof, nbc))
        return idx, out

    def momentum_operators(self, nu, fixed_full):
        """Viscous operator per component: (K_c, b_c) with K_c u_c = b_c + ... ."""
        res = []
        for c in AXES:
            idx, nbs = self._neighbour_classes(c)
            res.append(_ViscousStencil(self, c, idx, nbs, nu, fixed_full[c]))
        return res


class _ViscousStencil:
    """Assembles -nu*lap(u_c) + upwind convection for one velocity component."""

    def __init__(self, layout, c, idx, nbs, nu, fixed_full):
        self.layout = layout
        self.c = c
        self.idx = idx
        self.nbs = nbs
        n = layout.n_dof[c]
        h2 = layout.h ** 2
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        rhs = np.zeros(n)
        ar = np.arange(n)
        for d, s, cls, nb_dof, nbc in nbs:
            coef = nu / h2
            m = cls == _COUPLED
            diag += np.where(m, coef, 0.0)
            rows.append(ar[m]); cols.append(nb_dof[m]); vals.append(np.full(np.count_nonzero(m), -coef))
            m = cls == _KNOWN
            diag += np.where(m, coef, 0.0)
            rhs += np.where(m, coef * fixed_full[nbc], 0.0)
            diag += np.where(cls == _ZERO, coef, 0.0)
            diag += np.where(cls == _MIRROR, 2 * coef, 0.0)
        rows.append(ar); cols.append(ar); vals.append(diag)
        self.K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n))
        self.b = rhs
        self.fixed_full = fixed_full

    def convection(self, faces, blend=0.0):
        """Oseen upwind (optionally central-blended) convection matrix and rhs.

        ``faces`` are the full face arrays of the advecting velocity (m/s).
        """
        lay = self.layout
        c = self.c
        h = lay.h
        n = lay.n_dof[c]
        ar = np.arange(n)
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        rhs = np.zeros(n)
        uc = faces[c]
        for d, s, cls, nb_dof, nbc in self.nbs:
            a = _advecting_velocity(faces, self.idx, c, d, s, lay.grid.dims)
            F = s * a / h                   # outward flux per unit volume
            out = np.maximum(F, 0.0)
            inn = np.minimum(F, 0.0)
            # upwind part
            w_own = out * (1 - blend) + F * 0.5 * blend
            w_nb = inn * (1 - blend) + F * 0.5 * blend
            diag += w_own
            m = cls == _COUPLED
            rows.append(ar[m]); cols.append(nb_dof[m]); vals.append(w_nb[m])
            m = cls == _KNOWN
            rhs -= np.where(m, w_nb * self.fixed_full[nbc], 0.0)
            diag += np.where(cls == _ZEROGRAD, w_nb, 0.0)
        rows.append(ar); cols.append(ar); vals.append(diag)
        C = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        return C, rhs


def _advecting_velocity(faces, idx, c, d, s, dims):
    """Normal velocity of component ``d`` at the ``s`` side of the control volume
    centred on faces ``idx`` of component ``c``."""
    if d == c:
        uc = faces[c]
        own = uc[idx]
        nb = list(idx)
        nb[d] = idx[d] + s
        inb = (nb[d] >= 0) & (nb[d] < uc.shape[d])
        nb[d] = np.clip(nb[d], 0, uc.shape[d] - 1)
        other = np.where(inb, uc[tuple(nb)], own)
        return 0.5 * (own + other)
    ud = faces[d]
    j = idx[d] + (1 if s > 0 else 0)
    vals = []
    cnt = np.zeros(len(idx[0]))
    tot = np.zeros(len(idx[0]))
    for off in (-1, 0):
        ci = idx[c] + off
        ok = (ci >= 0) & (ci < dims[c])
        sel = list(idx)
        sel[d] = j
        sel[c] = np.clip(ci, 0, dims[c] - 1)
        tot += np.where(ok, ud[tuple(sel)], 0.0)
        cnt += ok
    return tot / np.maximum(cnt, 1)
