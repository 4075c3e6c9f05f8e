"""Plane-strain elastodynamics driven by two D2Q5 wave fields.

Dilatation ``phi = div u`` and rotation ``psi = curl u`` are advanced by the
lattice-Boltzmann scheme; displacements follow from the Navier-Cauchy
acceleration ``c_d^2 grad phi - c_s^2 curl(psi e_z)`` and an explicit Newmark
update.  Boundary nodes get their acceleration from a cell momentum balance
(traction) or from the prescribed displacement, after which their wave fields
are rebuilt from the new displacement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Union

import numpy as np
import scipy.sparse as sp

from . import fields as fd
from .fields import Material, Stress
from .geometry import BoundaryCell, Lattice
from .wave_lbm import LbmParams, collide, derive_lbm_params, equilibrium, macro_moments, stream

log = logging.getLogger(__name__)

LoadFn = Callable[[float], float]


def _unit(t: float) -> float:
    return 1.0


@dataclass(frozen=True)
class Neumann:
    """Prescribed traction ``load(t) * traction`` on every segment of a boundary part."""

    traction: tuple[float, float] = (0.0, 0.0)
    load: LoadFn = _unit

    def at(self, t: float) -> np.ndarray:
        return self.load(t) * np.asarray(self.traction, dtype=float)


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed displacement ``load(t) * displacement``."""

    displacement: tuple[float, float] = (0.0, 0.0)
    load: LoadFn = _unit

    def at(self, t: float) -> np.ndarray:
        return self.load(t) * np.asarray(self.displacement, dtype=float)


BoundaryCondition = Union[Neumann, Dirichlet]
FREE = Neumann()


class NumericalInstability(RuntimeError):
    def __init__(self, step: int, t: float, node: tuple[int, int],
                 what: str = "non-finite displacement"):
        super().__init__(f"{what} at step {step}, t={t:.6g}, node {node}")
        self.step = step
        self.t = t
        self.node = node


@dataclass
class KinematicState:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, shape) -> KinematicState:
        return cls(np.zeros((2,) + tuple(shape)), np.zeros((2,) + tuple(shape)),
                   np.zeros((2,) + tuple(shape)))


@dataclass
class SolverState:
    kin: KinematicState
    f_phi: np.ndarray
    f_psi: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    step: int = 0

    @property
    def t(self) -> float:
        return self.kin.t

    @property
    def u(self) -> np.ndarray:
        return self.kin.u


# ---------------------------------------------------------------------------
# pointwise kernels


def dirichlet_acceleration(u_star, u, v, dt: float) -> np.ndarray:
    """Acceleration that makes the Newmark update land exactly on ``u_star``."""
    u_star, u, v = (np.asarray(q, dtype=float) for q in (u_star, u, v))
    return (2.0 / dt**2) * (u_star - u) - (2.0 / dt) * v


def newmark_integrate(kin: KinematicState, acc: np.ndarray, dt: float) -> KinematicState:
    u = kin.u + dt * kin.v + (0.5 * dt * dt) * acc
    v = kin.v + dt * acc
    return KinematicState(u, v, acc, kin.t + dt)


def neumann_acceleration(cell: BoundaryCell, sigma: Stress, traction, material: Material,
                         t: float = 0.0) -> np.ndarray:
    """Cell momentum balance for one boundary node.

    ``traction(midpoint, label, t)`` returns the prescribed traction vector on an
    external segment; stresses on internal segments are the mean of the two
    nodal values.
    """
    k = cell.node
    sk = np.array([[sigma.xx.flat[k], sigma.xy.flat[k]], [sigma.xy.flat[k], sigma.yy.flat[k]]])
    force = np.zeros(2)
    for seg in cell.internal:
        r = seg.neighbor
        sr = np.array([[sigma.xx.flat[r], sigma.xy.flat[r]], [sigma.xy.flat[r], sigma.yy.flat[r]]])
        force += 0.5 * (sk + sr) @ np.asarray(seg.normal) * seg.length
    for seg in cell.external:
        force += np.asarray(traction(seg.midpoint, seg.label, t), dtype=float) * seg.length
    return force / (material.rho * cell.volume)


def interior_acceleration(phi: np.ndarray, psi: np.ndarray, material: Material,
                          lattice: Lattice) -> np.ndarray:
    """``c_d^2 grad phi - c_s^2 curl(psi e_z)`` at every non-boundary material node."""
    acc = (material.c_d**2 * fd.grad_scalar(phi, lattice)
           - material.c_s**2 * fd.curl_out_of_plane(psi, lattice))
    acc *= lattice.material & ~lattice.boundary
    return acc


def boundary_distribution_reset(value_new, J_old, params: LbmParams) -> np.ndarray:
    """Populations carrying the new scalar value but the previous flux."""
    return equilibrium(value_new, J_old, params)


def advance_field(f: np.ndarray, lattice: Lattice, boundary_nodes: np.ndarray,
                  value_old: np.ndarray, value_new: np.ndarray, params: LbmParams) -> np.ndarray:
    """Collide and stream one wave field; boundary nodes act as value sources.

    A boundary node holds the populations streamed into it during the
    previous update, and with them the flux J.  Its outgoing populations are
    those populations collided against the equilibrium of the boundary value
    averaged over the step (``value_old``, ``value_new``), with that flux.
    Interior nodes see the boundary value as a Dirichlet condition of the
    equivalent three-level scheme.
    """
    n = lattice.size
    flat = f.reshape(5, n)
    f_old_b = flat[:, boundary_nodes]
    _, j_old = macro_moments(f_old_b, params)
    f_mid = boundary_distribution_reset(0.5 * (value_old + value_new), j_old, params)
    src = collide(f, params).reshape(5, n)
    src[:, boundary_nodes] = 2.0 * f_mid - f_old_b
    return stream(src.reshape(f.shape), lattice)


def consistency_error(state: SolverState, lattice: Lattice) -> np.ndarray:
    """Per-node mismatch between the wave fields and FD curl/div of ``u``.

    The wave fields are the zeroth moments of the populations, except at
    boundary nodes, where they are the values set from the displacement.
    """
    e_psi = state.psi - fd.curl2d(state.u, lattice)
    e_phi = state.phi - fd.div2d(state.u, lattice)
    return np.hypot(e_psi, e_phi) * lattice.material


# ---------------------------------------------------------------------------
# boundary model shared with the reference solver


class BoundaryModel:
    """Vectorized boundary accelerations for a lattice, material and BC set.

    Boundary nodes touching any Dirichlet part are Dirichlet nodes; all others
    use the cell momentum balance.  Parts without an assignment are
    traction-free.
    """

    def __init__(self, lattice: Lattice, material: Material,
                 bcs: Mapping[str, BoundaryCondition]):
        self.lattice = lattice
        self.material = material
        self.bcs = dict(bcs)
        labels = {seg.label for c in lattice.cells.values() for seg in c.external}
        unknown = set(self.bcs) - labels
        if unknown:
            log.warning("boundary conditions for absent boundary parts: %s", sorted(unknown))
        dirichlet_labels = [lab for lab, bc in self.bcs.items() if isinstance(bc, Dirichlet)]

        neu, dir_nodes, dir_labels = [], [], []
        for k in sorted(lattice.cells):
            cell = lattice.cells[k]
            hit = [lab for lab in dirichlet_labels if any(s.label == lab for s in cell.external)]
            if hit:
                dir_nodes.append(k)
                dir_labels.append(hit[0])
            else:
                neu.append(k)
        self.neumann_nodes = np.array(neu, dtype=np.int64)
        self.dirichlet_nodes = np.array(dir_nodes, dtype=np.int64)
        self.dirichlet_groups = {
            lab: self.dirichlet_nodes[[i for i, d in enumerate(dir_labels) if d == lab]]
            for lab in set(dir_labels)
        }

        n = lattice.size
        rows, cols, wx, wy = [], [], [], []
        ext: dict[str, np.ndarray] = {}
        for r, k in enumerate(neu):
            cell = lattice.cells[k]
            inv_m = 1.0 / (material.rho * cell.volume)
            for seg in cell.internal:
                coef = 0.5 * seg.length * inv_m
                for node in (k, seg.neighbor):
                    rows.append(r)
                    cols.append(node)
                    wx.append(coef * seg.normal[0])
                    wy.append(coef * seg.normal[1])
            for seg in cell.external:
                w = ext.setdefault(seg.label, np.zeros(len(neu)))
                w[r] += seg.length * inv_m
        shape = (len(neu), n)
        avg_x = sp.csr_matrix((wx, (rows, cols)), shape=shape)
        avg_y = sp.csr_matrix((wy, (rows, cols)), shape=shape)
        sxx, syy, sxy = fd.stress_operator(material, lattice)
        self._kx = (avg_x @ sxx + avg_y @ sxy).tocsr()
        self._ky = (avg_x @ sxy + avg_y @ syy).tocsr()
        self._ext = {lab: w for lab, w in ext.items()
                     if isinstance(self.bcs.get(lab, FREE), Neumann)}

    def traction(self, midpoint, label: str, t: float) -> np.ndarray:
        bc = self.bcs.get(label, FREE)
        if isinstance(bc, Dirichlet):
            return np.zeros(2)
        return bc.at(t)

    def neumann(self, u_flat: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        ax = self._kx @ u_flat
        ay = self._ky @ u_flat
        for lab, w in self._ext.items():
            tx, ty = self.bcs.get(lab, FREE).at(t)
            if tx:
                ax += tx * w
            if ty:
                ay += ty * w
        return ax, ay

    def apply(self, acc: np.ndarray, u: np.ndarray, v: np.ndarray, t: float, dt: float) -> None:
        """Write boundary accelerations into ``acc`` (all arrays shaped ``(2, N)``)."""
        ax, ay = self.neumann(u.reshape(-1), t)
        acc[0, self.neumann_nodes] = ax
        acc[1, self.neumann_nodes] = ay
        for lab, nodes in self.dirichlet_groups.items():
            target = self.bcs[lab].at(t + dt)[:, None]
            acc[:, nodes] = dirichlet_acceleration(target, u[:, nodes], v[:, nodes], dt)

    def dirichlet_targets(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Flat node indices and prescribed displacements ``(2, n)`` at time ``t``."""
        if not self.dirichlet_groups:
            return np.zeros(0, dtype=np.int64), np.zeros((2, 0))
        idx, vals = [], []
        for lab, nodes in self.dirichlet_groups.items():
            idx.append(nodes)
            vals.append(np.repeat(self.bcs[lab].at(t)[:, None], len(nodes), axis=1))
        return np.concatenate(idx), np.concatenate(vals, axis=1)


# ---------------------------------------------------------------------------
# solver


class PlaneStrainLBM:
    """Time stepper for the coupled wave-field / displacement scheme.

    ``sync_period`` = l rebuilds both wave fields from the displacement every
    l-th step (0 disables it).  ``sync_flux`` chooses the flux J written
    during synchronization: ``"velocity"`` uses the flux implied by the
    current velocity (``-u_dot`` for phi, ``(-u_dot_y, u_dot_x)`` for psi),
    ``"keep"`` preserves each node's current J.
    """

    SYNC_FLUX = ("velocity", "keep")

    def __init__(self, lattice: Lattice, material: Material,
                 bcs: Mapping[str, BoundaryCondition], a0_phi: float = 0.9999,
                 sync_period: int = 0, sync_flux: str = "velocity"):
        inner = lattice.material & ~lattice.boundary
        if not inner.any():
            raise ValueError("lattice has no interior nodes")
        if sync_period < 0:
            raise ValueError("sync_period must be >= 0")
        if sync_flux not in self.SYNC_FLUX:
            raise ValueError(f"sync_flux must be one of {self.SYNC_FLUX}")
        self.sync_flux = sync_flux
        self.lattice = lattice
        self.material = material
        self.sync_period = int(sync_period)
        self.params_phi, self.params_psi = derive_lbm_params(material, lattice.spacing, a0_phi)
        self.dt = self.params_phi.dt
        self.boundary_model = BoundaryModel(lattice, material, bcs)

        ops = fd.operators(lattice)
        self._inner = np.flatnonzero(inner)
        self._bnd = np.flatnonzero(lattice.boundary)
        self._dx_in = ops.dx[self._inner].tocsr()
        self._dy_in = ops.dy[self._inner].tocsr()
        dxb, dyb = ops.dx[self._bnd], ops.dy[self._bnd]
        self._div_b = sp.hstack([dxb, dyb]).tocsr()
        self._curl_b = sp.hstack([-dyb, dxb]).tocsr()

    # -- state construction ------------------------------------------------

    def initialize(self, u0: np.ndarray | None = None, v0: np.ndarray | None = None) -> SolverState:
        shape = (2,) + self.lattice.shape
        u = np.zeros(shape) if u0 is None else np.array(u0, dtype=float) * self.lattice.material
        v = np.zeros(shape) if v0 is None else np.array(v0, dtype=float) * self.lattice.material
        phi = fd.div2d(u, self.lattice)
        psi = fd.curl2d(u, self.lattice)
        zero_j = np.zeros(shape)
        f_phi = equilibrium(phi, zero_j, self.params_phi)
        f_psi = equilibrium(psi, zero_j, self.params_psi)
        kin = KinematicState(u, v, np.zeros(shape), 0.0)
        return SolverState(kin, f_phi, f_psi, f_phi.sum(axis=0), f_psi.sum(axis=0), 0)

    # -- sub-steps -----------------------------------------------------------

    def accelerations(self, state: SolverState) -> np.ndarray:
        cd2, cs2 = self.material.c_d**2, self.material.c_s**2
        n = self.lattice.size
        u = state.kin.u.reshape(2, n)
        v = state.kin.v.reshape(2, n)
        phi = state.phi.reshape(n)
        psi = state.psi.reshape(n)
        acc = np.zeros((2, n))
        acc[0, self._inner] = cd2 * (self._dx_in @ phi) - cs2 * (self._dy_in @ psi)
        acc[1, self._inner] = cd2 * (self._dy_in @ phi) + cs2 * (self._dx_in @ psi)
        self.boundary_model.apply(acc, u, v, state.t, self.dt)
        return acc.reshape((2,) + self.lattice.shape)

    def boundary_fields(self, u_new: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Dilatation and rotation at boundary nodes from the updated displacement."""
        uf = u_new.reshape(-1)
        return self._div_b @ uf, self._curl_b @ uf

    def synchronize(self, state: SolverState) -> SolverState:
        """Rebuild both wave fields and their populations from ``u``."""
        phi = fd.div2d(state.u, self.lattice)
        psi = fd.curl2d(state.u, self.lattice)
        if self.sync_flux == "velocity":
            v = state.kin.v
            j_phi = -v
            j_psi = np.stack([-v[1], v[0]])
        else:
            _, j_phi = macro_moments(state.f_phi, self.params_phi)
            _, j_psi = macro_moments(state.f_psi, self.params_psi)
        mask = self.lattice.material
        f_phi = boundary_distribution_reset(phi, j_phi, self.params_phi) * mask
        f_psi = boundary_distribution_reset(psi, j_psi, self.params_psi) * mask
        return replace(state, f_phi=f_phi, f_psi=f_psi,
                       phi=f_phi.sum(axis=0), psi=f_psi.sum(axis=0))

    def step(self, state: SolverState) -> SolverState:
        acc = self.accelerations(state)
        kin = newmark_integrate(state.kin, acc, self.dt)
        if not np.isfinite(kin.u).all():
            bad = np.argwhere((~np.isfinite(kin.u)).any(axis=0))[0]
            raise NumericalInstability(state.step + 1, kin.t, tuple(int(q) for q in bad))
        phi_b, psi_b = self.boundary_fields(kin.u)
        bnd = self._bnd
        f_phi = advance_field(state.f_phi, self.lattice, bnd, state.phi.reshape(-1)[bnd], phi_b,
                              self.params_phi)
        f_psi = advance_field(state.f_psi, self.lattice, bnd, state.psi.reshape(-1)[bnd], psi_b,
                              self.params_psi)
        phi = f_phi.sum(axis=0)
        psi = f_psi.sum(axis=0)
        # boundary nodes hold the values set from the displacement
        phi.reshape(-1)[self._bnd] = phi_b
        psi.reshape(-1)[self._bnd] = psi_b
        new = SolverState(kin, f_phi, f_psi, phi, psi, state.step + 1)
        if self.sync_period and new.step % self.sync_period == 0:
            new = self.synchronize(new)
        return new

    def consistency_error(self, state: SolverState) -> np.ndarray:
        return consistency_error(state, self.lattice)

    def run(self, state: SolverState, n_steps: int,
            callback: Callable[[SolverState], None] | None = None) -> SolverState:
        for _ in range(n_steps):
            state = self.step(state)
            if callback is not None:
                callback(state)
        return state


def initialize(lattice: Lattice, material: Material, bcs: Mapping[str, BoundaryCondition],
               a0_phi: float = 0.9999, sync_period: int = 0,
               u0: np.ndarray | None = None,
               sync_flux: str = "velocity") -> tuple[PlaneStrainLBM, SolverState]:
    solver = PlaneStrainLBM(lattice, material, bcs, a0_phi, sync_period, sync_flux)
    return solver, solver.initialize(u0)


def steps_for(t_final: float, dt: float) -> int:
    """Number of steps to reach ``t_final`` (rounded to the nearest step)."""
    return max(0, int(math.floor(t_final / dt + 0.5)))
