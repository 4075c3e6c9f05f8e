"""Reference explicit finite-difference solver for the Navier-Cauchy equation.

Discretizes ``(lambda + mu) grad div u + mu lap u = rho u_tt`` directly with
three-point second derivatives and a four-point mixed-derivative cross, so it
shares nothing with the wave-field route except the boundary treatment.
Time stepping is velocity Verlet (central difference), which is stable for
``dt <= 0.5 dh / c_d`` on these stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from . import fields as fd
from .elastodyn import BoundaryCondition, BoundaryModel, KinematicState, NumericalInstability
from .fields import Material
from .geometry import Lattice

DT_FACTOR = 0.4
DT_LIMIT = 0.5


@dataclass
class OracleState:
    kin: KinematicState
    dt: float
    step: int = 0

    @property
    def t(self) -> float:
        return self.kin.t

    @property
    def u(self) -> np.ndarray:
        return self.kin.u


def _second_derivative_ops(lattice: Lattice, rows_idx: np.ndarray):
    nb = lattice.neighbors.reshape(5, -1)
    material = lattice.material.ravel()
    h2 = lattice.spacing**2
    n = lattice.size
    first = fd.operators(lattice)
    fallback = (first.dx @ first.dy).tocsr()

    dxx_r, dxx_c, dxx_v = [], [], []
    dyy_r, dyy_c, dyy_v = [], [], []
    dxy_r, dxy_c, dxy_v = [], [], []
    for r, k in enumerate(rows_idx):
        e, nn, w, s = nb[1, k], nb[2, k], nb[3, k], nb[4, k]
        dxx_r += [r, r, r]
        dxx_c += [e, k, w]
        dxx_v += [1 / h2, -2 / h2, 1 / h2]
        dyy_r += [r, r, r]
        dyy_c += [nn, k, s]
        dyy_v += [1 / h2, -2 / h2, 1 / h2]
        ne, nw, se, sw = nb[2, e], nb[2, w], nb[4, e], nb[4, w]
        if min(ne, nw, se, sw) >= 0 and material[[ne, nw, se, sw]].all():
            dxy_r += [r, r, r, r]
            dxy_c += [ne, sw, nw, se]
            dxy_v += [0.25 / h2, 0.25 / h2, -0.25 / h2, -0.25 / h2]
        else:
            row = fallback[k]
            dxy_r += [r] * row.nnz
            dxy_c += list(row.indices)
            dxy_v += list(row.data)
    shape = (len(rows_idx), n)
    return (sp.csr_matrix((dxx_v, (dxx_r, dxx_c)), shape=shape),
            sp.csr_matrix((dyy_v, (dyy_r, dyy_c)), shape=shape),
            sp.csr_matrix((dxy_v, (dxy_r, dxy_c)), shape=shape))


class NavierFD:
    def __init__(self, lattice: Lattice, material: Material,
                 bcs: Mapping[str, BoundaryCondition], dt: float | None = None):
        limit = DT_LIMIT * lattice.spacing / material.c_d
        if dt is None:
            dt = DT_FACTOR * lattice.spacing / material.c_d
        if dt > limit * (1 + 1e-12):
            raise ValueError(f"oracle time step {dt:.4g} exceeds stability limit {limit:.4g}")
        inner = lattice.material & ~lattice.boundary
        if not inner.any():
            raise ValueError("lattice has no interior nodes")
        self.lattice = lattice
        self.material = material
        self.dt = dt
        self.boundary_model = BoundaryModel(lattice, material, bcs)
        self._inner = np.flatnonzero(inner)
        dxx, dyy, dxy = _second_derivative_ops(lattice, self._inner)
        lam, mu, rho = material.lam, material.mu, material.rho
        self._ax = sp.hstack([((lam + 2 * mu) * dxx + mu * dyy) / rho,
                              ((lam + mu) * dxy) / rho]).tocsr()
        self._ay = sp.hstack([((lam + mu) * dxy) / rho,
                              ((lam + 2 * mu) * dyy + mu * dxx) / rho]).tocsr()
        self._dir = self.boundary_model.dirichlet_nodes

    def acceleration(self, u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
        n = self.lattice.size
        uf = u.reshape(2, n)
        acc = np.zeros((2, n))
        flat = uf.reshape(-1)
        acc[0, self._inner] = self._ax @ flat
        acc[1, self._inner] = self._ay @ flat
        self.boundary_model.apply(acc, uf, v.reshape(2, n), t, self.dt)
        return acc.reshape(u.shape)

    def initialize(self, u0: np.ndarray | None = None, v0: np.ndarray | None = None) -> OracleState:
        shape = (2,) + self.lattice.shape
        u = np.zeros(shape) if u0 is None else np.array(u0, dtype=float) * self.lattice.material
        v = np.zeros(shape) if v0 is None else np.array(v0, dtype=float) * self.lattice.material
        a = self.acceleration(u, v, 0.0)
        return OracleState(KinematicState(u, v, a, 0.0), self.dt, 0)

    def step(self, state: OracleState) -> OracleState:
        dt = self.dt
        kin = state.kin
        u = kin.u + dt * kin.v + (0.5 * dt * dt) * kin.a
        v = kin.v + (0.5 * dt) * kin.a
        t = kin.t + dt
        # Dirichlet nodes are slaved to their targets; keep the Newmark velocity there
        n = self.lattice.size
        v_dir = (kin.v + dt * kin.a).reshape(2, n)[:, self._dir]
        a_new = self.acceleration(u, v, t)
        v = v + (0.5 * dt) * a_new
        if len(self._dir):
            vf = v.reshape(2, n)
            vf[:, self._dir] = v_dir
            af = a_new.reshape(2, n)
            self.boundary_model.apply(af, u.reshape(2, n), vf, t, dt)
        if not np.isfinite(u).all():
            bad = np.argwhere((~np.isfinite(u)).any(axis=0))[0]
            raise NumericalInstability(state.step + 1, t, tuple(int(q) for q in bad))
        return OracleState(KinematicState(u, v, a_new, t), dt, state.step + 1)

    def run(self, state: OracleState, n_steps: int,
            callback: Callable[[OracleState], None] | None = None) -> OracleState:
        for _ in range(n_steps):
            state = self.step(state)
            if callback is not None:
                callback(state)
        return state


def oracle_step(solver: NavierFD, state: OracleState) -> OracleState:
    return solver.step(state)


def default_dt(lattice: Lattice, material: Material) -> float:
    return DT_FACTOR * lattice.spacing / material.c_d


def steps_for(t_final: float, dt: float) -> int:
    return max(0, int(math.floor(t_final / dt + 0.5)))
