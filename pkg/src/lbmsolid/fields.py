"""Material law and second-order finite-difference kernels on the lattice.

Scalar fields are ``(nx, ny)`` arrays, vector fields ``(2, nx, ny)``; values at
outside nodes are kept at zero and never read by any stencil.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .geometry import Lattice


@dataclass(frozen=True)
class Material:
    """Isotropic linear elastic solid given by Lame parameters and density.

    The rotational wave speed is ``sqrt(mu / rho)``, the value that follows
    from rewriting the Navier-Cauchy equation with the curl-curl identity.
    """

    lam: float
    mu: float
    rho: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @classmethod
    def from_wave_speeds(cls, c_s: float, ratio: float, mu: float = 1.0) -> Material:
        """Build from shear speed, speed ratio ``c_s / c_d`` and shear modulus."""
        if not 0 < ratio <= 1 / math.sqrt(2) + 1e-12:
            raise ValueError("c_s/c_d must lie in (0, 1/sqrt(2)) for lambda >= 0")
        rho = mu / c_s**2
        c_d = c_s / ratio
        lam = rho * c_d**2 - 2 * mu
        return cls(max(lam, 0.0), mu, rho)

    @property
    def c_d(self) -> float:
        return math.sqrt((self.lam + 2 * self.mu) / self.rho)

    @property
    def c_s(self) -> float:
        return math.sqrt(self.mu / self.rho)


class Stress(NamedTuple):
    xx: np.ndarray
    yy: np.ndarray
    xy: np.ndarray


@dataclass(frozen=True)
class DiffOperators:
    """Sparse first-derivative matrices acting on flattened nodal values.

    ``degraded`` flags nodes where some axis fell back to a first-order or
    missing stencil.
    """

    dx: sp.csr_matrix
    dy: sp.csr_matrix
    degraded: np.ndarray


def _axis_rows(lattice: Lattice, plus: int, minus: int):
    material = lattice.material.ravel()
    nb = lattice.neighbors.reshape(5, -1)
    h = lattice.spacing
    rows, cols, vals = [], [], []
    degraded = np.zeros(lattice.size, dtype=bool)

    def mat(k):
        return k >= 0 and material[k]

    for k in np.flatnonzero(material):
        p, m = nb[plus, k], nb[minus, k]
        if mat(p) and mat(m):
            rows += [k, k]
            cols += [p, m]
            vals += [0.5 / h, -0.5 / h]
        elif mat(p):
            p2 = nb[plus, p]
            if mat(p2):
                rows += [k, k, k]
                cols += [k, p, p2]
                vals += [-1.5 / h, 2.0 / h, -0.5 / h]
            else:
                rows += [k, k]
                cols += [k, p]
                vals += [-1.0 / h, 1.0 / h]
                degraded[k] = True
        elif mat(m):
            m2 = nb[minus, m]
            if mat(m2):
                rows += [k, k, k]
                cols += [k, m, m2]
                vals += [1.5 / h, -2.0 / h, 0.5 / h]
            else:
                rows += [k, k]
                cols += [k, m]
                vals += [1.0 / h, -1.0 / h]
                degraded[k] = True
        else:
            degraded[k] = True
    n = lattice.size
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), degraded


def build_operators(lattice: Lattice) -> DiffOperators:
    if lattice.nx < 3 or lattice.ny < 3:
        raise ValueError("finite differences need at least 3 nodes along each axis")
    dx, deg_x = _axis_rows(lattice, 1, 3)
    dy, deg_y = _axis_rows(lattice, 2, 4)
    return DiffOperators(dx, dy, (deg_x | deg_y).reshape(lattice.shape))


def operators(lattice: Lattice) -> DiffOperators:
    """Operators for ``lattice``, built once per lattice object."""
    ops = getattr(lattice, "_fd_ops", None)
    if ops is None:
        ops = build_operators(lattice)
        lattice._fd_ops = ops
    return ops


def _apply(D, a: np.ndarray) -> np.ndarray:
    return (D @ a.ravel()).reshape(a.shape)


def div2d(u: np.ndarray, lattice: Lattice) -> np.ndarray:
    ops = operators(lattice)
    return _apply(ops.dx, u[0]) + _apply(ops.dy, u[1])


def curl2d(u: np.ndarray, lattice: Lattice) -> np.ndarray:
    ops = operators(lattice)
    return _apply(ops.dx, u[1]) - _apply(ops.dy, u[0])


def grad_scalar(s: np.ndarray, lattice: Lattice) -> np.ndarray:
    ops = operators(lattice)
    return np.stack([_apply(ops.dx, s), _apply(ops.dy, s)])


def curl_out_of_plane(psi: np.ndarray, lattice: Lattice) -> np.ndarray:
    """In-plane curl of ``psi * e_z``: ``(d psi/dy, -d psi/dx)``."""
    ops = operators(lattice)
    return np.stack([_apply(ops.dy, psi), -_apply(ops.dx, psi)])


def strain(u: np.ndarray, lattice: Lattice) -> Stress:
    ops = operators(lattice)
    exx = _apply(ops.dx, u[0])
    eyy = _apply(ops.dy, u[1])
    exy = 0.5 * (_apply(ops.dy, u[0]) + _apply(ops.dx, u[1]))
    return Stress(exx, eyy, exy)


def stress(u: np.ndarray, material: Material, lattice: Lattice) -> Stress:
    eps = strain(u, lattice)
    tr = eps.xx + eps.yy
    return Stress(
        material.lam * tr + 2 * material.mu * eps.xx,
        material.lam * tr + 2 * material.mu * eps.yy,
        2 * material.mu * eps.xy,
    )


def stress_operator(material: Material, lattice: Lattice):
    """Sparse maps from stacked ``[ux, uy]`` (length 2N) to sigma_xx, sigma_yy, sigma_xy."""
    ops = operators(lattice)
    lam, mu = material.lam, material.mu
    sxx = sp.hstack([(lam + 2 * mu) * ops.dx, lam * ops.dy])
    syy = sp.hstack([lam * ops.dx, (lam + 2 * mu) * ops.dy])
    sxy = sp.hstack([mu * ops.dy, mu * ops.dx])
    return sxx.tocsr(), syy.tocsr(), sxy.tocsr()
