"""D2Q5 BGK lattice-Boltzmann scheme for a scalar wave equation.

Populations are stored as ``(5, nx, ny)`` arrays ordered rest, +x, +y, -x, -y.
The relaxation time is fixed to half a time step, so collision reduces to
``f* = 2 f_eq - f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import Material
from .geometry import DIRECTIONS, Lattice

# unit lattice velocities, multiplied by c = dh/dt where needed
UNIT_VELOCITIES = DIRECTIONS.astype(float)

RELAXATION = 2.0  # dt / tau


@dataclass(frozen=True)
class LbmParams:
    a0: float
    a: float
    dt: float
    dh: float
    b: float = 1.0

    def __post_init__(self):
        if self.b != 1.0:
            raise ValueError("b must be 1 to conserve the flux J")
        if abs(self.a0 + 4 * self.a - 1.0) > 1e-12:
            raise ValueError("a0 + 4a must equal 1")
        if self.a0 < 0 or not 0 <= self.a <= 0.25:
            raise ValueError("stability requires a0 >= 0 and 0 <= a <= 0.25")
        if self.dt <= 0 or self.dh <= 0:
            raise ValueError("dt and dh must be positive")

    @classmethod
    def from_rest_weight(cls, a0: float, dt: float, dh: float) -> LbmParams:
        return cls(a0=a0, a=(1.0 - a0) / 4.0, dt=dt, dh=dh)

    @property
    def tau(self) -> float:
        return 0.5 * self.dt

    @property
    def c(self) -> float:
        return self.dh / self.dt

    @property
    def wave_speed(self) -> float:
        return self.c * math.sqrt(2 * self.a)

    @property
    def courant(self) -> float:
        return math.sqrt(2 * self.a)


def derive_lbm_params(material: Material, dh: float, a0_phi: float) -> tuple[LbmParams, LbmParams]:
    """Parameters for the dilatation and rotation fields sharing one dh and dt.

    Returns ``(phi_params, psi_params)``.
    """
    if not 0.0 <= a0_phi < 1.0:
        raise ValueError("a0_phi must lie in [0, 1)")
    a_phi = (1.0 - a0_phi) / 4.0
    ratio2 = material.c_s**2 / material.c_d**2
    a_psi = ratio2 * a_phi
    dt = dh / material.c_d * math.sqrt(2 * a_phi)
    phi = LbmParams(a0=a0_phi, a=a_phi, dt=dt, dh=dh)
    psi = LbmParams(a0=1.0 - 4 * a_psi, a=a_psi, dt=dt, dh=dh)
    return phi, psi


def equilibrium(value, J, params: LbmParams) -> np.ndarray:
    """Equilibrium populations, shape ``(5,) + value.shape``."""
    value = np.asarray(value, dtype=float)
    J = np.asarray(J, dtype=float)
    s = params.b / (2.0 * params.c)
    av = params.a * value
    return np.stack([
        params.a0 * value,
        av + s * J[0],
        av + s * J[1],
        av - s * J[0],
        av - s * J[1],
    ])


def macro_moments(f: np.ndarray, params: LbmParams) -> tuple[np.ndarray, np.ndarray]:
    """Zeroth moment and flux ``J = sum_alpha c^alpha f^alpha``."""
    value = f[0] + f[1] + f[2] + f[3] + f[4]
    J = params.c * np.stack([f[1] - f[3], f[2] - f[4]])
    return value, J


def collide(f: np.ndarray, params: LbmParams) -> np.ndarray:
    value, J = macro_moments(f, params)
    feq = equilibrium(value, J, params)
    return f - RELAXATION * (f - feq)


OPPOSITE = np.array([0, 3, 4, 1, 2])


def unfed_links(lattice: Lattice) -> np.ndarray:
    """Mask ``(5, nx, ny)`` of material nodes whose upstream neighbor is not material."""
    mask = getattr(lattice, "_unfed", None)
    if mask is None:
        material = lattice.material
        mask = np.zeros((5,) + lattice.shape, dtype=bool)
        for a in range(1, 5):
            up = lattice.neighbors[OPPOSITE[a]]
            fed = np.zeros(lattice.shape, dtype=bool)
            ok = up >= 0
            fed[ok] = material.ravel()[up[ok]]
            mask[a] = material & ~fed
        lattice._unfed = mask
    return mask


def stream(f: np.ndarray, lattice: Lattice | None = None) -> np.ndarray:
    """Move each population one node along its link.

    Without a lattice the array is treated as periodic.  With a lattice, links
    leaving the material are dropped, nothing is written to outside nodes, and
    a population whose upstream node is not material stays where it is.
    """
    if lattice is None:
        out = np.empty_like(f)
        out[0] = f[0]
        for a in range(1, 5):
            di, dj = DIRECTIONS[a]
            out[a] = np.roll(f[a], (di, dj), axis=(0, 1))
        return out
    out = np.zeros_like(f)
    out[0] = f[0]
    out[1, 1:, :] = f[1, :-1, :]
    out[2, :, 1:] = f[2, :, :-1]
    out[3, :-1, :] = f[3, 1:, :]
    out[4, :, :-1] = f[4, :, 1:]
    out *= lattice.material
    unfed = unfed_links(lattice)
    out[unfed] = f[unfed]
    return out


@dataclass
class WaveLbmField:
    """Populations for one scalar wave field together with their parameters."""

    f: np.ndarray
    params: LbmParams

    @classmethod
    def at_equilibrium(cls, value: np.ndarray, params: LbmParams) -> WaveLbmField:
        return cls(equilibrium(value, np.zeros((2,) + np.shape(value)), params), params)

    @property
    def value(self) -> np.ndarray:
        return self.f.sum(axis=0)

    @property
    def J(self) -> np.ndarray:
        return macro_moments(self.f, self.params)[1]

    def advance(self, lattice: Lattice | None = None) -> None:
        """One plain collide-and-stream update."""
        self.f = stream(collide(self.f, self.params), lattice)
