"""Lattice-Boltzmann wave fields coupled to an explicit Newmark scheme for 2D elastodynamics."""

__version__ = "0.1.0"

from .elastodyn import (  # noqa: E402
    FREE,
    Dirichlet,
    Neumann,
    NumericalInstability,
    PlaneStrainLBM,
    consistency_error,
    initialize,
)
from .fields import Material  # noqa: E402
from .geometry import Geometry, Hole, Lattice, NodeClass, build_lattice  # noqa: E402
from .oracle import NavierFD  # noqa: E402
from .wave_lbm import LbmParams, derive_lbm_params  # noqa: E402
