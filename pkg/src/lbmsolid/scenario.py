"""Scenario configuration: geometry, material, boundary loads, probes and output.

A scenario is stored as one YAML document.  All quantities are normalized by
the plate side ``L``, the shear speed ``c_s`` and the shear modulus ``mu``, so
times are in ``L / c_s`` and stresses in ``mu``.  Unknown keys are rejected.

Example::

    name: tension
    geometry: {width: 1.0, height: 1.0, holes: []}
    material: {c_s: 1.0, ratio: 0.5773502691896258, mu: 1.0}
    lattice: {nodes: 101}
    lbm: {a0_phi: 0.9999, sync_period: 0, sync_flux: velocity}
    t_final: 1.5
    boundary:
      top: {type: neumann, vector: [0.0, 1.0],
            load: {kind: ramp_hold, peak: 0.005, t_ramp: 1.0}}
      bottom: {type: neumann, vector: [0.0, -1.0],
               load: {kind: ramp_hold, peak: 0.005, t_ramp: 1.0}}
    probes: {P: [0.0, 1.0]}
    output: {snapshot_times: [], probe_every: 1, error_every: 0}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .elastodyn import BoundaryCondition, Dirichlet, Neumann, steps_for
from .fields import Material
from .geometry import HOLE_LABEL, OUTER_LABELS, Geometry, Hole, Lattice, build_lattice
from .wave_lbm import LbmParams, derive_lbm_params

BOUNDARY_LABELS = OUTER_LABELS + (HOLE_LABEL,)
DEFAULT_NODES = 101
SPEED_RATIO = 1.0 / math.sqrt(3.0)


class ConfigError(ValueError):
    """Invalid scenario file; the message starts with the offending key path."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


# -- load curves ---------------------------------------------------------------


@dataclass(frozen=True)
class RampHold:
    """Linear rise from 0 to ``peak`` over ``t_ramp``, constant afterwards."""

    peak: float
    t_ramp: float
    kind = "ramp_hold"

    def __call__(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= self.t_ramp:
            return self.peak
        return self.peak * t / self.t_ramp


@dataclass(frozen=True)
class LinearRamp:
    """Unbounded linear growth ``rate * t`` from zero."""

    rate: float
    kind = "linear_ramp"

    def __call__(self, t: float) -> float:
        return self.rate * max(t, 0.0)


@dataclass(frozen=True)
class Constant:
    value: float = 1.0
    kind = "constant"

    def __call__(self, t: float) -> float:
        return self.value


LoadCurve = RampHold | LinearRamp | Constant
_CURVES = {c.kind: c for c in (RampHold, LinearRamp, Constant)}


def evaluate_load(curve: LoadCurve, t: float) -> float:
    return float(curve(t))


# -- scenario ------------------------------------------------------------------


@dataclass(frozen=True)
class BoundarySpec:
    """Load on one boundary part: ``load(t) * vector`` as traction or displacement."""

    type: str
    vector: tuple[float, float] = (0.0, 0.0)
    load: LoadCurve = Constant()

    def condition(self) -> BoundaryCondition:
        if self.type == "neumann":
            return Neumann(self.vector, self.load)
        return Dirichlet(self.vector, self.load)


@dataclass(frozen=True)
class Scenario:
    name: str
    width: float = 1.0
    height: float = 1.0
    holes: tuple[Hole, ...] = ()
    c_s: float = 1.0
    ratio: float = SPEED_RATIO
    mu: float = 1.0
    nodes: int = DEFAULT_NODES
    a0_phi: float = 0.9999
    sync_period: int = 0
    sync_flux: str = "velocity"
    t_final: float = 1.0
    boundary: Mapping[str, BoundarySpec] = field(default_factory=dict)
    probes: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    snapshot_times: tuple[float, ...] = ()
    probe_every: int = 1
    error_every: int = 0

    @property
    def spacing(self) -> float:
        return self.width / (self.nodes - 1)

    def geometry(self) -> Geometry:
        return Geometry(self.width, self.height, self.holes)

    def material(self) -> Material:
        return Material.from_wave_speeds(self.c_s, self.ratio, self.mu)

    def conditions(self) -> dict[str, BoundaryCondition]:
        return {lab: spec.condition() for lab, spec in self.boundary.items()}

    def with_overrides(self, **changes) -> Scenario:
        data = scenario_to_dict(self)
        for key, value in changes.items():
            if value is None:
                continue
            if key == "sync_period":
                data["lbm"]["sync_period"] = value
            elif key == "nodes":
                data["lattice"]["nodes"] = value
            elif key == "t_final":
                data["t_final"] = value
            elif key == "snapshot_times":
                data["output"]["snapshot_times"] = list(value)
            else:
                raise KeyError(key)
        return scenario_from_dict(data)


@dataclass
class Resolved:
    """A scenario turned into solver inputs plus every derived parameter."""

    scenario: Scenario
    lattice: Lattice
    material: Material
    bcs: dict[str, BoundaryCondition]
    params_phi: LbmParams
    params_psi: LbmParams
    probes: dict[str, int]

    @property
    def dt(self) -> float:
        return self.params_phi.dt

    @property
    def n_steps(self) -> int:
        return steps_for(self.scenario.t_final, self.dt)

    def probe_position(self, name: str) -> tuple[float, float]:
        return self.lattice.position(self.probes[name])

    def probe_patch(self, name: str) -> np.ndarray:
        """Flat indices of the material nodes in the 3 x 3 block around a probe.

        Wave fields at boundary nodes are set from the displacement, so a
        probe sitting on the boundary needs its neighbors to see any drift.
        """
        lat = self.lattice
        i, j = lat.unflat(self.probes[name])
        block = [lat.flat(a, b) for a in range(i - 1, i + 2) for b in range(j - 1, j + 2)
                 if 0 <= a < lat.nx and 0 <= b < lat.ny]
        block = np.array(block, dtype=np.int64)
        return block[lat.material.ravel()[block]]

    def derived(self) -> dict[str, Any]:
        lat, m = self.lattice, self.material
        return {
            "spacing": lat.spacing,
            "nx": lat.nx,
            "ny": lat.ny,
            "node_counts": lat.counts(),
            "boundary_cells": len(lat.cells),
            "lambda": m.lam,
            "mu": m.mu,
            "rho": m.rho,
            "c_d": m.c_d,
            "c_s": m.c_s,
            "a0_phi": self.params_phi.a0,
            "a_phi": self.params_phi.a,
            "a0_psi": self.params_psi.a0,
            "a_psi": self.params_psi.a,
            "dt": self.dt,
            "courant_d": m.c_d * self.dt / lat.spacing,
            "n_steps": self.n_steps,
            "probes": {
                name: {"node": list(lat.unflat(k)), "position": list(lat.position(k)),
                       "requested": list(self.scenario.probes[name])}
                for name, k in self.probes.items()
            },
        }


def resolve(scenario: Scenario) -> Resolved:
    lattice = build_lattice(scenario.geometry(), scenario.spacing)
    material = scenario.material()
    params_phi, params_psi = derive_lbm_params(material, lattice.spacing, scenario.a0_phi)
    probes = {name: lattice.nearest_material_node(*xy) for name, xy in scenario.probes.items()}
    return Resolved(scenario, lattice, material, scenario.conditions(), params_phi, params_psi,
                    probes)


# -- dict / YAML conversion ----------------------------------------------------

_TOP_KEYS = {"name", "geometry", "material", "lattice", "lbm", "t_final", "boundary",
             "probes", "output"}


def _mapping(value, where: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if value is None:
        value = {}
    if not isinstance(value, Mapping):
        raise ConfigError(where, "expected a mapping")
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(where, f"unknown key(s) {sorted(map(str, unknown))}")
    missing = set(required) - set(value)
    if missing:
        raise ConfigError(where, f"missing key(s) {sorted(missing)}")
    return dict(value)


def _number(value, where: str, *, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(where, "must be finite")
    if positive and not value > 0:
        raise ConfigError(where, f"must be > 0, got {value}")
    if nonneg and value < 0:
        raise ConfigError(where, f"must be >= 0, got {value}")
    return value


def _integer(value, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(where, f"must be >= {minimum}, got {value}")
    return value


def _pair(value, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(where, "expected a list of two numbers")
    return (_number(value[0], f"{where}[0]"), _number(value[1], f"{where}[1]"))


def _curve(value, where: str) -> LoadCurve:
    d = _mapping(value, where, {"kind", "peak", "t_ramp", "rate", "value"}, {"kind"})
    kind = d.pop("kind")
    if kind not in _CURVES:
        raise ConfigError(f"{where}.kind", f"must be one of {sorted(_CURVES)}, got {kind!r}")
    if kind == "ramp_hold":
        _mapping(d, where, {"peak", "t_ramp"}, {"peak", "t_ramp"})
        return RampHold(_number(d["peak"], f"{where}.peak"),
                        _number(d["t_ramp"], f"{where}.t_ramp", positive=True))
    if kind == "linear_ramp":
        _mapping(d, where, {"rate"}, {"rate"})
        return LinearRamp(_number(d["rate"], f"{where}.rate"))
    _mapping(d, where, {"value"})
    return Constant(_number(d.get("value", 1.0), f"{where}.value"))


def _curve_dict(curve: LoadCurve) -> dict:
    if isinstance(curve, RampHold):
        return {"kind": curve.kind, "peak": curve.peak, "t_ramp": curve.t_ramp}
    if isinstance(curve, LinearRamp):
        return {"kind": curve.kind, "rate": curve.rate}
    return {"kind": curve.kind, "value": curve.value}


def scenario_from_dict(data: Mapping) -> Scenario:
    d = _mapping(data, "", _TOP_KEYS, {"name", "t_final"})
    name = d["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "expected a non-empty string")

    g = _mapping(d.get("geometry"), "geometry", {"width", "height", "holes"})
    width = _number(g.get("width", 1.0), "geometry.width", positive=True)
    height = _number(g.get("height", 1.0), "geometry.height", positive=True)
    holes_raw = g.get("holes") or []
    if not isinstance(holes_raw, list):
        raise ConfigError("geometry.holes", "expected a list")
    holes = []
    for k, h in enumerate(holes_raw):
        where = f"geometry.holes[{k}]"
        hd = _mapping(h, where, {"center", "diameter"}, {"center", "diameter"})
        holes.append(Hole(_pair(hd["center"], f"{where}.center"),
                          _number(hd["diameter"], f"{where}.diameter", positive=True)))
    try:
        Geometry(width, height, tuple(holes))
    except ValueError as exc:
        raise ConfigError("geometry", str(exc)) from None

    m = _mapping(d.get("material"), "material", {"c_s", "ratio", "mu"})
    c_s = _number(m.get("c_s", 1.0), "material.c_s", positive=True)
    ratio = _number(m.get("ratio", SPEED_RATIO), "material.ratio", positive=True)
    mu = _number(m.get("mu", 1.0), "material.mu", positive=True)
    try:
        Material.from_wave_speeds(c_s, ratio, mu)
    except ValueError as exc:
        raise ConfigError("material.ratio", str(exc)) from None

    lat = _mapping(d.get("lattice"), "lattice", {"nodes", "spacing"})
    if "nodes" in lat and "spacing" in lat:
        raise ConfigError("lattice", "give either nodes or spacing, not both")
    if "spacing" in lat:
        dh = _number(lat["spacing"], "lattice.spacing", positive=True)
        n = width / dh
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError("lattice.spacing", f"width {width} is not a multiple of {dh}")
        nodes = int(round(n)) + 1
    else:
        nodes = _integer(lat.get("nodes", DEFAULT_NODES), "lattice.nodes", 3)
    dh = width / (nodes - 1)
    ny = height / dh
    if abs(ny - round(ny)) > 1e-9 * max(1.0, ny):
        raise ConfigError("lattice", f"height {height} is not a multiple of spacing {dh}")

    lbm = _mapping(d.get("lbm"), "lbm", {"a0_phi", "sync_period", "sync_flux"})
    a0_phi = _number(lbm.get("a0_phi", 0.9999), "lbm.a0_phi")
    if not 0 <= a0_phi < 1:
        raise ConfigError("lbm.a0_phi", f"must lie in [0, 1), got {a0_phi}")
    sync = _integer(lbm.get("sync_period", 0), "lbm.sync_period", 0)
    sync_flux = lbm.get("sync_flux", "velocity")
    if sync_flux not in ("velocity", "keep"):
        raise ConfigError("lbm.sync_flux", f"must be 'velocity' or 'keep', got {sync_flux!r}")

    t_final = _number(d["t_final"], "t_final", positive=True)

    b = _mapping(d.get("boundary"), "boundary", set(BOUNDARY_LABELS))
    boundary = {}
    for lab, spec in b.items():
        where = f"boundary.{lab}"
        sd = _mapping(spec, where, {"type", "vector", "load"}, {"type"})
        kind = sd["type"]
        if kind not in ("neumann", "dirichlet"):
            raise ConfigError(f"{where}.type", f"must be 'neumann' or 'dirichlet', got {kind!r}")
        vector = _pair(sd.get("vector", [0.0, 0.0]), f"{where}.vector")
        load = _curve(sd["load"], f"{where}.load") if "load" in sd else Constant()
        boundary[lab] = BoundarySpec(kind, vector, load)
    if HOLE_LABEL in boundary and not holes:
        raise ConfigError("boundary.hole", "assigned but the geometry has no hole")

    p = _mapping(d.get("probes"), "probes", set(d.get("probes") or {}))
    probes = {}
    for pname, xy in p.items():
        where = f"probes.{pname}"
        x, y = _pair(xy, where)
        if not (0 <= x <= width and 0 <= y <= height):
            raise ConfigError(where, f"point ({x}, {y}) lies outside the plate")
        probes[str(pname)] = (x, y)

    o = _mapping(d.get("output"), "output", {"snapshot_times", "probe_every", "error_every"})
    snaps = o.get("snapshot_times") or []
    if not isinstance(snaps, list):
        raise ConfigError("output.snapshot_times", "expected a list")
    snaps = tuple(_number(s, f"output.snapshot_times[{k}]", nonneg=True)
                  for k, s in enumerate(snaps))
    probe_every = _integer(o.get("probe_every", 1), "output.probe_every", 1)
    error_every = _integer(o.get("error_every", 0), "output.error_every", 0)

    return Scenario(name, width, height, tuple(holes), c_s, ratio, mu, nodes, a0_phi, sync,
                    sync_flux, t_final, boundary, probes, snaps, probe_every, error_every)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "geometry": {
            "width": s.width,
            "height": s.height,
            "holes": [{"center": list(h.center), "diameter": h.diameter} for h in s.holes],
        },
        "material": {"c_s": s.c_s, "ratio": s.ratio, "mu": s.mu},
        "lattice": {"nodes": s.nodes},
        "lbm": {"a0_phi": s.a0_phi, "sync_period": s.sync_period, "sync_flux": s.sync_flux},
        "t_final": s.t_final,
        "boundary": {
            lab: {"type": b.type, "vector": list(b.vector), "load": _curve_dict(b.load)}
            for lab, b in s.boundary.items()
        },
        "probes": {name: list(xy) for name, xy in s.probes.items()},
        "output": {
            "snapshot_times": list(s.snapshot_times),
            "probe_every": s.probe_every,
            "error_every": s.error_every,
        },
    }


def load_config(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path} is not valid YAML: {exc}") from None
    return scenario_from_dict(data)


def dump_config(scenario: Scenario, path=None) -> str:
    text = yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, allow_unicode=True)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- presets -------------------------------------------------------------------

SIGMA0 = 0.005
HOLE_DIAMETER = 0.266
CORNER = (0.0, 1.0)


def tension(nodes: int = DEFAULT_NODES) -> Scenario:
    """Plate pulled at top and bottom by a ramped then constant traction."""
    load = RampHold(SIGMA0, 1.0)
    return Scenario(
        "tension", nodes=nodes, sync_period=0, t_final=1.5,
        boundary={"top": BoundarySpec("neumann", (0.0, 1.0), load),
                  "bottom": BoundarySpec("neumann", (0.0, -1.0), load)},
        probes={"P": CORNER},
    )


def shear(nodes: int = DEFAULT_NODES) -> Scenario:
    """Clamped bottom edge, top edge sheared by a linearly growing traction."""
    return Scenario(
        "shear", nodes=nodes, sync_period=50, t_final=2.0,
        boundary={"top": BoundarySpec("neumann", (1.0, 0.0), LinearRamp(SIGMA0)),
                  "bottom": BoundarySpec("dirichlet", (0.0, 0.0), Constant(0.0))},
        probes={"P": CORNER},
    )


def hole(nodes: int = DEFAULT_NODES) -> Scenario:
    base = tension(nodes)
    center = (0.5 * base.width, 0.5 * base.height)
    q = (center[0] - 0.175, center[1] + 0.025)
    return Scenario(
        "hole", holes=(Hole(center, HOLE_DIAMETER),), nodes=nodes, sync_period=50,
        t_final=1.5, boundary=dict(base.boundary), probes={"P": CORNER, "Q": q},
    )


PRESETS = {"tension": tension, "shear": shear, "hole": hole}


def preset(name: str, nodes: int = DEFAULT_NODES) -> Scenario:
    try:
        return PRESETS[name](nodes)
    except KeyError:
        raise ConfigError("", f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def open_scenario(ref: str) -> Scenario:
    """A YAML file path, or the name of a shipped preset when no such file exists."""
    if ref in PRESETS and not Path(ref).exists():
        return preset(ref)
    return load_config(ref)


def quasi_static_corner_uy(scenario: Scenario) -> float:
    """Static vertical corner displacement of the hole-free tension plate.

    Uniaxial plane-strain stress ``sigma_yy = s`` gives
    ``eps_yy = s (1 - nu^2) / E`` with ``E`` and ``nu`` from the Lame pair; the
    corner sits half a plate height from the midline.
    """
    m = scenario.material()
    lam, mu = m.lam, m.mu
    E = mu * (3 * lam + 2 * mu) / (lam + mu)
    nu = lam / (2 * (lam + mu))
    peak = max(np.abs([b.load(scenario.t_final) for b in scenario.boundary.values()]))
    return float(peak * (1 - nu**2) / E * 0.5 * scenario.height)
