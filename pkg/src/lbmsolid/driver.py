"""Time loop driver: runs a scenario with the LBM solver, the oracle, or both."""

from __future__ import annotations

import csv
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .elastodyn import NumericalInstability, PlaneStrainLBM, consistency_error
from .io import write_manifest, write_probe_series, write_snapshot
from .oracle import NavierFD
from .scenario import Resolved, Scenario, resolve, scenario_to_dict

log = logging.getLogger(__name__)

SOLVERS = ("lbm", "oracle")
# small-strain loads never move a node by a plate length; beyond this the run has diverged
DIVERGENCE_LIMIT = 1.0


@dataclass
class RunResult:
    solver: str
    dt: float
    steps_done: int
    t: list[float] = field(default_factory=list)
    probes: dict[str, list] = field(default_factory=dict)
    errors: dict[str, list] = field(default_factory=dict)
    snapshots: dict[float, dict] = field(default_factory=dict)
    aborted: dict | None = None
    wall_clock: float = 0.0

    def probe(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.t), np.asarray(self.probes[name]).reshape(-1, 2)


def _check_bounded(u: np.ndarray, step: int, t: float) -> None:
    big = np.abs(u).max(axis=0) > DIVERGENCE_LIMIT
    if big.any():
        node = tuple(int(q) for q in np.argwhere(big)[0])
        raise NumericalInstability(step, t, node,
                                   what=f"divergence: displacement beyond {DIVERGENCE_LIMIT} L")


def simulate(res: Resolved, solver: str = "lbm", *, sync_period: int | None = None,
             callback: Callable | None = None) -> RunResult:
    """Advance ``res`` to its final time and collect probe data in memory.

    ``callback(state)`` is invoked after every step.  When the scenario asks
    for it, the consistency error is sampled as its global maximum and as the
    maximum over the 3 x 3 node block around each probe.  Non-finite or runaway
    displacements stop the run; the abort is recorded in the result.
    """
    sc = res.scenario
    lat = res.lattice
    if solver == "lbm":
        l = sc.sync_period if sync_period is None else sync_period
        engine = PlaneStrainLBM(lat, res.material, res.bcs, sc.a0_phi, l, sc.sync_flux)
    elif solver == "oracle":
        engine = NavierFD(lat, res.material, res.bcs)
    else:
        raise ValueError(f"solver must be one of {SOLVERS}")
    dt = engine.dt
    n_steps = max(0, int(np.floor(sc.t_final / dt + 0.5)))
    snap_steps = {int(np.floor(ts / dt + 0.5)): ts for ts in sc.snapshot_times}
    out = RunResult(solver, dt, 0)
    out.probes = {name: [] for name in res.probes}
    track_error = solver == "lbm" and sc.error_every > 0
    if track_error:
        out.errors = {"t": [], "max": []}
        for name in res.probes:
            out.errors[name] = []
            out.errors[f"{name}_node"] = []
        patches = {name: res.probe_patch(name) for name in res.probes}

    def record(state):
        k = state.step
        u = state.kin.u.reshape(2, -1)
        if k % sc.probe_every == 0 or k == n_steps:
            out.t.append(state.t)
            for name, node in res.probes.items():
                out.probes[name].append(u[:, node].copy())
        if track_error and k % sc.error_every == 0:
            e = consistency_error(state, lat).reshape(-1)
            out.errors["t"].append(state.t)
            out.errors["max"].append(float(e.max()))
            for name, patch in patches.items():
                out.errors[name].append(float(e[patch].max()))
                out.errors[f"{name}_node"].append(float(e[res.probes[name]]))
        if k in snap_steps:
            out.snapshots[snap_steps[k]] = _snapshot_fields(state, lat, solver)

    start = time.perf_counter()
    state = engine.initialize()
    record(state)
    try:
        for _ in range(n_steps):
            state = engine.step(state)
            _check_bounded(state.kin.u, state.step, state.t)
            record(state)
            if callback is not None:
                callback(state)
    except NumericalInstability as exc:
        out.aborted = {"step": exc.step, "t": exc.t, "node": list(exc.node), "reason": str(exc)}
        log.warning("%s run aborted: %s", solver, exc)
    out.steps_done = state.step if out.aborted is None else out.aborted["step"]
    out.wall_clock = time.perf_counter() - start
    return out


def _snapshot_fields(state, lattice, solver: str) -> dict:
    from .fields import curl2d, div2d

    u = state.kin.u.copy()
    if solver == "lbm":
        return {"u": u, "phi": state.phi.copy(), "psi": state.psi.copy(),
                "e": consistency_error(state, lattice)}
    return {"u": u, "phi": div2d(u, lattice), "psi": curl2d(u, lattice),
            "e": np.zeros(lattice.shape)}


def _stamp(t: float) -> str:
    return f"{t:.4f}".replace(".", "p")


def run(scenario: Scenario, solver: str = "lbm", out_dir=".", *, sync_period: int | None = None,
        serial: bool = False) -> dict:
    """Run and write probe CSVs, snapshots and ``manifest.json`` into ``out_dir``.

    Returns the manifest.  ``solver`` may be ``lbm``, ``oracle`` or ``both``.
    """
    solvers = SOLVERS if solver == "both" else (solver,)
    for s in solvers:
        if s not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS + ('both',)}")
    if sync_period is not None:
        scenario = scenario.with_overrides(sync_period=sync_period)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = resolve(scenario)
    manifest = {
        "program": f"lbmsolid {__version__}",
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scenario": scenario_to_dict(scenario),
        "derived": res.derived(),
        "serial": serial,
        "runs": {},
    }
    for s in solvers:
        log.info("running %s for %s", s, scenario.name)
        r = simulate(res, s)
        files = []
        for name in res.probes:
            t, u = r.probe(name)
            files.append(write_probe_series(out / f"probe_{name}_{s}.csv", t, u).name)
        if r.errors:
            path = out / f"error_{s}.csv"
            keys = list(r.errors)
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(keys)
                w.writerows(zip(*(r.errors[k] for k in keys)))
            files.append(path.name)
        for ts, fields in sorted(r.snapshots.items()):
            for p in write_snapshot(fields, res.lattice, out / f"snapshot_{s}_t{_stamp(ts)}"):
                files.append(p.name)
        entry = {
            "dt": r.dt,
            "steps": r.steps_done,
            "t_end": r.t[-1] if r.t else 0.0,
            "wall_clock_s": r.wall_clock,
            "files": files,
            "aborted": r.aborted,
        }
        if s == "lbm":
            entry["sync_period"] = scenario.sync_period
        manifest["runs"][s] = entry
    write_manifest(manifest, out / "manifest.json")
    return manifest
