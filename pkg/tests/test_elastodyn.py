import numpy as np
import pytest

from lbmsolid.elastodyn import (
    FREE,
    BoundaryModel,
    Dirichlet,
    KinematicState,
    Neumann,
    NumericalInstability,
    PlaneStrainLBM,
    SolverState,
    advance_field,
    boundary_distribution_reset,
    consistency_error,
    dirichlet_acceleration,
    initialize,
    interior_acceleration,
    neumann_acceleration,
    newmark_integrate,
)
from lbmsolid.fields import Material, Stress, div2d, curl2d
from lbmsolid.geometry import Geometry, Hole, build_lattice
from lbmsolid.wave_lbm import LbmParams, equilibrium, macro_moments
from lbmsolid.scenario import RampHold


def ramp(peak=0.005):
    return RampHold(peak, 1.0)


def tension_bcs(peak=0.005):
    return {"top": Neumann((0.0, 1.0), ramp(peak)), "bottom": Neumann((0.0, -1.0), ramp(peak))}


def uniform_stress(lat, sxx, syy, sxy):
    full = np.ones(lat.shape)
    return Stress(sxx * full, syy * full, sxy * full)


class TestInitialize:
    def test_zero_state(self, square11, unit_material):
        _, st = initialize(square11, unit_material, {})
        for a in (st.u, st.kin.v, st.f_phi, st.f_psi, st.phi, st.psi):
            assert not a.any()

    def test_rigid_rotation(self, square11, unit_material):
        X, Y = square11.coordinates()
        solver, st = initialize(square11, unit_material, {}, u0=np.stack([-0.01 * Y, 0.01 * X]))
        assert np.allclose(st.psi, 0.02, atol=1e-14)
        assert np.allclose(st.phi, 0.0, atol=1e-14)
        w = np.array([solver.params_psi.a0] + [solver.params_psi.a] * 4)
        assert np.allclose(st.f_psi, 0.02 * w[:, None, None], atol=1e-15)

    def test_stretch(self, square11, unit_material):
        X, Y = square11.coordinates()
        _, st = initialize(square11, unit_material, {}, u0=np.stack([0.01 * X, 0.03 * Y]))
        assert np.allclose(st.phi, 0.04, atol=1e-14)
        assert np.allclose(st.psi, 0.0, atol=1e-14)
        assert consistency_error(st, square11).max() < 1e-16


class TestInteriorAcceleration:
    @pytest.mark.parametrize("phi,psi,expect", [
        (lambda X, Y: 0.1 * X, lambda X, Y: 0 * X, lambda m: (m.c_d**2 * 0.1, 0.0)),
        (lambda X, Y: 0 * X, lambda X, Y: 0.1 * Y, lambda m: (-m.c_s**2 * 0.1, 0.0)),
        (lambda X, Y: X + Y, lambda X, Y: X - Y,
         lambda m: (m.c_d**2 + m.c_s**2, m.c_d**2 + m.c_s**2)),
    ])
    def test_examples(self, square11, phi, psi, expect):
        m = Material(lam=3.0, mu=1.5, rho=2.0)
        X, Y = square11.coordinates()
        acc = interior_acceleration(phi(X, Y), psi(X, Y), m, square11)
        inner = square11.material & ~square11.boundary
        ex = expect(m)
        assert np.allclose(acc[0][inner], ex[0], atol=1e-12)
        assert np.allclose(acc[1][inner], ex[1], atol=1e-12)
        assert not acc[:, square11.boundary].any()


class TestNeumannAcceleration:
    def test_unloaded(self, square11, unit_material):
        cell = square11.cells[square11.flat(5, 0)]
        s = uniform_stress(square11, 0, 0, 0)
        a = neumann_acceleration(cell, s, lambda *_: (0.0, 0.0), unit_material)
        assert not a.any()

    @pytest.mark.parametrize("node", [(5, 10), (0, 0), (10, 3), (10, 10)])
    def test_uniform_stress_balances(self, square11, unit_material, node):
        sxx, syy, sxy = 0.3, -0.2, 0.15
        sig = np.array([[sxx, sxy], [sxy, syy]])
        cell = square11.cells[square11.flat(*node)]
        s = uniform_stress(square11, sxx, syy, sxy)
        outward = {"left": (-1, 0), "right": (1, 0), "bottom": (0, -1), "top": (0, 1)}
        a = neumann_acceleration(cell, s, lambda mid, lab, t: sig @ outward[lab], unit_material)
        assert np.abs(a).max() <= 1e-12

    def test_top_edge_load(self, square11):
        m = Material(lam=1.0, mu=1.0, rho=2.0)
        cell = square11.cells[square11.flat(4, 10)]
        s = uniform_stress(square11, 0, 0, 0)
        s0 = 0.01
        a = neumann_acceleration(cell, s, lambda mid, lab, t: (0.0, s0 if lab == "top" else 0.0), m)
        assert a == pytest.approx([0.0, 2 * s0 / (m.rho * square11.spacing)])

    def test_vectorized_model_matches_pointwise(self, unit_material):
        lat = build_lattice(Geometry(1.0, 1.0, (Hole((0.5, 0.5), 0.3),)), 0.05)
        bcs = {"top": Neumann((0.2, 1.0), lambda t: 0.01 * t), "left": Neumann((0.0, 0.5))}
        model = BoundaryModel(lat, unit_material, bcs)
        rng = np.random.default_rng(0)
        u = rng.normal(size=(2, lat.size)) * 1e-3 * lat.material.ravel()
        from lbmsolid.fields import stress

        sig = stress(u.reshape((2,) + lat.shape), unit_material, lat)
        ax, ay = model.neumann(u.reshape(-1), 0.7)
        for r, k in enumerate(model.neumann_nodes):
            a = neumann_acceleration(lat.cells[int(k)], sig, model.traction, unit_material, 0.7)
            assert a == pytest.approx([ax[r], ay[r]], abs=1e-12)


class TestDirichletAcceleration:
    def test_at_target(self):
        assert not dirichlet_acceleration([1.0, 2.0], [1.0, 2.0], [0.0, 0.0], 0.1).any()

    def test_free_flight_hits_target(self):
        u, v, dt = np.array([0.1, 0.2]), np.array([1.0, -2.0]), 0.05
        assert np.allclose(dirichlet_acceleration(u + dt * v, u, v, dt), 0.0, atol=1e-12)

    def test_lands_on_target(self):
        dt, d = 0.01, 3e-3
        a = dirichlet_acceleration([0.0, d], [0.0, 0.0], [0.0, 0.0], dt)
        assert a == pytest.approx([0.0, 2 * d / dt**2])
        kin = newmark_integrate(KinematicState(np.zeros(2), np.zeros(2), np.zeros(2)), a, dt)
        assert kin.u == pytest.approx([0.0, d], abs=1e-18)


class TestNewmark:
    def test_free_flight(self):
        kin = KinematicState(np.array([1.0, 0.0]), np.array([0.5, -1.0]), np.zeros(2))
        out = newmark_integrate(kin, np.zeros(2), 0.2)
        assert out.u == pytest.approx([1.1, -0.2]) and out.t == pytest.approx(0.2)

    def test_constant_acceleration_is_exact(self):
        g, dt, n = np.array([0.3, -1.1]), 0.01, 250
        kin = KinematicState(np.zeros(2), np.zeros(2), np.zeros(2))
        for _ in range(n):
            kin = newmark_integrate(kin, g, dt)
        assert kin.v == pytest.approx(n * dt * g, rel=1e-12)
        assert kin.u == pytest.approx(0.5 * (n * dt) ** 2 * g, rel=1e-12)

    def test_single_step(self):
        kin = newmark_integrate(KinematicState(np.zeros(2), np.zeros(2), np.zeros(2)),
                                np.array([2.0, 0.0]), 1.0)
        assert kin.u == pytest.approx([1.0, 0.0]) and kin.v == pytest.approx([2.0, 0.0])


class TestBoundaryFields:
    def test_linear(self, square11, unit_material):
        solver = PlaneStrainLBM(square11, unit_material, {})
        X, Y = square11.coordinates()
        phi_b, psi_b = solver.boundary_fields(np.stack([0.01 * X - 0.02 * Y, 0.05 * X]))
        assert np.allclose(phi_b, 0.01) and np.allclose(psi_b, 0.07)

    def test_zero(self, square11, unit_material):
        solver = PlaneStrainLBM(square11, unit_material, {})
        phi_b, psi_b = solver.boundary_fields(np.zeros((2,) + square11.shape))
        assert not phi_b.any() and not psi_b.any()

    def test_matches_independent_sweep_after_first_step(self, square21, unit_material):
        solver, st = initialize(square21, unit_material, tension_bcs(peak=5.0))
        for _ in range(3):
            st = solver.step(st)
        h = square21.spacing
        # numpy's second-order gradient uses the same one-sided edge stencils
        dux = np.gradient(st.u[0], h, h, edge_order=2)
        duy = np.gradient(st.u[1], h, h, edge_order=2)
        bnd = square21.boundary
        assert np.abs(st.u).max() > 0
        assert np.allclose(st.phi[bnd], (dux[0] + duy[1])[bnd], rtol=1e-12, atol=1e-18)
        assert np.allclose(st.psi[bnd], (duy[0] - dux[1])[bnd], rtol=1e-12, atol=1e-18)


class TestBoundaryReset:
    def test_zero(self):
        p = LbmParams.from_rest_weight(0.8, 0.1, 0.1)
        assert not boundary_distribution_reset(0.0, np.zeros(2), p).any()

    def test_weight_split(self):
        p = LbmParams.from_rest_weight(0.8, 0.1, 0.1)
        assert boundary_distribution_reset(2.0, np.zeros(2), p) == pytest.approx(
            [1.6, 0.1, 0.1, 0.1, 0.1])

    def test_hand_evaluation(self):
        p = LbmParams.from_rest_weight(0.8, 0.1, 0.1)
        f = boundary_distribution_reset(1.0, np.array([p.c, 0.0]), p)
        assert f == pytest.approx([0.8, 0.55, 0.05, -0.45, 0.05])
        v, J = macro_moments(f, p)
        assert v == pytest.approx(1.0) and J == pytest.approx([p.c, 0.0])


class TestAdvanceField:
    """Boundary nodes as value sources for the wave field."""

    def test_static_equilibrium_boundary_is_plain_update(self, square11):
        from lbmsolid.wave_lbm import collide, stream

        p = LbmParams.from_rest_weight(0.9, 0.01, 0.1)
        rng = np.random.default_rng(1)
        value = rng.normal(size=square11.shape)
        J = rng.normal(size=(2,) + square11.shape) * 0.1
        f = equilibrium(value, J, p)
        bnd = np.flatnonzero(square11.boundary)
        vb = value.reshape(-1)[bnd]
        out = advance_field(f, square11, bnd, vb, vb, p)
        assert np.allclose(out, stream(collide(f, p), square11), atol=1e-14)

    def test_equivalent_three_level_scheme(self, square21):
        # With relaxation factor 2 the update is phi_new = 2 M phi - phi_old, where
        # M averages a node with weight a0 and its four neighbors with weight a.
        # Boundary nodes then act as Dirichlet data taken at the half step,
        # D^n = (phi_b^n + phi_b^(n+1)) / 2; the start from rest uses phi_b^1.
        p = LbmParams.from_rest_weight(0.6, 0.01, 0.05)
        lat = square21
        bnd_mask = lat.boundary
        bnd = np.flatnonzero(bnd_mask)
        X, Y = lat.coordinates()

        def bvals(n):
            return (np.sin(3 * X + 0.2 * n) * np.cos(2 * Y))[bnd_mask]

        phi0 = np.sin(3 * X) * np.cos(2 * Y)

        def M(a, data):
            a = a.copy()
            a[bnd_mask] = data
            out = p.a0 * a
            out[1:-1, 1:-1] += p.a * (a[2:, 1:-1] + a[:-2, 1:-1] + a[1:-1, 2:] + a[1:-1, :-2])
            return out

        f = equilibrium(phi0, np.zeros((2,) + lat.shape), p)
        val = phi0.copy()
        ref_prev, ref = None, phi0.copy()
        inner = ~bnd_mask
        for n in range(40):
            f = advance_field(f, lat, bnd, bvals(n), bvals(n + 1), p)
            val = f.sum(axis=0)
            val[bnd_mask] = bvals(n + 1)
            if ref_prev is None:
                new = M(ref, bvals(1))
            else:
                new = 2 * M(ref, 0.5 * (bvals(n) + bvals(n + 1))) - ref_prev
            ref_prev, ref = ref, new
            assert np.abs(val - ref)[inner].max() < 1e-12, n


class TestSynchronize:
    def make(self, lat, mat, flux="keep"):
        solver, st = initialize(lat, mat, tension_bcs(peak=1.0), sync_period=0, sync_flux=flux)
        for _ in range(30):
            st = solver.step(st)
        return solver, st

    def test_consistent_state_unchanged(self, square11, unit_material):
        X, Y = square11.coordinates()
        solver, st = initialize(square11, unit_material, {}, u0=np.stack([0.01 * X, 0.02 * Y]))
        synced = solver.synchronize(st)
        assert np.allclose(synced.f_phi, st.f_phi, atol=1e-16)
        assert np.allclose(synced.phi, st.phi, atol=1e-16)

    def test_removes_perturbation_keeps_flux(self, square21, unit_material):
        solver, st = self.make(square21, unit_material)
        f = st.f_phi.copy()
        f[0, 8, 8] += 1e-3
        bad = SolverState(st.kin, f, st.f_psi, f.sum(axis=0), st.psi, st.step)
        synced = solver.synchronize(bad)
        assert np.allclose(synced.phi, div2d(st.u, square21), atol=1e-14)
        _, j_before = macro_moments(bad.f_phi, solver.params_phi)
        _, j_after = macro_moments(synced.f_phi, solver.params_phi)
        assert np.allclose(j_after, j_before, atol=1e-13)

    def test_velocity_flux(self, square21, unit_material):
        solver, st = self.make(square21, unit_material, flux="velocity")
        synced = solver.synchronize(st)
        _, j_phi = macro_moments(synced.f_phi, solver.params_phi)
        _, j_psi = macro_moments(synced.f_psi, solver.params_psi)
        v = st.kin.v * square21.material
        assert np.allclose(j_phi, -v, atol=1e-14)
        assert np.allclose(j_psi, np.stack([-v[1], v[0]]), atol=1e-14)

    @pytest.mark.parametrize("flux", ["keep", "velocity"])
    def test_idempotent_and_consistent(self, square21, unit_material, flux):
        solver, st = self.make(square21, unit_material, flux)
        once = solver.synchronize(st)
        twice = solver.synchronize(once)
        assert np.allclose(twice.f_phi, once.f_phi, rtol=1e-12, atol=1e-18)
        assert np.allclose(twice.f_psi, once.f_psi, rtol=1e-12, atol=1e-18)
        scale = max(np.abs(once.phi).max(), np.abs(once.psi).max())
        assert consistency_error(once, square21).max() <= 1e-12 * scale


class TestStep:
    def test_null_solution(self, square11, unit_material):
        solver, st = initialize(square11, unit_material, {"top": FREE}, sync_period=7)
        for _ in range(300):
            st = solver.step(st)
        for a in (st.u, st.kin.v, st.f_phi, st.f_psi, st.phi, st.psi):
            assert not a.any()

    def test_rigid_translation(self, square11, unit_material):
        drift = lambda t: 2e-3 * t  # noqa: E731
        bcs = {lab: Dirichlet((1.0, 0.0), drift) for lab in ("left", "right", "top", "bottom")}
        solver = PlaneStrainLBM(square11, unit_material, bcs)
        st = solver.initialize(v0=np.stack([np.full(square11.shape, 2e-3),
                                            np.zeros(square11.shape)]))
        for _ in range(200):
            st = solver.step(st)
        assert np.allclose(st.u[0], drift(st.t), rtol=1e-10)
        assert np.abs(st.u[1]).max() < 1e-16
        assert np.abs(st.phi).max() < 1e-14 and np.abs(st.psi).max() < 1e-14

    def test_time_advances_by_dt(self, square11, unit_material):
        solver, st = initialize(square11, unit_material, {})
        for _ in range(5):
            st = solver.step(st)
        assert st.step == 5 and st.t == pytest.approx(5 * solver.dt)

    def test_dirichlet_nodes_exact(self, square11, unit_material):
        bcs = {"bottom": Dirichlet((0.0, 1.0), lambda t: 1e-3 * np.sin(40 * t)),
               "top": Neumann((1.0, 0.0), lambda t: 0.01)}
        solver, st = initialize(square11, unit_material, bcs)
        nodes = solver.boundary_model.dirichlet_nodes
        for _ in range(200):
            st = solver.step(st)
            u = st.u.reshape(2, -1)[:, nodes]
            assert np.all(u[0] == 0.0)
            assert np.allclose(u[1], 1e-3 * np.sin(40 * st.t), rtol=0, atol=1e-18)

    def test_instability_is_reported(self, square11, unit_material):
        solver, st = initialize(square11, unit_material, {})
        st.kin.v[0, 4, 6] = np.nan
        with pytest.raises(NumericalInstability) as exc:
            solver.step(st)
        assert exc.value.step == 1 and exc.value.node == (4, 6)

    def test_deterministic(self, square21, unit_material):
        runs = []
        for _ in range(2):
            solver, st = initialize(square21, unit_material, tension_bcs(1.0), sync_period=5)
            for _ in range(40):
                st = solver.step(st)
            runs.append(st)
        assert np.array_equal(runs[0].u, runs[1].u)
        assert np.array_equal(runs[0].f_psi, runs[1].f_psi)

    def test_consistency_error_zero_after_initialize(self, square21, unit_material):
        X, Y = square21.coordinates()
        _, st = initialize(square21, unit_material, {}, u0=np.stack([X * Y, X**2]) * 1e-3)
        assert consistency_error(st, square21).max() < 1e-16

    def test_quasi_static_biaxial_dilatation(self, square21, unit_material):
        # uniform biaxial traction s: tr(eps) = s / (lambda + mu) in plane strain
        s = 1e-3
        load = RampHold(s, 1.0)
        bcs = {"top": Neumann((0.0, 1.0), load), "bottom": Neumann((0.0, -1.0), load),
               "left": Neumann((-1.0, 0.0), load), "right": Neumann((1.0, 0.0), load)}
        solver, st = initialize(square21, unit_material, bcs, sync_period=50)
        means = []
        t_end = 5.0
        n = int(t_end / solver.dt)
        for k in range(n):
            st = solver.step(st)
            if st.t > 2.0 and k % 20 == 0:
                means.append(st.phi[square21.material].mean())
        target = s / (unit_material.lam + unit_material.mu)
        assert np.mean(means) == pytest.approx(target, rel=0.02)
