from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhfield.errors import ConstraintRankError, SingularHessianError
from nhfield.geometry import (
    constraint_forms,
    constraint_jacobian,
    constraint_package,
    energy_differential,
    function_gradient,
    function_hessian,
    jet,
    omega_stack,
    regularity,
)
from nhfield.ksla import KSymplecticSpace, Subspace, structure_validity
from nhfield.model import FieldPoint, build_linear_constraint_model, builtin, model_from_dict, unpack
from nhfield.symbolic import stage_tape

from conftest import linear_constraint_model, quartic_model, random_point
from oracles import fd_gradient, fd_hessian, fd_jacobian, rel_err


def kinetic(n, k):
    terms = " + ".join(f"v{i}_{A}^2" for A in range(1, k + 1) for i in range(1, n + 1))
    return model_from_dict({"name": "kinetic", "n": n, "k": k, "lagrangian": f"0.5*({terms})"})


REGULAR = ["free_particle", "harmonic", "knife_edge", "cosserat_regular", "flat_connection"]


def models_for_derivatives():
    return [builtin(n) for n in REGULAR + ["cosserat"]] + [quartic_model(), linear_constraint_model()]


class TestJet:
    def test_free_particle(self):
        m = kinetic(2, 2)
        w = FieldPoint([0.3, -0.1], [[1.0, 2.0], [3.0, 4.0]])
        j = jet(m, w)
        assert np.array_equal(j.dLdv, w.v)
        assert np.array_equal(j.hess_vv, np.eye(4))
        assert j.energy == pytest.approx(j.L, abs=1e-15)

    def test_cosserat_momenta(self, cosserat, rng):
        w = random_point(cosserat, rng)
        j = jet(cosserat, w)
        assert j.dLdv[0, 1] == pytest.approx(-w.q[5], abs=1e-15)
        assert j.dLdv[2, 1] == pytest.approx(-w.v[2, 1], abs=1e-15)
        assert j.dLdv[1, 0] == pytest.approx(w.v[1, 0], abs=1e-15)

    def test_harmonic(self):
        j = jet(builtin("harmonic"), FieldPoint([2.0], [[3.0]]))
        assert (j.dLdq[0], j.dLdv[0, 0], j.energy) == (-2.0, 3.0, 6.5)

    @pytest.mark.parametrize("model", models_for_derivatives(), ids=lambda m: m.name)
    def test_hessian_symmetric_and_energy_identity(self, model, rng):
        w = random_point(model, rng)
        j = jet(model, w)
        assert np.max(np.abs(j.hess_vv - j.hess_vv.T)) <= 1e-12
        v = w.v.T.reshape(-1)
        assert j.energy == float(np.dot(v, j.dLdv_flat) - j.L)


class TestDerivativesAgainstDifferences:
    @pytest.mark.parametrize("model", models_for_derivatives(), ids=lambda m: m.name)
    def test_lagrangian_jet(self, model, rng):
        for _ in range(5):
            w = random_point(model, rng, scale=0.7)
            x = w.flat()
            j = jet(model, w)
            grad = np.concatenate([j.dLdq, j.dLdv_flat])
            assert rel_err(grad, fd_gradient(model.L, x)) < 1e-6
            # second derivatives: differences of the exact gradient, and a plain second difference
            exact_grad = lambda y: function_gradient(model.L, y)[1]  # noqa: E731
            H = fd_jacobian(exact_grad, x, h=1e-5)
            n = model.n
            assert rel_err(j.hess_vv, H[n:, n:]) < 1e-6
            assert rel_err(j.hess_qv, H[:n, n:]) < 1e-6
            assert rel_err(function_hessian(model.L, x)[2], fd_hessian(model.L, x), floor=1.0) < 1e-4

    @pytest.mark.parametrize("model", models_for_derivatives(), ids=lambda m: m.name)
    def test_constraint_rows(self, model, rng):
        if model.m == 0:
            pytest.skip("no constraints")
        w = random_point(model, rng)
        phi, dphi = constraint_jacobian(model, w)
        fd = fd_jacobian(lambda y: np.array([f(y) for f in model.Phi]), w.flat())
        assert rel_err(dphi, fd) < 1e-6

    @pytest.mark.parametrize("model", models_for_derivatives(), ids=lambda m: m.name)
    def test_symbolic_tape_matches_hyperdual(self, model, rng):
        tape = stage_tape(model)
        for _ in range(5):
            w = random_point(model, rng)
            x = w.flat()
            L, dLdq, dLdv, hqv, hvv, phi, dphi = tape.evaluate(x)
            j = jet(model, w)
            assert L == pytest.approx(j.L, abs=1e-13)
            assert np.allclose(dLdq, j.dLdq, atol=1e-13)
            assert np.allclose(dLdv, j.dLdv_flat, atol=1e-13)
            assert np.allclose(hqv, j.hess_qv, atol=1e-13)
            assert np.allclose(hvv, j.hess_vv, atol=1e-13)
            if model.m:
                p2, d2 = constraint_jacobian(model, w)
                assert np.allclose(phi, p2, atol=1e-13)
                assert np.allclose(dphi, d2, atol=1e-13)

    @given(st.integers(0, 10_000))
    def test_energy_differential(self, seed):
        model = quartic_model()
        w = random_point(model, np.random.default_rng(seed), scale=0.8)

        def energy(y):
            return jet(model, unpack(y, model.n)).energy

        assert rel_err(energy_differential(model, w), fd_gradient(energy, w.flat())) < 1e-6


class TestRegularity:
    def test_free_particle(self):
        r = regularity(builtin("free_particle"), FieldPoint([0.0, 0.0], [[1.0], [2.0]]))
        assert r["regular"] and r["condition"] == 1.0

    def test_cosserat_is_degenerate(self, cosserat, rng):
        r = regularity(cosserat, random_point(cosserat, rng))
        assert not r["regular"]
        assert r["condition"] == 0.0
        for name in ["v6_1", "v7_1", "v6_2", "v7_2"]:
            assert name in r["degenerate_velocities"]
        assert "explicit field equations" in r["note"]

    def test_constructed_singular(self):
        m = model_from_dict({"name": "qv", "n": 1, "k": 1, "lagrangian": "0.5*q1^2*v1_1^2"})
        r = regularity(m, FieldPoint([0.0], [[0.5]]))
        assert not r["regular"] and r["condition"] == 0.0
        assert regularity(m, FieldPoint([1.0], [[0.5]]))["regular"]


class TestOmega:
    def test_canonical(self):
        m = model_from_dict({"name": "v", "n": 1, "k": 1, "lagrangian": "0.5*v1_1^2"})
        om = omega_stack(m, FieldPoint([0.0], [[1.0]]))
        assert np.array_equal(om.forms[0], [[0.0, 1.0], [-1.0, 0.0]])

    def test_free_particle_blocks(self):
        m = kinetic(2, 2)
        om = omega_stack(m, FieldPoint([0.1, 0.2], [[1.0, 2.0], [3.0, 4.0]]))
        for A in range(2):
            expected = np.zeros((6, 6))
            cols = slice(2 + 2 * A, 4 + 2 * A)
            expected[0:2, cols] = np.eye(2)
            expected[cols, 0:2] = -np.eye(2)
            assert np.array_equal(om.forms[A], expected)

    @pytest.mark.parametrize("name", ["cosserat", "cosserat_regular", "knife_edge"])
    def test_antisymmetric_and_vertical_vanishing(self, name, rng):
        m = builtin(name)
        n = m.n
        for _ in range(10):
            om = omega_stack(m, random_point(m, rng))
            for f in om.forms:
                assert np.max(np.abs(f + f.T)) <= 1e-12
                assert np.max(np.abs(f[n:, n:])) == 0.0

    @pytest.mark.parametrize("name", REGULAR)
    def test_ksymplectic_axioms_for_regular_lagrangians(self, name, rng):
        m = builtin(name)
        for _ in range(5):
            om = omega_stack(m, random_point(m, rng))
            space = KSymplecticSpace(om.forms, Subspace(om.vertical))
            assert structure_validity(space)["valid"]


class TestConstraintPackage:
    def test_single_velocity(self):
        m = build_linear_constraint_model(kinetic(2, 1), [[[1.0, 0.0]]])
        pk = constraint_package(m, FieldPoint([0.0, 0.0], [[0.0], [1.0]]))
        assert np.array_equal(pk.eta.reshape(-1), [1.0, 0.0])
        assert np.array_equal(pk.Z, [[1.0, 0.0]])
        assert np.array_equal(pk.C, [[1.0]])

    def test_gram_matrix_for_identity_hessian(self):
        m = build_linear_constraint_model(kinetic(3, 1), [[[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]]])
        pk = constraint_package(m, FieldPoint(np.zeros(3), np.zeros((3, 1))))
        assert np.array_equal(pk.C, np.eye(2))
        assert np.allclose(pk.C @ pk.Cinv, np.eye(2), atol=1e-10)

    def test_cosserat_chetaev_divergence(self, cosserat, rng):
        from nhfield.model import model_to_dict

        d = model_to_dict(cosserat)
        d["constraint_forms"] = {"mode": "chetaev"}
        chetaev = model_from_dict(d)
        w = random_point(cosserat, rng)
        R, v = cosserat.parameters["R"], w.v
        got = constraint_forms(chetaev, w)
        expected = np.zeros((2, 2, 7))
        expected[0, 0, [0, 2]] = [1.0, R * v[1, 1]]
        expected[0, 1, 1] = R * v[2, 0]
        expected[1, 0, [1, 2]] = [1.0, -R * v[0, 1]]
        expected[1, 1, 0] = -R * v[2, 0]
        assert np.allclose(got, expected, atol=1e-12)

    @pytest.mark.parametrize("model", [builtin("knife_edge"), linear_constraint_model(), builtin("flat_connection")], ids=lambda m: m.name)
    def test_invariants(self, model, rng):
        for _ in range(10):
            w = random_point(model, rng)
            j = jet(model, w)
            pk = constraint_package(model, w, j)
            flat_eta = pk.eta.reshape(model.m, -1)
            assert np.linalg.matrix_rank(flat_eta) == model.m
            assert np.max(np.abs(j.hess_vv @ pk.Z.T - flat_eta.T)) < 1e-10
            assert np.all(pk.Z_full()[:, : model.n] == 0.0)
            assert np.max(np.abs(pk.C @ pk.Cinv - np.eye(model.m))) < 1e-10
            om = omega_stack(model, w, j)
            for a in range(model.m):
                for A in range(model.k):
                    contraction = pk.Z_full()[a] @ om.forms[A]
                    target = np.zeros(model.dim)
                    target[: model.n] = -pk.eta[a, A]
                    assert np.max(np.abs(contraction - target)) < 1e-10

    def test_singular_hessian_raises(self, cosserat, rng):
        with pytest.raises(SingularHessianError):
            constraint_package(cosserat, random_point(cosserat, rng))

    def test_dependent_forms_raise(self):
        m = build_linear_constraint_model(kinetic(3, 1), [[[1.0, 0.0, 0.0]], [[2.0, 0.0, 0.0]]])
        with pytest.raises(ConstraintRankError):
            constraint_package(m, FieldPoint(np.zeros(3), np.zeros((3, 1))))

    def test_incompatibility_is_a_flag(self):
        # Lagrangian with an indefinite Hessian whose null cone contains the constraint gradient
        m = model_from_dict(
            {"name": "null", "n": 2, "k": 1, "lagrangian": "v1_1*v2_1", "constraints": ["v1_1"]}
        )
        pk = constraint_package(m, FieldPoint([0.0, 0.0], [[0.0], [1.0]]))
        assert not pk.compatible and pk.Cinv is None and pk.condition == 0.0
