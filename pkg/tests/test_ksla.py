from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from nhfield.ksla import (
    KSymplecticSpace,
    Subspace,
    check_distribution_equivalence,
    classify,
    intersection,
    orthogonal,
    restrict,
    structure_validity,
)
from nhfield.model import FieldPoint, builtin

from conftest import degenerate_distribution_model, feasible_point, plane_distribution_model


def wedge(N, i, j):
    w = np.zeros((N, N))
    w[i, j], w[j, i] = 1.0, -1.0
    return w


def r3_space():
    forms = np.array([wedge(3, 0, 2), wedge(3, 1, 2)])
    return KSymplecticSpace(forms, Subspace.span(np.eye(3)[:, :2]))


def canonical_space(n, k):
    """``(R^n) x (R^n)^k`` with ``omega^A = sum_i dq^i ^ dv^i_A`` and ``V`` the velocity block."""
    N = n + n * k
    forms = np.zeros((k, N, N))
    for A in range(k):
        for i in range(n):
            forms[A] += wedge(N, i, n + A * n + i)
    return KSymplecticSpace(forms, Subspace(np.eye(N)[:, n:]))


class TestThreeDimensionalExample:
    def test_orthogonal(self):
        space = r3_space()
        W = Subspace.span(np.array([0.0, 0.0, 1.0]))
        Wp = orthogonal(space, W)
        assert Wp.distance(W) < 1e-12
        assert W.d + Wp.d == 2

    def test_classification(self):
        flags = classify(r3_space(), Subspace.span(np.array([0.0, 0.0, 1.0])))
        assert flags["isotropic"] and flags["coisotropic"] and flags["lagrangian"]
        assert not flags["ksymplectic"]

    def test_structure(self):
        assert structure_validity(r3_space())["valid"]


class TestOrthogonal:
    def test_full_space(self):
        space = canonical_space(2, 2)
        assert orthogonal(space, Subspace.full(space.N)).d == 0

    def test_zero_space(self):
        space = canonical_space(2, 2)
        assert orthogonal(space, Subspace.zero(space.N)).d == space.N

    def test_vertical_is_isotropic(self):
        space = canonical_space(2, 3)
        assert classify(space, space.V)["isotropic"]

    def test_invalid_structures_are_reported(self):
        N = 3
        not_antisym = KSymplecticSpace(np.eye(N)[None], Subspace.zero(N))
        assert not structure_validity(not_antisym)["valid"]
        kernel = KSymplecticSpace(wedge(N, 0, 1)[None], Subspace.zero(N))
        assert structure_validity(kernel)["kernel_dim"] == 1


def random_subspace(rng, N, d):
    return Subspace.span(rng.normal(size=(N, d)))


@given(st.integers(0, 100_000), st.integers(1, 3), st.integers(1, 3))
def test_monotonicity(seed, n, k):
    rng = np.random.default_rng(seed)
    space = canonical_space(n, k)
    N = space.N
    B = random_subspace(rng, N, rng.integers(1, N + 1))
    A = Subspace.span(B.basis @ rng.normal(size=(B.d, rng.integers(1, B.d + 1))))
    assert A.within(B)
    assert orthogonal(space, B).within(orthogonal(space, A))


@given(st.integers(0, 100_000), st.integers(1, 3), st.integers(1, 3))
def test_double_orthogonal(seed, n, k):
    rng = np.random.default_rng(seed)
    space = canonical_space(n, k)
    W = random_subspace(rng, space.N, rng.integers(1, space.N + 1))
    assert W.within(orthogonal(space, orthogonal(space, W)))


@given(st.integers(0, 100_000), st.integers(2, 5))
def test_restriction_of_ksymplectic_subspace(seed, d):
    rng = np.random.default_rng(seed)
    space = canonical_space(2, 2)
    W = random_subspace(rng, space.N, d)
    flags = classify(space, W)
    assume(flags["ksymplectic"])
    assert structure_validity(restrict(space, W))["valid"]


def test_intersection():
    a = Subspace.span(np.eye(3)[:, :2])
    b = Subspace.span(np.eye(3)[:, 1:])
    assert intersection(a, b).distance(Subspace.span(np.eye(3)[:, 1])) < 1e-12


class TestDistributionEquivalence:
    def test_plane_distribution(self, rng):
        m = plane_distribution_model()
        for _ in range(10):
            r = check_distribution_equivalence(m, feasible_point(m, rng))
            assert r["compatible"] and r["H_ksymplectic"] and r["agree"]
            assert r["Dv_coisotropic"] and r["coisotropy_residual"] < 1e-10

    def test_engineered_degenerate_point(self):
        m = degenerate_distribution_model()
        w = FieldPoint([0.0, 0.3], [[0.5, -0.2], [0.0, 0.0]])
        r = check_distribution_equivalence(m, w)
        assert not r["compatible"] and not r["H_ksymplectic"] and r["agree"]
        away = check_distribution_equivalence(m, FieldPoint([1.0, 0.3], [[0.5, -0.2], [0.0, 0.0]]))
        assert away["compatible"] and away["H_ksymplectic"]

    def test_flat_connection(self, rng):
        m = builtin("flat_connection")
        for _ in range(10):
            r = check_distribution_equivalence(m, feasible_point(m, rng))
            assert r["agree"] and r["compatible"] and r["Dv_coisotropic"]

    def test_unconstrained(self):
        m = builtin("free_particle")
        r = check_distribution_equivalence(m, FieldPoint([0.0, 0.0], [[1.0], [1.0]]))
        assert r["dim_H"] == m.dim and r["H_ksymplectic"] and r["compatible"]
