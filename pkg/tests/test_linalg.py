import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trotterheal.linalg import (
    DimensionMismatch,
    NonHermitianError,
    check_hermitian,
    commutator,
    eigendecompose,
    expm_hermitian,
    expm_hermitian_batch,
    hermiticity,
    random_hermitian,
    trace_product,
    unitarity_defect,
)
from trotterheal.models import ModelSpec, build_final, collective_spin, pauli

from oracles import taylor_expm

SX, SY, SZ = pauli("x"), pauli("y"), pauli("z")


def test_pauli_x_spectrum():
    eig = eigendecompose(SX)
    np.testing.assert_allclose(eig.values, [-1.0, 1.0], atol=1e-14)


def test_zero_matrix_gives_identity_basis():
    eig = eigendecompose(np.zeros((4, 4)))
    np.testing.assert_array_equal(eig.values, np.zeros(4))
    np.testing.assert_allclose(eig.vectors, np.eye(4), atol=1e-14)


def test_ising_two_site_diagonal():
    H = build_final(ModelSpec(family="ising", N=2, J_Z=1.0, h=1.0, periodic=True))
    np.testing.assert_allclose(np.diag(H).real, [0.0, 2.0, 2.0, -4.0])
    eig = eigendecompose(H)
    np.testing.assert_allclose(eig.values, np.sort(np.diag(H).real), atol=1e-13)
    # brute-force characteristic polynomial roots
    roots = np.sort(np.roots(np.poly(H)).real)
    np.testing.assert_allclose(eig.values, roots, atol=1e-6)


def test_non_hermitian_rejected_with_asymmetry():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(NonHermitianError) as exc:
        eigendecompose(a)
    assert exc.value.asymmetry == pytest.approx(1.0)


def test_non_square_rejected():
    with pytest.raises(DimensionMismatch):
        check_hermitian(np.zeros((2, 3)))


def test_phase_convention_first_component_real_positive():
    rng = np.random.default_rng(3)
    eig = eigendecompose(random_hermitian(6, rng))
    for k in range(6):
        col = eig.vectors[:, k]
        lead = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
        assert abs(lead.imag) < 1e-14 and lead.real > 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2**32 - 1))
def test_eigensystem_invariants(dim, seed):
    h = random_hermitian(dim, np.random.default_rng(seed))
    eig = eigendecompose(h)
    assert np.all(np.diff(eig.values) >= 0)
    assert unitarity_defect(eig.vectors) < 1e-10
    resid = h @ eig.vectors - eig.vectors * eig.values[None, :]
    assert np.abs(resid).max() <= 1e-10 * max(1.0, np.abs(h).max() * dim)


def test_expm_examples():
    np.testing.assert_allclose(expm_hermitian(SX, 0.0), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(
        expm_hermitian(SZ, math.pi / 2), np.diag([np.exp(-0.5j * math.pi), np.exp(0.5j * math.pi)]), atol=1e-15
    )


def test_expm_against_taylor_random_8x8():
    h = random_hermitian(8, np.random.default_rng(0))
    np.testing.assert_allclose(expm_hermitian(h, 0.3), taylor_expm(h, 0.3), atol=1e-10)


def test_expm_rejects_nonfinite_theta():
    with pytest.raises(ValueError):
        expm_hermitian(SX, float("nan"))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 64), st.floats(-3.0, 3.0), st.integers(0, 2**32 - 1))
def test_expm_unitary(dim, theta, seed):
    h = random_hermitian(dim, np.random.default_rng(seed))
    assert unitarity_defect(expm_hermitian(h, theta)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.integers(0, 2**32 - 1))
def test_expm_composition(a, b, seed):
    h = random_hermitian(6, np.random.default_rng(seed))
    np.testing.assert_allclose(expm_hermitian(h, a) @ expm_hermitian(h, b), expm_hermitian(h, a + b), atol=1e-10)


def test_expm_batch_matches_single():
    rng = np.random.default_rng(5)
    hs = np.array([random_hermitian(5, rng) for _ in range(4)])
    th = np.array([0.1, -0.4, 1.0, 2.5])
    out = expm_hermitian_batch(hs, th)
    for k in range(4):
        np.testing.assert_allclose(out[k], expm_hermitian(hs[k], th[k]), atol=1e-12)


def test_collective_commutator_dicke_n3():
    sx, sy, sz = (collective_spin(3, a, "dicke") for a in "xyz")
    np.testing.assert_allclose(commutator(sx, sz), -1j * sy, atol=1e-12)
    assert hermiticity(commutator(sx, sz)) == "anti-hermitian"
    assert hermiticity(1j * commutator(sx, sz)) == "hermitian"


def test_commutator_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        commutator(np.eye(2), np.eye(3))


def test_trace_product_identities():
    np.testing.assert_allclose(trace_product(SX, SX), 2.0)
    assert trace_product(SX, SZ) == 0
    with pytest.raises(DimensionMismatch):
        trace_product(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_trace_product_matches_matmul_and_conjugation(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    b = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    assert trace_product(a, b) == pytest.approx(np.trace(a @ b), abs=1e-10)
    lhs = trace_product(a.conj().T, b.conj().T)
    assert lhs == pytest.approx(np.conj(trace_product(b, a)), abs=1e-10)
