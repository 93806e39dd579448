import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from ctoqw import linalg
from ctoqw.errors import PreconditionError
from ctoqw.superop import SuperOp
from oracles import dwell_integral_oracle
from strategies import random_density, random_hermitian


def test_vec_unvec_roundtrip():
    m = np.arange(6, dtype=complex).reshape(2, 3) + 1j
    assert_allclose(linalg.unvec(linalg.vec(m), (2, 3)), m)


def test_vec_convention():
    a = np.random.default_rng(0).standard_normal((3, 3)) + 0j
    b = np.random.default_rng(1).standard_normal((3, 3)) + 0j
    rho = np.random.default_rng(2).standard_normal((3, 3)) + 0j
    lhs = linalg.vec(a @ rho @ b.conj().T)
    rhs = np.kron(b.conj(), a) @ linalg.vec(rho)
    assert_allclose(lhs, rhs, atol=1e-12)


def test_superop_apply_matches_kraus():
    rng = np.random.default_rng(3)
    ops = [rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3)) for _ in range(2)]
    s = SuperOp.from_kraus(ops)
    rho = random_density(rng, 3)
    direct = sum(k @ rho @ k.conj().T for k in ops)
    assert_allclose(s.apply(rho), direct, atol=1e-12)
    # adjoint: Tr(X Phi(rho)) == Tr(Phi*(X) rho)
    x = random_hermitian(rng, 2)
    lhs = np.trace(x @ s.apply(rho))
    rhs = np.trace(s.adjoint_apply(x) @ rho)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_choi_psd_for_kraus_maps_and_kraus_recovery():
    rng = np.random.default_rng(4)
    ops = [rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)) for _ in range(3)]
    s = SuperOp.from_kraus(ops)
    assert s.choi_min_eigenvalue() >= -1e-12
    rebuilt = SuperOp.from_kraus(SuperOp(s.source_dim, s.target_dim, s.matrix).kraus())
    assert_allclose(rebuilt.matrix, s.matrix, atol=1e-10)


def test_transpose_map_is_not_cp():
    d = 2
    mat = np.zeros((d * d, d * d), dtype=complex)
    for a in range(d):
        for b in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[a, b] = 1.0
            mat[:, b * d + a] = linalg.vec(e.T)
    t = SuperOp(d, d, mat)
    assert t.choi_min_eigenvalue() < -0.5


def test_amplitude_damping_trace_preserving():
    gamma = 0.3
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]])
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]])
    s = SuperOp.from_kraus([k0, k1])
    assert s.trace_increase_defect() == pytest.approx(0.0, abs=1e-12)
    assert_allclose(s.adjoint_at_identity(), np.eye(2), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_lyapunov_dwell_residual_and_oracle(seed, d):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    g = g - (linalg.spectral_abscissa(g) + 0.6) * np.eye(d)  # force stability
    x = random_hermitian(rng, d)
    y = linalg.lyapunov_dwell(g, x)
    res = np.linalg.norm(g @ y + y @ g.conj().T + x)
    assert res <= 1e-10 * (1 + np.linalg.norm(x))
    assert_allclose(y, dwell_integral_oracle(g, x), atol=5e-7)


def test_require_stable_reports_eigenvalue():
    with pytest.raises(PreconditionError) as err:
        linalg.require_stable(np.array([[0.0]]))
    assert "eigenvalue" in str(err.value)


def test_power_iteration_matches_eig():
    rng = np.random.default_rng(5)
    k = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    mat = np.kron(k.conj(), k)  # CP map, PSD leading eigenmatrix
    lam, v, ok, _ = linalg.power_iteration(mat, tol=1e-12)
    assert ok
    vals = np.linalg.eigvals(mat)
    assert abs(lam) == pytest.approx(np.max(np.abs(vals)), rel=1e-8)


def test_gauss_legendre_integrates_polynomials():
    x, w = linalg.gauss_legendre_01(6)
    for k in range(10):
        assert np.sum(w * x**k) == pytest.approx(1.0 / (k + 1), abs=1e-12)


def test_simplex_quadrature_volume_and_moment():
    import math

    # volume of the ordered region is t^n / n!
    t = 0.8
    for n in (1, 2, 3):
        vol = 0.0
        first = 0.0
        for times, weights in linalg.simplex_quadrature_blocks(n, t, 6):
            vol += float(np.sum(weights))
            first += float(np.sum(weights * times[:, 0]))
        assert vol == pytest.approx(t**n / math.factorial(n), rel=1e-12)
        # the integral of t_1 over the region is t^{n+1}/(n+1)!
        exact = t ** (n + 1) / math.factorial(n + 1)
        assert first == pytest.approx(exact, rel=1e-10)


def test_propagator_matches_expm():
    rng = np.random.default_rng(6)
    g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    p = linalg.Propagator(g)
    for t in (0.0, 0.3, 1.7):
        assert_allclose(p.at(t), linalg.expm(t * g), atol=1e-10)
    ts = np.array([0.1, 0.9])
    many = p.many(ts)
    for k, t in enumerate(ts):
        assert_allclose(many[k], linalg.expm(t * g), atol=1e-10)
