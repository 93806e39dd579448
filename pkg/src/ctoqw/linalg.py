"""Dense linear-algebra helpers.

Vectorization convention, fixed package-wide: ``vec`` stacks columns, so

    vec(A @ rho @ B.conj().T) == kron(B.conj(), A) @ vec(rho).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, PreconditionError

_EIG_COND_LIMIT = 1e8


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m, dtype=complex).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    if shape is None:
        d = int(round(np.sqrt(v.size)))
        shape = (d, d)
    return v.reshape(shape, order="F")


def sandwich_matrix(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Matrix of the map rho -> a @ rho @ b.conj().T (b defaults to a)."""
    a = np.asarray(a, dtype=complex)
    b = a if b is None else np.asarray(b, dtype=complex)
    return np.kron(b.conj(), a)


def herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def is_hermitian(m: np.ndarray, rtol: float = 1e-12) -> bool:
    m = np.asarray(m)
    return np.linalg.norm(m - m.conj().T, 2) <= rtol * (1.0 + np.linalg.norm(m, 2))


def opnorm(m: np.ndarray) -> float:
    return float(np.linalg.norm(np.atleast_2d(m), 2))


def spectral_abscissa(g: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(np.atleast_2d(g)).real))


def expm(a: np.ndarray) -> np.ndarray:
    # scipy implements scaling-and-squaring with a degree-adapted diagonal
    # Pade approximant, which is what these small dense generators need.
    return sla.expm(np.asarray(a, dtype=complex))


def lyapunov_dwell(g: np.ndarray, x: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Solve g @ y + y @ g.conj().T = -x for y.

    When every eigenvalue of ``g`` has a negative real part this is the
    closed form of the absolutely convergent integral
    ``int_0^inf e^{s g} x e^{s g^dag} ds``.
    """
    g = np.atleast_2d(np.asarray(g, dtype=complex))
    x = np.atleast_2d(np.asarray(x, dtype=complex))
    y = sla.solve_sylvester(g, g.conj().T, -x)
    res = np.linalg.norm(g @ y + y @ g.conj().T + x)
    if res > rtol * (1.0 + np.linalg.norm(x)):
        raise ConvergenceError(
            f"Lyapunov solve residual {res:.3e} exceeds {rtol:.1e} * (1 + |x|)"
        )
    return y


def power_iteration(
    mat: np.ndarray,
    v0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 50_000,
):
    """Leading eigenvalue of ``mat`` by power iteration.

    Returns ``(value, vector, converged, iterations)``.  The default start
    vector is vec(Id), which has full overlap with the leading eigenmatrix
    of any completely positive map.
    """
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    if v0 is None:
        d = int(round(np.sqrt(n)))
        if d * d == n:
            v0 = vec(np.eye(d))
        else:
            v0 = np.ones(n, dtype=complex)
    v = v0 / np.linalg.norm(v0)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = mat @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v, True, it
        lam_new = float(np.real(np.vdot(v, w)))
        v = w / nw
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new, v, True, it
        lam = lam_new
    return lam, v, False, max_iter


def spectral_radius(mat: np.ndarray, tol: float = 1e-10) -> tuple[float, dict]:
    """Spectral radius with diagnostics.

    At the sizes this package produces (a few thousand at most) the full
    eigendecomposition is both exact and cheap, so it is the default;
    power iteration covers anything larger.
    """
    mat = np.asarray(mat, dtype=complex)
    n = mat.shape[0]
    if n == 0:
        return 0.0, {"method": "empty", "converged": True}
    if n <= 4096:
        vals = np.linalg.eigvals(mat)
        return float(np.max(np.abs(vals))), {"method": "eig", "converged": True}
    lam, v, ok, iters = power_iteration(mat, tol=tol)
    if ok:
        return abs(lam), {"method": "power", "iterations": iters, "converged": True}
    raise ConvergenceError(
        f"power iteration did not converge in {iters} steps on a "
        f"{n}x{n} operator"
    )


@lru_cache(maxsize=64)
def gauss_legendre_01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def simplex_quadrature_blocks(n: int, t: float, q: int, max_block: int = 200_000):
    """Tensorized quadrature for the ordered-time region 0 < t_1 < ... < t_n < t.

    The region is flattened onto the unit cube by t_k = t * u_k u_{k+1} ... u_n,
    whose volume element is t^n * prod_j u_j^(j-1); the composed integrand
    stays smooth, so Gauss-Legendre converges at spectral rate.  Yields
    ``(times, weights)`` blocks with ``times`` of shape (m, n).
    """
    x, w = gauss_legendre_01(q)
    total = q**n
    for start in range(0, total, max_block):
        idx = np.arange(start, min(start + max_block, total))
        digits = np.empty((idx.size, n), dtype=int)
        rem = idx
        for k in range(n - 1, -1, -1):
            digits[:, k] = rem % q
            rem = rem // q
        u = x[digits]
        weights = np.prod(w[digits], axis=1) * (t**n)
        for j in range(1, n):
            weights = weights * u[:, j] ** j
        suffix = np.cumprod(u[:, ::-1], axis=1)[:, ::-1]
        times = t * suffix
        yield times, weights


class Propagator:
    """Evaluates e^{t g} for a fixed dwell generator, vectorized over t.

    Uses the eigendecomposition when it is well conditioned, otherwise a
    per-time scaling-and-squaring exponential.
    """

    def __init__(self, g: np.ndarray):
        self.g = np.atleast_2d(np.asarray(g, dtype=complex))
        self.d = self.g.shape[0]
        lam, p = np.linalg.eig(self.g)
        self.diagonalizable = bool(np.linalg.cond(p) < _EIG_COND_LIMIT)
        if self.diagonalizable:
            self.lam = lam
            self.p = p
            self.pinv = np.linalg.inv(p)
        else:
            self.lam = lam
            self.p = None
            self.pinv = None

    def at(self, t: float) -> np.ndarray:
        if self.diagonalizable:
            return (self.p * np.exp(t * self.lam)) @ self.pinv
        return expm(t * self.g)

    def many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self.diagonalizable:
            phases = np.exp(np.multiply.outer(ts, self.lam))
            return np.einsum("ab,nb,bc->nac", self.p, phases, self.pinv)
        return np.stack([expm(t * self.g) for t in ts])


def require_stable(g: np.ndarray, eps_stab: float = 1e-9, what: str = "generator"):
    """Raise unless every eigenvalue of g has real part below -eps_stab."""
    vals = np.linalg.eigvals(np.atleast_2d(np.asarray(g, dtype=complex)))
    worst = vals[np.argmax(vals.real)]
    if worst.real >= -eps_stab:
        raise PreconditionError(
            f"{what} is not escaping: eigenvalue {worst:.6g} has real part "
            f">= -{eps_stab:.1e}, the dwell integral diverges"
        )
