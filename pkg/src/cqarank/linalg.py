"""Dense float64 kernels: one-sided Jacobi SVD, basis projection, gradient checks.

Everything operates on plain numpy arrays (row-major, 64-bit). All functions
are pure and hold no state, so concurrent callers are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvergenceError",
    "SvdResult",
    "svd",
    "project_onto_basis",
    "numerical_rank",
    "grad_check",
    "SIGMA_RANK_TOL",
]

# A column pair is rotated only while |b_p . b_q| exceeds this fraction of
# ||b_p|| ||b_q||; a sweep that rotates nothing means convergence.
_JACOBI_TOL = 1e-14

# Singular values below this fraction of sigma_max count as zero wherever a
# numerical rank or a pseudo-inverse cutoff is needed.
SIGMA_RANK_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Raised when the Jacobi sweep budget runs out before convergence."""


@dataclass(frozen=True)
class SvdResult:
    """Rank-k factors: u (m x k), sigma (k,) non-increasing, v (n x k)."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.sigma.size)


def _check_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    return a


def svd(a, k: int, max_sweeps: int = 100) -> SvdResult:
    """Top-k singular value decomposition by one-sided Jacobi rotations.

    The full decomposition is computed first and then truncated to the leading
    k triples, so the returned factors do not depend on k. Column signs are
    normalized so the largest-magnitude entry of every u column is positive,
    making repeated calls on identical input bitwise identical.

    Args:
        a: real matrix, any shape, no non-finite entries.
        k: number of leading singular triples to keep, 1 <= k <= min(m, n).
        max_sweeps: rotation sweep budget before giving up.

    Raises:
        ValueError: non-finite input or k out of range.
        ConvergenceError: sweep budget exhausted.
    """
    a = _check_matrix(a)
    if not np.isfinite(a).all():
        raise ValueError("svd input contains non-finite entries")
    m, n = a.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"rank k={k} out of range for a {m}x{n} matrix")
    if m >= n:
        u, sigma, v = _one_sided_jacobi(a, max_sweeps)
    else:
        # Work on the transpose so the rotated side is the short one.
        v, sigma, u = _one_sided_jacobi(a.T, max_sweeps)
    for j in range(min(m, n)):
        lead = int(np.argmax(np.abs(u[:, j])))
        if u[lead, j] < 0.0:
            u[:, j] *= -1.0
            v[:, j] *= -1.0
    return SvdResult(u[:, :k].copy(), sigma[:k].copy(), v[:, :k].copy())


def _one_sided_jacobi(a: np.ndarray, max_sweeps: int):
    """Factor a (m x n, m >= n) as u * diag(sigma) * v^T; returns full-rank factors."""
    m, n = a.shape
    b = a.copy()
    v = np.eye(n)
    if n > 1:
        for _ in range(max_sweeps):
            rotated = False
            for p in range(n - 1):
                for q in range(p + 1, n):
                    alpha = float(b[:, p] @ b[:, p])
                    beta = float(b[:, q] @ b[:, q])
                    if alpha == 0.0 or beta == 0.0:
                        continue
                    gamma = float(b[:, p] @ b[:, q])
                    if abs(gamma) <= _JACOBI_TOL * math.sqrt(alpha * beta):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                    c = 1.0 / math.hypot(1.0, t)
                    s = c * t
                    bp = b[:, p].copy()
                    b[:, p] = c * bp - s * b[:, q]
                    b[:, q] = s * bp + c * b[:, q]
                    vp = v[:, p].copy()
                    v[:, p] = c * vp - s * v[:, q]
                    v[:, q] = s * vp + c * v[:, q]
            if not rotated:
                break
        else:
            raise ConvergenceError(
                f"one-sided Jacobi did not converge within {max_sweeps} sweeps"
            )
    sigma = np.sqrt(np.einsum("ij,ij->j", b, b))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    b = b[:, order]
    v = v[:, order]
    u = np.zeros((m, n))
    for j in range(n):
        if sigma[j] > 0.0:
            u[:, j] = b[:, j] / sigma[j]
        else:
            u[:, j] = _orthonormal_fill(u, j)
    return u, sigma, v


def _orthonormal_fill(u: np.ndarray, j: int) -> np.ndarray:
    # Deterministic completion for an exactly-zero singular column: first
    # canonical basis vector with a healthy component outside span(u[:, :j]).
    m = u.shape[0]
    for i in range(m):
        cand = np.zeros(m)
        cand[i] = 1.0
        cand -= u[:, :j] @ (u[:, :j].T @ cand)
        norm = float(np.linalg.norm(cand))
        if norm > 0.5:
            return cand / norm
    raise RuntimeError("could not complete an orthonormal basis")  # pragma: no cover


def project_onto_basis(a, v) -> np.ndarray:
    """Coordinates of the rows of a in the basis given by the columns of v.

    Plain a @ v; v is expected to have orthonormal columns (the caller's
    responsibility, checked only for shape).
    """
    a = _check_matrix(a)
    v = _check_matrix(v)
    if a.shape[1] != v.shape[0]:
        raise ValueError(
            f"cannot project {a.shape[0]}x{a.shape[1]} rows onto a basis of "
            f"{v.shape[0]}-vectors"
        )
    return a @ v


def numerical_rank(sigma, rel_tol: float = SIGMA_RANK_TOL) -> int:
    """Count of singular values at or above rel_tol times the largest."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0:
        return 0
    top = float(np.max(sigma))
    if top <= 0.0:
        return 0
    return int(np.sum(sigma >= rel_tol * top))


def grad_check(f, grad_f, x, h: float = 1e-5) -> float:
    """Worst relative mismatch between analytic and central-difference gradients.

    f maps a flat float64 vector to a scalar; grad_f returns the analytic
    gradient at the same point. Every coordinate is probed with a symmetric
    step h and scored as |analytic - central| / max(1, |analytic|, |central|).

    Central differences are exact to O(h^2) on smooth functions but say
    nothing useful across kinks (hinge corners, pooling argmax ties): there
    the reported error is expected to be large, and callers must choose probe
    points away from such boundaries.
    """
    if h <= 0.0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=np.float64).ravel().copy()
    analytic = np.asarray(grad_f(x.copy()), dtype=np.float64).ravel()
    if analytic.size != x.size:
        raise ValueError(
            f"analytic gradient has {analytic.size} entries, expected {x.size}"
        )
    worst = 0.0
    for i in range(x.size):
        probe = x.copy()
        probe[i] = x[i] + h
        f_plus = float(f(probe))
        probe[i] = x[i] - h
        f_minus = float(f(probe))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise ValueError(f"non-finite function value while probing coordinate {i}")
        central = (f_plus - f_minus) / (2.0 * h)
        scale = max(1.0, abs(analytic[i]), abs(central))
        worst = max(worst, abs(analytic[i] - central) / scale)
    return worst
