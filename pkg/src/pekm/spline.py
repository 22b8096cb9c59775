"""Natural cubic spline machinery in the value-second-derivative form.

The environmental variable enters the mixed model through a design matrix
``X = [1, x - mean(x)]`` for the linear part and a random-effect matrix ``B``
for the curvature part.  Everything is built from two banded matrices tied to
the distinct knot locations: a second-difference matrix ``Q`` and a
tridiagonal Gram matrix ``R`` of the hat-function second derivatives.  The
roughness penalty is ``M = Q R^{-1} Q^T``, factorised as ``M = L L^T``
through a square-root-free Cholesky of ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class SplineInputError(ValueError):
    """Raised when the environmental variable cannot support a cubic spline."""


def _min_max_scale(x):
    lo, hi = np.min(x), np.max(x)
    if hi <= lo:
        raise SplineInputError("environmental variable is constant; cannot scale to [0, 1]")
    return (x - lo) / (hi - lo)


def knot_matrices(knots):
    """Banded penalty pieces for sorted, distinct knots.

    Returns ``(Q, R, M, L, B_knots)`` where ``Q`` is r x (r-2), ``R`` is the
    (r-2) x (r-2) tridiagonal positive definite matrix, ``M = Q R^{-1} Q^T``
    and ``L`` satisfies ``M = L L^T``.  ``B_knots = Q (Q^T Q)^{-1} U L^{1/2}``
    is the knot-level random-effect matrix with ``L^T B_knots = I``.
    """
    knots = np.asarray(knots, dtype=float)
    r = knots.shape[0]
    if r < 3:
        raise SplineInputError(f"need at least 3 distinct knots, got {r}")
    h = np.diff(knots)
    if np.any(h <= 0):
        raise SplineInputError("knots must be strictly increasing")

    m = r - 2
    Q = np.zeros((r, m))
    j = np.arange(m)
    Q[j, j] = 1.0 / h[:-1]
    Q[j + 1, j] = -1.0 / h[:-1] - 1.0 / h[1:]
    Q[j + 2, j] = 1.0 / h[1:]

    R = np.zeros((m, m))
    R[j, j] = (h[:-1] + h[1:]) / 3.0
    if m > 1:
        k = np.arange(m - 1)
        R[k, k + 1] = h[1:-1] / 6.0
        R[k + 1, k] = h[1:-1] / 6.0

    # Square-root-free (LDL^T) factorisation of the tridiagonal R in O(r):
    # R = U diag(lam) U^T with U unit lower bidiagonal.
    lam = np.empty(m)
    sub = np.empty(max(m - 1, 0))
    lam[0] = R[0, 0]
    for i in range(m - 1):
        sub[i] = R[i + 1, i] / lam[i]
        lam[i + 1] = R[i + 1, i + 1] - sub[i] ** 2 * lam[i]
    if np.any(lam <= 0):
        raise SplineInputError("tridiagonal R is not positive definite (degenerate knot spacing)")

    # C = U lam^{1/2} is lower bidiagonal; L solves C L^T = Q^T.
    C = np.zeros((m, m))
    C[j, j] = np.sqrt(lam)
    if m > 1:
        C[j[:-1] + 1, j[:-1]] = sub * np.sqrt(lam[:-1])
    L = solve_triangular(C, Q.T, lower=True).T
    M = L @ L.T

    QtQ = Q.T @ Q
    B_knots = Q @ cho_solve(cho_factor(QtQ), C)
    return Q, R, M, L, B_knots


@dataclass(frozen=True)
class SplineSystem:
    """Spline design for one environmental variable at the observation level.

    ``B = N @ B_knots`` expands the knot-level random-effect matrix through
    the incidence matrix ``N`` (one unit entry per row, mapping each
    observation to its distinct scaled value).
    """

    x_raw: np.ndarray       # (n,) original units
    x_scaled: np.ndarray    # (n,) min-max scaled to [0, 1]
    knots: np.ndarray       # (r,) distinct sorted scaled values
    X: np.ndarray           # (n, 2) columns [1, centered x_scaled]
    B: np.ndarray           # (n, r-2)
    M: np.ndarray           # (r, r) penalty, PSD with rank r-2
    N: np.ndarray           # (n, r) incidence
    L: np.ndarray           # (r, r-2) with M = L L^T
    B_knots: np.ndarray     # (r, r-2)

    @property
    def n(self) -> int:
        return self.x_raw.shape[0]

    @property
    def n_knots(self) -> int:
        return self.knots.shape[0]

    @property
    def BBt(self) -> np.ndarray:
        return self.B @ self.B.T


def build_spline_system(x) -> SplineSystem:
    """Construct the full spline design from raw environmental values.

    Values are min-max scaled to [0, 1]; exact ties collapse to shared knots
    through the incidence matrix (no jitter).  Requires at least four
    observations with at least four distinct values.
    """
    x_raw = np.asarray(x, dtype=float).ravel()
    n = x_raw.shape[0]
    if n < 4:
        raise SplineInputError(f"need at least 4 observations, got {n}")
    if not np.all(np.isfinite(x_raw)):
        bad = int(np.flatnonzero(~np.isfinite(x_raw))[0])
        raise SplineInputError(f"non-finite environmental value at position {bad}")

    x_scaled = _min_max_scale(x_raw)
    knots, inverse = np.unique(x_scaled, return_inverse=True)
    if knots.shape[0] < 4:
        raise SplineInputError(
            f"need at least 4 distinct environmental values, got {knots.shape[0]}"
        )

    Q, R, M, L, B_knots = knot_matrices(knots)
    N = np.zeros((n, knots.shape[0]))
    N[np.arange(n), inverse] = 1.0

    X = np.column_stack([np.ones(n), x_scaled - x_scaled.mean()])
    system = SplineSystem(
        x_raw=x_raw,
        x_scaled=x_scaled,
        knots=knots,
        X=X,
        B=N @ B_knots,
        M=M,
        N=N,
        L=L,
        B_knots=B_knots,
    )
    for arr in (system.x_raw, system.x_scaled, system.knots, system.X,
                system.B, system.M, system.N, system.L, system.B_knots):
        arr.setflags(write=False)
    return system


def roughness(f_values, system: SplineSystem) -> float:
    """Integrated squared curvature ``f^T M f`` of the natural cubic spline
    interpolating ``f_values`` at the system knots."""
    f = np.asarray(f_values, dtype=float).ravel()
    if f.shape[0] != system.n_knots:
        raise ValueError(
            f"f_values has length {f.shape[0]}, expected {system.n_knots} knot values"
        )
    val = float(f @ system.M @ f)
    # PSD quadratic form; tiny negative round-off is clipped.
    return max(val, 0.0)
