"""Kernels for the pathway, environment and interaction function spaces.

Three reproducing kernels drive the model: the cubic-spline kernel on the
scaled environmental variable, a Gaussian kernel on the pathway expression
vector, and their tensor product (with the constant removed from the spline
factor) for the interaction.  Gram matrices are built once per
(pathway, rho); the squared-distance matrix is cached so a rho update costs
a single elementwise exponential.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np


class KernelInputError(ValueError):
    """Raised for arguments outside a kernel's domain."""


class ExpressionDataError(ValueError):
    """Raised when expression values cannot feed a Gram matrix."""


def cubic_spline_kernel(x, x2):
    """Penalized-space cubic spline kernel on [0, 1]:
    ``min(x, x')^3 / 3 + min(x, x')^2 |x - x'| / 2``.

    Accepts scalars or broadcastable arrays.
    """
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    for arr, name in ((x, "x"), (x2, "x2")):
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise KernelInputError(f"{name} must lie in [0, 1]")
    m = np.minimum(x, x2)
    out = m**3 / 3.0 + m**2 * np.abs(x - x2) / 2.0
    return out if out.ndim else float(out)


def gaussian_kernel(z, z2, rho):
    """Gaussian kernel ``exp(-||z - z'||^2 / rho)`` between two vectors."""
    if rho <= 0:
        raise KernelInputError(f"rho must be positive, got {rho}")
    z = np.asarray(z, dtype=float).ravel()
    z2 = np.asarray(z2, dtype=float).ravel()
    if z.shape != z2.shape:
        raise KernelInputError(f"length mismatch: {z.shape[0]} vs {z2.shape[0]}")
    return float(np.exp(-np.sum((z - z2) ** 2) / rho))


def squared_distances(Z):
    """Symmetric matrix of pairwise squared Euclidean distances between rows."""
    Z = np.asarray(Z, dtype=float)
    diff = Z[:, None, :] - Z[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def default_rho(Z):
    """Mean squared distance over the n(n-1)/2 unordered row pairs.

    The usual data-driven choice for the Gaussian scale; a warning is issued
    when it is zero (all rows identical) since rho must then be overridden.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if n < 2:
        raise KernelInputError(f"need at least 2 rows, got {n}")
    d = squared_distances(Z)
    iu = np.triu_indices(n, k=1)
    rho = float(d[iu].mean())
    if rho == 0.0:
        warnings.warn("all expression rows identical: default rho is 0 and must be overridden")
    return rho


def standardize_expression(Z, scale_by_genes=True):
    """Column-standardize a pathway expression matrix.

    Each gene column is centered and scaled to unit variance; constant
    columns are zeroed.  With ``scale_by_genes`` the matrix is further
    divided by sqrt(p) so squared row distances are per-gene averages
    (mean 2 for standardized data), keeping one fixed rho usable across
    pathways of any size.
    """
    Z = np.asarray(Z, dtype=float)
    mu = Z.mean(axis=0)
    sd = Z.std(axis=0)
    out = np.zeros_like(Z)
    ok = sd > 0
    out[:, ok] = (Z[:, ok] - mu[ok]) / sd[ok]
    if scale_by_genes:
        out /= np.sqrt(Z.shape[1])
    return out


@dataclass(frozen=True)
class GramSet:
    """Gram matrices and rho-derivatives for one pathway at one rho.

    ``Kxz = Kx_aug * Kz`` elementwise, where ``Kx_aug`` holds
    ``x_i x_j + k_x(x_i, x_j)`` (the spline-space kernel without the
    constant).  ``dKz_drho = Kz * sq_dists / rho^2`` and
    ``dKxz_drho = Kx_aug * dKz_drho``.
    """

    Kz: np.ndarray
    Kxz: np.ndarray
    Kx_aug: np.ndarray
    dKz_drho: np.ndarray
    dKxz_drho: np.ndarray
    sq_dists: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return self.Kz.shape[0]


def build_gram_set(x_scaled, Z, rho) -> GramSet:
    """Assemble the GramSet for scaled environmental values and an aligned
    expression matrix."""
    if rho <= 0:
        raise KernelInputError(f"rho must be positive, got {rho}")
    x = np.asarray(x_scaled, dtype=float).ravel()
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != x.shape[0]:
        raise KernelInputError(
            f"Z must be 2-d with one row per observation; got {Z.shape} for n={x.shape[0]}"
        )
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise KernelInputError("x_scaled must lie in [0, 1]")
    bad_rows = np.flatnonzero(~np.all(np.isfinite(Z), axis=1))
    if bad_rows.size:
        bad_cols = np.flatnonzero(~np.all(np.isfinite(Z), axis=0))
        raise ExpressionDataError(
            f"non-finite expression values in rows {bad_rows.tolist()}, "
            f"columns {bad_cols.tolist()}"
        )

    sq = squared_distances(Z)
    Kx_aug = np.outer(x, x) + cubic_spline_kernel(x[:, None], x[None, :])
    grams = GramSet(
        Kz=np.empty(0), Kxz=np.empty(0), Kx_aug=Kx_aug,
        dKz_drho=np.empty(0), dKxz_drho=np.empty(0),
        sq_dists=sq, rho=float(rho),
    )
    return with_rho(grams, rho)


def with_rho(grams: GramSet, rho) -> GramSet:
    """New GramSet at a different rho, reusing cached distances and Kx_aug."""
    if rho <= 0:
        raise KernelInputError(f"rho must be positive, got {rho}")
    Kz = np.exp(-grams.sq_dists / rho)
    dKz = Kz * grams.sq_dists / rho**2
    out = replace(
        grams,
        Kz=Kz,
        Kxz=grams.Kx_aug * Kz,
        dKz_drho=dKz,
        dKxz_drho=grams.Kx_aug * dKz,
        rho=float(rho),
    )
    for arr in (out.Kz, out.Kxz, out.Kx_aug, out.dKz_drho, out.dKxz_drho, out.sq_dists):
        arr.setflags(write=False)
    return out
