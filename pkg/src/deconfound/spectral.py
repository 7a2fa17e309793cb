"""Singular value decomposition of the design and spectral transforms.

A spectral transform rescales the left singular directions of a design
matrix X: F = sum_i d_i u_i u_i^T. Choosing the weights d_i shrinks the
top (spiked) singular values, which weakens latent-confounding structure
and decorrelates the columns. Three kinds are supported:

* ``decorrelate``: d_i = 1{i > q}, a projection that removes the top-q
  left singular directions entirely.
* ``trim``: d_i caps every singular value at the k-th largest, with
  k = floor(rho * min(n, p)).
* ``identity``: d_i = 1, a no-op (the unadjusted baseline).

Transforms are applied without ever materializing the dense n x n
operator; cost stays O(n * (m + min(n, p))) for an n x m argument.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DegenerateProblemError,
    ParameterError,
    ShapeError,
)

#: Absolute tolerance for orthonormality / reconstruction certificates.
ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class SvdFactors:
    """Thin singular value decomposition of a design matrix.

    Attributes
    ----------
    singular_values : ndarray, shape (min(n, p),)
        Non-increasing, non-negative.
    left_vectors : ndarray, shape (n, min(n, p))
        Column-orthonormal left singular vectors.
    right_vectors : ndarray, shape (p, min(n, p))
        Column-orthonormal right singular vectors.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.left_vectors.shape[0]

    @property
    def n_cols(self) -> int:
        return self.right_vectors.shape[0]

    @property
    def rank_bound(self) -> int:
        """min(n, p), the number of retained triplets."""
        return self.singular_values.shape[0]


@dataclass(frozen=True)
class SpectralTransform:
    """Weights d_i plus the left singular basis they act on.

    ``weights[i]`` multiplies the i-th left singular direction; directions
    beyond ``rank_bound`` are implicitly left untouched (weight 1).
    """

    kind: str
    weights: np.ndarray
    left_vectors: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.left_vectors.shape[0]

    def trace_gram(self) -> float:
        """Tr(F^T F) = sum_i d_i^2 over all n directions.

        Directions past the thin-SVD rank carry weight one, so they
        contribute n - min(n, p).
        """
        n = self.n_rows
        r = self.weights.shape[0]
        return float(np.sum(self.weights**2) + (n - r))


def compute_svd(design: np.ndarray) -> SvdFactors:
    """Thin SVD of the design, computed once and shared by all transforms.

    Parameters
    ----------
    design : ndarray, shape (n, p)

    Returns
    -------
    SvdFactors

    Raises
    ------
    DataError
        If the design is empty or contains non-finite entries.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim != 2 or design.shape[0] < 1 or design.shape[1] < 1:
        raise ShapeError(f"design must be a 2-d matrix, got shape {design.shape}")
    if not np.all(np.isfinite(design)):
        raise DataError("design matrix contains non-finite entries")
    u, s, vh = np.linalg.svd(design, full_matrices=False)
    return SvdFactors(singular_values=s, left_vectors=u, right_vectors=vh.T)


def identity_transform(svd: SvdFactors) -> SpectralTransform:
    """Transform with all weights equal to one (no-op baseline)."""
    return SpectralTransform(
        kind="identity",
        weights=np.ones(svd.rank_bound),
        left_vectors=svd.left_vectors,
    )


def decorrelating_transform(svd: SvdFactors, q: int) -> SpectralTransform:
    """Projection removing the top-q left singular directions.

    Weights are d_i = 0 for i <= q and d_i = 1 otherwise, so applying the
    transform to the design zeroes its q largest singular values.

    Parameters
    ----------
    svd : SvdFactors
        Decomposition of the design the transform will act on.
    q : int
        Number of directions to remove; 0 <= q < min(n, p).

    Raises
    ------
    ParameterError
        If q is negative or q >= min(n, p).
    """
    q = int(q)
    if q < 0 or q >= svd.rank_bound:
        raise ParameterError(
            f"factor count q={q} must satisfy 0 <= q < min(n, p) = {svd.rank_bound}"
        )
    weights = np.ones(svd.rank_bound)
    weights[:q] = 0.0
    return SpectralTransform(
        kind="decorrelate",
        weights=weights,
        left_vectors=svd.left_vectors,
        params={"q": q},
    )


def trim_transform(
    svd: SvdFactors, rho: float, q_hint: int | None = None
) -> SpectralTransform:
    """Shrinkage capping singular values at the k-th largest, k = floor(rho * min(n, p)).

    Weights are d_i = s_k / s_i for i <= k and d_i = 1 for i > k, so the
    transformed design has singular values min(s_i, s_k). Directions with
    a zero singular value are left untouched (they carry no mass).

    Parameters
    ----------
    rho : float
        Fraction in (0, 1) selecting the cap index.
    q_hint : int, optional
        Estimated number of confounding factors. If given and k < q_hint + 1,
        a warning is issued: the cap then sits inside the confounded
        subspace and shrinkage may be insufficient.

    Raises
    ------
    ParameterError
        If rho is outside (0, 1) or floor(rho * min(n, p)) == 0.
    """
    rho = float(rho)
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho={rho} must lie in (0, 1)")
    r = svd.rank_bound
    k = int(np.floor(rho * r))
    if k == 0:
        raise ParameterError(
            f"floor(rho * min(n, p)) = floor({rho} * {r}) = 0; increase rho"
        )
    if q_hint is not None and k < q_hint + 1:
        warnings.warn(
            f"trim cap index k={k} is below q_hint+1={q_hint + 1}; "
            "the cap sits inside the estimated confounded subspace",
            stacklevel=2,
        )
    s = svd.singular_values
    weights = np.ones(r)
    cap = s[k - 1]
    head = s[:k]
    nonzero = head > 0
    weights[:k][nonzero] = cap / head[nonzero]
    return SpectralTransform(
        kind="trim",
        weights=weights,
        left_vectors=svd.left_vectors,
        params={"rho": rho, "k": k},
    )


def apply_transform(transform: SpectralTransform, matrix: np.ndarray) -> np.ndarray:
    """Apply F = sum_i d_i u_i u_i^T to a matrix or vector.

    Computed as M - U1 ((1 - d1) * (U1^T M)) over the directions with
    d_i != 1 only, so the dense n x n operator is never formed.

    Parameters
    ----------
    matrix : ndarray, shape (n, m) or (n,)
        Rows must match the design the transform was built from.

    Raises
    ------
    ShapeError
        On a row-count mismatch.
    """
    arr = np.asarray(matrix, dtype=float)
    vector_input = arr.ndim == 1
    if vector_input:
        arr = arr[:, None]
    if arr.shape[0] != transform.n_rows:
        raise ShapeError(
            f"matrix has {arr.shape[0]} rows but transform was built for "
            f"{transform.n_rows}"
        )
    active = np.nonzero(transform.weights != 1.0)[0]
    if active.size == 0:
        out = arr.copy()
    else:
        # Weights differing from 1 always form a prefix for the supported kinds,
        # but index explicitly so custom weight vectors also work.
        u1 = transform.left_vectors[:, active]
        shrink = 1.0 - transform.weights[active]
        coeffs = u1.T @ arr
        out = arr - u1 @ (shrink[:, None] * coeffs)
    return out[:, 0] if vector_input else out


def estimate_num_factors(svd: SvdFactors, k_max: int) -> int:
    """Eigenvalue-ratio estimate of the number of latent factors.

    Returns argmax over 1 <= k <= bound of s_k / s_{k+1}, where
    bound = min(k_max, min(n, p) - 1). Ties break toward the smallest k;
    a zero denominator counts as an infinite ratio at the first k where
    it occurs.

    Raises
    ------
    ParameterError
        If k_max < 1 or no ratio can be formed (min(n, p) < 2).
    DegenerateProblemError
        If every singular value is zero.
    """
    k_max = int(k_max)
    if k_max < 1:
        raise ParameterError(f"k_max={k_max} must be >= 1")
    s = svd.singular_values
    bound = min(k_max, s.shape[0] - 1)
    if bound < 1:
        raise ParameterError(
            f"cannot form any singular value ratio with min(n, p) = {s.shape[0]}"
        )
    if s[0] <= 0.0:
        raise DegenerateProblemError("all singular values are zero")
    num = s[:bound]
    den = s[1 : bound + 1]
    with np.errstate(divide="ignore"):
        ratios = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.inf)
    # argmax returns the first maximizer, which implements the tie rule.
    return int(np.argmax(ratios)) + 1
