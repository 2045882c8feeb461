"""Linear algebra building blocks.

Random numbers
--------------
:class:`GaussianStream` produces standard normal draws bit-reproducibly:

1. The raw stream is numpy's counter-based ``Philox`` (4x64, 10 rounds) bit
   generator keyed by ``SeedSequence([seed, stream_id])``. Raw bit generator
   outputs are covered by numpy's stream-compatibility guarantee.
2. Consecutive 64-bit words ``(a, b)`` are turned into uniforms
   ``u1 = ((a >> 11) + 1) * 2**-53`` in ``(0, 1]`` and ``u2 = (b >> 11) * 2**-53``
   in ``[0, 1)``.
3. Box-Muller: ``z0 = r cos(2 pi u2)``, ``z1 = r sin(2 pi u2)`` with
   ``r = sqrt(-2 log u1)``. A request for ``n`` draws consumes ``ceil(n/2)``
   word pairs and discards the unused second variate for odd ``n``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from friedrichs_mor.exceptions import NotPositiveDefinite, SpaceMismatch

RNG_ALGORITHM = "philox4x64-boxmuller-v1"

TOL_DROP = 1e-10


class Factorization:
    """Sparse LDL^T-style factorization of an SPD matrix.

    SuperLU is run with a symmetric fill-reducing ordering and without
    partial pivoting, so the diagonal of ``U`` holds the pivots of
    ``P A P^T``; all of them are positive exactly when ``A`` is positive
    definite. Solves may be issued concurrently.
    """

    def __init__(self, matrix):
        a = sps.csc_matrix(matrix, dtype=float)
        if a.shape[0] != a.shape[1]:
            raise SpaceMismatch(f"matrix must be square, got {a.shape}")
        if not np.all(np.isfinite(a.data)):
            raise NotPositiveDefinite("matrix has non-finite entries")
        self.shape = a.shape
        if a.shape[0] == 0:
            self._lu = None
            return
        diag = a.diagonal()
        if np.any(diag <= 0):
            raise NotPositiveDefinite("non-positive diagonal entry")
        try:
            self._lu = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        except RuntimeError as err:  # exactly singular
            raise NotPositiveDefinite(str(err)) from err
        pivots = self._lu.U.diagonal()
        if np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
            raise NotPositiveDefinite("non-positive pivot encountered during factorization")

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.shape[0]:
            raise SpaceMismatch(f"right-hand side has {rhs.shape[0]} rows, expected {self.shape[0]}")
        if self._lu is None:
            return rhs.copy()
        return self._lu.solve(rhs)


def factorize(matrix) -> Factorization:
    return Factorization(matrix)


def g_inner(x, y, gram):
    return x.T @ (gram @ y)


def g_norm(x, gram) -> float:
    return float(np.sqrt(max(x @ (gram @ x), 0.0)))


def orthonormalize_against(vector, basis, gram, tol_drop: float = TOL_DROP):
    """Project ``vector`` off the G-orthonormal columns of ``basis`` and normalize.

    Modified Gram-Schmidt followed by one re-orthogonalization pass. Returns
    ``None`` if the remaining G-norm falls below ``tol_drop`` times the
    initial G-norm.
    """
    v = np.array(vector, dtype=float)
    initial = g_norm(v, gram)
    if initial == 0.0:
        return None
    for _ in range(2):
        for k in range(basis.shape[1]):
            b = basis[:, k]
            v -= (b @ (gram @ v)) * b
    remaining = g_norm(v, gram)
    if remaining < tol_drop * initial:
        return None
    return v / remaining


def gram_orthonormalize(vectors, gram, tol_drop: float = TOL_DROP):
    """G-orthonormalize the columns of ``vectors``.

    Returns ``(basis, n_dropped)``; linearly dependent columns are dropped.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float).T).T
    basis = np.zeros((vectors.shape[0], 0))
    dropped = 0
    for k in range(vectors.shape[1]):
        q = orthonormalize_against(vectors[:, k], basis, gram, tol_drop)
        if q is None:
            dropped += 1
            continue
        basis = np.column_stack([basis, q])
    return basis, dropped


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sps.issparse(matrix) else np.asarray(matrix, dtype=float)


def _cholesky(matrix, name):
    try:
        return np.linalg.cholesky(_dense(matrix))
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(f"{name} Gram matrix is not positive definite") from err


def generalized_svd(tmat, source_gram, range_gram):
    """SVD of ``tmat`` as a map between the ``source_gram`` and ``range_gram`` inner products.

    With ``source_gram = L L^T`` and ``range_gram = R R^T`` the singular
    values are those of ``R^T tmat L^{-T}``.

    Returns
    -------
    sigmas
        Singular values in non-increasing order.
    left
        Left singular vectors as ``range_gram``-orthonormal columns in
        range coordinates.
    """
    tmat = np.asarray(tmat, dtype=float)
    if tmat.ndim != 2 or tmat.shape != (range_gram.shape[0], source_gram.shape[0]):
        raise SpaceMismatch(f"operator of shape {tmat.shape} does not fit Gram matrices "
                            f"{range_gram.shape} and {source_gram.shape}")
    lower_source = _cholesky(source_gram, "source")
    lower_range = _cholesky(range_gram, "range")
    # R^T T L^{-T} = (L^{-1} (R^T T)^T)^T
    core = scipy.linalg.solve_triangular(lower_source, (lower_range.T @ tmat).T, lower=True).T
    u, sigmas, _ = np.linalg.svd(core, full_matrices=False)
    left = scipy.linalg.solve_triangular(lower_range.T, u, lower=False)
    return sigmas, left


_DENSE_EIG_LIMIT = 64


def smallest_eigenvalue(matrix, rtol: float = 1e-2, seed: int = 0) -> float:
    """Smallest eigenvalue of an SPD matrix.

    Shift-invert Lanczos at zero (inverse iteration accelerated by a Krylov
    space) from a seeded start vector; small matrices are handled densely.
    The Lanczos tolerance is set well below ``rtol``.
    """
    n = matrix.shape[0]
    if n <= _DENSE_EIG_LIMIT:
        return float(np.linalg.eigvalsh(_dense(matrix))[0])
    factor = factorize(matrix)
    op = spla.LinearOperator((n, n), matvec=factor.solve, dtype=float)
    v0 = GaussianStream(seed, stream_id=0xE16).normal(n)
    mu = spla.eigsh(op, k=1, which="LM", v0=v0, tol=1e-3 * rtol, return_eigenvectors=False)
    return float(1.0 / mu[0])


class GaussianStream:
    """Seeded stream of standard normal draws (see module docstring)."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._bits = np.random.Philox(np.random.SeedSequence([self.seed, self.stream_id]))

    def normal(self, n: int) -> np.ndarray:
        n = int(n)
        if n < 0:
            raise ValueError("number of draws must be non-negative")
        if n == 0:
            return np.zeros(0)
        pairs = (n + 1) // 2
        words = self._bits.random_raw(2 * pairs).astype(np.uint64).reshape(pairs, 2)
        scale = 2.0 ** -53
        u1 = ((words[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * scale
        u2 = (words[:, 1] >> np.uint64(11)).astype(np.float64) * scale
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]).ravel()
        return z[:n]


def gaussian_vector(n: int, stream: GaussianStream) -> np.ndarray:
    return stream.normal(n)
