"""Adaptive randomized range approximation of the transfer operator and its SVD oracle."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv

from friedrichs_mor.exceptions import InsufficientData, MaxBasisReached, SpaceMismatch, ZeroSample
from friedrichs_mor.linalg import (
    TOL_DROP,
    GaussianStream,
    generalized_svd,
    orthonormalize_against,
    smallest_eigenvalue,
)
from friedrichs_mor.transfer import DEFAULT_MATRIX_CAP, TransferSystem, transfer_matrix

logger = logging.getLogger(__name__)

# sub-stream identifiers of GaussianStream; one seed drives all three
TEST_STREAM = 1
TRAIN_STREAM = 2
EVAL_STREAM = 3


@dataclass(frozen=True)
class TrainingConfig:
    """Parameters of the adaptive range finder.

    ``c_est`` overrides the probabilistic estimator constant when given.
    """

    tol: float = 1e-2
    n_test: int = 40
    eps_fail: float = 1e-15
    max_basis: int = 120
    seed: int = 0
    c_est: float | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.n_test) != self.n_test or self.n_test < 1:
            raise ValueError("n_test must be a positive integer")
        if not 0 < self.eps_fail < 1:
            raise ValueError("eps_fail must lie in (0, 1)")
        if int(self.max_basis) != self.max_basis or self.max_basis < 0:
            raise ValueError("max_basis must be a non-negative integer")
        if self.c_est is not None and not self.c_est > 0:
            raise ValueError("c_est override must be positive")


@dataclass(eq=False)
class RangeApproximation:
    """Weighted-Gram-orthonormal basis (columns of ``basis``) of interior mixed vectors."""

    basis: np.ndarray
    provenance: str
    sigmas: np.ndarray | None = None
    training_log: list = field(default_factory=list)
    reached_max_basis: bool = False
    n_dropped: int = 0

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def truncated(self, n: int) -> "RangeApproximation":
        return RangeApproximation(self.basis[:, :n], self.provenance, self.sigmas,
                                  list(self.training_log), self.reached_max_basis, self.n_dropped)


def estimator_constant(cfg: TrainingConfig, boundary_gram, lambda_min: float | None = None) -> float:
    """``1 / (sqrt(2 lambda_min(G_bnd)) * erfinv(eps_fail ** (1 / n_test)))``.

    ``lambda_min`` is estimated by inverse power iteration unless given.
    """
    if cfg.c_est is not None:
        return float(cfg.c_est)
    if lambda_min is None:
        lambda_min = smallest_eigenvalue(boundary_gram)
    return 1.0 / (math.sqrt(2.0 * lambda_min) * float(erfinv(cfg.eps_fail ** (1.0 / cfg.n_test))))


def _draw_boundary(stream: GaussianStream, n_boundary: int, count: int) -> np.ndarray:
    return np.column_stack([stream.normal(n_boundary) for _ in range(count)]) if count else np.zeros((n_boundary, 0))


def _max_norm(vectors, gram) -> float:
    if vectors.shape[1] == 0:
        return 0.0
    return float(np.sqrt(np.max(np.einsum("ij,ij->j", vectors, gram @ vectors).clip(min=0))))


def adaptive_range(sys: TransferSystem, cfg: TrainingConfig) -> RangeApproximation:
    """Grow a basis from images of Gaussian boundary data until the test set is resolved.

    Test vectors are images of ``cfg.n_test`` Gaussian boundary vectors drawn
    from their own sub-stream. Each iteration maps one fresh Gaussian vector,
    G-orthonormalizes it against the basis, and deflates the test set.
    Linearly dependent draws are discarded and redrawn. If ``cfg.max_basis``
    is hit first, the partial basis is returned with ``reached_max_basis``
    set and a :class:`MaxBasisReached` warning is issued.
    """
    gram = sys.weighted_gram
    c_est = estimator_constant(cfg, sys.boundary_gram)
    test_stream = GaussianStream(cfg.seed, TEST_STREAM)
    train_stream = GaussianStream(cfg.seed, TRAIN_STREAM)

    tests = sys.apply_vectors(_draw_boundary(test_stream, sys.n_boundary, cfg.n_test))
    basis = np.zeros((sys.n_interior, 0))
    estimate = _max_norm(tests, gram) * c_est
    log = [estimate]
    dropped = 0
    while estimate > cfg.tol:
        if basis.shape[1] >= cfg.max_basis:
            warnings.warn(f"basis cap {cfg.max_basis} reached with estimator {estimate:.3e} > tol {cfg.tol:.3e}",
                          MaxBasisReached, stacklevel=2)
            return RangeApproximation(basis, "randomized", training_log=log, reached_max_basis=True, n_dropped=dropped)
        v = sys.apply_vectors(train_stream.normal(sys.n_boundary))
        q = orthonormalize_against(v, basis, gram, TOL_DROP)
        if q is None:
            dropped += 1
            if dropped > 10 * max(cfg.max_basis, 1):
                raise RuntimeError("range finder keeps drawing numerically dependent vectors")
            continue
        basis = np.column_stack([basis, q])
        tests = tests - basis @ (basis.T @ (gram @ tests))
        estimate = _max_norm(tests, gram) * c_est
        log.append(estimate)
        logger.debug("basis size %d, estimator %.3e", basis.shape[1], estimate)
    return RangeApproximation(basis, "randomized", training_log=log, n_dropped=dropped)


def oracle(sys: TransferSystem, cap: int = DEFAULT_MATRIX_CAP) -> RangeApproximation:
    """Optimal spaces: left singular vectors of ``T`` between boundary-L2 and the weighted norm."""
    tmat = transfer_matrix(sys, cap)
    sigmas, left = generalized_svd(tmat, sys.boundary_gram, sys.weighted_gram)
    return RangeApproximation(left, "svd_optimal", sigmas=sigmas)


def apriori_bound(sigmas, n: int) -> float:
    """Minimum over splits ``k + p = n`` (``k, p >= 2``) of the randomized range-finder bound.

    The unspecified leading constant is not included.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if n < 4:
        raise InsufficientData(f"the bound needs n >= 4, got {n}")
    if sigmas.size < n + 1:
        raise InsufficientData(f"need at least {n + 1} singular values, got {sigmas.size}")
    best = np.inf
    for k in range(2, n - 1):
        p = n - k
        tail = math.sqrt(float(np.sum(sigmas[k:] ** 2)))
        value = (1 + math.sqrt(k / (p - 1))) * sigmas[k] + math.e * math.sqrt(n) / p * tail
        best = min(best, value)
    return float(best)


@dataclass(frozen=True)
class ProjectionErrors:
    """Relative projection errors, arrays of shape ``(n_samples, basis_size)``.

    Column ``N-1`` holds the error of the projection onto the first ``N`` vectors.
    """

    total: np.ndarray
    scalar: np.ndarray
    flux: np.ndarray


def projection_errors(basis, samples, gram, n_flux: int) -> ProjectionErrors:
    """Relative weighted errors of G-orthogonal projections onto nested basis prefixes.

    ``samples`` holds interior mixed vectors column-wise; the first ``n_flux``
    rows are flux DOFs. Component errors are measured in the flux resp. scalar
    block of ``gram`` and normalized by the total sample norm.
    """
    basis = np.asarray(basis, dtype=float)
    samples = np.atleast_2d(np.asarray(samples, dtype=float).T).T
    if samples.shape[0] != gram.shape[0] or basis.shape[0] != gram.shape[0]:
        raise SpaceMismatch("basis, samples and Gram matrix dimensions differ")
    gram = gram.tocsr()
    flux_gram = gram[:n_flux, :n_flux]
    scalar_gram = gram[n_flux:, n_flux:]

    def sq_norms(block_gram, block):
        return np.einsum("ij,ij->j", block, block_gram @ block).clip(min=0)

    norms = np.sqrt(sq_norms(gram, samples))
    if np.any(norms == 0):
        raise ZeroSample("cannot compute a relative error for a zero sample")
    n_basis = basis.shape[1]
    coefficients = basis.T @ (gram @ samples)
    shape = (samples.shape[1], n_basis)
    total, scalar, flux = np.empty(shape), np.empty(shape), np.empty(shape)
    residual = samples.copy()
    for n in range(n_basis):
        residual -= np.outer(basis[:, n], coefficients[n])
        f2 = sq_norms(flux_gram, residual[:n_flux])
        s2 = sq_norms(scalar_gram, residual[n_flux:])
        flux[:, n] = np.sqrt(f2) / norms
        scalar[:, n] = np.sqrt(s2) / norms
        total[:, n] = np.sqrt(f2 + s2) / norms
    return ProjectionErrors(total, scalar, flux)


def evaluation_samples(sys: TransferSystem, n_eval: int, seed: int) -> np.ndarray:
    """Interior images of ``n_eval`` Gaussian boundary vectors from the evaluation sub-stream."""
    stream = GaussianStream(seed, EVAL_STREAM)
    return sys.apply_vectors(_draw_boundary(stream, sys.n_boundary, n_eval))


def worst_case_errors(basis, sys: TransferSystem, boundary_data) -> np.ndarray:
    """``max_g ||T g - P_N T g||_w / ||g||_bnd`` for each prefix size ``N = 0 .. size``."""
    g = np.atleast_2d(np.asarray(boundary_data, dtype=float).T).T
    images = sys.apply_vectors(g)
    gram = sys.weighted_gram
    g_norms = np.sqrt(np.einsum("ij,ij->j", g, sys.boundary_gram @ g))
    out = [np.max(np.sqrt(np.einsum("ij,ij->j", images, gram @ images)) / g_norms)]
    coefficients = basis.T @ (gram @ images)
    residual = images.copy()
    for n in range(basis.shape[1]):
        residual -= np.outer(basis[:, n], coefficients[n])
        out.append(np.max(np.sqrt(np.einsum("ij,ij->j", residual, gram @ residual).clip(min=0)) / g_norms))
    return np.array(out)
