"""
Least-squares solvers for the data-assimilated wavefield systems.

Both systems are solved through their normal equations

    (lambda A^H A + gamma P^T P) u = sqrt(lambda) A^H r_top + sqrt(gamma) P^T r_bottom

with a sparse LU factorization in symmetric mode (pivots on the diagonal, so
the pivots double as a positive-definiteness check) and a Jacobi-preconditioned
conjugate gradient fallback.

The augmented system adds the signatures s of the picked events. Because the
event columns of Phi are distinct canonical vectors, s is eliminated exactly:
the event rows of the wave equation drop out of the wavefield solve and
s = (A u)[events] - r_top[events] / sqrt(lambda).
"""

import logging
import threading
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from core.errors import (
    DimensionMismatchError,
    FactorizationError,
    IterativeSolverError,
    SingularBlockError,
)

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-8
CG_TOLERANCE = 1e-8
HERMITIAN_TOLERANCE = 1e-12


@dataclass(eq=False)
class StackedSystem:
    """[sqrt(lam) A; sqrt(gamma) P] u = [rhs_top; rhs_bottom]."""

    op: object
    sampling: object
    lam: float
    gamma: float
    rhs_top: np.ndarray
    rhs_bottom: np.ndarray

    def __post_init__(self):
        if not (self.lam > 0 and self.gamma > 0):
            raise ValueError(f"Penalties must be positive, got lambda={self.lam}, gamma={self.gamma}")
        n_pad = self.op.grid.n_pad
        self.rhs_top = np.asarray(self.rhs_top, dtype=np.complex128)
        self.rhs_bottom = np.asarray(self.rhs_bottom, dtype=np.complex128)
        if self.rhs_top.shape != (n_pad,):
            raise DimensionMismatchError(f"Top right-hand side has shape {self.rhs_top.shape}, expected ({n_pad},)")
        if self.rhs_bottom.shape != (self.sampling.n_receivers,):
            raise DimensionMismatchError(
                f"Bottom right-hand side has shape {self.rhs_bottom.shape}, expected ({self.sampling.n_receivers},)"
            )


@dataclass(eq=False)
class AugmentedSystem:
    """Stacked system bordered by the event block -sqrt(lam) Phi acting on signatures s."""

    stacked: StackedSystem
    locations: np.ndarray

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=np.int64).ravel()
        if self.locations.size == 0:
            raise SingularBlockError("Augmented system needs at least one event column")
        if np.unique(self.locations).size != self.locations.size:
            raise SingularBlockError("Two event columns share one grid cell; the signature block is singular")
        n_pad = self.stacked.op.grid.n_pad
        if np.any(self.locations < 0) or np.any(self.locations >= n_pad):
            raise DimensionMismatchError("Event location outside the padded grid")


@dataclass(eq=False)
class Factorization:
    """Reusable factorization of a Hermitian positive definite matrix."""

    matrix: sparse.csc_matrix
    lu: object = None
    method: str = "splu"

    @property
    def n(self):
        return self.matrix.shape[0]


class FactorizationCache:
    """
    Factorizations keyed by (omega, model version, event locations).

    Entries are immutable; concurrent frequency workers only ever touch their own keys.
    """

    def __init__(self):
        self._entries = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key, build):
        with self._lock:
            if key in self._entries:
                self.hits += 1
                return self._entries[key]
        handle = build()
        with self._lock:
            self.misses += 1
            self._entries.setdefault(key, handle)
            return self._entries[key]

    def clear(self):
        with self._lock:
            self._entries.clear()

    def __len__(self):
        return len(self._entries)


def factorize(matrix):
    """
    Factorize a Hermitian positive definite sparse matrix.

    Args:
        matrix: Square sparse (or dense) matrix

    Returns:
        Factorization: Handle usable by :func:`backsolve` for any number of right-hand sides
    """
    matrix = sparse.csc_matrix(matrix)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise DimensionMismatchError(f"Matrix must be square, got {matrix.shape}")

    scale = abs(matrix).max() if matrix.nnz else 0.0
    if scale == 0.0:
        raise FactorizationError("Matrix is zero")
    asymmetry = abs(matrix - matrix.conj().T).max() if matrix.nnz else 0.0
    if asymmetry > HERMITIAN_TOLERANCE * scale:
        raise FactorizationError(f"Matrix is not Hermitian (relative asymmetry {asymmetry / scale:.2e})")

    try:
        lu = splinalg.splu(
            matrix,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise FactorizationError(f"Sparse factorization failed: {exc}") from exc

    pivots = lu.U.diagonal()
    bad = np.flatnonzero((pivots.real <= 0) | (np.abs(pivots.imag) > 1e-8 * np.abs(pivots)))
    if bad.size:
        index = int(bad[0])
        raise FactorizationError(
            f"Matrix is not positive definite: pivot {index} = {pivots[index]:.3e}",
            pivot_index=index,
            pivot_value=complex(pivots[index]),
        )
    return Factorization(matrix=matrix, lu=lu)


def backsolve(handle, rhs):
    """Solve with a stored factorization."""
    rhs = np.asarray(rhs)
    if rhs.shape[0] != handle.n:
        raise DimensionMismatchError(f"Right-hand side has {rhs.shape[0]} rows, factorization has {handle.n}")
    if np.iscomplexobj(rhs) and not np.iscomplexobj(handle.matrix.data):
        return handle.lu.solve(np.ascontiguousarray(rhs.real)) + 1j * handle.lu.solve(np.ascontiguousarray(rhs.imag))
    return handle.lu.solve(np.ascontiguousarray(rhs, dtype=np.result_type(rhs, handle.matrix.dtype)))


def conjugate_gradient(matrix, rhs, rtol=CG_TOLERANCE, maxiter=None):
    """
    Jacobi-preconditioned conjugate gradient for a Hermitian positive definite matrix.

    Args:
        matrix: Sparse HPD matrix
        rhs (numpy.ndarray): Right-hand side
        rtol (float): Relative residual tolerance
        maxiter (int or None): Iteration cap, defaults to 10 times the size

    Returns:
        numpy.ndarray: The solution
    """
    matrix = sparse.csr_matrix(matrix)
    n = matrix.shape[0]
    diagonal = matrix.diagonal().real
    if np.any(diagonal <= 0):
        raise IterativeSolverError("Jacobi preconditioner needs a positive diagonal")
    preconditioner = sparse.diags(1.0 / diagonal)
    maxiter = 10 * n if maxiter is None else maxiter
    solution, info = splinalg.cg(matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=preconditioner)
    if info != 0:
        raise IterativeSolverError(f"Conjugate gradient did not converge in {maxiter} iterations")
    return solution


def normal_matrix(system, locations=None):
    """lambda A_Q^H A_Q + gamma P^T P, with A_Q = A minus the rows at ``locations``."""
    a = system.op.matrix
    if locations is not None:
        keep = np.ones(a.shape[0])
        keep[locations] = 0.0
        a = sparse.diags(keep) @ a
    sampling = np.zeros(a.shape[0])
    sampling[system.sampling.indices] = 1.0
    return (system.lam * (a.conj().T @ a) + system.gamma * sparse.diags(sampling)).tocsc()


def normal_rhs(system, locations=None):
    rhs_top = system.rhs_top
    if locations is not None:
        rhs_top = rhs_top.copy()
        rhs_top[locations] = 0.0
    top = np.sqrt(system.lam) * np.conj(system.op.matrix.T @ np.conj(rhs_top))
    return top + np.sqrt(system.gamma) * system.sampling.adjoint(system.rhs_bottom)


def stacked_matrix(system, locations=None):
    """The rectangular least-squares matrix (used for residual checks and dense oracles)."""
    top = np.sqrt(system.lam) * system.op.matrix
    bottom = np.sqrt(system.gamma) * system.sampling.as_matrix()
    if locations is None:
        return sparse.vstack([top, bottom]).tocsr()
    p = len(locations)
    phi = sparse.csr_matrix(
        (np.ones(p), (np.asarray(locations), np.arange(p))), shape=(system.op.grid.n_pad, p)
    )
    return sparse.bmat([[top, -np.sqrt(system.lam) * phi], [bottom, None]]).tocsr()


def least_squares_residual(system, solution, locations=None):
    """Relative normal-equation residual ||K^H (K z - r)|| / ||K^H r||."""
    k = stacked_matrix(system, locations)
    r = np.concatenate([system.rhs_top, system.rhs_bottom])
    kh_r = k.conj().T @ r
    denominator = np.linalg.norm(kh_r)
    if denominator == 0.0:
        return float(np.linalg.norm(k.conj().T @ (k @ solution)))
    return float(np.linalg.norm(k.conj().T @ (k @ solution - r)) / denominator)


def _solve_normal(matrix_builder, rhs, cache, key, method):
    if not np.any(rhs):
        return np.zeros_like(rhs)
    if method == "iterative":
        return conjugate_gradient(matrix_builder(), rhs)

    def build():
        return factorize(matrix_builder())

    try:
        handle = cache.get(key, build) if cache is not None and key is not None else build()
    except (FactorizationError, MemoryError) as exc:
        logger.warning("Direct solve unavailable (%s); falling back to conjugate gradient", exc)
        return conjugate_gradient(matrix_builder(), rhs)

    solution = backsolve(handle, rhs)
    rhs_norm = np.linalg.norm(rhs)
    residual = handle.matrix @ solution - rhs
    if np.linalg.norm(residual) > RESIDUAL_TOLERANCE * rhs_norm:
        # one step of iterative refinement
        solution = solution - backsolve(handle, residual)
        relative = float(np.linalg.norm(handle.matrix @ solution - rhs) / rhs_norm)
        if relative > RESIDUAL_TOLERANCE:
            logger.warning(
                "Normal-equation residual %.2e still above %.0e after refinement (size %d, key %s)",
                relative, RESIDUAL_TOLERANCE, handle.n, key,
            )
    return solution


def solve_stacked(system, cache=None, key=None, method="direct"):
    """
    Least-squares wavefield for the stacked wave-equation / observation system.

    Args:
        system (StackedSystem): The system
        cache (FactorizationCache or None): Factorization store reused across calls
        key (hashable or None): Cache key, typically (omega, model version)
        method (str): "direct" (sparse LU, CG fallback) or "iterative" (CG only)

    Returns:
        numpy.ndarray: Wavefield on the padded grid
    """
    rhs = normal_rhs(system)
    return _solve_normal(lambda: normal_matrix(system), rhs, cache, key, method)


def solve_augmented(system, cache=None, key=None, method="direct"):
    """
    Joint least-squares wavefield and event signatures.

    Args:
        system (AugmentedSystem): The bordered system
        cache (FactorizationCache or None): Factorization store
        key (hashable or None): Cache key, typically (omega, model version, locations)
        method (str): "direct" or "iterative"

    Returns:
        tuple: (wavefield on the padded grid, signature vector of length p)
    """
    stacked = system.stacked
    locations = system.locations
    rhs = normal_rhs(stacked, locations)
    u = _solve_normal(lambda: normal_matrix(stacked, locations), rhs, cache, key, method)
    s = (stacked.op.matrix @ u)[locations] - stacked.rhs_top[locations] / np.sqrt(stacked.lam)
    return u, s


def solve_wave_equation(op, source):
    """Exact solve of A u = b (forward modeling); ``source`` may hold several columns."""
    lu = splinalg.splu(op.matrix.tocsc())
    return lu.solve(np.asarray(source, dtype=np.complex128))


def receiver_green_functions(op, sampling):
    """
    Rows of P A^-1: the receiver responses to a unit source at every padded cell.

    A is not symmetric inside the absorbing layers, so the rows come from
    transposed solves A^T x = e_r, one per receiver, on a single factorization.

    Returns:
        numpy.ndarray: Nr x n_pad complex matrix
    """
    lu = splinalg.splu(op.matrix.tocsc())
    return lu.solve(sampling.as_matrix().T.toarray().astype(np.complex128), trans="T").T
