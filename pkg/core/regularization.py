"""
Regularizers used by the inversion: the Berhu penalty on the mean source and
isotropic total variation on the model.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from core.errors import DimensionMismatchError, NonFiniteError

logger = logging.getLogger(__name__)

TV_MAX_ITER = 200
TV_TOLERANCE = 1e-5


@dataclass(frozen=True)
class BerhuParams:
    """Transition point ``epsilon`` and prox step ``alpha``."""

    epsilon: float
    alpha: float

    def __post_init__(self):
        if not (self.epsilon > 0 and self.alpha > 0):
            raise ValueError(f"Berhu parameters must be positive, got epsilon={self.epsilon}, alpha={self.alpha}")


def berhu_value(x, eps):
    """
    Reverse Huber penalty, elementwise.

    Args:
        x: Real or complex scalar or array (the modulus is penalized)
        eps (float): Transition point between the l1 and l2 branches

    Returns:
        float or numpy.ndarray: |x| where |x| <= eps, (|x|^2 + eps^2) / (2 eps) beyond
    """
    if not eps > 0:
        raise ValueError(f"Berhu epsilon must be positive, got {eps}")
    magnitude = np.abs(x)
    value = np.where(magnitude <= eps, magnitude, (magnitude ** 2 + eps ** 2) / (2.0 * eps))
    return value if np.ndim(value) else float(value)


def berhu_prox(x, params):
    """
    Proximity operator of ``alpha * berhu(., epsilon)``.

    Soft threshold for |x| <= alpha + epsilon, linear shrink beyond. For complex
    input the modulus is thresholded and the phase kept.

    Args:
        x: Real or complex scalar or array
        params (BerhuParams): Threshold parameters

    Returns:
        Same shape and kind as ``x``
    """
    x_arr = np.asarray(x)
    magnitude = np.abs(x_arr)
    alpha, eps = params.alpha, params.epsilon
    with np.errstate(divide="ignore", invalid="ignore"):
        soft = np.where(magnitude > 0, np.maximum(1.0 - alpha / magnitude, 0.0), 0.0)
    factor = np.where(magnitude <= alpha + eps, soft, eps / (alpha + eps))
    out = factor * x_arr
    if np.ndim(out):
        return out
    return complex(out) if np.iscomplexobj(out) else float(out)


def _difference_1d(n):
    """Forward differences with a zero last row (replicated edge)."""
    if n == 1:
        return sparse.csr_matrix((1, 1))
    main = -np.ones(n)
    main[-1] = 0.0
    return sparse.diags([main, np.ones(n - 1)], [0, 1], shape=(n, n), format="csr")


def gradient_operators(shape):
    """
    Sparse forward-difference operators on a row-major (nz, nx) field.

    Returns:
        tuple: (Dx, Dz) each of size N x N
    """
    nz, nx = shape
    dx = sparse.kron(sparse.identity(nz), _difference_1d(nx), format="csr")
    dz = sparse.kron(_difference_1d(nz), sparse.identity(nx), format="csr")
    return dx, dz


def _shape_of(grid):
    return tuple(getattr(grid, "shape", grid))


def tv_value(m, grid):
    """
    Isotropic total variation of an interior field.

    Args:
        m (numpy.ndarray): Field values, row-major over the grid
        grid: ``Grid`` or an (nz, nx) tuple

    Returns:
        float: Sum over cells of the gradient modulus
    """
    shape = _shape_of(grid)
    field = np.asarray(m, dtype=np.float64)
    if field.size != shape[0] * shape[1]:
        raise DimensionMismatchError(f"Field has {field.size} values, grid {shape} has {shape[0] * shape[1]}")
    field = field.reshape(shape)
    dx = np.zeros(shape)
    dz = np.zeros(shape)
    dx[:, :-1] = np.diff(field, axis=1)
    dz[:-1, :] = np.diff(field, axis=0)
    return float(np.sum(np.sqrt(dx ** 2 + dz ** 2)))


@dataclass(eq=False)
class TVSubproblem:
    """
    min  tv_weight * TV(m) + lam * (m^T Diag(h) m - g^T m)   s.t.  m_min <= m <= m_max

    ``h`` is the diagonal of H. ``m_start`` seeds the solver and fills cells
    where the quadratic is flat.
    """

    h: np.ndarray
    g: np.ndarray
    lam: float
    m_min: np.ndarray
    m_max: np.ndarray
    tv_weight: float
    shape: tuple
    m_start: np.ndarray = None

    def __post_init__(self):
        n = self.shape[0] * self.shape[1]
        self.h = np.asarray(self.h, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.m_min = np.broadcast_to(np.asarray(self.m_min, dtype=np.float64), (n,))
        self.m_max = np.broadcast_to(np.asarray(self.m_max, dtype=np.float64), (n,))
        for name in ("h", "g"):
            if getattr(self, name).shape != (n,):
                raise DimensionMismatchError(f"{name} has shape {getattr(self, name).shape}, expected ({n},)")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.g))):
            raise NonFiniteError("Model subproblem has non-finite entries")
        if np.any(self.h < 0):
            raise ValueError("H must be nonnegative")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.tv_weight < 0:
            raise ValueError(f"TV weight must be nonnegative, got {self.tv_weight}")
        if self.m_start is None:
            self.m_start = 0.5 * (self.m_min + self.m_max)
        self.m_start = np.asarray(self.m_start, dtype=np.float64)

    @property
    def n(self):
        return self.h.size

    def objective(self, m):
        quadratic = self.lam * (np.dot(m, self.h * m) - np.dot(self.g, m))
        return self.tv_weight * tv_value(m, self.shape) + quadratic


@dataclass
class TVResult:
    m: np.ndarray
    converged: bool
    iterations: int


def _pointwise_minimizer(sub):
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(sub.h > 0, sub.g / (2.0 * sub.h), sub.m_start)
    return np.clip(m, sub.m_min, sub.m_max)


def solve_tv_quadratic(sub, max_iter=TV_MAX_ITER, tol=TV_TOLERANCE, rho=None):
    """
    Bound-constrained TV-regularized diagonal quadratic by ADMM.

    Splits z = D m for the isotropic shrinkage and w = m for the box projection.
    The m-update matrix (2 lam H + rho D^T D + rho I) is factorized once.

    Args:
        sub (TVSubproblem): The subproblem
        max_iter (int): Maximum ADMM iterations
        tol (float): Relative primal/dual residual tolerance
        rho (float or None): Penalty, defaults to the mean of 2 lam H

    Returns:
        TVResult: Minimizer (inside the bounds exactly), convergence flag and iteration count
    """
    if sub.tv_weight == 0:
        return TVResult(_pointwise_minimizer(sub), True, 0)

    n = sub.n
    quad = 2.0 * sub.lam * sub.h
    if rho is None:
        rho = float(np.mean(quad))
        if rho <= 0:
            rho = 1.0
    dx, dz = gradient_operators(sub.shape)
    d = sparse.vstack([dx, dz]).tocsr()
    system = (sparse.diags(quad + rho) + rho * (d.T @ d)).tocsc()
    solve = splinalg.factorized(system)

    linear = sub.lam * sub.g
    threshold = sub.tv_weight / rho
    m = np.clip(sub.m_start, sub.m_min, sub.m_max)
    z = d @ m
    w = m.copy()
    y_z = np.zeros(2 * n)
    y_w = np.zeros(n)

    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        m = solve(linear + rho * (d.T @ (z - y_z)) + rho * (w - y_w))
        dm = d @ m

        z_old, w_old = z, w
        v = dm + y_z
        magnitude = np.sqrt(v[:n] ** 2 + v[n:] ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(magnitude > threshold, 1.0 - threshold / magnitude, 0.0)
        z = v * np.tile(shrink, 2)
        w = np.clip(m + y_w, sub.m_min, sub.m_max)

        r_z = dm - z
        r_w = m - w
        y_z = y_z + r_z
        y_w = y_w + r_w

        primal = np.sqrt(np.dot(r_z, r_z) + np.dot(r_w, r_w))
        dual = rho * np.linalg.norm(d.T @ (z - z_old) + (w - w_old))
        primal_scale = max(np.sqrt(np.dot(dm, dm) + np.dot(m, m)), np.sqrt(np.dot(z, z) + np.dot(w, w)))
        dual_scale = rho * np.linalg.norm(d.T @ y_z + y_w)
        if primal <= tol * max(primal_scale, 1e-300) and dual <= tol * max(dual_scale, 1e-300):
            converged = True
            break

    if not converged:
        logger.warning("TV model update stopped after %d iterations without converging", iteration)
    else:
        logger.debug("TV model update converged in %d iterations", iteration)
    return TVResult(w, converged, iteration)
