"""
Spectral core: the operator A, its eigenbasis and fractional-power norms.

Geometries:
    interval  -- (0, 1), Dirichlet / hinged sine modes, N modes
    square    -- (0, 1)^2, tensor sine modes, N^2 modes
    ode       -- H = R^n with a diagonal A given by its eigenvalues

A = (-Laplacian)^p, so mu_k = lambda_k^p with lambda_k = pi^2 |k|^2.
"""
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from processing.errors import ConfigurationError, DomainError

GEOMETRIES = ('interval', 'square', 'ode')
SQRT2 = np.sqrt(2.0)

ModeVector = np.ndarray
ModeIndex = Union[int, Sequence[int]]


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Eigenpairs of A, sorted nondecreasing in mu_k (ties by multi-index)."""

    geometry: str
    p: int
    n: int
    indices: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.mu.shape[0])

    @property
    def dim(self) -> int:
        """Spatial dimension (0 for the ode geometry)."""
        return {'interval': 1, 'square': 2, 'ode': 0}[self.geometry]

    @property
    def mu1(self) -> float:
        return float(self.mu[0])

    def zeros(self) -> ModeVector:
        return np.zeros(self.size)

    def position(self, index: ModeIndex) -> int:
        """Table position of a mode given its (1-based) multi-index."""
        key = np.atleast_1d(np.asarray(index, dtype=int))
        if key.shape[0] != self.indices.shape[1]:
            raise ConfigurationError(
                f"mode index {index!r} has {key.shape[0]} components, "
                f"geometry '{self.geometry}' needs {self.indices.shape[1]}")
        hits = np.flatnonzero(np.all(self.indices == key, axis=1))
        if hits.size == 0:
            raise ConfigurationError(f"mode {index!r} is not in the retained mode table")
        return int(hits[0])

    def vector(self, entries: Iterable[Tuple[ModeIndex, float]]) -> ModeVector:
        """Build a ModeVector from a finite (mode, value) list."""
        w = self.zeros()
        for index, value in entries:
            w[self.position(index)] += float(value)
        return w


@dataclass(frozen=True)
class PhasePoint:
    """(u, v) = (displacement, velocity) coefficients in D(A^1/2) x H."""

    u: ModeVector
    v: ModeVector

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError('u and v must have the same length')

    def energy_norm(self, basis: SpectralBasis) -> float:
        """sqrt(||A^1/2 u||^2 + ||v||^2)."""
        return float(np.sqrt(norm_alpha(basis, self.u, 0.5) ** 2 + inner_product(basis, self.v, self.v)))


def build_basis(geometry: str, p: int, n: int,
                eigenvalues: Optional[Sequence[float]] = None) -> SpectralBasis:
    """Populate the mode table with exact analytic eigenvalues."""
    if geometry not in GEOMETRIES:
        raise ConfigurationError(f"unsupported geometry '{geometry}'")
    if geometry == 'ode':
        if eigenvalues is None or len(eigenvalues) == 0:
            raise ConfigurationError("geometry 'ode' needs an eigenvalue list")
        mu = np.asarray(eigenvalues, dtype=float)
        if np.any(mu <= 0) or not np.all(np.isfinite(mu)):
            raise ConfigurationError('eigenvalues of A must be positive and finite')
        order = np.argsort(mu, kind='stable')
        indices = (np.arange(mu.size) + 1)[order].reshape(-1, 1)
        return SpectralBasis(geometry, 1, int(mu.size), indices, mu[order].copy(), mu[order].copy())

    if p not in (1, 2):
        raise ConfigurationError(f"unsupported operator power p={p}")
    if n < 1:
        raise ConfigurationError('N must be at least 1')

    k = np.arange(1, n + 1)
    if geometry == 'interval':
        indices = k.reshape(-1, 1)
    else:
        k1, k2 = np.meshgrid(k, k, indexing='ij')
        indices = np.column_stack([k1.ravel(), k2.ravel()])
    ksq = np.sum(indices ** 2, axis=1)
    # primary key |k|^2, then lexicographic multi-index
    order = np.lexsort(tuple(indices[:, j] for j in reversed(range(indices.shape[1]))) + (ksq,))
    indices = indices[order]
    lam = np.pi ** 2 * ksq[order].astype(float)
    return SpectralBasis(geometry, p, n, indices, lam, lam ** p)


def norm_alpha(basis: SpectralBasis, w: ModeVector, alpha: float) -> float:
    """||A^alpha w|| = sqrt(sum mu_k^(2 alpha) w_k^2); alpha=0 is the H-norm."""
    if alpha < -1:
        raise ValueError('alpha must be >= -1')
    w = np.asarray(w, dtype=float)
    if alpha == 0:
        return float(np.sqrt(np.dot(w, w)))
    return float(np.sqrt(np.sum(basis.mu ** (2.0 * alpha) * w * w)))


def inner_product(basis: SpectralBasis, w1: ModeVector, w2: ModeVector) -> float:
    """H inner product; the basis is orthonormal so this is the coefficient dot."""
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != w2.shape:
        raise ValueError('mode vectors must have matching lengths')
    return float(np.dot(w1, w2))


def basis_functions(basis: SpectralBasis, x) -> np.ndarray:
    """Values e_k(x) for every retained mode."""
    if basis.dim == 0:
        raise ConfigurationError("point evaluation needs a spatial geometry")
    point = np.atleast_1d(np.asarray(x, dtype=float))
    if point.shape[0] != basis.dim:
        raise DomainError(f"point {x!r} does not have {basis.dim} coordinates")
    if np.any(point < 0.0) or np.any(point > 1.0):
        raise DomainError(f"point {x!r} lies outside the closed domain")
    values = np.ones(basis.size)
    for axis in range(basis.dim):
        values *= SQRT2 * np.sin(basis.indices[:, axis] * np.pi * point[axis])
    return values


def eval_at_point(basis: SpectralBasis, w: ModeVector, x) -> float:
    """sum_k w_k e_k(x)."""
    return float(np.dot(np.asarray(w, dtype=float), basis_functions(basis, x)))
