"""
Non-delayed force F = Pi' + F* with the potential split Pi = Pi0 + Pi1.

Variants:
    berger     F_k = (kappa s - mu_B) lambda_k u_k - h_k + F*_k,  s = sum lambda_j u_j^2
    kirchhoff  F = P[f(u)] - h + F*, f an odd-degree polynomial
    wave       as kirchhoff, degree <= 3
    none       F = -h + F*

Pointwise terms are evaluated pseudospectrally on a grid of 2N interior nodes
per axis (DST-I), which projects cubic terms without aliasing.
"""
import functools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import fft

from processing.errors import BlowUpError, ConfigurationError
from processing.spectral import ModeVector, SpectralBasis, inner_product, norm_alpha

logger = logging.getLogger(__name__)

VARIANTS = ('berger', 'kirchhoff', 'wave', 'none')


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    """Oversampled tensor grid with DST-I transforms and quadrature weights."""

    basis: SpectralBasis
    points: int                      # nodes per axis (0 for the ode geometry)
    slots: Tuple[np.ndarray, ...] = field(repr=False)
    weight: float = 1.0

    @property
    def shape(self) -> Tuple[int, ...]:
        if self.basis.dim == 0:
            return (self.basis.size,)
        return (self.points,) * self.basis.dim

    @property
    def nodes(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(1, self.points + 1) / (self.points + 1.0)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weight * np.sum(values))


@functools.lru_cache(maxsize=32)
def collocation_grid(basis: SpectralBasis) -> CollocationGrid:
    if basis.dim == 0:
        return CollocationGrid(basis, 0, (np.arange(basis.size),), 1.0)
    points = 2 * basis.n
    slots = tuple(basis.indices[:, axis] - 1 for axis in range(basis.dim))
    return CollocationGrid(basis, points, slots, (1.0 / (points + 1)) ** basis.dim)


def to_physical(grid: CollocationGrid, w: ModeVector) -> np.ndarray:
    """Grid values of sum_k w_k e_k."""
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.basis.size,):
        raise ValueError('mode vector does not match the basis')
    if grid.basis.dim == 0:
        return w.copy()
    padded = np.zeros(grid.shape)
    padded[grid.slots] = w
    return fft.dstn(padded, type=1) * (np.sqrt(2.0) / 2.0) ** grid.basis.dim


def to_spectral(grid: CollocationGrid, values: np.ndarray) -> ModeVector:
    """Quadrature projection of grid values onto the retained modes."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError('grid values do not match the collocation grid')
    if grid.basis.dim == 0:
        return values.copy()
    dim = grid.basis.dim
    coefficients = fft.dstn(values, type=1) * (np.sqrt(2.0) / 2.0 / (grid.points + 1)) ** dim
    return coefficients[grid.slots]


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    variant: str = 'none'
    kappa: float = 1.0
    mu_b: float = 0.0
    coefficients: Tuple[float, ...] = ()   # ascending powers of f
    load: Optional[ModeVector] = field(default=None, repr=False)
    c_nc: float = 0.0
    delta_hat: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown nonlinearity variant '{self.variant}'")
        if self.variant == 'berger' and self.kappa <= 0:
            raise ConfigurationError('Berger kappa must be positive')
        if self.variant in ('kirchhoff', 'wave'):
            degree = len(self.coefficients) - 1
            if degree < 1 or self.coefficients[-1] <= 0:
                raise ConfigurationError('polynomial f needs a positive leading coefficient')
            if degree % 2 == 0:
                raise ConfigurationError('polynomial f must have odd degree')
            if self.variant == 'wave' and degree > 3:
                raise ConfigurationError('wave nonlinearity is limited to degree 3')
        if self.c_nc < 0:
            raise ConfigurationError('c_nc must be non-negative')
        if not 0.0 < self.delta_hat <= 0.5:
            raise ConfigurationError('delta_hat must lie in (0, 1/2]')

    def load_vector(self, basis: SpectralBasis) -> ModeVector:
        if self.load is None:
            return basis.zeros()
        if self.load.shape != (basis.size,):
            raise ConfigurationError('load vector does not match the basis')
        return self.load


def make_nonlinearity(basis: SpectralBasis, variant: str = 'none',
                      load: Iterable[Tuple[object, float]] = (), **params) -> NonlinearitySpec:
    """Build a spec with the load h given as a finite (mode, value) list."""
    entries = list(load)
    vector = basis.vector(entries) if entries else None
    if 'coefficients' in params:
        params['coefficients'] = tuple(float(c) for c in params['coefficients'])
    return NonlinearitySpec(variant=variant, load=vector, **params)


def _guarded(u: ModeVector) -> ModeVector:
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise BlowUpError(detail='non-finite displacement passed to F')
    return u


def eval_Fstar(spec: NonlinearitySpec, basis: SpectralBasis, u: ModeVector) -> ModeVector:
    """F*_k = c_nc mu_k^(1/2 - delta_hat) u_k."""
    if spec.c_nc == 0:
        return basis.zeros()
    return spec.c_nc * basis.mu ** (0.5 - spec.delta_hat) * np.asarray(u, dtype=float)


def potential_gradient(spec: NonlinearitySpec, basis: SpectralBasis, u: ModeVector) -> ModeVector:
    """Pi'(u) = F(u) - F*(u)."""
    u = _guarded(u)
    h = spec.load_vector(basis)
    try:
        with np.errstate(over='raise', invalid='raise'):
            if spec.variant == 'berger':
                s = float(np.sum(basis.lam * u * u))
                return (spec.kappa * s - spec.mu_b) * basis.lam * u - h
            if spec.variant in ('kirchhoff', 'wave'):
                grid = collocation_grid(basis)
                values = P.polyval(to_physical(grid, u), spec.coefficients)
                return to_spectral(grid, values) - h
            return -h
    except FloatingPointError as exc:
        raise BlowUpError(detail=f'overflow in {spec.variant} force') from exc


def eval_F(spec: NonlinearitySpec, basis: SpectralBasis, u: ModeVector) -> ModeVector:
    """Total non-delayed force F(u)."""
    return potential_gradient(spec, basis, u) + eval_Fstar(spec, basis, u)


def eval_potentials(spec: NonlinearitySpec, basis: SpectralBasis, u: ModeVector) -> Tuple[float, float]:
    """(Pi0, Pi1) with Pi0 >= 0."""
    u = _guarded(u)
    load_term = inner_product(basis, spec.load_vector(basis), u)
    if spec.variant == 'berger':
        s = float(np.sum(basis.lam * u * u))
        return spec.kappa / 4.0 * s * s, -spec.mu_b / 2.0 * s - load_term
    if spec.variant in ('kirchhoff', 'wave'):
        grid = collocation_grid(basis)
        values = to_physical(grid, u)
        antiderivative = P.polyint(spec.coefficients)
        leading = np.zeros_like(antiderivative)
        leading[-1] = antiderivative[-1]
        pi0 = grid.integrate(P.polyval(values, leading))
        pi1 = grid.integrate(P.polyval(values, antiderivative - leading))
        return pi0, pi1 - load_term
    return 0.0, -load_term


def potential(spec: NonlinearitySpec, basis: SpectralBasis, u: ModeVector) -> float:
    pi0, pi1 = eval_potentials(spec, basis, u)
    return pi0 + pi1


def directional_derivative_check(spec: NonlinearitySpec, basis: SpectralBasis,
                                 u: ModeVector, w: ModeVector, eps: float) -> float:
    """|Pi(u + eps w) - Pi(u) - eps <Pi'(u), w>| / eps."""
    if eps <= 0:
        raise ValueError('eps must be positive')
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    slope = inner_product(basis, potential_gradient(spec, basis, u), w)
    jump = potential(spec, basis, u + eps * w) - potential(spec, basis, u)
    return abs(jump - eps * slope) / eps


def central_gradient_gap(spec: NonlinearitySpec, basis: SpectralBasis,
                         u: ModeVector, w: ModeVector, eps: float) -> float:
    """|(Pi(u+eps w) - Pi(u-eps w)) / (2 eps) - <Pi'(u), w>|, O(eps^2) for a true gradient."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    slope = inner_product(basis, potential_gradient(spec, basis, u), w)
    difference = potential(spec, basis, u + eps * w) - potential(spec, basis, u - eps * w)
    return abs(difference / (2.0 * eps) - slope)


def force_lipschitz_ratio(spec: NonlinearitySpec, basis: SpectralBasis,
                          u1: ModeVector, u2: ModeVector, alpha: float = 0.5) -> float:
    """||F(u1) - F(u2)|| / ||A^alpha (u1 - u2)||."""
    gap = norm_alpha(basis, np.asarray(u1) - np.asarray(u2), alpha)
    if gap == 0:
        return 0.0
    return norm_alpha(basis, eval_F(spec, basis, u1) - eval_F(spec, basis, u2), 0.0) / gap


def sample_ball(basis: SpectralBasis, radius: float, rng: np.random.Generator,
                decay: float = 1.0) -> ModeVector:
    """Random u with ||A^1/2 u|| = radius and spectrally decaying coefficients."""
    raw = rng.standard_normal(basis.size) / (np.arange(1, basis.size + 1) ** decay)
    scale = norm_alpha(basis, raw, 0.5)
    return raw * (radius / scale)


def grid_nodes(basis: SpectralBasis) -> Sequence[np.ndarray]:
    """Physical coordinates of the collocation nodes, one array per axis."""
    grid = collocation_grid(basis)
    if basis.dim == 0:
        return []
    return np.meshgrid(*([grid.nodes] * basis.dim), indexing='ij')
