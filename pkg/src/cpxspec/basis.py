"""Eigenbases of the Laplacian on S^2 and on flat tori, plus quadrature grids.

Conventions
-----------
Spherical harmonics are fully normalized complex harmonics with the
Condon-Shortley phase,

    Y_k^m(theta, phi) = pbar_k^m(cos theta) exp(i m phi),
    Y_k^{-m} = (-1)^m conj(Y_k^m),

so that they are orthonormal in L^2(S^2) with the surface measure
sin(theta) dtheta dphi.  Basis functions are ordered by degree, then by
order, i.e. flat index ``k*k + k + m``.

Torus modes on the square torus of side L are ``L^-1 exp(2 pi i m.x / L)``
with eigenvalue ``(2 pi / L)^2 |m|^2``.  They are ordered by ``|m|^2`` and
then lexicographically in ``(m1, m2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "UnderResolvedError",
    "SphereIndex",
    "TorusIndex",
    "Truncation",
    "SphereGrid",
    "TorusGrid",
    "gauss_legendre",
    "sphere_grid",
    "sphere_grid_for",
    "torus_grid_for",
    "legendre_table",
    "sphere_harmonic_eval",
    "highest_weight_modulus",
    "torus_mode_eval",
    "sphere_indices",
    "torus_modes",
    "SphereTransform",
]

FOUR_PI = 4.0 * math.pi


class UnderResolvedError(ValueError):
    """A quadrature grid is too coarse for the requested computation."""


@dataclass(frozen=True, order=True)
class SphereIndex:
    k: int
    m: int

    def __post_init__(self):
        if self.k < 0 or abs(self.m) > self.k:
            raise ValueError(f"invalid spherical harmonic index (k={self.k}, m={self.m})")

    @property
    def eigenvalue(self) -> int:
        return self.k * (self.k + 1)

    @property
    def flat(self) -> int:
        return self.k * self.k + self.k + self.m

    @staticmethod
    def multiplicity(k: int) -> int:
        return 2 * k + 1


@dataclass(frozen=True)
class TorusIndex:
    m: tuple[int, int]
    side: float = 1.0

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("torus side length must be positive")

    @property
    def eigenvalue(self) -> float:
        return (2.0 * math.pi / self.side) ** 2 * (self.m[0] ** 2 + self.m[1] ** 2)


def sphere_indices(l_max: int) -> list[SphereIndex]:
    return [SphereIndex(k, m) for k in range(l_max + 1) for m in range(-k, k + 1)]


def torus_modes(radius: float) -> np.ndarray:
    """Integer frequencies with ``|m| <= radius`` as an ``(N, 2)`` array.

    Order: by ``|m|^2``, ties broken lexicographically.
    """
    r = int(math.floor(radius + 1e-12))
    rng = np.arange(-r, r + 1)
    m1, m2 = np.meshgrid(rng, rng, indexing="ij")
    m1, m2 = m1.ravel(), m2.ravel()
    norm2 = m1 * m1 + m2 * m2
    keep = norm2 <= radius * radius + 1e-9
    m1, m2, norm2 = m1[keep], m2[keep], norm2[keep]
    order = np.lexsort((m2, m1, norm2))
    return np.stack([m1[order], m2[order]], axis=1)


@dataclass(frozen=True)
class Truncation:
    """Galerkin truncation of the eigenbasis.

    ``kind="sphere"`` keeps all degrees ``k <= l_max``.  ``kind="torus"``
    keeps all integer frequencies with ``|m| <= radius`` on the torus of the
    given side length.
    """

    kind: str
    l_max: int = 0
    radius: float = 0.0
    side: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sphere", "torus"):
            raise ValueError(f"unknown truncation kind {self.kind!r}")
        if self.kind == "sphere" and self.l_max < 0:
            raise ValueError("l_max must be nonnegative")
        if self.kind == "torus" and (self.radius < 0 or self.side <= 0):
            raise ValueError("torus truncation needs radius >= 0 and side > 0")

    @classmethod
    def sphere(cls, l_max: int) -> "Truncation":
        return cls("sphere", l_max=int(l_max))

    @classmethod
    def torus(cls, radius: float, side: float = 1.0) -> "Truncation":
        return cls("torus", radius=float(radius), side=float(side))

    @classmethod
    def torus_physical(cls, k_phys: float, side: float) -> "Truncation":
        """Fixed physical cutoff ``|2 pi m / L| <= k_phys``."""
        return cls.torus(k_phys * side / (2.0 * math.pi), side)

    @cached_property
    def modes(self) -> np.ndarray:
        if self.kind != "torus":
            raise AttributeError("modes only exist for torus truncations")
        return torus_modes(self.radius)

    @cached_property
    def degrees(self) -> np.ndarray:
        """Per basis function: degree k (sphere) or ``|m|^2`` (torus)."""
        if self.kind == "sphere":
            return np.repeat(np.arange(self.l_max + 1), 2 * np.arange(self.l_max + 1) + 1)
        return (self.modes ** 2).sum(axis=1)

    @cached_property
    def orders(self) -> np.ndarray:
        if self.kind != "sphere":
            raise AttributeError("orders only exist for sphere truncations")
        return np.concatenate([np.arange(-k, k + 1) for k in range(self.l_max + 1)])

    @property
    def n_basis(self) -> int:
        if self.kind == "sphere":
            return (self.l_max + 1) ** 2
        return len(self.modes)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """Laplacian eigenvalue of every basis function (exact for the sphere)."""
        if self.kind == "sphere":
            k = self.degrees
            return (k * (k + 1)).astype(float)
        return (2.0 * math.pi / self.side) ** 2 * self.degrees.astype(float)

    def distinct_eigenvalues(self) -> np.ndarray:
        if self.kind == "sphere":
            k = np.arange(self.l_max + 1)
            return (k * (k + 1)).astype(float)
        return np.unique(self.eigenvalues)


def gauss_legendre(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1], exact to degree 2*count-1."""
    if count < 1:
        raise ValueError("Gauss-Legendre rule needs at least one node")
    x, w = np.polynomial.legendre.leggauss(count)
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


@dataclass(frozen=True)
class SphereGrid:
    """Tensor grid: Gauss-Legendre in cos(theta), uniform in phi."""

    n_theta: int
    n_phi: int
    x: np.ndarray = field(repr=False, compare=False)
    wx: np.ndarray = field(repr=False, compare=False)

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.x)

    @property
    def phi(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def weights(self) -> np.ndarray:
        """Surface weights, shape ``(n_theta, n_phi)``; they sum to 4 pi."""
        return np.outer(self.wx, np.full(self.n_phi, 2.0 * math.pi / self.n_phi))

    @property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @property
    def degree_budget(self) -> int:
        """Largest total degree of band-limited integrands integrated exactly."""
        return min(2 * self.n_theta - 1, self.n_phi - 1)

    def integrate(self, values: np.ndarray) -> complex:
        return np.sum(self.weights * values)

    def lp_norm(self, values: np.ndarray, p: float) -> float:
        a = np.abs(values)
        if math.isinf(p):
            return float(a.max())
        return float(np.sum(self.weights * a ** p) ** (1.0 / p))

    def refined(self, factor: float = 2.0) -> "SphereGrid":
        return sphere_grid(int(math.ceil(self.n_theta * factor)), int(math.ceil(self.n_phi * factor)))


def sphere_grid(n_theta: int, n_phi: int) -> SphereGrid:
    x, w = gauss_legendre(n_theta)
    return SphereGrid(n_theta, n_phi, x, w)


def sphere_grid_for(l_max: int, extra_degree: float = 0, oversample: int = 4) -> SphereGrid:
    """Grid sized for matrix elements up to degree ``l_max`` against a factor of
    the given bandwidth.

    Band-limited factors get the exact rule; ``extra_degree=inf`` (fractional
    powers and other non-polynomial factors) gets ``oversample`` times the
    plain budget.
    """
    if math.isinf(extra_degree):
        return sphere_grid(oversample * (l_max + 1), oversample * (2 * l_max + 1))
    extra = int(math.ceil(extra_degree))
    return sphere_grid(l_max + 1 + (extra + 1) // 2, 2 * l_max + 1 + extra)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n x n`` tensor grid on ``[-L/2, L/2)^2`` with spacing ``L/n``."""

    n: int
    side: float = 1.0

    @property
    def nodes(self) -> np.ndarray:
        return -0.5 * self.side + self.side * np.arange(self.n) / self.n

    @property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.nodes, self.nodes, indexing="ij")

    @property
    def weights(self) -> np.ndarray:
        h = self.side / self.n
        return np.full((self.n, self.n), h * h)

    def integrate(self, values: np.ndarray) -> complex:
        return np.sum(self.weights * values)

    def lp_norm(self, values: np.ndarray, p: float) -> float:
        a = np.abs(values)
        if math.isinf(p):
            return float(a.max())
        return float(np.sum(self.weights * a ** p) ** (1.0 / p))


def torus_grid_for(trunc: Truncation, extra_radius: float = 0.0, oversample: int = 2) -> TorusGrid:
    """Grid whose trapezoid rule is exact for products of two retained modes
    against a factor with frequencies up to ``extra_radius``."""
    r = int(math.floor(trunc.radius + 1e-12))
    if math.isinf(extra_radius):
        n = oversample * (4 * r + 1)
    else:
        n = 2 * r + int(math.ceil(extra_radius)) + 1
    return TorusGrid(max(n, 1), trunc.side)


def legendre_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre functions ``pbar_l^m(x)`` for ``m >= 0``.

    Returns an array of shape ``(l_max+1, l_max+1, len(x))`` indexed
    ``[l, m]``; entries with ``m > l`` are zero.  Includes the
    Condon-Shortley phase and the ``1/sqrt(4 pi)`` factor, so
    ``pbar_l^m(cos theta) exp(i m phi)`` is orthonormal on S^2.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.zeros((l_max + 1, l_max + 1) + x.shape)
    pmm = np.full(x.shape, 1.0 / math.sqrt(FOUR_PI))
    for m in range(l_max + 1):
        if m > 0:
            pmm = -math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        out[m, m] = pmm
        if m + 1 <= l_max:
            out[m + 1, m] = math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[l, m] = a * (x * out[l - 1, m] - b * out[l - 2, m])
    return out


def _check_grid(grid, degree: int) -> None:
    if grid is not None and grid.degree_budget < degree:
        raise UnderResolvedError(
            f"grid integrates degree <= {grid.degree_budget} exactly, need {degree}"
        )


def sphere_harmonic_eval(idx: SphereIndex, theta, phi, grid: SphereGrid | None = None) -> np.ndarray:
    """Evaluate ``Y_k^m`` at points ``(theta, phi)``.

    If ``grid`` is passed, it must resolve products of two degree-``k``
    harmonics; otherwise :class:`UnderResolvedError` is raised.
    """
    _check_grid(grid, 2 * idx.k)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(idx.m)
    p = legendre_table(idx.k, np.cos(theta))[idx.k, am]
    y = p * np.exp(1j * am * phi)
    if idx.m < 0:
        y = (-1) ** am * np.conj(y)
    return y


def highest_weight_modulus(k: int, theta) -> np.ndarray:
    """Unnormalized modulus of the highest weight harmonic, ``sin(theta)^k``."""
    return np.sin(np.asarray(theta, dtype=float)) ** k


def torus_mode_eval(idx: TorusIndex, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    L = idx.side
    return np.exp(2j * math.pi * (idx.m[0] * x + idx.m[1] * y) / L) / L


class SphereTransform:
    """Analysis and synthesis between grid samples and coefficients up to ``l_max``.

    Coefficients use the flat index ``k*k + k + m``.  Analysis is exact for
    band-limited functions of degree ``<= grid.degree_budget - l_max``.
    """

    def __init__(self, l_max: int, grid: SphereGrid):
        if grid.n_phi < 2 * l_max + 1:
            raise UnderResolvedError("n_phi too small for the requested degree")
        self.l_max = l_max
        self.grid = grid
        P = legendre_table(l_max, grid.x)
        rows, orders = [], []
        for k in range(l_max + 1):
            for m in range(-k, k + 1):
                am = abs(m)
                rows.append(P[k, am] * (-1) ** am if m < 0 else P[k, am])
                orders.append(m)
        self.rows = np.array(rows)
        self.orders = np.array(orders)
        self._cols = self.orders % grid.n_phi
        self._wrows = (self.rows * grid.wx).T

    def analysis(self, f: np.ndarray) -> np.ndarray:
        fhat = np.fft.fft(f, axis=1) / self.grid.n_phi
        return 2.0 * math.pi * np.einsum("tn,tn->n", self._wrows, fhat[:, self._cols])

    def synthesis(self, c: np.ndarray) -> np.ndarray:
        g = self.rows.T * c
        spec = np.zeros((self.grid.n_theta, self.grid.n_phi), dtype=complex)
        for j in range(spec.shape[1]):
            sel = self._cols == j
            if sel.any():
                spec[:, j] = g[:, sel].sum(axis=1)
        return np.fft.ifft(spec, axis=1) * self.grid.n_phi
