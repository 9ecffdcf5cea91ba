"""Galerkin matrices in the Laplacian eigenbasis.

Matrix elements of multiplication operators are computed by quadrature,
``<e_a, V e_b>``.  On the sphere the azimuthal integral is done by FFT along
phi (exact trapezoid sums), then Gauss-Legendre in cos(theta); on the torus
the entries are Fourier coefficients ``c[a - b]`` of V, again by FFT.
Summation order is fixed, so results are reproducible bit-for-bit for a
given grid and seed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import betaln, roots_jacobi

from .basis import (SphereGrid, TorusGrid, Truncation, UnderResolvedError, legendre_table,
                    sphere_grid_for, torus_grid_for)
from .densela import block_components
from .potentials import PotentialSpec

__all__ = [
    "ResolventGuardError",
    "GalerkinMatrix",
    "default_grid",
    "sphere_basis_legendre",
    "zonal_power_matrix",
    "assemble_laplacian",
    "assemble_potential",
    "assemble_hamiltonian",
    "factored_parts",
    "cluster_projector",
    "birman_schwinger",
    "gram_chi_pk_chi",
    "spectrum",
    "write_matrix_binary",
    "read_matrix_binary",
    "write_matrix_csv",
]

TWO_GRID_TOL = 1e-6
D_GUARD = 1e-8
MAGIC = b"CPXMAT01"
OVERSAMPLE_LADDER = (4, 8, 16, 32)


class ResolventGuardError(ValueError):
    """``z`` is too close to the truncated Laplacian spectrum."""


@dataclass
class GalerkinMatrix:
    matrix: np.ndarray = field(repr=False)
    trunc: Truncation
    tag: str
    provenance: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape


def default_grid(spec: PotentialSpec | None, trunc: Truncation, oversample: int = 4):
    bw = 0 if spec is None else spec.bandwidth
    if trunc.kind == "sphere":
        return sphere_grid_for(trunc.l_max, bw, oversample)
    return torus_grid_for(trunc, bw, oversample)


def sphere_basis_legendre(trunc: Truncation, grid: SphereGrid) -> np.ndarray:
    """``pbar`` of each basis function at the colatitude nodes, shape (N, n_theta)."""
    return _legendre_rows(trunc, grid.x)


def _legendre_rows(trunc: Truncation, x: np.ndarray) -> np.ndarray:
    P = legendre_table(trunc.l_max, x)
    rows = []
    for k in range(trunc.l_max + 1):
        for m in range(-k, k + 1):
            am = abs(m)
            rows.append(P[k, am] * (-1) ** am if m < 0 else P[k, am])
    return np.array(rows)


def _sphere_multiplication(values: np.ndarray, trunc: Truncation, grid: SphereGrid,
                           zonal: bool) -> np.ndarray:
    n_phi = grid.n_phi
    vhat = np.fft.fft(values, axis=1) / n_phi
    P = sphere_basis_legendre(trunc, grid)
    orders = trunc.orders
    groups = {m: np.flatnonzero(orders == m) for m in range(-trunc.l_max, trunc.l_max + 1)}
    N = trunc.n_basis
    M = np.zeros((N, N), dtype=complex)
    for ma, ia in groups.items():
        Pa = P[ia] * grid.wx
        for mb, ib in groups.items():
            if zonal and ma != mb:
                continue
            col = vhat[:, (ma - mb) % n_phi]
            M[np.ix_(ia, ib)] = 2.0 * math.pi * ((Pa * col) @ P[ib].T)
    return M


def zonal_power_matrix(s: float, c: complex, trunc: Truncation) -> np.ndarray:
    """Exact matrix of ``c * sin(theta)^s`` on the sphere.

    Only equal orders couple, and ``pbar_a^m pbar_b^m`` is a polynomial of
    degree ``<= 2 l_max`` in ``x = cos(theta)``, so Gauss-Jacobi with weight
    ``(1 - x^2)^{s/2}`` and ``l_max + 1`` nodes is exact.
    """
    n = trunc.l_max + 1
    if s == 0:
        x, w = np.polynomial.legendre.leggauss(n)
    else:
        x, w = roots_jacobi(n, s / 2.0, s / 2.0)
    P = _legendre_rows(trunc, x)
    orders = trunc.orders
    M = np.zeros((trunc.n_basis, trunc.n_basis), dtype=complex)
    for m in range(-trunc.l_max, trunc.l_max + 1):
        idx = np.flatnonzero(orders == m)
        Pm = P[idx]
        M[np.ix_(idx, idx)] = 2.0 * math.pi * complex(c) * ((Pm * w) @ Pm.T)
    return M


def _torus_multiplication(values: np.ndarray, trunc: Truncation, grid: TorusGrid) -> np.ndarray:
    n = grid.n
    modes = trunc.modes
    diff = modes[:, None, :] - modes[None, :, :]
    chat = np.fft.fft2(values) / (n * n)
    i1, i2 = diff[..., 0] % n, diff[..., 1] % n
    sign = np.where((diff[..., 0] + diff[..., 1]) % 2 == 0, 1.0, -1.0)
    return sign * chat[i1, i2]


def _multiplication(spec: PotentialSpec, trunc: Truncation, grid) -> np.ndarray:
    values = spec.values(grid)
    if trunc.kind == "sphere":
        if not isinstance(grid, SphereGrid):
            raise TypeError("sphere truncation needs a SphereGrid")
        return _sphere_multiplication(values, trunc, grid, spec.zonal)
    if not isinstance(grid, TorusGrid) or abs(grid.side - trunc.side) > 1e-12 * trunc.side:
        raise TypeError("torus truncation needs a TorusGrid of the same side length")
    return _torus_multiplication(values, trunc, grid)


def _refine(grid):
    if isinstance(grid, SphereGrid):
        return grid.refined(2.0)
    return TorusGrid(2 * grid.n, grid.side)


def assemble_laplacian(trunc: Truncation) -> GalerkinMatrix:
    return GalerkinMatrix(np.diag(trunc.eigenvalues.astype(complex)), trunc, "laplacian")


def assemble_potential(spec: PotentialSpec, trunc: Truncation, grid=None,
                       check: bool = True) -> GalerkinMatrix:
    """Matrix of multiplication by V, ``M[a, b] = <e_a, V e_b>``.

    Band-limited V needs a grid meeting the sizing rule (checked).  For
    non-band-limited V the entries are recomputed on a grid refined by 2 and
    :class:`UnderResolvedError` is raised if the two disagree by more than
    1e-6 relative to the largest entry.  Without an explicit ``grid`` the
    oversampling factor is doubled (4 up to 32) before giving up.
    """
    zp = spec.zonal_power() if trunc.kind == "sphere" else None
    if zp is not None:
        return GalerkinMatrix(zonal_power_matrix(zp[0], zp[1], trunc), trunc, "potential",
                              {"spec": spec.describe(), "quadrature": "gauss_jacobi", "exponent": zp[0]})
    if grid is not None or not math.isinf(spec.bandwidth) or not check:
        return _assemble_on(spec, trunc, grid if grid is not None else default_grid(spec, trunc), check)
    err = None
    for factor in OVERSAMPLE_LADDER:
        try:
            return _assemble_on(spec, trunc, default_grid(spec, trunc, factor), check)
        except UnderResolvedError as exc:
            err = exc
    raise err


def _assemble_on(spec: PotentialSpec, trunc: Truncation, grid, check: bool) -> GalerkinMatrix:
    bw = spec.bandwidth
    prov = {"spec": spec.describe(), "grid": _grid_desc(grid)}
    if not math.isinf(bw) and trunc.kind == "sphere":
        need = 2 * trunc.l_max + int(math.ceil(bw))
        if grid.degree_budget < need:
            raise UnderResolvedError(f"grid budget {grid.degree_budget} < required degree {need}")
    if not math.isinf(bw) and trunc.kind == "torus" and trunc.n_basis > 1:
        need = int(np.abs(trunc.modes).max()) * 2 + int(math.ceil(bw)) + 1
        if grid.n < need:
            raise UnderResolvedError(f"torus grid n={grid.n} < required {need}")
    M = _multiplication(spec, trunc, grid)
    if check and math.isinf(bw) and not _has_grid_samples(spec):
        M2 = _multiplication(spec, trunc, _refine(grid))
        scale = max(np.abs(M2).max(), 1e-300)
        dis = float(np.abs(M - M2).max() / scale)
        prov["two_grid_disagreement"] = dis
        if dis > TWO_GRID_TOL:
            raise UnderResolvedError(f"two-grid disagreement {dis:.2e} exceeds {TWO_GRID_TOL:g}")
    return GalerkinMatrix(M, trunc, "potential", prov)


def _has_grid_samples(spec) -> bool:
    if spec.kind == "grid_samples":
        return True
    for attr in ("inner", "chi"):
        sub = getattr(spec, attr, None)
        if isinstance(sub, PotentialSpec) and _has_grid_samples(sub):
            return True
    return False


def _grid_desc(grid) -> dict:
    if isinstance(grid, SphereGrid):
        return {"kind": "sphere", "n_theta": grid.n_theta, "n_phi": grid.n_phi}
    return {"kind": "torus", "n": grid.n, "side": grid.side}


def factored_parts(spec: PotentialSpec, trunc: Truncation, grid=None,
                   check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin matrices ``(A, B)`` of multiplication by ``V^{1/2}`` and ``|V|^{1/2}``."""
    s_half, s_abs = spec.sqrt_factors()
    A = assemble_potential(s_half, trunc, grid, check).matrix
    B = A if s_abs == s_half else assemble_potential(s_abs, trunc, grid, check).matrix
    return A, B


def assemble_hamiltonian(spec: PotentialSpec, trunc: Truncation, grid=None,
                         form: str = "standard", check: bool = True) -> GalerkinMatrix:
    """``Lambda + M_V`` (standard) or ``Lambda + M_{V^{1/2}} M_{|V|^{1/2}}`` (factored)."""
    lam = np.diag(trunc.eigenvalues.astype(complex))
    if form == "standard":
        pot = assemble_potential(spec, trunc, grid, check)
        return GalerkinMatrix(lam + pot.matrix, trunc, "hamiltonian",
                              {**pot.provenance, "form": "standard"})
    if form == "factored":
        A, B = factored_parts(spec, trunc, grid, check)
        return GalerkinMatrix(lam + A @ B, trunc, "hamiltonian",
                              {"spec": spec.describe(), "form": "factored"})
    raise ValueError(f"unknown Hamiltonian form {form!r}")


def cluster_projector(trunc: Truncation, lambda_center: float, width: float = 1.0) -> GalerkinMatrix:
    """Diagonal 0/1 matrix of ``1(sqrt(-Delta) in [c - w/2, c + w/2])``."""
    if lambda_center < 0:
        raise ValueError("cluster center must be nonnegative")
    lam = np.sqrt(trunc.eigenvalues)
    sel = np.abs(lam - lambda_center) <= 0.5 * width + 1e-12
    return GalerkinMatrix(np.diag(sel.astype(complex)), trunc, "projector",
                          {"center": lambda_center, "width": width})


def _resolvent_diag(trunc: Truncation, z: complex) -> np.ndarray:
    lam = trunc.eigenvalues
    d = np.abs(lam - z).min()
    if d < D_GUARD * max(1.0, abs(z)):
        raise ResolventGuardError(f"d(z) = {d:.3e} below guard for z = {z}")
    return 1.0 / (lam - z)


def birman_schwinger(spec: PotentialSpec, trunc: Truncation, z: complex, grid=None,
                     parts: tuple[np.ndarray, np.ndarray] | None = None) -> GalerkinMatrix:
    """``K(z) = M_{|V|^{1/2}} (Lambda - z)^{-1} M_{V^{1/2}}``.

    ``parts`` may pass precomputed ``(A, B)`` from :func:`factored_parts`.
    """
    A, B = parts if parts is not None else factored_parts(spec, trunc, grid)
    r = _resolvent_diag(trunc, z)
    return GalerkinMatrix((B * r) @ A, trunc, "birman_schwinger", {"z": complex(z)})


def gram_chi_pk_chi(chi: PotentialSpec, k: int, grid: SphereGrid | None = None,
                    q: float | None = None, norm_tol: float = 1e-8) -> GalerkinMatrix:
    """Gram matrix ``G_ij = <chi e_{k,i}, chi e_{k,j}>`` over the degree-k harmonics.

    Its eigenvalues are those of ``chi P_k chi``.  ``chi`` must be
    nonnegative on the grid; if ``q`` is given, ``|chi|_{L^{2q}} = 1`` is
    checked to ``norm_tol``.
    """
    trunc = Truncation.sphere(k)
    idx = slice(k * k, (k + 1) ** 2)
    zp = chi.zonal_power()
    if zp is not None:
        s, c0 = zp
        if c0.imag != 0 or c0.real < 0:
            raise ValueError("chi must be real and nonnegative")
        if q is not None:
            nrm = c0.real * math.exp((math.log(2 * math.pi) + betaln(0.5, q * s + 1.0)) / (2 * q))
            if abs(nrm - 1.0) > norm_tol:
                raise ValueError(f"chi has L^{2 * q:g} norm {nrm:.12f}, expected 1")
        M = zonal_power_matrix(2 * s, c0.real ** 2, trunc)[idx, idx]
        M = 0.5 * (M + M.conj().T)
        return GalerkinMatrix(M, trunc, "gram", {"k": k, "quadrature": "gauss_jacobi"})
    grid = grid if grid is not None else default_grid(chi, trunc)
    c = chi.values(grid)
    if np.any(np.abs(c.imag) > 0) or np.any(c.real < 0):
        raise ValueError("chi must be real and nonnegative on the grid")
    if q is not None:
        nrm = grid.lp_norm(c, 2 * q)
        if abs(nrm - 1.0) > norm_tol:
            raise ValueError(f"chi has L^{2 * q:g} norm {nrm:.12f}, expected 1")
    sq = (c.real ** 2).astype(complex)
    sub = Truncation.sphere(k)
    M = _sphere_multiplication(sq, sub, grid, chi.zonal)[idx, idx]
    M = 0.5 * (M + M.conj().T)
    return GalerkinMatrix(M, sub, "gram", {"k": k, "grid": _grid_desc(grid)})


def spectrum(H, backend: str = "lapack") -> np.ndarray:
    """Eigenvalues of a Galerkin matrix, solved block-by-block on its
    irreducible components (exact zeros only)."""
    from .densela import eig_general

    M = H.matrix if isinstance(H, GalerkinMatrix) else np.asarray(H)
    comps = block_components(M, 0.0)
    out = np.empty(M.shape[0], dtype=complex)
    pos = 0
    for idx in comps:
        w = eig_general(M[np.ix_(idx, idx)], backend=backend).eigenvalues
        out[pos:pos + len(w)] = w
        pos += len(w)
    return out


def write_matrix_binary(path, M) -> None:
    """Container: 8-byte magic ``CPXMAT01``, uint64 rows, uint64 cols (little
    endian), then row-major little-endian complex128 entries."""
    M = np.ascontiguousarray(np.asarray(M, dtype="<c16"))
    data = MAGIC + struct.pack("<QQ", *M.shape) + M.tobytes(order="C")
    if hasattr(path, "write"):
        path.write(data)
        return
    with open(path, "wb") as fh:
        fh.write(data)


def read_matrix_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError("not a CPXMAT01 container")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != rows * cols:
        raise ValueError("truncated matrix container")
    return data.reshape(rows, cols).copy()


def write_matrix_csv(path, M) -> None:
    M = np.asarray(M, dtype=complex)
    with open(path, "w", newline="") as fh:
        fh.write("row,col,re,im\n")
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                fh.write(f"{i},{j},{float(M[i, j].real)!r},{float(M[i, j].imag)!r}\n")
