"""Saturating the inclusion radius on the sphere.

With ``V = kappa0 * chi^2`` and ``chi`` normalized in ``L^{2q}``, the
degree-k cluster of ``-Delta + V`` is shifted approximately by
``kappa0 * a_j(k)``, where ``a_j(k)`` are the eigenvalues of
``chi P_k chi``.  Choosing ``kappa0 = rho e^{i theta} k^{2 sigma} / a_0(k)``
moves one eigenvalue to about ``k(k+1) + rho e^{i theta} k^{2 sigma}``, up to a
relative error of order ``rho k^{2 sigma - 1}``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import (assemble_hamiltonian, factored_parts, gram_chi_pk_chi, spectrum)
from .basis import SphereGrid, Truncation, legendre_table, sphere_grid_for
from .densela import (SingularContourError, WindingResult, block_components, logdet_phase_along,
                      mixed_norm_lower_bound)
from .inclusion import ProblemParams
from .potentials import GridSamples, HighestWeightChi, PotentialSpec, Square, holder_exponents

__all__ = [
    "RHO_MAX",
    "C_SAT",
    "SaturationConfig",
    "SaturationOutcome",
    "SaturationError",
    "build_chi",
    "projector_apply",
    "kappa0",
    "gram_eigenvalues",
    "run_saturation",
    "rouche_count",
    "rouche_count_circle",
    "schatten_diagnostic",
    "theta_sweep",
    "path_winding",
]

RHO_MAX = 4.0
C_SAT = 10.0
RADIUS_RETRIES = (1.0, 1.1, 0.9, 1.2)


class SaturationError(RuntimeError):
    """No eigenvalue close enough to the prediction; carries the outcome."""

    def __init__(self, msg, outcome=None):
        super().__init__(msg)
        self.outcome = outcome


@dataclass(frozen=True)
class SaturationConfig:
    k: int
    q: float = 2.0
    rho: float = 0.5
    theta: float = 0.0
    l_max: int | None = None
    chi_mode: str = "highest_weight"
    n: int = 2
    eps: float = 0.3
    c_sat: float = C_SAT
    extra: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.rho <= RHO_MAX:
            raise ValueError(f"rho must lie in (0, {RHO_MAX}]")
        if not 0 <= self.theta < 2 * math.pi:
            raise ValueError("theta must lie in [0, 2 pi)")
        if self.chi_mode not in ("highest_weight", "power_iteration"):
            raise ValueError(f"unknown chi_mode {self.chi_mode!r}")
        if self.chi_mode == "highest_weight" and self.q < (self.n + 1) / 2:
            raise ValueError("highest_weight chi needs q >= (n+1)/2; use power_iteration")
        if self.q <= self.n / 2:
            raise ValueError("saturation needs q > n/2")
        if self.l_max is not None and self.l_max < 2 * self.k + 8:
            raise ValueError("truncation must satisfy l_max >= 2k + 8")

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(self.n, self.q)

    @property
    def truncation_degree(self) -> int:
        return self.l_max if self.l_max is not None else max(2 * self.k + 8, 24)

    @property
    def regime_value(self) -> float:
        """``rho k^{2 sigma - 1}``; the asymptotic regime wants this small."""
        return self.rho * self.k ** (2 * self.params.sigma - 1)

    @property
    def regime_ok(self) -> bool:
        return self.regime_value <= 0.1


@dataclass
class SaturationOutcome:
    config: SaturationConfig
    a: np.ndarray = field(repr=False)
    kappa0: complex
    z_pred: complex
    z_num: complex
    deviation: float
    budget: float
    trunc_err: float
    multiplicity: int
    ambiguous: bool
    schatten_ratio: float
    in_dk: bool
    winding: int | None = None
    passed: bool = False

    @property
    def a0(self) -> float:
        return float(self.a[0])

    CSV_COLUMNS = ("k", "q", "rho", "theta", "a0", "kappa0_re", "kappa0_im", "zpred_re", "zpred_im",
                   "znum_re", "znum_im", "deviation", "budget", "winding", "schatten_ratio", "trunc_err")

    def csv_row(self) -> list:
        c = self.config
        return [c.k, c.q, c.rho, c.theta, self.a0, self.kappa0.real, self.kappa0.imag,
                self.z_pred.real, self.z_pred.imag, self.z_num.real, self.z_num.imag,
                self.deviation, self.budget, "" if self.winding is None else self.winding,
                self.schatten_ratio, self.trunc_err]

    def to_dict(self) -> dict:
        c = asdict(self.config)
        return {
            "config": c,
            "a": [float(x) for x in self.a],
            "kappa0": [self.kappa0.real, self.kappa0.imag],
            "z_pred": [self.z_pred.real, self.z_pred.imag],
            "z_num": [self.z_num.real, self.z_num.imag],
            "deviation": self.deviation,
            "budget": self.budget,
            "trunc_err": self.trunc_err,
            "multiplicity": self.multiplicity,
            "ambiguous": self.ambiguous,
            "schatten_ratio": self.schatten_ratio,
            "in_dk": self.in_dk,
            "regime_value": self.config.regime_value,
            "regime_ok": self.config.regime_ok,
            "winding": self.winding,
            "passed": self.passed,
        }


def projector_apply(k: int, grid: SphereGrid):
    """Return ``f -> P_k f`` acting on samples over ``grid`` (shape n_theta x n_phi)."""
    if grid.n_phi < 2 * k + 1 or grid.degree_budget < 2 * k:
        raise ValueError("grid too coarse for the degree-k projector")
    P = legendre_table(k, grid.x)[k]
    phase = np.exp(1j * np.outer(np.arange(-k, k + 1), grid.phi))
    n_phi = grid.n_phi

    def apply(f):
        fhat = np.fft.fft(f, axis=1) / n_phi
        out = np.zeros_like(f, dtype=complex)
        for j, m in enumerate(range(-k, k + 1)):
            pm = P[abs(m)]
            c = 2.0 * math.pi * np.sum(grid.wx * pm * fhat[:, m % n_phi])
            out += c * pm[:, None] * phase[j][None, :]
        return out

    return apply


def build_chi(k: int, q: float, grid: SphereGrid | None = None, mode: str = "highest_weight",
              iters: int = 60, seed: int = 0) -> PotentialSpec:
    """Nonnegative ``chi`` with ``|chi|_{L^{2q}} = 1`` adapted to the degree-k cluster.

    ``highest_weight`` gives the normalized ``sin^{kp/(2q)}``.  ``power_iteration``
    maximizes ``|P_k f|_2 / |f|_p`` on ``grid`` and returns ``|P_k f|^{p/(2q)}``
    normalized, as samples on that grid.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if mode == "highest_weight":
        return HighestWeightChi(k, q)
    if mode != "power_iteration":
        raise ValueError(f"unknown chi mode {mode!r}")
    if grid is None:
        grid = sphere_grid_for(max(k, 4), math.inf, 4)
    p, _ = holder_exponents(q)
    apply = projector_apply(k, grid)
    res = mixed_norm_lower_bound(apply, p, 2.0, grid.weights, iters=iters, seed=seed)
    g = apply(res.extremizer)
    c = np.abs(g) ** (p / (2 * q))
    nrm = grid.lp_norm(c, 2 * q)
    if not nrm > 0:
        raise ValueError("power iteration returned a zero extremizer")
    c = c / nrm
    if abs(grid.lp_norm(c, 2 * q) - 1.0) > 1e-8:
        raise ValueError("chi normalization failed on the quadrature grid")
    return GridSamples(c.astype(complex), grid, False)


def kappa0(rho: float, theta: float, k: int, sigma: float, a0: float) -> complex:
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    return rho * cmath.exp(1j * theta) * k ** (2 * sigma) / a0


def gram_eigenvalues(chi: PotentialSpec, k: int, q: float | None = None,
                     grid: SphereGrid | None = None) -> np.ndarray:
    """Eigenvalues ``a_j(k)`` of ``chi P_k chi``, nonincreasing and clipped at 0."""
    G = gram_chi_pk_chi(chi, k, grid=grid, q=q).matrix
    a = np.linalg.eigvalsh(G)[::-1]
    return np.clip(a, 0.0, None)


def schatten_diagnostic(a_list, beta: float, k: int, sigma: float) -> float:
    a = np.asarray(a_list, dtype=float)
    return float(np.sum(a ** beta) ** (1.0 / beta) / k ** (2 * sigma))


def _match(eigs: np.ndarray, target: complex) -> tuple[complex, int, bool]:
    """Nearest eigenvalue, its cluster multiplicity, and the ambiguity flag.

    Eigenvalues within ``1e-7`` of the nearest (relative to its modulus) count
    as one cluster; the next distinct eigenvalue must be at least twice as far.
    """
    d = np.abs(eigs - target)
    order = np.argsort(d, kind="stable")
    z0 = eigs[order[0]]
    tol = 1e-7 * max(1.0, abs(z0))
    same = np.abs(eigs - z0) <= tol
    mult = int(same.sum())
    rest = d[~same]
    ambiguous = bool(rest.size and rest.min() < 2.0 * d[order[0]])
    return complex(z0), mult, ambiguous


def _chi_and_grid(cfg: SaturationConfig):
    l_hi = cfg.truncation_degree + cfg.extra
    if cfg.chi_mode == "highest_weight":
        return build_chi(cfg.k, cfg.q), None
    grid = sphere_grid_for(l_hi, math.inf, 4)
    return build_chi(cfg.k, cfg.q, grid, "power_iteration"), grid


def run_saturation(cfg: SaturationConfig, winding: bool = True, strict: bool = True,
                   C_incl: float = 1.0) -> SaturationOutcome:
    """Build ``V = kappa0 chi^2`` and locate the eigenvalue predicted near ``z_pred``.

    Two truncations (``l_max`` and ``l_max + extra``) give ``trunc_err``.  With
    ``strict`` a :class:`SaturationError` is raised when
    ``deviation > c_sat (budget + trunc_err)``.  ``C_incl`` is the inclusion
    constant used for the ``z_pred in D_k`` membership flag.
    """
    params = cfg.params
    s = params.sigma
    k = cfg.k
    chi, grid = _chi_and_grid(cfg)
    a = gram_eigenvalues(chi, k, q=cfg.q, grid=grid)
    kap = kappa0(cfg.rho, cfg.theta, k, s, a[0])
    z_pred = k * (k + 1) + cfg.rho * cmath.exp(1j * cfg.theta) * k ** (2 * s)
    V = Square(chi, kap)
    found = []
    for L in (cfg.truncation_degree, cfg.truncation_degree + cfg.extra):
        H = assemble_hamiltonian(V, Truncation.sphere(L), grid=grid, form="factored")
        found.append(_match(spectrum(H), z_pred))
    (z_num, mult, amb), (z_hi, _, _) = found
    trunc_err = abs(z_num - z_hi)
    deviation = abs(z_num - z_pred)
    budget = cfg.rho ** 2 * k ** (4 * s - 1)
    # |V|_q = |kappa0| since |chi^2|_q = |chi|_{2q}^2 = 1
    in_dk = abs(z_pred - k * (k + 1)) <= C_incl * k ** (2 * s) * abs(kap) * (1 + 1e-12)
    out = SaturationOutcome(cfg, a, kap, complex(z_pred), z_num, deviation, budget, trunc_err, mult,
                            amb, schatten_diagnostic(a, params.beta, k, s), bool(in_dk))
    out.passed = deviation <= cfg.c_sat * (budget + trunc_err)
    if winding:
        out.winding = rouche_count(cfg, cfg.eps, _prepared=(V, grid, kap, a[0]))
    if strict and not out.passed:
        raise SaturationError(
            f"k={k} rho={cfg.rho} theta={cfg.theta}: deviation {deviation:.3e} exceeds "
            f"{cfg.c_sat:g} x (budget {budget:.3e} + trunc_err {trunc_err:.3e})", out)
    return out


def _block_family(spec: PotentialSpec, trunc: Truncation, grid=None):
    """``z -> [I + K(z)]`` restricted to the irreducible blocks of ``K``."""
    A, B = factored_parts(spec, trunc, grid)
    comps = block_components(np.abs(A) + np.abs(B) + np.eye(trunc.n_basis), 0.0)
    lam = trunc.eigenvalues
    blocks = [(idx, A[np.ix_(idx, idx)], B[np.ix_(idx, idx)], lam[idx]) for idx in comps]

    def family(z):
        return [np.eye(len(idx)) + (Bi * (1.0 / (li - z))) @ Ai for idx, Ai, Bi, li in blocks]

    return family


def rouche_count_circle(spec: PotentialSpec, trunc: Truncation, center: complex, radius: float,
                        grid=None, n_initial: int = 64) -> WindingResult:
    """Winding of ``det(I + K(z))`` around a circle.

    Equals (zeros of ``det(H - z)``) minus (poles from ``Lambda``) inside.
    A singular sample triggers up to three retries at radius ``x1.1, x0.9, x1.2``.
    """
    family = _block_family(spec, trunc, grid)
    last = None
    for f in RADIUS_RETRIES:
        r = radius * f

        def path(t, r=r):
            return center + r * cmath.exp(2j * math.pi * t)

        try:
            res = logdet_phase_along(path, family, n_initial=n_initial)
            res.radius = r
            return res
        except SingularContourError as exc:
            last = exc
    raise SingularContourError(f"contour singular after {len(RADIUS_RETRIES)} radii: {last}")


def rouche_count(cfg: SaturationConfig, eps: float = 0.3, n_initial: int = 64,
                 _prepared=None) -> int:
    """Zeros of ``det(I + kappa0 K(z))`` inside the circle of radius
    ``eps * rho * k^{2 sigma}`` about ``k(k+1) + kappa0 a_0``."""
    s = cfg.params.sigma
    k = cfg.k
    if _prepared is None:
        chi, grid = _chi_and_grid(cfg)
        a0 = gram_eigenvalues(chi, k, q=cfg.q, grid=grid)[0]
        kap = kappa0(cfg.rho, cfg.theta, k, s, a0)
        V = Square(chi, kap)
    else:
        V, grid, kap, a0 = _prepared
    center = k * (k + 1) + kap * a0
    radius = eps * cfg.rho * k ** (2 * s)
    trunc = Truncation.sphere(cfg.truncation_degree)
    return rouche_count_circle(V, trunc, center, radius, grid, n_initial).winding


def path_winding(points, center: complex) -> int:
    """Winding of the closed polygon through ``points`` about ``center``,
    assuming consecutive points are less than pi apart in angle."""
    z = np.asarray(points, dtype=complex) - center
    if np.any(z == 0):
        raise ValueError("path passes through the center")
    steps = np.angle(np.roll(z, -1) / z)
    if np.any(np.abs(steps) >= math.pi - 1e-12):
        raise ValueError("angular step too large to resolve the winding")
    return int(round(steps.sum() / (2 * math.pi)))


def theta_sweep(k: int, q: float = 2.0, rho: float = 0.5,
                thetas=(0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi), **kw) -> tuple[list, int]:
    """Matched eigenvalues along a sweep of phases and their winding about ``k(k+1)``."""
    outs = [run_saturation(SaturationConfig(k, q, rho, th, **kw), winding=False) for th in thetas]
    return outs, path_winding([o.z_num for o in outs], k * (k + 1))
