"""Declarative potentials.

Every potential knows how to sample itself on a sphere grid and/or a torus
grid, its declared bandwidth (``math.inf`` when not band-limited), and
whether it is zonal (independent of phi) on the sphere.  ``sqrt_factors``
returns ``(V^{1/2}, |V|^{1/2})`` with ``V^{1/2} := V / |V|^{1/2}`` and
``V^{1/2} := 0`` on the zero set of V.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import betaln

from .basis import SphereGrid, TorusGrid, legendre_table, torus_modes

__all__ = [
    "PotentialSpec",
    "Constant",
    "ZonalPower",
    "HighestWeightChi",
    "BandLimitedRandom",
    "GridSamples",
    "Scaled",
    "TorusBump",
    "Scale",
    "Square",
    "Pointwise",
    "holder_exponents",
    "lq_norm",
    "potential_from_dict",
]


def holder_exponents(q: float) -> tuple[float, float]:
    """``(p, p')`` with ``1/q = 1/p - 1/p'`` and ``1/p = 1/(2q) + 1/2``."""
    inv_p = 0.5 + (0.0 if math.isinf(q) else 0.5 / q)
    inv_pd = 1.0 - inv_p
    return 1.0 / inv_p, (math.inf if inv_pd == 0 else 1.0 / inv_pd)


def _even_int(a: float) -> bool:
    return a >= 0 and float(a).is_integer() and int(a) % 2 == 0


class PotentialSpec:
    bandwidth: float = math.inf
    zonal: bool = False
    kind: str = "base"

    def sphere_values(self, grid: SphereGrid) -> np.ndarray:
        raise TypeError(f"{type(self).__name__} is not defined on the sphere")

    def torus_values(self, grid: TorusGrid) -> np.ndarray:
        raise TypeError(f"{type(self).__name__} is not defined on the torus")

    def values(self, grid) -> np.ndarray:
        if isinstance(grid, SphereGrid):
            return np.asarray(self.sphere_values(grid), dtype=complex)
        return np.asarray(self.torus_values(grid), dtype=complex)

    def sqrt_factors(self) -> tuple["PotentialSpec", "PotentialSpec"]:
        return Pointwise(self, "sqrt"), Pointwise(self, "abs_sqrt")

    def zonal_power(self) -> tuple[float, complex] | None:
        """``(s, c)`` if the sphere potential is exactly ``c * sin(theta)^s``, else None."""
        return None

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def describe(self) -> str:
        return repr(self)


@dataclass(frozen=True)
class Constant(PotentialSpec):
    c: complex = 0.0
    kind = "constant"

    @property
    def bandwidth(self):
        return 0

    @property
    def zonal(self):
        return True

    def sphere_values(self, grid):
        return np.full((grid.n_theta, grid.n_phi), complex(self.c))

    def torus_values(self, grid):
        return np.full((grid.n, grid.n), complex(self.c))

    def sqrt_factors(self):
        a = abs(self.c)
        if a == 0:
            return Constant(0.0), Constant(0.0)
        return Constant(self.c / math.sqrt(a)), Constant(math.sqrt(a))

    def zonal_power(self):
        return 0.0, complex(self.c)

    def to_dict(self):
        c = complex(self.c)
        return {"type": "constant", "re": c.real, "im": c.imag}


@dataclass(frozen=True)
class ZonalPower(PotentialSpec):
    """``scale * sin(theta)^a``."""

    a: float = 0.0
    scale: complex = 1.0
    kind = "zonal_power"

    @property
    def bandwidth(self):
        return int(self.a) if _even_int(self.a) else math.inf

    @property
    def zonal(self):
        return True

    def sphere_values(self, grid):
        s = np.sqrt(np.clip(1.0 - grid.x ** 2, 0.0, None)) ** self.a
        return np.repeat((complex(self.scale) * s)[:, None], grid.n_phi, axis=1)

    def sqrt_factors(self):
        a = abs(self.scale)
        if a == 0:
            return Constant(0.0), Constant(0.0)
        return (ZonalPower(self.a / 2, self.scale / math.sqrt(a)),
                ZonalPower(self.a / 2, math.sqrt(a)))

    def zonal_power(self):
        return float(self.a), complex(self.scale)

    def to_dict(self):
        c = complex(self.scale)
        return {"type": "zonal_power", "a": self.a, "re": c.real, "im": c.imag}


@dataclass(frozen=True)
class HighestWeightChi(PotentialSpec):
    """``|Q_k|^{p/(2q)}`` normalized in ``L^{2q}(S^2)``, where ``|Q_k| ~ sin^k``.

    The normalization uses the closed form
    ``int_{S^2} sin^b = 2 pi B(1/2, b/2 + 1)``.
    """

    k: int = 1
    q: float = 2.0
    kind = "highest_weight_chi"

    @property
    def exponent(self) -> float:
        p, _ = holder_exponents(self.q)
        return self.k * p / (2.0 * self.q)

    @property
    def norm_constant(self) -> float:
        s = self.exponent
        tq = 2.0 * self.q
        if math.isinf(tq):
            return 1.0
        log_int = math.log(2 * math.pi) + betaln(0.5, s * tq / 2.0 + 1.0)
        return math.exp(-log_int / tq)

    @property
    def bandwidth(self):
        s = self.exponent
        return int(s) if _even_int(s) else math.inf

    @property
    def zonal(self):
        return True

    def sphere_values(self, grid):
        sn = np.sqrt(np.clip(1.0 - grid.x ** 2, 0.0, None))
        col = self.norm_constant * sn ** self.exponent
        return np.repeat(col[:, None].astype(complex), grid.n_phi, axis=1)

    def sqrt_factors(self):
        return (ZonalPower(self.exponent / 2, math.sqrt(self.norm_constant)),) * 2

    def zonal_power(self):
        return self.exponent, complex(self.norm_constant)

    def to_dict(self):
        return {"type": "highest_weight_chi", "k": self.k, "q": self.q}


@dataclass(frozen=True)
class BandLimitedRandom(PotentialSpec):
    """Random combination of eigenfunctions up to ``degree``, scaled so that
    ``|V|_{L^2} = amplitude``.

    On the sphere, degree is the harmonic degree; on the torus, the
    frequency radius ``|m|``.  ``real=True`` enforces a real potential.
    """

    degree: int = 4
    seed: int = 0
    amplitude: float = 1.0
    real: bool = False
    kind = "band_limited_random"

    @property
    def bandwidth(self):
        return self.degree

    def _rng(self):
        return np.random.Generator(np.random.Philox(self.seed))

    def sphere_coefficients(self) -> np.ndarray:
        rng = self._rng()
        n = (self.degree + 1) ** 2
        c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        if self.real:
            for k in range(self.degree + 1):
                base = k * k + k
                c[base] = c[base].real
                for m in range(1, k + 1):
                    c[base - m] = (-1) ** m * np.conj(c[base + m])
        return c * (self.amplitude / np.linalg.norm(c))

    def sphere_values(self, grid):
        c = self.sphere_coefficients()
        P = legendre_table(self.degree, grid.x)
        out = np.zeros((grid.n_theta, grid.n_phi), dtype=complex)
        phi = grid.phi
        for k in range(self.degree + 1):
            for m in range(-k, k + 1):
                am = abs(m)
                p = P[k, am] * (-1) ** am if m < 0 else P[k, am]
                out += c[k * k + k + m] * np.outer(p, np.exp(1j * m * phi))
        if self.real:
            out = out.real.astype(complex)
        return out

    def torus_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        modes = torus_modes(self.degree)
        rng = self._rng()
        c = rng.standard_normal(len(modes)) + 1j * rng.standard_normal(len(modes))
        if self.real:
            lookup = {tuple(m): i for i, m in enumerate(modes)}
            for i, m in enumerate(modes):
                j = lookup[(-m[0], -m[1])]
                if j == i:
                    c[i] = c[i].real
                elif j > i:
                    c[j] = np.conj(c[i])
        return modes, c * (self.amplitude / np.linalg.norm(c))

    def torus_values(self, grid):
        modes, c = self.torus_coefficients()
        X, Y = grid.mesh
        L = grid.side
        out = np.zeros(X.shape, dtype=complex)
        for (m1, m2), cm in zip(modes, c):
            out += cm * np.exp(2j * math.pi * (m1 * X + m2 * Y) / L) / L
        if self.real:
            out = out.real.astype(complex)
        return out

    def to_dict(self):
        return {"type": "band_limited_random", "degree": self.degree, "seed": self.seed,
                "amplitude": self.amplitude, "real": self.real}


@dataclass(frozen=True, eq=False)
class GridSamples(PotentialSpec):
    """Samples on one declared grid; usable only on that grid."""

    samples: np.ndarray = field(repr=False, default=None)
    grid: Any = None
    zonal_flag: bool = False
    kind = "grid_samples"

    @property
    def zonal(self):
        return self.zonal_flag

    def _check(self, grid):
        same = type(grid) is type(self.grid) and (
            (isinstance(grid, SphereGrid) and (grid.n_theta, grid.n_phi) == (self.grid.n_theta, self.grid.n_phi))
            or (isinstance(grid, TorusGrid) and (grid.n, grid.side) == (self.grid.n, self.grid.side)))
        if not same:
            raise ValueError("GridSamples evaluated on a grid other than the declared one")

    def sphere_values(self, grid):
        self._check(grid)
        return np.asarray(self.samples, dtype=complex)

    def torus_values(self, grid):
        self._check(grid)
        return np.asarray(self.samples, dtype=complex)

    def to_dict(self):
        s = np.asarray(self.samples, dtype=complex)
        g = self.grid
        gd = ({"sphere": [g.n_theta, g.n_phi]} if isinstance(g, SphereGrid) else {"torus": [g.n, g.side]})
        return {"type": "grid_samples", "grid": gd, "re": s.real.tolist(), "im": s.imag.tolist()}


@dataclass(frozen=True)
class Scaled(PotentialSpec):
    """Torus potential ``y -> L^2 inner(L y)`` realizing the rescaling to the unit torus."""

    inner: PotentialSpec = None
    L: float = 1.0
    kind = "scaled"

    @property
    def bandwidth(self):
        return self.inner.bandwidth

    def torus_values(self, grid):
        big = TorusGrid(grid.n, grid.side * self.L)
        return self.L ** 2 * self.inner.values(big)

    def to_dict(self):
        return {"type": "scaled", "inner": self.inner.to_dict(), "L": self.L}


@dataclass(frozen=True)
class TorusBump(PotentialSpec):
    """Gaussian profile ``amp * exp(-|x - c|^2 / (2 w^2))`` cut off outside
    the square box ``|x - c|_inf <= box``."""

    amplitude: complex = 1.0
    width: float = 0.08
    center: tuple[float, float] = (0.0, 0.0)
    box: float = 0.45
    kind = "torus_bump"

    def torus_values(self, grid):
        X, Y = grid.mesh
        dx, dy = X - self.center[0], Y - self.center[1]
        v = complex(self.amplitude) * np.exp(-(dx * dx + dy * dy) / (2 * self.width ** 2))
        inside = (np.abs(dx) <= self.box) & (np.abs(dy) <= self.box)
        return np.where(inside, v, 0.0)

    def to_dict(self):
        a = complex(self.amplitude)
        return {"type": "torus_bump", "re": a.real, "im": a.imag, "width": self.width,
                "center": list(self.center), "box": self.box}


@dataclass(frozen=True)
class Scale(PotentialSpec):
    """``factor * inner``."""

    inner: PotentialSpec = None
    factor: complex = 1.0
    kind = "scale"

    @property
    def bandwidth(self):
        return self.inner.bandwidth

    @property
    def zonal(self):
        return self.inner.zonal

    def values(self, grid):
        return complex(self.factor) * self.inner.values(grid)

    def zonal_power(self):
        zp = self.inner.zonal_power()
        return None if zp is None else (zp[0], complex(self.factor) * zp[1])

    sphere_values = values
    torus_values = values

    def to_dict(self):
        f = complex(self.factor)
        return {"type": "scale", "inner": self.inner.to_dict(), "re": f.real, "im": f.imag}


@dataclass(frozen=True)
class Square(PotentialSpec):
    """``kappa * chi^2`` for a nonnegative ``chi``."""

    chi: PotentialSpec = None
    kappa: complex = 1.0
    kind = "square"

    @property
    def bandwidth(self):
        return 2 * self.chi.bandwidth

    @property
    def zonal(self):
        return self.chi.zonal

    def values(self, grid):
        c = self.chi.values(grid)
        return complex(self.kappa) * c * c

    def zonal_power(self):
        zp = self.chi.zonal_power()
        return None if zp is None else (2 * zp[0], complex(self.kappa) * zp[1] ** 2)

    sphere_values = values
    torus_values = values

    def sqrt_factors(self):
        a = abs(self.kappa)
        if a == 0:
            return Constant(0.0), Constant(0.0)
        return Scale(self.chi, self.kappa / math.sqrt(a)), Scale(self.chi, math.sqrt(a))

    def to_dict(self):
        k = complex(self.kappa)
        return {"type": "square", "chi": self.chi.to_dict(), "re": k.real, "im": k.imag}


@dataclass(frozen=True)
class Pointwise(PotentialSpec):
    """``V^{1/2}`` (``op="sqrt"``) or ``|V|^{1/2}`` (``op="abs_sqrt"``) of ``inner``."""

    inner: PotentialSpec = None
    op: str = "sqrt"
    kind = "pointwise"

    @property
    def zonal(self):
        return self.inner.zonal

    def zonal_power(self):
        zp = self.inner.zonal_power()
        if zp is None:
            return None
        s, c = zp
        r = math.sqrt(abs(c))
        if self.op == "abs_sqrt":
            return s / 2, complex(r)
        return s / 2, (c / r if r > 0 else 0j)

    def values(self, grid):
        v = self.inner.values(grid)
        r = np.sqrt(np.abs(v))
        if self.op == "abs_sqrt":
            return r.astype(complex)
        out = np.zeros_like(v)
        nz = r > 0
        out[nz] = v[nz] / r[nz]
        return out

    sphere_values = values
    torus_values = values

    def to_dict(self):
        return {"type": "pointwise", "inner": self.inner.to_dict(), "op": self.op}


def lq_norm(spec: PotentialSpec, q: float, grid) -> float:
    """``|V|_{L^q}`` by quadrature on ``grid`` (max of samples for q = inf)."""
    return grid.lp_norm(spec.values(grid), q)


def potential_from_dict(d: dict) -> PotentialSpec:
    t = d["type"]
    cplx = complex(d.get("re", 0.0), d.get("im", 0.0))
    if t == "constant":
        return Constant(cplx)
    if t == "zonal_power":
        return ZonalPower(float(d["a"]), cplx)
    if t == "highest_weight_chi":
        return HighestWeightChi(int(d["k"]), float(d["q"]))
    if t == "band_limited_random":
        return BandLimitedRandom(int(d["degree"]), int(d["seed"]), float(d["amplitude"]), bool(d.get("real", False)))
    if t == "scaled":
        return Scaled(potential_from_dict(d["inner"]), float(d["L"]))
    if t == "torus_bump":
        return TorusBump(cplx, float(d.get("width", TorusBump.width)), tuple(d.get("center", TorusBump.center)),
                         float(d.get("box", TorusBump.box)))
    if t == "scale":
        return Scale(potential_from_dict(d["inner"]), cplx)
    if t == "square":
        return Square(potential_from_dict(d["chi"]), cplx)
    if t == "pointwise":
        return Pointwise(potential_from_dict(d["inner"]), d["op"])
    raise ValueError(f"unknown potential type {t!r}")
