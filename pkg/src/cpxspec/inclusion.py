"""Eigenvalue inclusion geometry: exponents, disks, the second set and Xi.

For ``q > n/2`` every eigenvalue z of ``-Delta + V`` is expected in

    union_k D(lambda_k^2, C r_k)  or  {|z|^{1/2} (1 + |z|)^{-sigma} <= C |V|_q},

with ``r_k = |V|_q (1 + lambda_k)^{2 sigma}``.  The helpers here classify
computed eigenvalues against these sets and report the smallest constant C
that would cover each of them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "ProblemParams",
    "EigenRecord",
    "InclusionReport",
    "sigma",
    "nu",
    "beta",
    "spectral_gap_distance",
    "in_region_xi",
    "second_set_member",
    "second_set_enclosing_radius",
    "disk_radius",
    "classify_spectrum",
    "calibrate_constant",
]

EDGE_FRACTION = 0.8


def sigma(n: int, q: float) -> float:
    """Disk-radius exponent: ``n/(2q) - 1/2`` for ``q <= (n+1)/2``, else ``(n-1)/(4q)``."""
    if math.isinf(q):
        return 0.0
    if q < n / 2:
        raise ValueError(f"q = {q} below n/2 = {n / 2}")
    if q <= (n + 1) / 2:
        return n / (2 * q) - 0.5
    return (n - 1) / (4 * q)


def nu(n: int, p_dual: float) -> float:
    """Cluster-bound exponent, the same quantity as ``sigma`` written in ``p'``."""
    if p_dual < 2:
        raise ValueError("p' must be >= 2")
    t = 0.0 if math.isinf(p_dual) else 1.0 / p_dual
    if n == 1 or p_dual <= 2 * (n + 1) / (n - 1):
        return 0.5 * (n - 1) * (0.5 - t)
    return n * (0.5 - t) - 0.5


def beta(n: int, q: float) -> float:
    """Schatten exponent: ``(n-1) q / (n - q)`` for ``q <= (n+1)/2``, else ``2q``."""
    if math.isinf(q) or q < n / 2:
        raise ValueError(f"beta undefined for q = {q}")
    if q <= (n + 1) / 2:
        if q >= n:
            raise ValueError("low branch needs q < n")
        return (n - 1) * q / (n - q)
    return 2 * q


@dataclass(frozen=True)
class ProblemParams:
    n: int = 2
    q: float = 2.0

    def __post_init__(self):
        if self.q < self.n / 2:
            raise ValueError("q must be >= n/2")

    @property
    def sigma(self) -> float:
        return sigma(self.n, self.q)

    @property
    def p(self) -> float:
        return 1.0 / (0.5 + (0.0 if math.isinf(self.q) else 0.5 / self.q))

    @property
    def p_dual(self) -> float:
        inv = 1.0 - 1.0 / self.p
        return math.inf if inv == 0 else 1.0 / inv

    @property
    def nu(self) -> float:
        return nu(self.n, self.p_dual)

    @property
    def beta(self) -> float:
        return beta(self.n, self.q)


def spectral_gap_distance(z: complex, spectrum) -> tuple[float, int]:
    """``d(z)`` and the index of the nearest point; ties go to the smaller index."""
    s = np.asarray(spectrum, dtype=float)
    if s.size == 0:
        raise ValueError("empty spectrum")
    d = np.abs(s - z)
    i = int(np.argmin(d))
    # argmin already returns the first minimum; guard rounding ties
    close = np.flatnonzero(d <= d[i] * (1 + 1e-15))
    i = int(close[0])
    return float(d[i]), i


def in_region_xi(z: complex) -> bool:
    """``(Im z)^2 >= 4 (Re z + 1)``: the exterior of a parabola, ``|Im sqrt z| >= 1``."""
    z = complex(z)
    return z.imag * z.imag >= 4.0 * (z.real + 1.0)


def second_set_member(z: complex, params: ProblemParams, norm_v: float, C: float) -> bool:
    if C <= 0:
        raise ValueError("C must be positive")
    a = abs(z)
    return math.sqrt(a) * (1.0 + a) ** (-params.sigma) <= C * norm_v


def second_set_enclosing_radius(params: ProblemParams, norm_v: float, C: float) -> float:
    """Radius of the origin-centered disk containing the second set (``sigma < 1/2``)."""
    s = params.sigma
    if s >= 0.5:
        return math.inf
    b = 2.0 ** s * C * norm_v
    return max(b * b, b ** (1.0 / (0.5 - s)))


def disk_radius(params: ProblemParams, norm_v: float, lam_sq) -> np.ndarray:
    """``r_k = |V|_q (1 + lambda_k)^{2 sigma}`` for eigenvalues ``lambda_k^2``."""
    lam = np.sqrt(np.asarray(lam_sq, dtype=float))
    return norm_v * (1.0 + lam) ** (2.0 * params.sigma)


@dataclass
class EigenRecord:
    z_re: float
    z_im: float
    nearest_k: int
    nearest_lambda_sq: float
    d: float
    disk_k: int
    disk_ratio: float
    second_ratio: float
    required_C: float
    cls: str
    edge: bool


@dataclass
class InclusionReport:
    params: ProblemParams
    norm_v: float
    C: float
    converged: bool
    records: list[EigenRecord] = field(default_factory=list)
    truncation_gap: float | None = None
    enlarged_required_C: float | None = None

    @property
    def max_required_C(self) -> float:
        vals = [r.required_C for r in self.records if not r.edge]
        return max(vals) if vals else 0.0

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {"disk": 0, "second_set": 0, "violation": 0, "edge": 0}
        for r in self.records:
            if r.edge:
                out["edge"] += 1
            out["violation" if r.cls.startswith("violation") else r.cls.split(":")[0]] += 1
        return out

    def to_json(self) -> str:
        payload = {
            "n": self.params.n,
            "q": _num(self.params.q),
            "sigma": self.params.sigma,
            "norm_v": self.norm_v,
            "C": self.C,
            "converged": self.converged,
            "truncation_gap": self.truncation_gap,
            "enlarged_required_C": self.enlarged_required_C,
            "max_required_C": self.max_required_C,
            "counts": self.counts,
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    CSV_COLUMNS = ("z_re", "z_im", "nearest_k", "nearest_lambda_sq", "d", "disk_k",
                   "disk_ratio", "second_ratio", "required_C", "cls", "edge")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.records:
            w.writerow([_fmt(getattr(r, c)) for c in self.CSV_COLUMNS])
        return buf.getvalue()


def _num(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def classify_spectrum(eigs, params: ProblemParams, norm_v: float, C: float,
                      lam_sq=None, converged: bool = True,
                      edge_lambda_sq: float | None = None) -> InclusionReport:
    """Classify eigenvalues: disk first, then second set, else violation.

    ``lam_sq`` are the distinct unperturbed eigenvalues (default: sphere
    ``k(k+1)`` up to a degree comfortably above the data).  Eigenvalues with
    ``|z| >= 0.8 * edge_lambda_sq`` (largest retained eigenvalue) are marked
    as truncation edge and left out of ``max_required_C``.
    """
    eigs = np.asarray(eigs, dtype=complex).ravel()
    if lam_sq is None:
        kmax = int(math.sqrt(max(np.abs(eigs).max(initial=0.0), 1.0))) + 4
        k = np.arange(kmax + 1)
        lam_sq = (k * (k + 1)).astype(float)
    lam_sq = np.sort(np.asarray(lam_sq, dtype=float))
    radii = disk_radius(params, norm_v, lam_sq)
    report = InclusionReport(params, float(norm_v), float(C), converged)
    for z in eigs:
        d, inear = spectral_gap_distance(z, lam_sq)
        dist = np.abs(lam_sq - z)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(radii > 0, dist / np.where(radii > 0, radii, 1.0),
                              np.where(dist == 0, 0.0, math.inf))
        kd = int(np.argmin(ratios))
        disk_ratio = float(ratios[kd])
        a = abs(z)
        lhs = math.sqrt(a) * (1.0 + a) ** (-params.sigma)
        if norm_v > 0:
            second_ratio = lhs / norm_v
        else:
            second_ratio = 0.0 if lhs == 0 else math.inf
        required = min(disk_ratio, second_ratio)
        if disk_ratio <= C:
            cls = f"disk:{kd}"
        elif second_ratio <= C:
            cls = "second_set"
        else:
            cls = f"violation:{required!r}"
        edge = edge_lambda_sq is not None and a >= EDGE_FRACTION * edge_lambda_sq
        report.records.append(EigenRecord(float(z.real), float(z.imag), inear, float(lam_sq[inear]), d,
                                          kd, disk_ratio, second_ratio, required, cls, bool(edge)))
    return report


def calibrate_constant(batch) -> float:
    """Max required constant over a batch of :class:`InclusionReport`."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty calibration batch")
    return max(r.max_required_C for r in batch)
