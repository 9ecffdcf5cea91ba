"""Experiment runners shared by the command line and the acceptance suite.

Every runner returns plain data (lists of rows, dicts) so that callers can
serialize it deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import assemble_hamiltonian, spectrum
from .basis import SphereTransform, Truncation, sphere_grid_for, torus_grid_for
from .densela import mixed_norm_lower_bound
from .inclusion import (EDGE_FRACTION, InclusionReport, ProblemParams, calibrate_constant,
                        classify_spectrum, in_region_xi, spectral_gap_distance)
from .potentials import BandLimitedRandom, PotentialSpec, lq_norm

__all__ = [
    "sorted_spectrum",
    "potential_norm",
    "inclusion_experiment",
    "random_batch_calibration",
    "sogge_norms",
    "ResolventRow",
    "resolvent_map",
    "resolvent_envelope",
]

CONVERGENCE_TOL = 1e-6


def sorted_spectrum(z) -> np.ndarray:
    """Eigenvalues sorted by real part, then imaginary part."""
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((z.imag, z.real))]


def potential_norm(spec: PotentialSpec, q: float, trunc: Truncation) -> float:
    """``|V|_{L^q}`` on an oversampled grid of the truncation's manifold."""
    if trunc.kind == "sphere":
        grid = sphere_grid_for(max(trunc.l_max, 8), math.inf, 4)
    else:
        grid = torus_grid_for(trunc, math.inf, 4)
    return lq_norm(spec, q, grid)


def inclusion_experiment(spec: PotentialSpec, trunc: Truncation, params: ProblemParams, C: float,
                         extra: int = 8, backend: str = "lapack") -> InclusionReport:
    """Classify the spectrum at ``trunc``; convergence is judged against a
    truncation enlarged by ``extra`` (degrees on the sphere, frequency radius
    on the torus) on the non-edge eigenvalues.

    ``converged`` means the relative gap is below ``CONVERGENCE_TOL``; the gap
    itself and the required constant at the enlarged truncation are recorded
    on the report.
    """
    if trunc.kind == "sphere":
        bigger = Truncation.sphere(trunc.l_max + extra)
    else:
        bigger = Truncation.torus(trunc.radius + extra, trunc.side)
    lo = spectrum(assemble_hamiltonian(spec, trunc), backend)
    hi = spectrum(assemble_hamiltonian(spec, bigger), backend)
    edge = float(trunc.eigenvalues.max())
    keep = np.abs(lo) < EDGE_FRACTION * max(edge, 1e-300)
    gap = 0.0
    if keep.any():
        rel = np.abs(lo[keep][:, None] - hi[None, :]).min(axis=1) / np.maximum(1.0, np.abs(lo[keep]))
        gap = float(rel.max())
    norm_v = potential_norm(spec, params.q, trunc)
    lam = trunc.distinct_eigenvalues() if trunc.kind == "torus" else None
    report = classify_spectrum(sorted_spectrum(lo), params, norm_v, C, lam_sq=lam,
                               converged=gap <= CONVERGENCE_TOL, edge_lambda_sq=edge)
    lam_hi = bigger.distinct_eigenvalues() if bigger.kind == "torus" else None
    enlarged = classify_spectrum(sorted_spectrum(hi), params, norm_v, C, lam_sq=lam_hi,
                                 edge_lambda_sq=float(bigger.eigenvalues.max()))
    report.truncation_gap = gap
    report.enlarged_required_C = enlarged.max_required_C
    return report


def random_batch_calibration(params: ProblemParams, seeds, degree: int = 4, amplitude: float = 5.0,
                             l_max: int = 24, real: bool = False) -> dict:
    """Calibrated constant over a batch of random band-limited potentials."""
    reqs = []
    reports = []
    for s in seeds:
        rep = inclusion_experiment(BandLimitedRandom(degree, int(s), amplitude, real),
                                   Truncation.sphere(l_max), params, 1.0)
        reports.append(rep)
        reqs.append(rep.max_required_C)
    return {
        "C": calibrate_constant(reports),
        "min": float(np.min(reqs)),
        "median": float(np.median(reqs)),
        "max": float(np.max(reqs)),
        "per_seed": [float(r) for r in reqs],
        "converged": all(r.converged for r in reports),
    }


def sogge_norms(k_list, p_dual_list, iters: int = 40, seed: int = 0) -> list[dict]:
    """Lower bounds on ``|P_k|_{L^2 -> L^{p'}} = |P_k|_{L^p -> L^2}`` by power iteration,
    compared with ``(1 + k)^{nu(p')}``."""
    rows = []
    kmax = max(k_list)
    grid = sphere_grid_for(kmax, math.inf, 2)
    T = SphereTransform(kmax, grid)
    for pd in p_dual_list:
        p = pd / (pd - 1.0)
        nu = ProblemParams(2, 1.0 / (1.0 / p - 1.0 / pd)).nu
        for k in k_list:
            mask = (np.arange(T.rows.shape[0]) >= k * k) & (np.arange(T.rows.shape[0]) < (k + 1) ** 2)

            def apply(f, mask=mask):
                return T.synthesis(T.analysis(f) * mask)

            res = mixed_norm_lower_bound(apply, p, 2.0, grid.weights, iters=iters, seed=seed)
            rows.append({"k": int(k), "p_dual": float(pd), "lower_bound": res.bound, "nu": nu,
                         "ratio": res.bound / (1.0 + k) ** nu})
    return rows


@dataclass
class ResolventRow:
    z_re: float
    z_im: float
    d: float
    nearest_k: int
    l2_norm: float
    inv_d: float
    mixed_lower: float
    in_xi: bool
    skipped: bool


def resolvent_map(l_max: int, p: float, re_range=(0.0, 40.0), im_range=(-6.0, 6.0),
                  n_re: int = 21, n_im: int = 7, iters: int = 20, seed: int = 0,
                  guard: float = 1e-8) -> list[ResolventRow]:
    """``z -> (|R(z)|_{2->2}, lower bound of |R(z)|_{p->p'})`` on a rectangular grid.

    ``R(z) = (-Delta - z)^{-1}`` truncated at degree ``l_max``; points with
    ``d(z) < guard max(1, |z|)`` are flagged and skipped.
    """
    if l_max * (l_max + 1) <= 2 * max(abs(re_range[0]), abs(re_range[1])):
        raise ValueError("truncation too small for the requested z range")
    trunc = Truncation.sphere(l_max)
    lam = trunc.eigenvalues
    k_all = np.arange(l_max + 1)
    spec_k = (k_all * (k_all + 1)).astype(float)
    grid = sphere_grid_for(l_max, math.inf, 2)
    T = SphereTransform(l_max, grid)
    p_dual = p / (p - 1.0)
    rows = []
    for zr in np.linspace(re_range[0], re_range[1], n_re):
        for zi in np.linspace(im_range[0], im_range[1], n_im):
            z = complex(zr, zi)
            d, kn = spectral_gap_distance(z, spec_k)
            xi = in_region_xi(z)
            if d < guard * max(1.0, abs(z)):
                rows.append(ResolventRow(float(zr), float(zi), d, kn, math.nan, math.inf, math.nan, xi, True))
                continue
            r = 1.0 / (lam - z)
            l2 = float(np.abs(r).max())
            res = mixed_norm_lower_bound(lambda f, r=r: T.synthesis(T.analysis(f) * r), p, p_dual,
                                         grid.weights, iters=iters, seed=seed,
                                         adjoint=lambda f, r=r: T.synthesis(T.analysis(f) * r.conj()))
            rows.append(ResolventRow(float(zr), float(zi), d, kn, l2, 1.0 / d, res.bound, xi, False))
    return rows


def resolvent_envelope(rows, params: ProblemParams, k_range=range(1, 6)) -> dict:
    """Spread of ``mixed_lower * d(z) / (1 + |z|)^{sigma}`` across clusters.

    For each k in ``k_range`` the maximum over non-skipped points outside Xi
    whose nearest eigenvalue is ``k(k+1)`` is taken; the envelope is the
    ratio of the largest to the smallest of these cluster maxima.
    """
    s = params.sigma
    per_k = {}
    for r in rows:
        if r.skipped or r.in_xi or r.nearest_k not in k_range:
            continue
        val = r.mixed_lower * r.d / (1.0 + math.hypot(r.z_re, r.z_im)) ** s
        per_k[r.nearest_k] = max(per_k.get(r.nearest_k, 0.0), val)
    vals = list(per_k.values())
    return {"per_k": per_k, "envelope": (max(vals) / min(vals)) if vals else math.nan}
