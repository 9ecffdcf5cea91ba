"""Large tori and the Euclidean limit.

On the torus of side L, ``-Delta + V`` is unitarily equivalent (via
``u -> L u(L .)``) to ``L^{-2}(-Delta + L^2 V(L .))`` on the unit torus.
With a fixed compactly supported V and a fixed physical frequency cutoff,
the non-real eigenvalues on growing tori are expected to drift toward
``[0, inf) U {|z|^{1/2 - sigma} <= C |V|_q}``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_hamiltonian, spectrum
from .basis import TorusGrid, Truncation
from .densela import match_spectra
from .inclusion import ProblemParams, calibrate_constant, classify_spectrum
from .potentials import Constant, PotentialSpec, Scaled

__all__ = [
    "scaled_equivalence_check",
    "ScalingRun",
    "LadderRow",
    "run_ladder",
    "euclidean_norm",
    "distance_to_limit_set",
    "euclidean_limit_metrics",
    "calibrate_torus_constant",
    "disk_shrink_exponent",
    "ladder_csv",
]

NONREAL_TOL = 1e-9


def scaled_equivalence_check(V: PotentialSpec, L: float, trunc: Truncation) -> float:
    """Matched-multiset distance between ``spec(-Delta + V)`` on the side-L torus
    and ``L^{-2} spec(-Delta + L^2 V(L .))`` on the unit torus.

    ``trunc`` is the side-L truncation; the unit-torus side keeps the same
    integer frequencies, which is what makes the identity exact.
    """
    if trunc.kind != "torus" or abs(trunc.side - L) > 1e-12 * L:
        raise ValueError("truncation must be a torus truncation of side L")
    unit = Truncation.torus(trunc.radius, 1.0)
    if not np.array_equal(unit.modes, trunc.modes):
        raise ValueError("mismatched truncations")
    big = spectrum(assemble_hamiltonian(V, trunc))
    small = spectrum(assemble_hamiltonian(Scaled(V, L), unit)) / L ** 2
    return match_spectra(big, small)[0]


def disk_shrink_exponent(params: ProblemParams, eps: float = 0.0) -> float:
    """Exponent of L in the rescaled disk radii ``L^{-2} r_k`` for ``lambda_k <= L^{1+eps}``."""
    return 2 * (1 + eps) * params.sigma - params.n / params.q


def euclidean_norm(V: PotentialSpec, q: float, n_grid: int = 512, side: float = 1.0) -> float:
    """``|V|_{L^q(R^2)}`` of a potential supported inside ``[-side/2, side/2)^2``."""
    return TorusGrid(n_grid, side).lp_norm(V.values(TorusGrid(n_grid, side)), q)


def distance_to_limit_set(z, params: ProblemParams, norm_v: float, C: float,
                          use_disk: bool = True) -> np.ndarray:
    """Distance to ``[0, inf) U {|z|^{1/2 - sigma} <= C |V|_q}``."""
    z = np.asarray(z, dtype=complex)
    d_ray = np.where(z.real >= 0, np.abs(z.imag), np.abs(z))
    if not use_disk:
        return d_ray
    radius = (C * norm_v) ** (1.0 / (0.5 - params.sigma))
    return np.minimum(d_ray, np.maximum(np.abs(z) - radius, 0.0))


@dataclass
class LadderRow:
    L: float
    n_basis: int
    max_dist_limit_set: float
    max_imag: float
    calibrated_C_required: float


@dataclass
class ScalingRun:
    V: PotentialSpec
    ladder: tuple
    k_phys: float
    box: float = 0.45
    spectra: dict = field(default_factory=dict, repr=False)
    n_basis: dict = field(default_factory=dict)

    def __post_init__(self):
        if 2 * self.box > min(self.ladder):
            raise ValueError("support box does not fit in the smallest torus")


def run_ladder(V: PotentialSpec, ladder=(1, 2, 4, 8), k_phys: float = 12.0, box: float = 0.45,
               backend: str = "lapack") -> ScalingRun:
    """Spectra of ``-Delta + V`` on tori of side ``L`` with cutoff ``|2 pi m / L| <= k_phys``."""
    run = ScalingRun(V, tuple(ladder), k_phys, box)
    for L in run.ladder:
        trunc = Truncation.torus_physical(k_phys, float(L))
        run.spectra[L] = spectrum(assemble_hamiltonian(V, trunc), backend=backend)
        run.n_basis[L] = trunc.n_basis
    return run


def euclidean_limit_metrics(run: ScalingRun, params: ProblemParams, C: float,
                            norm_v: float | None = None) -> dict:
    """Per-L maximum distance of non-real eigenvalues to the Euclidean limit set.

    Outside ``n/2 < q <= (n+1)/2`` only the ray ``[0, inf)`` is used and
    ``warning`` is set.  ``calibrated_C_required`` is the smallest C whose
    disk covers every non-real eigenvalue in the open left half-plane, which
    the ray cannot approach.
    """
    n, q = params.n, params.q
    in_range = n / 2 < q <= (n + 1) / 2
    if norm_v is None:
        norm_v = euclidean_norm(run.V, q)
    rows = []
    for L in run.ladder:
        z = run.spectra[L]
        nonreal = z[np.abs(z.imag) > NONREAL_TOL * np.maximum(1.0, np.abs(z))]
        if nonreal.size:
            dist = distance_to_limit_set(nonreal, params, norm_v, C, use_disk=in_range)
            left = nonreal[nonreal.real < 0]
            creq = float((np.abs(left) ** (0.5 - params.sigma)).max() / norm_v) if left.size else 0.0
            rows.append(LadderRow(L, run.n_basis[L], float(dist.max()), float(np.abs(nonreal.imag).max()),
                                  creq))
        else:
            rows.append(LadderRow(L, run.n_basis[L], 0.0, 0.0, 0.0))
    dmax = [r.max_dist_limit_set for r in rows]
    return {
        "rows": rows,
        "nonincreasing": all(b <= a for a, b in zip(dmax, dmax[1:])),
        "final_over_initial": (dmax[-1] / dmax[0]) if dmax[0] > 0 else 0.0,
        "norm_v": norm_v,
        "warning": not in_range,
    }


def calibrate_torus_constant(params: ProblemParams, constants=(1.0, 1j, -2.0 + 1.0j, 3.0 + 4.0j),
                             radius: float = 3.0) -> float:
    """Inclusion constant from constant potentials on the unit torus."""
    batch = []
    for c in constants:
        trunc = Truncation.torus(radius, 1.0)
        eigs = spectrum(assemble_hamiltonian(Constant(c), trunc))
        batch.append(classify_spectrum(eigs, params, abs(c), 1.0, lam_sq=trunc.distinct_eigenvalues()))
    return calibrate_constant(batch)


LADDER_COLUMNS = ("L", "N_basis", "max_dist_limit_set", "max_imag", "calibrated_C_required")


def ladder_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(LADDER_COLUMNS)
    for r in rows:
        w.writerow([repr(float(r.L)), r.n_basis, repr(r.max_dist_limit_set), repr(r.max_imag),
                    repr(r.calibrated_C_required)])
    return buf.getvalue()
