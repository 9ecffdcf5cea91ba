"""Acceptance suite: one marked group of tests per criterion.

Each criterion's computation is wrapped in a ``compute_*`` function returning
``(result, payload)`` where ``payload`` is the serialized CSV/JSON bytes.  The
first run is cached and reused by the determinism criterion, which recomputes
every payload and compares bytes.
"""

import functools
import json
import math
import time

import numpy as np
import pytest

from cpxspec.assembly import (ResolventGuardError, assemble_hamiltonian, assemble_laplacian, birman_schwinger,
                              factored_parts, spectrum)
from cpxspec.basis import Truncation, sphere_grid_for, torus_grid_for
from cpxspec.densela import op_norm_2
from cpxspec.experiments import inclusion_experiment, sorted_spectrum
from cpxspec.inclusion import (ProblemParams, in_region_xi, second_set_enclosing_radius, second_set_member)
from cpxspec.potentials import BandLimitedRandom, Constant, HighestWeightChi, TorusBump
from cpxspec.saturation import (SaturationConfig, SaturationOutcome, gram_eigenvalues, rouche_count_circle,
                                run_saturation, schatten_diagnostic)
from cpxspec.torus_scaling import (calibrate_torus_constant, euclidean_limit_metrics, ladder_csv, run_ladder,
                                   scaled_equivalence_check)

Q2 = ProblemParams(2, 2.0)
Q54 = ProblemParams(2, 1.25)


def dump(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode("utf-8")


def cplx_list(z):
    return [[float(w.real), float(w.imag)] for w in np.asarray(z, dtype=complex)]


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# -- computations ---------------------------------------------------------------------------------

def compute_1():
    t = Truncation.sphere(8)
    eigs = spectrum(assemble_hamiltonian(Constant(3 + 4j), t))
    rep = inclusion_experiment(Constant(3 + 4j), t, Q2, 1.0)
    payload = dump({"eigs": cplx_list(sorted_spectrum(eigs))}) + rep.to_json().encode() + rep.to_csv().encode()
    return (t, eigs, rep), payload


def compute_2():
    t = Truncation.sphere(12)
    lam = np.diag(assemble_laplacian(t).matrix).real
    return lam, dump([float(x) for x in lam])


def _random_cases():
    cases = []
    for i in range(30):
        rng = np.random.default_rng(1000 + i)
        if i % 2:
            t = Truncation.torus(float(rng.choice([2.5, 3.0, 3.5, 4.0])), 1.0)
            grid = torus_grid_for(t, math.inf, 2)
        else:
            t = Truncation.sphere(int(rng.integers(3, 8)))
            grid = sphere_grid_for(t.l_max, 16, 4)
        V = BandLimitedRandom(int(rng.integers(1, 4)), int(rng.integers(0, 2 ** 31)), float(rng.uniform(5, 40)))
        cases.append((t, grid, V, rng))
    return cases


def compute_3():
    rows = []
    for t, grid, V, rng in _random_cases():
        A, B = factored_parts(V, t, grid, check=False)
        lam = t.eigenvalues
        H = np.diag(lam.astype(complex)) + A @ B
        forward, norms, skipped = [], [], 0
        for z in np.linalg.eigvals(H):
            try:
                K = birman_schwinger(V, t, z, parts=(A, B)).matrix
            except ResolventGuardError:
                skipped += 1
                continue
            nk = op_norm_2(K)
            forward.append(float(np.min(np.abs(np.linalg.eigvals(K) + 1)) / max(1.0, nk)))
            norms.append(nk)
        # converse: det(I + K(z)) = det(H - z) / det(Lambda - z), so -1 in spec K(z) only at spec H
        converse = []
        for z in rng.uniform(0, lam.max(), 4) + 1j * rng.uniform(-10, 10, 4):
            K = birman_schwinger(V, t, z, parts=(A, B)).matrix
            lhs = np.linalg.det(np.eye(t.n_basis) + K)
            rhs = np.prod(np.linalg.eigvals(H) - z) / np.prod(lam - z)
            converse.append(float(abs(lhs - rhs) / max(1.0, abs(rhs))))
        rows.append({"N": t.n_basis, "forward": max(forward), "min_norm": min(norms),
                     "converse": max(converse), "skipped": skipped})
    return rows, dump(rows)


A0_KS = (4, 6, 8, 12, 16, 24, 32)


def compute_4():
    a0 = [float(gram_eigenvalues(HighestWeightChi(k, 2.0), k, q=2.0)[0]) for k in A0_KS]
    slope = float(np.polyfit(np.log(A0_KS), np.log(a0), 1)[0])
    return (a0, slope), dump({"k": list(A0_KS), "a0": a0, "slope": slope})


SAT_CASES = [(k, rho, th) for k in (8, 12, 16) for rho in (0.25, 0.5) for th in (0.0, math.pi / 2, math.pi)]


def compute_5():
    outs = {c: run_saturation(SaturationConfig(c[0], 2.0, c[1], c[2]), strict=False) for c in SAT_CASES}
    payload = "\r\n".join(",".join(map(repr, o.csv_row())) for o in outs.values()).encode()
    return outs, payload + dump([o.to_dict() for o in outs.values()])


def compute_6():
    counts = {}
    for k in (1, 3, 6):
        c = 3 + 2j
        counts[k] = rouche_count_circle(Constant(c), Truncation.sphere(10), k * (k + 1) + c, 1.0).winding
    return counts, dump(counts)


def compute_7():
    sig = Q2.sigma
    ratios = {k: float(schatten_diagnostic(gram_eigenvalues(HighestWeightChi(k, 2.0), k, q=2.0), Q2.beta, k, sig))
              for k in range(4, 33)}
    return ratios, dump(ratios)


def compute_8():
    rng = np.random.default_rng(8)
    z = rng.uniform(-60, 60, 100_000) + 1j * rng.uniform(-40, 40, 100_000)
    xi = np.array([in_region_xi(w) for w in z])
    ref = np.abs(np.sqrt(z).imag) >= 1
    disk = {}
    for q in (1.05, 1.25, 1.5, 2.0, 3.0):
        pp = ProblemParams(2, q)
        R = second_set_enclosing_radius(pp, 2.0, 1.0)
        w = rng.uniform(0, 2 * R, 20_000) * np.exp(2j * np.pi * rng.uniform(size=20_000))
        members = np.array([second_set_member(x, pp, 2.0, 1.0) for x in w])
        disk[repr(q)] = {"R": R, "members": int(members.sum()),
                         "max_abs": float(np.abs(w[members]).max()) if members.any() else 0.0}
    return (xi, ref, disk), dump({"xi_count": int(xi.sum()), "ref_count": int(ref.sum()), "disk": disk})


def compute_9():
    cases = {"zero": (Constant(0.0), 4.0), "constant": (Constant(2 - 1j), 4.0),
             "bump": (TorusBump(20 + 20j), 5.0)}
    out = {f"{name}/L={L:g}": scaled_equivalence_check(V, L, Truncation.torus(r, L))
           for name, (V, r) in cases.items() for L in (2.0, 4.0)}
    return out, dump(out)


def compute_10():
    C = calibrate_torus_constant(Q54)
    run = run_ladder(TorusBump(20 + 20j), (1, 2, 4, 8), k_phys=20.0)
    m = euclidean_limit_metrics(run, Q54, C)
    payload = ladder_csv(m["rows"]).encode() + dump({"C": C, "final_over_initial": m["final_over_initial"],
                                                     "norm_v": m["norm_v"]})
    return (C, m), payload


COMPUTE = {1: compute_1, 2: compute_2, 3: compute_3, 4: compute_4, 5: compute_5, 6: compute_6,
           7: compute_7, 8: compute_8, 9: compute_9, 10: compute_10}


@functools.cache
def first_run(n):
    (result, payload), seconds = timed(COMPUTE[n])
    return result, payload, seconds


# -- criteria -------------------------------------------------------------------------------------

@pytest.mark.criterion(1, "exact-shift rail on the sphere")
def test_c1_exact_shift():
    (t, eigs, rep), _, seconds = first_run(1)
    target = t.eigenvalues + (3 + 4j)
    assert np.max(np.abs(sorted_spectrum(eigs) - sorted_spectrum(target))) <= 1e-9
    assert rep.counts["violation"] == 0
    assert max(r.required_C for r in rep.records) <= 1.0
    assert seconds < 5


@pytest.mark.criterion(2, "unperturbed Laplacian spectrum")
def test_c2_laplacian():
    lam, _, _ = first_run(2)
    values, counts = np.unique(lam, return_counts=True)
    np.testing.assert_array_equal(values, [k * (k + 1) for k in range(13)])
    np.testing.assert_array_equal(counts, [2 * k + 1 for k in range(13)])


@pytest.mark.criterion(3, "Birman-Schwinger equivalence")
def test_c3_birman_schwinger():
    rows, _, seconds = first_run(3)
    assert len(rows) == 30 and all(r["N"] <= 64 for r in rows)
    assert max(r["forward"] for r in rows) <= 1e-8
    assert max(r["converse"] for r in rows) <= 1e-8
    assert min(r["min_norm"] for r in rows) >= 1 - 1e-6
    assert seconds < 30


@pytest.mark.criterion(4, "a0(k) scaling slope")
def test_c4_a0_slope():
    (a0, slope), _, seconds = first_run(4)
    assert abs(slope - 2 * Q2.sigma) <= 0.15
    assert seconds < 120


@pytest.mark.criterion(5, "saturation deviation within the rho^2 budget")
@pytest.mark.parametrize("case", SAT_CASES, ids=lambda c: f"k{c[0]}-rho{c[1]}-theta{c[2]:.2f}")
def test_c5_saturation(case):
    outs, _, seconds = first_run(5)
    o = outs[case]
    z_pred = case[0] * (case[0] + 1) + case[1] * np.exp(1j * case[2]) * case[0] ** 0.25
    assert abs(o.z_pred - z_pred) <= 1e-12 * abs(z_pred)
    assert o.deviation <= 10 * o.budget + 10 * o.trunc_err
    assert seconds < 600


@pytest.mark.criterion(5, "saturation deviation within the rho^2 budget")
@pytest.mark.parametrize("k", [8, 12, 16])
@pytest.mark.parametrize("theta", [0.0, math.pi / 2, math.pi])
def test_c5_rho_doubling(k, theta):
    outs, _, _ = first_run(5)
    small, big = outs[(k, 0.25, theta)], outs[(k, 0.5, theta)]
    assert big.budget == pytest.approx(4 * small.budget, rel=1e-12)
    assert big.deviation <= 10 * (4 * small.budget) + 10 * big.trunc_err


@pytest.mark.criterion(6, "Rouche winding count")
def test_c6_winding_saturation_runs():
    outs, _, _ = first_run(5)
    ok = [o for o in outs.values() if o.passed]
    assert ok
    assert all(isinstance(o.winding, int) and o.winding >= 1 for o in ok)


@pytest.mark.criterion(6, "Rouche winding count")
def test_c6_constant_model():
    counts, _, seconds = first_run(6)
    assert counts == {k: 2 * k + 1 for k in counts}
    assert seconds < 120


@pytest.mark.criterion(7, "Schatten diagnostic bounded")
def test_c7_schatten():
    ratios, _, _ = first_run(7)
    r = np.array(list(ratios.values()))
    assert np.all(r > 0) and r.max() / r.min() <= 4


@pytest.mark.criterion(8, "region Xi and second-set geometry")
def test_c8_geometry():
    (xi, ref, disk), _, _ = first_run(8)
    np.testing.assert_array_equal(xi, ref)
    for entry in disk.values():
        assert entry["members"] > 0
        assert entry["max_abs"] <= entry["R"] * (1 + 1e-12)


@pytest.mark.criterion(9, "torus scaling identity")
def test_c9_scaling():
    out, _, seconds = first_run(9)
    assert len(out) == 6 and max(out.values()) <= 1e-8
    assert seconds < 60


@pytest.mark.criterion(10, "Euclidean-limit drift on the torus ladder")
def test_c10_limit_drift():
    (C, m), _, seconds = first_run(10)
    d = [r.max_dist_limit_set for r in m["rows"]]
    assert 0 < C <= 1 and not m["warning"]
    assert m["nonincreasing"] and all(b <= a for a, b in zip(d, d[1:]))
    assert d[-1] <= 0.5 * d[0]
    assert seconds < 600


@pytest.mark.criterion(11, "byte-identical payloads on re-run")
def test_c11_determinism():
    for n in COMPUTE:
        _, fresh = COMPUTE[n]()
        assert fresh == first_run(n)[1], f"criterion {n} payload changed"
