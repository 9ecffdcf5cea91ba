"""Tests for rescaled tori and the Euclidean-limit metrics."""

import math

import numpy as np
import pytest

from cpxspec.basis import Truncation
from cpxspec.inclusion import ProblemParams
from cpxspec.potentials import BandLimitedRandom, Constant, TorusBump
from cpxspec.torus_scaling import (LADDER_COLUMNS, ScalingRun, calibrate_torus_constant, disk_shrink_exponent,
                                   distance_to_limit_set, euclidean_limit_metrics, euclidean_norm, ladder_csv,
                                   run_ladder, scaled_equivalence_check)

Q54 = ProblemParams(2, 1.25)


class TestScalingIdentity:
    @pytest.mark.parametrize("L", [2.0, 4.0])
    def test_zero(self, L):
        assert scaled_equivalence_check(Constant(0.0), L, Truncation.torus(4.0, L)) == 0.0

    @pytest.mark.parametrize("L", [2.0, 4.0])
    def test_constant(self, L):
        assert scaled_equivalence_check(Constant(2 - 1j), L, Truncation.torus(4.0, L)) <= 1e-10

    @pytest.mark.parametrize("L", [2.0, 4.0])
    def test_bump(self, L):
        assert scaled_equivalence_check(TorusBump(20 + 20j), L, Truncation.torus(5.0, L)) <= 1e-8

    def test_band_limited(self):
        assert scaled_equivalence_check(BandLimitedRandom(2, 4, 10.0), 3.0, Truncation.torus(4.0, 3.0)) <= 1e-8

    def test_mismatched(self):
        with pytest.raises(ValueError):
            scaled_equivalence_check(Constant(1.0), 2.0, Truncation.torus(3.0, 4.0))
        with pytest.raises(ValueError):
            scaled_equivalence_check(Constant(1.0), 2.0, Truncation.sphere(3))


class TestGeometry:
    @pytest.mark.parametrize("q", [1.01, 1.25, 1.5, 2.0, 10.0])
    def test_disk_shrink_exponent_negative(self, q):
        assert disk_shrink_exponent(ProblemParams(2, q)) < 0

    def test_distance(self):
        d = distance_to_limit_set(np.array([3 + 4j, -3 + 4j, 5 - 2j]), Q54, 1.0, 1.0, use_disk=False)
        np.testing.assert_allclose(d, [4, 5, 2])
        # disk of radius (C |V|)^{1/(1/2 - sigma)} = 2^5 = 32 swallows all three
        d = distance_to_limit_set(np.array([3 + 4j, -3 + 4j, -40.0]), Q54, 2.0, 1.0)
        np.testing.assert_allclose(d, [0, 0, 8])

    def test_euclidean_norm_gaussian(self):
        a, w, q = 20 + 20j, 0.08, 1.25
        exact = abs(a) * (2 * math.pi * w * w / q) ** (1 / q)
        assert euclidean_norm(TorusBump(a, w), q) == pytest.approx(exact, rel=1e-8)

    def test_box_must_fit(self):
        with pytest.raises(ValueError):
            ScalingRun(TorusBump(1.0), (0.5, 1.0), 10.0, box=0.45)


class TestLadder:
    def test_real_potential(self):
        run = run_ladder(TorusBump(30.0), (1, 2), k_phys=12.0)
        m = euclidean_limit_metrics(run, Q54, 1.0)
        assert all(r.max_dist_limit_set == 0.0 and r.max_imag == 0.0 for r in m["rows"])

    def test_zero_potential(self):
        run = run_ladder(Constant(0.0), (1, 2), k_phys=12.0)
        m = euclidean_limit_metrics(run, Q54, 1.0, norm_v=0.0)
        assert [r.max_dist_limit_set for r in m["rows"]] == [0.0, 0.0]

    def test_fixed_physical_cutoff(self):
        run = run_ladder(TorusBump(1.0), (1, 2, 4), k_phys=12.0)
        assert run.n_basis[1] < run.n_basis[2] < run.n_basis[4]

    def test_warning_outside_range(self):
        run = run_ladder(TorusBump(10 + 10j), (1,), k_phys=12.0)
        m = euclidean_limit_metrics(run, ProblemParams(2, 2.0), 1.0)
        assert m["warning"]

    def test_csv(self):
        run = run_ladder(TorusBump(10 + 10j), (1, 2), k_phys=12.0)
        text = ladder_csv(euclidean_limit_metrics(run, Q54, 1.0)["rows"])
        lines = text.split("\r\n")
        assert lines[0] == ",".join(LADDER_COLUMNS) and len(lines) == 4


def test_torus_calibration():
    C = calibrate_torus_constant(Q54)
    assert 0 < C <= 1.0
    assert C == pytest.approx(0.812, abs=1e-3)
