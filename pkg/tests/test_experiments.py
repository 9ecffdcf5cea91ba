"""Tests for shared experiment runners: inclusion calibration, cluster norms and resolvent maps."""

import math

import numpy as np
import pytest

from cpxspec.basis import Truncation
from cpxspec.experiments import (inclusion_experiment, random_batch_calibration, resolvent_envelope,
                                 resolvent_map, sogge_norms, sorted_spectrum)
from cpxspec.inclusion import ProblemParams
from cpxspec.potentials import BandLimitedRandom, Constant

Q2 = ProblemParams(2, 2.0)


class TestInclusionExperiment:
    def test_constant_potential(self):
        rep = inclusion_experiment(Constant(3 + 4j), Truncation.sphere(8), Q2, 1.0)
        assert rep.converged and rep.truncation_gap < 1e-12
        assert rep.max_required_C <= 1.0
        assert rep.counts["violation"] == 0

    def test_band_limited_seed_one(self):
        rep = inclusion_experiment(BandLimitedRandom(4, 1, 5.0), Truncation.sphere(24), Q2, 1.0)
        assert rep.norm_v == pytest.approx(5.0, rel=1e-10)
        assert rep.max_required_C == pytest.approx(0.129267, rel=1e-5)
        assert abs(rep.enlarged_required_C / rep.max_required_C - 1) <= 0.10

    @pytest.mark.slow
    def test_fifty_seed_batch(self):
        out = random_batch_calibration(Q2, range(50), l_max=16)
        assert out["C"] == pytest.approx(0.183189, rel=1e-5)
        assert out["min"] == pytest.approx(0.084238, rel=1e-5)
        assert out["median"] == pytest.approx(0.123491, rel=1e-5)
        assert out["max"] == out["C"]

    def test_sorted_spectrum(self):
        z = sorted_spectrum([2 + 1j, 1, 2 - 1j])
        np.testing.assert_array_equal(z, [1, 2 - 1j, 2 + 1j])


class TestSogge:
    def test_ratios_bounded(self):
        rows = sogge_norms([2, 4, 8, 12], [4.0, 6.0], iters=30)
        for pd in (4.0, 6.0):
            r = [x["ratio"] for x in rows if x["p_dual"] == pd]
            assert max(r) / min(r) < 1.5
        assert rows[0]["nu"] == pytest.approx(0.125)


class TestResolventMap:
    @pytest.mark.parametrize("z, expect", [(-5.0, 0.2), (12.5, 2.0)])
    def test_l2_is_inverse_distance(self, z, expect):
        (row,) = resolvent_map(8, 1.2, (z, z), (0.0, 0.0), 1, 1, iters=5)
        assert row.l2_norm == pytest.approx(expect, abs=1e-10)
        assert row.in_xi == (z < 0)

    def test_guard_skips(self):
        (row,) = resolvent_map(8, 1.2, (6.0, 6.0), (0.0, 0.0), 1, 1, iters=5)
        assert row.skipped and math.isnan(row.l2_norm)

    def test_truncation_too_small(self):
        with pytest.raises(ValueError):
            resolvent_map(3, 1.2, (0.0, 40.0))

    def test_envelope(self):
        rows = resolvent_map(12, 1.2, (0.0, 40.0), (-6.0, 6.0), 21, 7, iters=15)
        for r in rows:
            if not r.skipped:
                assert abs(r.l2_norm - r.inv_d) <= 1e-10 * r.inv_d
                assert r.mixed_lower >= 0
        env = resolvent_envelope(rows, ProblemParams(2, 1.5))
        assert set(env["per_k"]) <= set(range(1, 6))
        assert 1.0 <= env["envelope"] <= 4.0
