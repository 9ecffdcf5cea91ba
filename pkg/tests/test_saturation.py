"""Tests for the saturation construction, eigenvalue matching and zero counting."""

import cmath
import math

import numpy as np
import pytest

from cpxspec.assembly import assemble_hamiltonian, birman_schwinger, gram_chi_pk_chi, spectrum
from cpxspec.basis import Truncation, sphere_grid
from cpxspec.densela import SingularContourError
from cpxspec.inclusion import ProblemParams
from cpxspec.potentials import Constant, HighestWeightChi, Square
from cpxspec.saturation import (SaturationConfig, SaturationError, SaturationOutcome, build_chi,
                                gram_eigenvalues, kappa0, path_winding, rouche_count, rouche_count_circle,
                                run_saturation, schatten_diagnostic, theta_sweep)

FOUR_PI = 4 * math.pi
SIGMA2 = ProblemParams(2, 2.0).sigma


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"k": 0}, {"k": 4, "rho": 0.0}, {"k": 4, "rho": 5.0}, {"k": 4, "theta": 2 * math.pi},
        {"k": 4, "q": 1.25}, {"k": 4, "q": 1.0, "chi_mode": "power_iteration"}, {"k": 4, "l_max": 15},
        {"k": 4, "chi_mode": "zonal"},
    ])
    def test_rejected(self, kw):
        with pytest.raises(ValueError):
            SaturationConfig(**kw)

    def test_truncation_rule(self):
        assert SaturationConfig(4).truncation_degree == 24
        assert SaturationConfig(16).truncation_degree == 40
        assert SaturationConfig(4, l_max=30).truncation_degree == 30

    def test_regime_flag(self):
        cfg = SaturationConfig(8, rho=0.5)
        assert cfg.regime_value == pytest.approx(0.5 * 8 ** (2 * SIGMA2 - 1))
        assert cfg.regime_ok == (cfg.regime_value <= 0.1)


class TestChi:
    def test_degree_zero_is_constant(self):
        g = sphere_grid(10, 4)
        for q in (1.5, 2.0, 3.0):
            v = build_chi(0, q).values(g)
            np.testing.assert_allclose(v, FOUR_PI ** (-1 / (2 * q)), rtol=1e-14)

    def test_unit_norm(self):
        g = sphere_grid(600, 4)
        assert g.lp_norm(build_chi(4, 2.0).values(g), 4.0) == pytest.approx(1.0, abs=1e-8)

    def test_power_iteration_chi(self):
        g = sphere_grid(60, 119)
        chi = build_chi(4, 2.0, g, "power_iteration")
        assert g.lp_norm(chi.values(g), 4.0) == pytest.approx(1.0, abs=1e-8)
        assert np.all(chi.values(g).real >= 0)
        a_pi = gram_eigenvalues(chi, 4, q=2.0, grid=g)[0]
        a_hw = gram_eigenvalues(build_chi(4, 2.0), 4, q=2.0)[0]
        assert 0.5 <= a_hw / a_pi <= 2.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            build_chi(3, 2.0, mode="zonal")


class TestKappaAndGram:
    def test_kappa_unit(self):
        k = 8
        assert kappa0(1.0, 0.0, k, SIGMA2, k ** (2 * SIGMA2)) == pytest.approx(1.0)

    def test_kappa_phase(self):
        kap = kappa0(0.5, math.pi, 8, SIGMA2, 0.3)
        assert kap.real < 0 and abs(kap.imag) < 1e-15 * abs(kap)

    def test_kappa_zero_a0(self):
        with pytest.raises(ValueError):
            kappa0(1.0, 0.0, 4, SIGMA2, 0.0)

    def test_kappa_bounded_by_rho(self):
        """|kappa0| / rho = k^{2 sigma} / a0 stays within the constant fitted over k = 4..32."""
        ratios = {k: k ** (2 * SIGMA2) / gram_eigenvalues(HighestWeightChi(k, 2.0), k, q=2.0)[0]
                  for k in (4, 8, 16, 32)}
        c_a0 = max(max(r, 1 / r) for r in ratios.values())
        assert c_a0 == pytest.approx(4.2156, rel=1e-4)
        kap = kappa0(0.5, 1.0, 8, SIGMA2, gram_eigenvalues(HighestWeightChi(8, 2.0), 8, q=2.0)[0])
        assert 1 / c_a0 <= abs(kap) / 0.5 <= c_a0
        assert abs(kap) / 0.5 == pytest.approx(4.0809, rel=1e-4)

    @pytest.mark.parametrize("k", [3, 8, 15])
    def test_gram_eigenvalues(self, k):
        chi = HighestWeightChi(k, 2.0)
        a = gram_eigenvalues(chi, k, q=2.0)
        G = gram_chi_pk_chi(chi, k, q=2.0).matrix
        assert len(a) == 2 * k + 1
        assert np.all(a >= 0) and np.all(np.diff(a) <= 0)
        assert a.sum() == pytest.approx(np.trace(G).real, abs=1e-9)

    def test_schatten_constant_chi(self):
        k, q = 5, 2.0
        a = gram_eigenvalues(Constant(FOUR_PI ** (-1 / (2 * q))), k, q=q)
        expect = FOUR_PI ** (-1 / q) * (2 * k + 1) ** (1 / 4) / k ** (2 * SIGMA2)
        assert schatten_diagnostic(a, 4.0, k, SIGMA2) == pytest.approx(expect, rel=1e-12)

    def test_schatten_single(self):
        k = 7
        assert schatten_diagnostic([k ** (2 * SIGMA2), 0, 0], 4.0, k, SIGMA2) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def outcome():
    return run_saturation(SaturationConfig(8, 2.0, 0.5, math.pi / 2))


class TestRunSaturation:
    def test_constant_shift_rail(self):
        """With constant chi, V = kappa0 chi^2 shifts k(k+1) exactly onto the prediction."""
        k, q, rho, th = 6, 2.0, 0.5, 1.1
        chi = Constant(FOUR_PI ** (-1 / (2 * q)))
        a0 = gram_eigenvalues(chi, k, q=q)[0]
        kap = kappa0(rho, th, k, SIGMA2, a0)
        z_pred = k * (k + 1) + rho * cmath.exp(1j * th) * k ** (2 * SIGMA2)
        z = spectrum(assemble_hamiltonian(Square(chi, kap), Truncation.sphere(20), form="factored"))
        assert np.sum(np.abs(z - z_pred) < 1e-12) == 2 * k + 1

    def test_matched_within_budget(self, outcome):
        assert outcome.passed
        assert outcome.deviation <= outcome.budget
        assert outcome.trunc_err <= 1e-6
        assert outcome.in_dk
        assert not outcome.ambiguous
        assert outcome.winding >= 1

    def test_birman_schwinger_at_matched_eigenvalue(self, outcome):
        cfg = outcome.config
        V = Square(HighestWeightChi(cfg.k, cfg.q), outcome.kappa0)
        t = Truncation.sphere(cfg.truncation_degree)
        K = birman_schwinger(V, t, outcome.z_num).matrix
        assert np.min(np.abs(np.linalg.eigvals(K) + 1)) < 1e-4

    def test_winding_counts_enclosed_eigenvalues(self, outcome):
        cfg = outcome.config
        V = Square(HighestWeightChi(cfg.k, cfg.q), outcome.kappa0)
        t = Truncation.sphere(cfg.truncation_degree)
        center = cfg.k * (cfg.k + 1) + outcome.kappa0 * outcome.a0
        radius = cfg.eps * cfg.rho * cfg.k ** (2 * SIGMA2)
        res = rouche_count_circle(V, t, center, radius)
        z = spectrum(assemble_hamiltonian(V, t, form="factored"))
        inside = int(np.sum(np.abs(z - center) < res.radius))
        assert res.winding == inside == outcome.winding

    def test_rouche_refinement_invariant(self, outcome):
        cfg = outcome.config
        assert rouche_count(cfg, n_initial=32) == rouche_count(cfg, n_initial=128) == outcome.winding

    def test_serialization(self, outcome):
        row = outcome.csv_row()
        assert len(row) == len(SaturationOutcome.CSV_COLUMNS)
        d = outcome.to_dict()
        assert d["winding"] == outcome.winding and d["passed"]

    def test_rho_doubling(self):
        small = run_saturation(SaturationConfig(12, 2.0, 0.25, 0.0), winding=False)
        big = run_saturation(SaturationConfig(12, 2.0, 0.5, 0.0), winding=False)
        assert big.budget == pytest.approx(4 * small.budget)
        assert big.deviation <= 4 * small.budget * big.config.c_sat

    def test_power_iteration_mode(self):
        out = run_saturation(SaturationConfig(6, 1.25, 0.25, 0.0, chi_mode="power_iteration"))
        assert out.passed and out.winding >= 1

    def test_strict_failure_carries_outcome(self):
        with pytest.raises(SaturationError) as info:
            run_saturation(SaturationConfig(8, 2.0, 0.5, 0.0, c_sat=1e-6), winding=False)
        assert info.value.outcome is not None and not info.value.outcome.passed


class TestRouche:
    @pytest.mark.parametrize("k", [1, 4])
    def test_constant_potential_count(self, k):
        c = 3 + 2j
        res = rouche_count_circle(Constant(c), Truncation.sphere(8), k * (k + 1) + c, 1.0)
        assert res.winding == 2 * k + 1

    def test_far_circle(self):
        res = rouche_count_circle(Constant(3 + 2j), Truncation.sphere(8), 1000 + 500j, 1.0)
        assert res.winding == 0

    def test_singular_contour_retries(self, monkeypatch):
        import cpxspec.saturation as sat

        real = sat.logdet_phase_along
        calls = []

        def flaky(path, family, n_initial=64):
            calls.append(path(0.0))
            if len(calls) == 1:
                raise SingularContourError("forced")
            return real(path, family, n_initial=n_initial)

        monkeypatch.setattr(sat, "logdet_phase_along", flaky)
        c = 3 + 2j
        res = rouche_count_circle(Constant(c), Truncation.sphere(4), 2 + c, 1.0)
        assert res.radius == pytest.approx(1.1) and res.winding == 3

    def test_singular_contour_gives_up(self, monkeypatch):
        import cpxspec.saturation as sat

        def broken(path, family, n_initial=64):
            raise SingularContourError("forced")

        monkeypatch.setattr(sat, "logdet_phase_along", broken)
        with pytest.raises(SingularContourError):
            rouche_count_circle(Constant(1.0), Truncation.sphere(2), 2.5, 0.5)


class TestThetaSweep:
    def test_winds_once(self):
        outs, w = theta_sweep(8, 2.0, 0.5)
        assert w == 1
        assert all(o.passed for o in outs)

    def test_path_winding(self):
        pts = [1, 1j, -1, -1j]
        assert path_winding(pts, 0) == 1
        assert path_winding(pts[::-1], 0) == -1
        assert path_winding(pts, 5) == 0
        with pytest.raises(ValueError):
            path_winding([1, -1], 0)
