import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from ringheat.dynamics import assemble_drift
from ringheat.model import DeltaPairCoupling, SystemParams
from ringheat.spectral import eigendecompose, find_pair
from ringheat.stationary import (
    CurrentReport,
    InstabilityError,
    ResonanceError,
    decompose_current,
    exact_current,
    expected_current,
    mode_pair_covariance,
    stationary_covariance,
)

SPEC = DeltaPairCoupling(c=0.5, x1=1.0)


def _system(M=4, eta=0.3, T1=2.0, T2=1.0, spec=SPEC):
    return assemble_drift(SystemParams(M=M, eta=eta, T1=T1, T2=T2), spec)


class TestSolvers:
    @pytest.mark.parametrize("method", ["eigenbasis", "kronecker", "integration"])
    def test_residual_below_tolerance(self, method):
        ds = _system()
        cov = stationary_covariance(ds, method=method)
        assert cov.residual <= 1e-9 * np.linalg.norm(ds.Q)
        cov.check()

    def test_methods_agree(self):
        ds = _system(M=6, eta=0.4)
        sols = {
            m: stationary_covariance(ds, method=m).Sigma
            for m in ("eigenbasis", "kronecker", "integration")
        }
        ref = sols["eigenbasis"]
        for m in ("kronecker", "integration"):
            assert np.linalg.norm(sols[m] - ref) <= 1e-7 * np.linalg.norm(ref)

    def test_against_library_lyapunov_solver(self):
        ds = _system(M=5, eta=0.25)
        S = stationary_covariance(ds).Sigma
        S_ref = scipy.linalg.solve_continuous_lyapunov(ds.A, -ds.Q)
        assert np.linalg.norm(S - S_ref) <= 1e-8 * np.linalg.norm(S_ref)

    def test_instability_at_zero_coupling(self):
        ds = _system(eta=0.0)
        with pytest.raises(InstabilityError):
            stationary_covariance(ds)

    def test_kronecker_dimension_guard(self):
        ds = _system(M=32)
        with pytest.raises(ValueError):
            stationary_covariance(ds, method="kronecker")

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            stationary_covariance(_system(), method="nope")


class TestEquilibrium:
    @pytest.mark.parametrize("eta", [0.05, 0.3, 1.0])
    def test_exact_gibbs_covariance(self, eta):
        """At T1 = T2 = T the stationary covariance is exactly the Gibbs one:
        T/omega_n^2 per field slot, T per momentum and bath slot, halved by
        the symmetric normalization — independent of eta."""
        T = 1.7
        ds = _system(M=5, eta=eta, T1=T, T2=T)
        S = stationary_covariance(ds).Sigma
        lay = ds.layout
        expected = np.diag(np.concatenate([
            0.5 * T / lay.omega_squared(),
            0.5 * T * np.ones(lay.nfield),
            0.5 * T * np.ones(2),
        ]))
        assert np.allclose(S, expected, atol=1e-10)

    @pytest.mark.parametrize("eta", [0.1, 0.5])
    def test_null_current(self, eta):
        ds = _system(M=8, eta=eta, T1=1.0, T2=1.0)
        assert abs(exact_current(ds)) <= 1e-12


class TestCurrent:
    def test_linear_in_temperature_difference(self):
        J21 = exact_current(_system(M=6, T1=2.0, T2=1.0))
        J15 = exact_current(_system(M=6, T1=1.5, T2=1.0))
        assert J21 == pytest.approx(2.0 * J15, rel=1e-12)

    def test_swap_temperatures_flips_sign(self):
        Ja = exact_current(_system(M=6, T1=2.0, T2=1.0))
        Jb = exact_current(_system(M=6, T1=1.0, T2=2.0))
        assert Ja == pytest.approx(-Jb, rel=1e-10)

    @given(scale=st.floats(min_value=0.1, max_value=5.0))
    def test_expected_current_linear_in_covariance(self, scale):
        ds = _system()
        cov = stationary_covariance(ds)
        J = expected_current(cov, ds.B)
        cov.Sigma = cov.Sigma * scale
        assert expected_current(cov, ds.B) == pytest.approx(scale * J)


class TestModePairCovariance:
    def test_matches_full_covariance_functional(self):
        """E[Phi(f_m)^* Phi(f_n)] from the resolvent identity equals the
        quadratic form f_m^dagger Sigma f_n of the Lyapunov solution."""
        ds = _system(M=4, eta=0.3)
        S = stationary_covariance(ds).Sigma
        pairs = eigendecompose(ds)
        for m, n in [(0, 0), (1, 2), (3, 7), (5, 5), (2, 9)]:
            fm, fn = pairs[m], pairs[n]
            direct = fm.left.conjugate() @ S @ fn.left
            resolvent = mode_pair_covariance(fm, fn, 2.0, 1.0)
            assert resolvent == pytest.approx(complex(direct), rel=1e-8, abs=1e-12)

    def test_variance_bounded_by_max_temperature(self):
        ds = _system(M=6, eta=0.1)
        pairs = eigendecompose(ds)
        for p in pairs:
            if p.label.n >= 1:
                var = mode_pair_covariance(p, p, 2.0, 1.0).real
                assert 0 < var <= 2.0 * 1.1

    def test_resonant_pair_raises(self):
        ds = _system(M=4, eta=0.3)
        p = eigendecompose(ds)[0]
        bad = type(p)(label=p.label, lam=1j * 2.0, right=p.right, left=p.left,
                      source=p.source)
        with pytest.raises(ResonanceError):
            mode_pair_covariance(bad, bad, 1.0, 1.0)


class TestDecomposition:
    @pytest.fixture(scope="class")
    @staticmethod
    def report_and_J():
        ds = _system(M=6, eta=0.3)
        J = exact_current(ds)
        rep = decompose_current(eigendecompose(ds), 2.0, 1.0, ds)
        return rep, J

    def test_total_matches_lyapunov(self, report_and_J):
        rep, J = report_and_J
        assert rep.total == pytest.approx(J, rel=1e-10)

    def test_classes_sum_to_total(self, report_and_J):
        rep, _ = report_and_J
        assert rep.class_sum() == pytest.approx(rep.total, rel=1e-12)

    def test_all_classes_present(self, report_and_J):
        rep, _ = report_and_J
        assert set(rep.by_class) == {
            "diagonal", "offDiagonal", "antiresonant", "nearResonant", "bathModes"
        }

    def test_near_resonant_dominates_at_small_eta(self):
        ds = _system(M=6, eta=0.02, T1=2.0, T2=1.0)
        rep = decompose_current(eigendecompose(ds), 2.0, 1.0, ds)
        assert abs(rep.by_class["nearResonant"] - rep.total) < 0.15 * abs(rep.total)

    def test_by_mode_sums_to_near_resonant(self, report_and_J):
        rep, _ = report_and_J
        assert sum(rep.by_mode.values()) == pytest.approx(
            rep.by_class["nearResonant"], rel=1e-12
        )

    def test_equilibrium_decomposes_to_zero(self):
        ds = _system(M=4, eta=0.3, T1=1.0, T2=1.0)
        rep = decompose_current(eigendecompose(ds), 1.0, 1.0, ds)
        assert abs(rep.total) < 1e-12
