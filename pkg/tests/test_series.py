import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ringheat.model import DeltaPairCoupling, PowerLawCoupling
from ringheat.series import (
    JumpReport,
    SeriesResult,
    example_current,
    example_terms,
    probe_jump,
    scan_example,
    theorem_current,
    theorem_partial_sum,
    theorem_term,
    theorem_terms,
)
from ringheat.spectral import DegenerateSumError, phase_and_nu, shift_data

# two-method consensus value of the two-contact current at c = 0.5, x1 = 1,
# deltaT = 1, N_max = 1e6 (error estimate 3.9e-8); regression anchor
C_HALF_ONE = 5.8586326498838719e-04


class TestTerms:
    @given(
        c=st.floats(min_value=0.1, max_value=0.9),
        x1=st.floats(min_value=0.3, max_value=3.0),
        n=st.integers(min_value=1, max_value=500),
    )
    def test_theorem_equals_example_termwise(self, c, x1, n):
        spec = DeltaPairCoupling(c=c, x1=x1)
        a = theorem_term(spec, n, 2.0, 1.0)
        b = float(example_terms(c, x1, 1.0, np.array([n]))[0])
        assert abs(a - b) <= 1e-14 * max(1.0, abs(a), abs(b))

    @given(n=st.integers(min_value=1, max_value=100))
    def test_mu_nu_form_identity(self, n):
        """Summand in raw Fourier coefficients equals the spectral form
        4 n nu (mu1 - mu2) / ((n^2+1)(mu1-mu2)^2 + (mu1+mu2)^2) up to the
        common temperature prefactor."""
        spec = DeltaPairCoupling(c=0.5, x1=1.0)
        sd = shift_data(spec, n)
        dmu, smu = sd.mu1 - sd.mu2, sd.mu1 + sd.mu2
        spectral_form = (
            -(2.0 - 1.0) / (4 * math.pi)
            * 4 * n * sd.nu * dmu / ((n**2 + 1) * dmu**2 + smu**2)
        )
        assert theorem_term(spec, n, 2.0, 1.0) == pytest.approx(spectral_form, rel=1e-13)

    def test_equal_temperatures_vanish(self):
        spec = DeltaPairCoupling(c=0.5, x1=1.0)
        assert theorem_term(spec, 7, 1.3, 1.3) == 0.0

    def test_real_coefficients_vanish(self):
        # alpha2(n) = +-c up to one ulp of pi in the phase
        spec = DeltaPairCoupling(c=0.5, x1=math.pi)
        for n in (1, 2, 5):
            assert abs(theorem_term(spec, n, 2.0, 1.0)) < 1e-16

    def test_degenerate_sum_raises(self):
        class Degenerate(DeltaPairCoupling):
            def fourier_array(self, n):
                n = np.asarray(n)
                return np.ones(n.shape, complex), 1j * np.ones(n.shape, complex)

        with pytest.raises(DegenerateSumError):
            theorem_terms(Degenerate(c=0.5, x1=1.0), np.arange(1, 5), 2.0, 1.0)

    def test_term_decays_like_one_over_n(self):
        spec = DeltaPairCoupling(c=0.5, x1=1.0)
        ns = np.arange(1, 5001)
        terms = theorem_terms(spec, ns, 2.0, 1.0)
        assert np.all(np.abs(terms) <= 1.0 / ns)
        partial = np.cumsum(terms)
        assert np.max(np.abs(partial)) < 1.0

    def test_n_below_one_rejected(self):
        with pytest.raises(ValueError):
            theorem_term(DeltaPairCoupling(c=0.5, x1=1.0), 0, 2.0, 1.0)


class TestSummation:
    def test_regression_fixture(self):
        res = example_current(0.5, 1.0, 1.0, 10**5)
        assert res.value == pytest.approx(C_HALF_ONE, abs=5 * res.error_estimate)
        # deterministic evaluation: exact reproducibility of the N=1e5 value
        assert res.value == pytest.approx(5.8658785448216185e-04, rel=1e-12)

    def test_cesaro_abel_agree(self):
        res = example_current(0.5, 1.0, 1.0, 10**5)
        assert abs(res.cesaro - res.abel) <= res.error_estimate + 1e-15
        assert res.converged

    def test_theorem_matches_example(self):
        spec = DeltaPairCoupling(c=0.5, x1=1.0)
        a = theorem_current(spec, 2.0, 1.0, N_max=10**5)
        b = example_current(0.5, 1.0, 1.0, 10**5)
        assert a.value == pytest.approx(b.value, abs=a.error_estimate + b.error_estimate)

    def test_linearity_in_delta_T(self):
        a = example_current(0.5, 1.0, 3.0, 10**4)
        b = example_current(0.5, 1.0, 1.0, 10**4)
        assert a.value == pytest.approx(3.0 * b.value, rel=1e-12)

    @pytest.mark.parametrize("x1", [math.pi, math.pi / 2])
    def test_zeros_at_special_offsets(self, x1):
        res = theorem_current(DeltaPairCoupling(c=0.4, x1=x1), 2.0, 1.0, N_max=10**5)
        assert abs(res.value) <= res.error_estimate
        assert res.error_estimate <= 1e-6

    @given(x1=st.floats(min_value=0.3, max_value=3.0))
    def test_antisymmetry(self, x1):
        a = example_current(0.5, x1, 1.0, 2000)
        b = example_current(0.5, 2 * math.pi - x1, 1.0, 2000)
        assert a.value == pytest.approx(-b.value, rel=1e-10, abs=1e-14)

    def test_method_selection(self):
        con = example_current(0.5, 1.0, 1.0, 10**4)
        ces = example_current(0.5, 1.0, 1.0, 10**4, method="cesaro")
        abel = example_current(0.5, 1.0, 1.0, 10**4, method="abel")
        assert ces.value == con.cesaro
        assert abel.value == con.abel
        assert con.value == pytest.approx(0.5 * (con.cesaro + con.abel))

    def test_partial_sum_truncation(self):
        spec = DeltaPairCoupling(c=0.5, x1=1.0)
        direct = sum(theorem_term(spec, n, 2.0, 1.0) for n in range(1, 17))
        assert theorem_partial_sum(spec, 2.0, 1.0, 16) == pytest.approx(direct)

    def test_power_law_summable(self):
        res = theorem_current(PowerLawCoupling(theta=0.1, c=0.5, x1=1.0),
                              2.0, 1.0, N_max=10**4)
        assert math.isfinite(res.value)
        assert res.error_estimate > 0

    def test_error_estimate_positive_invariant(self):
        with pytest.raises(ValueError):
            SeriesResult(partial_sums=np.zeros(4), cesaro=0.0, abel=0.0,
                         value=0.0, error_estimate=0.0, n_used=4, converged=True)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            example_current(1.5, 1.0)
        with pytest.raises(ValueError):
            example_current(0.5, 7.0)
        with pytest.raises(ValueError):
            theorem_current(DeltaPairCoupling(c=0.5, x1=1.0), 2.0, 1.0, N_max=8)


class TestJumps:
    def test_jump_at_half_pi(self):
        rep = probe_jump(0.5, math.pi / 2, 1.0, 10**4)
        assert rep.is_jump
        assert rep.left_limit > 0 > rep.right_limit

    def test_continuous_away_from_jumps(self):
        """Successive one-sided refinements converge at an ordinary point."""
        deltas = [0.05 / 2**k for k in range(6)]
        vals = [example_current(0.5, 0.8 + d, 1.0, 10**4).value for d in deltas]
        diffs = [abs(vals[i + 1] - vals[i]) for i in range(len(vals) - 1)]
        assert diffs[-1] < diffs[0]
        assert diffs[-1] < 1e-4

    def test_scan_reports_both_candidates(self):
        rows, jumps = scan_example(0.5, np.linspace(1.0, 3.2, 12), N_max=2000)
        assert len(rows) == 12
        assert set(jumps) == {math.pi / 2, math.pi}
        assert all(r[2] > 0 for r in rows)

    def test_no_jump_at_pi(self):
        """C vanishes identically on both sides' limits at x1 = pi in the
        symmetric-contact case only through antisymmetry; the one-sided
        limits are genuinely opposite and nonzero, so the probe flags it."""
        rep = probe_jump(0.5, math.pi, 1.0, 10**4)
        assert rep.left_limit == pytest.approx(-rep.right_limit, rel=1e-6)
