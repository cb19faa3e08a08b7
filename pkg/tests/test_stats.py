from __future__ import annotations

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from a4l import stats

import oracles


class TestIncompleteBeta:
    def test_known_values(self):
        assert stats.regularized_incomplete_beta(0.5, 0.5, 0.5) == pytest.approx(0.5, abs=1e-12)
        for x in (0.0, 0.1, 0.37, 0.99, 1.0):
            assert stats.regularized_incomplete_beta(1.0, 1.0, x) == pytest.approx(x, abs=1e-12)
        # I_x(a, 1) = x^a
        assert stats.regularized_incomplete_beta(3.0, 1.0, 0.4) == pytest.approx(0.4**3, abs=1e-12)

    def test_symmetry_identity(self):
        for a, b, x in [(2.5, 4.0, 0.3), (10.0, 0.5, 0.8), (1.5, 1.5, 0.62)]:
            left = stats.regularized_incomplete_beta(a, b, x)
            right = 1.0 - stats.regularized_incomplete_beta(b, a, 1.0 - x)
            assert left == pytest.approx(right, abs=1e-12)

    def test_against_scipy_grid(self):
        for a in (0.5, 1.0, 2.5, 7.0, 25.0):
            for b in (0.5, 1.0, 3.3, 12.0):
                for x in (0.01, 0.2, 0.5, 0.8, 0.99):
                    ours = stats.regularized_incomplete_beta(a, b, x)
                    ref = float(scipy.special.betainc(a, b, x))
                    assert ours == pytest.approx(ref, abs=1e-11)


class TestStudentTailProbability:
    # Two-sided tail values pinned from standard t critical-value tables:
    # the alpha-level critical t satisfies P(|T| >= t) = alpha.
    @pytest.mark.parametrize("t,df,alpha", [
        (12.706, 1, 0.05),
        (4.303, 2, 0.05),
        (2.571, 5, 0.05),
        (2.228, 10, 0.05),
        (2.042, 30, 0.05),
        (1.812, 10, 0.10),
        (3.169, 10, 0.01),
        (2.750, 30, 0.01),
    ])
    def test_tabulated_critical_values(self, t, df, alpha):
        assert stats.student_t_sf2(t, df) == pytest.approx(alpha, abs=2e-4)

    def test_against_scipy(self):
        for t in (-4.0, -1.3, 0.0, 0.7, 2.9, 8.0):
            for df in (1.0, 3.7, 12.0, 199.0):
                ref = float(2.0 * scipy.stats.t.sf(abs(t), df))
                assert stats.student_t_sf2(t, df) == pytest.approx(ref, abs=1e-12)

    def test_infinite_t(self):
        assert stats.student_t_sf2(float("inf"), 10.0) == 0.0


class TestWelch:
    def test_matches_scipy_on_random_samples(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            a = rng.normal(0.0, 1.0, size=int(rng.integers(2, 40))).tolist()
            b = rng.normal(0.4, 1.7, size=int(rng.integers(2, 40))).tolist()
            try:
                ours = stats.welch_t_test(a, b)
            except stats.DegenerateSample:
                continue
            t_ref, p_ref = oracles.welch_oracle(a, b)
            assert ours.t == pytest.approx(t_ref, rel=1e-10)
            assert ours.p == pytest.approx(p_ref, rel=1e-9, abs=1e-12)

    def test_zero_variance_both_groups(self):
        with pytest.raises(stats.DegenerateSample):
            stats.welch_t_test([1.0, 1.0, 1.0], [0.0, 0.0])

    def test_too_small(self):
        with pytest.raises(stats.InsufficientData):
            stats.welch_t_test([1.0], [0.0, 1.0])

    def test_symmetric_samples_give_zero_t(self):
        r = stats.welch_t_test([1.0, 2.0, 3.0], [3.0, 2.0, 1.0])
        assert r.t == pytest.approx(0.0, abs=1e-12)
        assert r.p == pytest.approx(1.0, abs=1e-12)


class TestOls:
    def test_exact_collinear(self):
        fit = stats.ols_fit([0.0, 1.0, 2.0], [60.0, 70.0, 80.0])
        assert fit.slope == pytest.approx(10.0, abs=1e-12)
        assert fit.intercept == pytest.approx(60.0, abs=1e-12)

    def test_constant_scores(self):
        fit = stats.ols_fit([0.0, 1.0, 2.0], [70.0, 70.0, 70.0])
        assert fit.slope == pytest.approx(0.0, abs=1e-12)

    def test_against_lstsq_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            n = int(rng.integers(2, 50))
            xs = rng.uniform(0, 30, size=n)
            xs[1] = xs[0] + 1.0  # guarantee time variance
            ys = 3.0 * xs - 7.0 + rng.normal(0, 2, size=n)
            fit = stats.ols_fit(xs.tolist(), ys.tolist())
            slope_ref, intercept_ref = oracles.ols_oracle(xs, ys)
            assert fit.slope == pytest.approx(slope_ref, rel=1e-9, abs=1e-9)
            assert fit.intercept == pytest.approx(intercept_ref, rel=1e-9, abs=1e-9)

    def test_zero_time_variance(self):
        with pytest.raises(stats.DegenerateSample):
            stats.ols_fit([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


class TestPointBiserial:
    def test_perfect_separation(self):
        scores = [5.0] * 6 + [1.0] * 6
        flags = [1] * 6 + [0] * 6
        assert stats.point_biserial(scores, flags) == pytest.approx(1.0, abs=1e-12)

    def test_against_corrcoef_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(4, 80))
            flags = (rng.random(n) < 0.5).astype(int)
            if len(set(flags.tolist())) < 2:
                continue
            scores = rng.normal(4, 1, size=n) + 0.6 * flags
            ours = stats.point_biserial(scores.tolist(), flags.tolist())
            assert ours == pytest.approx(
                oracles.point_biserial_oracle(scores, flags), rel=1e-10, abs=1e-12
            )

    def test_single_class_flags(self):
        with pytest.raises(stats.DegenerateSample):
            stats.point_biserial([1.0, 2.0, 3.0], [1, 1, 1])

    def test_zero_score_variance(self):
        with pytest.raises(stats.DegenerateSample):
            stats.point_biserial([2.0, 2.0, 2.0], [1, 0, 1])

    @given(st.lists(st.floats(min_value=-100, max_value=100), min_size=4, max_size=60))
    @settings(max_examples=60)
    def test_bounded_in_unit_interval(self, scores):
        flags = [i % 2 for i in range(len(scores))]
        try:
            r = stats.point_biserial(scores, flags)
        except stats.DegenerateSample:
            return
        assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12
