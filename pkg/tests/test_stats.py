import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hirul.errors import DegenerateInput, OutOfDomain, ParamError, RankDeficient
from hirul.montecarlo import CSV_COLUMNS, CampaignTable
from hirul.stats import (
    FittedSurface, correlation_csv, correlation_table, evaluate, fit_arrays, fit_surface, monomial_exponents,
    p_value, pearson, student_t_cdf,
)

from oracles import pearson_by_hand, t_cdf_quadrature

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _fake_table(v_max, v_min, rul):
    n = len(rul)
    cols = {c: np.zeros(n) for c in CSV_COLUMNS}
    cols.update(scenario_id=np.arange(n), v_max=np.asarray(v_max, float), v_min=np.asarray(v_min, float),
                rul_hours=np.asarray(rul, float))
    return CampaignTable(cols)


class TestPearson:
    @pytest.mark.parametrize("y,expected", [(lambda x: 2 * x + 1, 1.0), (lambda x: -x, -1.0)])
    def test_perfect(self, y, expected):
        x = np.arange(10.0)
        assert pearson(x, y(x)) == pytest.approx(expected)

    def test_hand_example(self):
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    @pytest.mark.parametrize("x,y", [([1, 2], [3, 4]), ([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [1, 2])])
    def test_degenerate(self, x, y):
        with pytest.raises(DegenerateInput):
            pearson(x, y)

    @settings(max_examples=80, deadline=None)
    @given(data=st.lists(st.tuples(finite, finite), min_size=3, max_size=40), a=finite, b=finite)
    def test_properties(self, data, a, b):
        x = np.array([d[0] for d in data])
        y = np.array([d[1] for d in data])
        assume(np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3 and abs(a) > 1e-2)
        r = pearson(x, y)
        assert -1.0 <= r <= 1.0
        assert pearson(y, x) == pytest.approx(r, abs=1e-9)
        assert pearson(a * x + b, y) == pytest.approx(math.copysign(1, a) * r, abs=1e-6)
        assert r == pytest.approx(pearson_by_hand(list(x), list(y)), abs=1e-9)


class TestSignificance:
    @pytest.mark.parametrize("t", np.linspace(-4.5, 4.5, 20))
    def test_t_cdf_matches_quadrature(self, t):
        for df in (2, 7):
            assert student_t_cdf(t, df) == pytest.approx(t_cdf_quadrature(t, df), abs=1e-6)

    def test_null(self):
        for n in (3, 10, 500):
            assert p_value(0.0, n) == pytest.approx(1.0)

    def test_table_example(self):
        # df = 2 has the closed form p = 1 - |r|
        assert p_value(0.8, 4) == pytest.approx(0.2, abs=1e-12)

    @pytest.mark.parametrize("r,n", [(1.0, 10), (-1.0, 10), (0.5, 2)])
    def test_degenerate(self, r, n):
        with pytest.raises(DegenerateInput):
            p_value(r, n)

    def test_df_must_be_positive(self):
        with pytest.raises(ParamError):
            student_t_cdf(1.0, 0)

    @settings(max_examples=60, deadline=None)
    @given(r1=st.floats(0.01, 0.98), r2=st.floats(0.01, 0.98), n=st.integers(4, 400))
    def test_monotone(self, r1, r2, n):
        assume(abs(r1 - r2) > 1e-3)
        lo, hi = sorted((r1, r2))
        assert p_value(hi, n) < p_value(lo, n)
        assert p_value(-hi, n) == p_value(hi, n)
        assert p_value(lo, n + 5) < p_value(lo, n)


class TestCorrelationTable:
    def test_constant_row(self):
        t = _fake_table([3.5] * 5, [2.9, 3.0, 3.1, 3.0, 2.8], [10, 20, 30, 40, 50])
        with pytest.raises(DegenerateInput, match="v_max"):
            correlation_table(t)

    def test_needs_three(self):
        with pytest.raises(DegenerateInput):
            correlation_table(_fake_table([1, 2], [0, 1], [1, 2]))

    def test_rows(self):
        rng = np.random.default_rng(0)
        v_max = rng.uniform(3.4, 3.7, 50)
        v_min = rng.uniform(2.5, 3.2, 50)
        rul = 500 - 100 * v_max + 20 * v_min + rng.normal(0, 1, 50)
        reps = correlation_table(_fake_table(v_max, v_min, rul))
        assert [r.variable for r in reps] == ["v_max", "v_min", "delta_v"]
        assert reps[0].pearson_r < 0 < reps[1].pearson_r
        text = correlation_csv(reps, comment="x")
        assert text.splitlines()[:2] == ["# x", "variable,r,p,n"]


def _poly(x0, x1, degree, rng):
    exps = monomial_exponents(degree)
    c = rng.normal(size=len(exps))
    return sum(ci * x0**a * x1**b for ci, (a, b) in zip(c, exps))


class TestSurfaceFit:
    @pytest.mark.parametrize("degree", [0, 1, 2, 3, 4])
    def test_coefficient_count(self, degree):
        assert len(monomial_exponents(degree)) == (degree + 1) * (degree + 2) // 2

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_exact_recovery(self, degree):
        rng = np.random.default_rng(degree)
        x0, x1 = rng.uniform(2, 5, 200), rng.uniform(3.3, 3.7, 200)
        y = _poly(x0, x1, degree, rng)
        s = fit_arrays(x0, x1, y, degree)
        assert s.residual_rms < 1e-9
        assert evaluate(s, (x0[7], x1[7])) == pytest.approx(y[7], abs=1e-9)

    def test_degree_zero_is_mean(self):
        rng = np.random.default_rng(1)
        y = rng.normal(5, 1, 40)
        s = fit_arrays(rng.uniform(size=40), rng.uniform(size=40), y, 0)
        assert evaluate(s, (0.5, 0.5)) == pytest.approx(y.mean())
        assert evaluate(s, (0.1, 0.9)) == pytest.approx(y.mean())

    def test_residual_non_increasing_in_degree(self):
        rng = np.random.default_rng(2)
        x0, x1 = rng.uniform(0, 1, 300), rng.uniform(0, 1, 300)
        y = np.sin(3 * x0) * np.exp(x1) + rng.normal(0, 0.01, 300)
        rms = [fit_arrays(x0, x1, y, d).residual_rms for d in range(6)]
        assert all(b <= a + 1e-12 for a, b in zip(rms, rms[1:]))

    @pytest.mark.parametrize("n,degree", [(5, 2), (9, 3)])
    def test_too_few_samples(self, n, degree):
        with pytest.raises(RankDeficient):
            fit_arrays(np.arange(n), np.arange(n) ** 2, np.arange(n), degree)

    def test_collinear_inputs(self):
        x = np.linspace(0, 1, 50)
        with pytest.raises(RankDeficient):
            fit_arrays(x, 2 * x + 1, x, 2)

    def test_out_of_domain(self):
        rng = np.random.default_rng(3)
        s = fit_arrays(rng.uniform(0, 1, 30), rng.uniform(0, 1, 30), rng.normal(size=30), 1)
        with pytest.raises(OutOfDomain):
            evaluate(s, (1.5, 0.5))

    def test_json_round_trip(self):
        rng = np.random.default_rng(4)
        s = fit_arrays(rng.uniform(0, 1, 30), rng.uniform(0, 1, 30), rng.normal(size=30), 2, response="ln_rul")
        back = FittedSurface.from_json(s.to_json())
        assert back == s
        assert back.predict_rul([[0.5, 0.5]])[0] == pytest.approx(math.exp(evaluate(s, (0.5, 0.5))))

    @pytest.mark.parametrize("kw", [
        {"inputs": ("v_max", "v_max")},
        {"inputs": ("v_max", "soc")},
        {"response": "log_rul"},
    ])
    def test_bad_arguments(self, kw):
        t = _fake_table(np.linspace(3, 4, 10), np.linspace(2, 3, 10), np.arange(1, 11))
        with pytest.raises(ParamError):
            fit_surface(t, **kw)


@pytest.fixture(scope="module")
def surface(fig3):
    return fit_surface(fig3[0], ("v_max", "i_discharge"), "ln_rul", degree=2)


class TestCampaignSurface:
    """Quadratic ln-RUL fit over charge voltage and discharge current on the surface campaign."""

    def test_center_value(self, surface):
        (a, b), (c, d) = surface.domain
        assert 4.0 <= evaluate(surface, ((a + b) / 2, (c + d) / 2)) <= 7.0

    def test_predictions_at_samples(self, surface, fig3):
        table = fig3[0]
        y = surface.predict(np.column_stack([table["v_max"], table["i_discharge"]]))
        assert y.min() >= 4.0 and y.max() <= 7.0

    @pytest.mark.xfail(strict=True, reason="lowest-current corner of the bounding box extrapolates just above ln RUL = 7")
    def test_predictions_over_domain_box(self, surface):
        (a, b), (c, d) = surface.domain
        g = np.array([(x, y) for x in np.linspace(a, b, 25) for y in np.linspace(c, d, 25)])
        y = surface.predict(g)
        assert y.min() >= 4.0 and y.max() <= 7.0
