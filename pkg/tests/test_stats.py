import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import t_quantile
from wbanzkp.stats import DomainError, beta, intervals_disjoint, mean_beta, student_t_quantile


@pytest.mark.parametrize("df", [1, 19, 199])
def test_quantile_matches_quadrature_oracle(df):
    assert student_t_quantile(0.05, df) == pytest.approx(t_quantile(0.05, df), abs=5e-4)


@pytest.mark.parametrize("df,expected", [(1, 12.706), (4, 2.776), (19, 2.093), (199, 1.972)])
def test_quantile_table_values(df, expected):
    assert round(student_t_quantile(0.05, df), 3) == expected


def test_infinite_df_is_the_normal_quantile():
    assert round(student_t_quantile(0.05, math.inf), 3) == 1.960


@given(df=st.integers(1, 500))
def test_quantile_decreases_with_df(df):
    assert student_t_quantile(0.05, df) > student_t_quantile(0.05, df + 1) > 1.959


@given(p=st.floats(0.001, 0.5), df=st.integers(1, 100))
def test_quantile_decreases_with_p(p, df):
    assert student_t_quantile(p, df) > student_t_quantile(min(0.99, p * 1.5), df)


@pytest.mark.parametrize("p,df", [(0, 5), (1, 5), (-0.1, 5), (0.05, 0), (0.05, math.nan)])
def test_domain_errors(p, df):
    with pytest.raises(DomainError):
        student_t_quantile(p, df)


def test_beta_hand_fixture():
    # mean 3, S = sqrt(2.5), t(0.05, 4) = 2.7764, R = 5
    assert beta([1, 2, 3, 4, 5]) == pytest.approx(2.7764451 * math.sqrt(2.5) / math.sqrt(5), abs=1e-6)
    assert round(beta([1, 2, 3, 4, 5]), 4) == 1.9632


def test_beta_needs_two_samples():
    with pytest.raises(DomainError):
        beta([4.0])


@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(2, 50))
def test_constant_samples_have_zero_width(value, n):
    assert beta([value] * n) == 0.0


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=40), st.randoms())
def test_beta_ignores_order(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert mean_beta(ys)[1] == pytest.approx(mean_beta(xs)[1], rel=1e-9, abs=1e-9)


def test_interval_disjointness():
    assert intervals_disjoint((1.0, 0.4), (2.0, 0.5))
    assert not intervals_disjoint((1.0, 0.6), (2.0, 0.5))
    assert intervals_disjoint((5.0, 0.1), (1.0, 0.1))
