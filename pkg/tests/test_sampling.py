import math

import numpy as np
from hypothesis import given, strategies as st

from rampage.sampling import AntitheticDraw, RandomStream, draw_antithetic, draw_uniform, empirical_moments


def test_streams_reproducible():
    a = [draw_uniform(RandomStream(42, 7)) for _ in range(1)]
    b = [draw_uniform(RandomStream(42, 7)) for _ in range(1)]
    assert a == b
    s1 = RandomStream(42, 7)
    s2 = RandomStream(42, 7)
    assert np.array_equal(s1.uniform(100), s2.uniform(100))


def test_single_draws_match_chunked_draws():
    singles = RandomStream(9, 3)
    chunked = RandomStream(9, 3)
    one_by_one = np.array([draw_uniform(singles) for _ in range(64)])
    assert np.array_equal(one_by_one, chunked.uniform(64))


def test_distinct_stream_ids_uncorrelated():
    n = 100_000
    a = RandomStream(5, 0).uniform(n)
    b = RandomStream(5, 1).uniform(n)
    assert not np.array_equal(a, b)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.01


def test_substreams_disjoint_and_consumption_independent():
    root = RandomStream(17, 4)
    sub_before = root.substream(0).uniform(8)
    root.uniform(1000)  # consuming the root must not move the substream
    sub_after = RandomStream(17, 4).substream(0).uniform(8)
    assert np.array_equal(sub_before, sub_after)
    assert not np.array_equal(root.substream(0).uniform(8), root.substream(1).uniform(8))


def test_uniform_mean_within_four_se():
    n = 1_000_000
    u = RandomStream(2).uniform(n)
    se = (1.0 / math.sqrt(12.0)) / math.sqrt(n)
    assert abs(u.mean() - 0.5) < 4 * se


@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
def test_antithetic_complement_exact(u):
    d = AntitheticDraw(u, 1.0 - u)
    assert d.u + d.u_tilde == 1.0


def test_draw_antithetic_consumes_one_draw():
    s = RandomStream(3, 1)
    d = draw_antithetic(s)
    assert d.u + d.u_tilde == 1.0
    expected_next = RandomStream(3, 1).uniform(2)[1]
    assert draw_uniform(s) == expected_next


def test_antithetic_covariance():
    # Cov(U, 1 - U) = -Var(U) = -1/12
    n = 100_000
    u = RandomStream(8).uniform(n)
    cov = np.cov(u, 1.0 - u, ddof=1)[0, 1]
    se = 4.0 / math.sqrt(n) * (1.0 / 12.0)  # crude but generous scale for 4 SE
    assert abs(cov + 1.0 / 12.0) < se


def test_empirical_moments_match_uniform():
    m1, m2, m3 = empirical_moments(RandomStream(3), 1_000_000)
    n = 1_000_000
    # exact standard deviations of u, u^2, u^3 over Unif[0,1]
    sd1 = math.sqrt(1.0 / 12.0)
    sd2 = math.sqrt(1.0 / 5.0 - 1.0 / 9.0)
    sd3 = math.sqrt(1.0 / 7.0 - 1.0 / 16.0)
    assert abs(m1 - 0.5) < 4 * sd1 / math.sqrt(n)
    assert abs(m2 - 1.0 / 3.0) < 4 * sd2 / math.sqrt(n)
    assert abs(m3 - 0.25) < 4 * sd3 / math.sqrt(n)
