from __future__ import annotations

from hypothesis import given, strategies as st

from pssim.lattice import (CEMETERY, Ball, SparseConfiguration, ball_offsets, ball_sites, ball_size, is_cemetery,
                           l1_norm, restrict, shell_offsets, shell_size)

sites = st.integers(1, 3).flatmap(lambda d: st.tuples(*[st.integers(-50, 50)] * d))


def test_ball_examples():
    assert ball_sites((0,), 0) == ((0,),)
    assert set(ball_sites((0, 0), 1)) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert ball_sites((3,), 2) == ((1,), (2,), (3,), (4,), (5,))


def test_ball_lexicographic():
    b = ball_sites((0, 0), 2)
    assert list(b) == sorted(b)


def test_sizes_match_enumeration():
    for d in (1, 2, 3):
        for k in range(0, 5):
            assert ball_size(d, k) == len(ball_offsets(d, k))
            assert shell_size(d, k) == len(shell_offsets(d, k))
            assert all(l1_norm(o) == k for o in shell_offsets(d, k))
    assert ball_size(1, -1) == 0
    assert ball_size(2, 3) == 25


@given(sites, st.integers(0, 4))
def test_ball_translation_invariant(center, k):
    assert len(ball_sites(center, k)) == ball_size(len(center), k)


@given(sites, st.integers(0, 4))
def test_balls_nested(center, k):
    assert set(ball_sites(center, k)) <= set(ball_sites(center, k + 1))


def test_ball_membership():
    b = Ball((1, 1), 2)
    assert (2, 2) in b and (3, 2) not in b
    assert len(b) == 13


def test_restrict_examples():
    cfg = SparseConfiguration({(0,): 1, (5,): -1}, default=0)
    assert restrict(cfg, Ball((0,), 1)) == {(-1,): 0, (0,): 1, (1,): 0}
    empty = SparseConfiguration(default=7)
    assert set(restrict(empty, Ball((4,), 2)).values()) == {7}


@given(st.dictionaries(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), st.sampled_from([-1, 1]), max_size=30),
       st.integers(0, 3), st.integers(0, 3))
def test_restrict_composition_and_idempotence(values, k1, k2):
    cfg = SparseConfiguration(values)
    small, big = sorted((k1, k2))
    direct = restrict(cfg, Ball((0, 0), small))
    assert restrict(restrict(cfg, Ball((0, 0), big)), Ball((0, 0), small)) == direct
    assert restrict(direct, Ball((0, 0), small)) == direct


def test_cemetery_default():
    cfg = SparseConfiguration()
    assert is_cemetery(cfg[(3,)])
    assert not is_cemetery(0.0)
    assert CEMETERY is CEMETERY
