import itertools

import numpy as np
import pytest

from millforge.bits import ConfigError, Role, share_bits, split_chunks
from millforge.leaf import LeafResult
from millforge.merge import (baseline_merge_party, baseline_triples_needed, eval_poly_general, merge_baseline,
                             merge_plan, plain_merge, plain_poly, polymult_tami, tami_merge_party)
from millforge.reuse import ExponentMatrix, build_reuse_plan, comparison_merge_matrix, eval_matrix_plain
from millforge.session import Session
from millforge.tape import TapeSeed
from millforge.transport import open_session, run_parties


def _leaves(lt, eq, rng, sender_lt=None, sender_eq=None):
    lt = np.asarray(lt, np.uint8)
    eq = np.asarray(eq, np.uint8)
    ml = rng.integers(0, 2, lt.shape, dtype=np.uint8) if sender_lt is None else sender_lt
    me = rng.integers(0, 2, eq.shape, dtype=np.uint8) if sender_eq is None else sender_eq
    s_lt, r_lt = share_bits(lt, ml)
    s_eq, r_eq = share_bits(eq, me)
    return LeafResult(s_lt, s_eq), LeafResult(r_lt, r_eq)


def _assignments(n):
    rows = np.array(list(itertools.product((0, 1), repeat=2 * n - 1)), np.uint8)
    lt = rows[:, :n]
    eq = np.concatenate([np.zeros((len(rows), 1), np.uint8), rows[:, n:]], axis=1)
    return lt, eq


def _open(a, b):
    return a.bits ^ b.bits


def test_baseline_n8_rounds_and_bits():
    rng = np.random.default_rng(0)
    lt = rng.integers(0, 2, (1, 8), dtype=np.uint8)
    eq = rng.integers(0, 2, (1, 8), dtype=np.uint8)
    sess = Session(1)
    out = merge_baseline(sess, *_leaves(lt, eq, rng))
    assert _open(*out).tolist() == plain_merge(lt, eq).tolist()
    assert sess.stats.rounds == 3
    assert sess.stats.bits_s2r + sess.stats.bits_r2s == 56


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 7, 8, 9, 16])
def test_baseline_round_and_byte_laws(n):
    rng = np.random.default_rng(n)
    lt = rng.integers(0, 2, (300, n), dtype=np.uint8)
    eq = rng.integers(0, 2, (300, n), dtype=np.uint8)
    sess = Session(n)
    out = merge_baseline(sess, *_leaves(lt, eq, rng))
    assert np.array_equal(_open(*out), plain_merge(lt, eq))
    assert sess.stats.rounds == int(np.ceil(np.log2(n)))
    assert sess.stats.bits_s2r + sess.stats.bits_r2s == 300 * 8 * (n - 1)
    assert baseline_triples_needed(n) == 2 * (n - 1)


def test_baseline_insufficient_triples():
    sess = Session(0)
    tr = sess.sender_tape.beaver_triples((1, 3))
    s_ep, r_ep = open_session()
    gen = baseline_merge_party(s_ep, Role.SENDER, np.zeros((1, 4), np.uint8), np.zeros((1, 4), np.uint8), tr)
    with pytest.raises(ConfigError):
        next(gen)


def test_baseline_exhaustive_n4():
    lt, eq = _assignments(4)
    rng = np.random.default_rng(1)
    sess = Session(2)
    assert np.array_equal(_open(*merge_baseline(sess, *_leaves(lt, eq, rng))), plain_merge(lt, eq))


def test_tami_exhaustive_n4_64_seeds():
    lt, eq = _assignments(4)
    want = plain_merge(lt, eq)
    rng = np.random.default_rng(3)
    for k in range(64):
        sess = Session(TapeSeed.from_int(5, k))
        out = polymult_tami(sess, *_leaves(lt, eq, rng))
        assert np.array_equal(_open(*out), want)
        assert sess.stats.rounds == 1


def _tami_interleaved(sess, lt, eq, rng):
    count, n = lt.shape
    sb = sess.sender_tape.leaf_offline(n, 1, count)
    rb = sess.receiver_tape.leaf_offline(n, 1, count)
    s, r = _leaves(lt, eq, rng, sb.lt_share, sb.eq_share)
    return polymult_tami(sess, s, r, interleaved=True, s_bundle=sb, r_bundle=rb)


@pytest.mark.parametrize("n", [1, 2, 3, 6, 8, 16])
def test_tami_interleaved_halves_traffic(n):
    rng = np.random.default_rng(n)
    lt = rng.integers(0, 2, (400, n), dtype=np.uint8)
    eq = rng.integers(0, 2, (400, n), dtype=np.uint8)
    plain = Session(1)
    out = polymult_tami(plain, *_leaves(lt, eq, rng))
    assert np.array_equal(_open(*out), plain_merge(lt, eq))
    inter = Session(2)
    out = _tami_interleaved(inter, lt, eq, rng)
    assert np.array_equal(_open(*out), plain_merge(lt, eq))
    assert inter.stats.rounds == plain.stats.rounds == 1
    assert inter.stats.bits_s2r == 0 and inter.stats.bits_r2s == 400 * (2 * n - 1)
    assert 2 * inter.stats.total_bits == plain.stats.total_bits


def test_interleaved_requires_bundles():
    rng = np.random.default_rng(0)
    with pytest.raises(Exception):
        polymult_tami(Session(0), *_leaves(np.ones((1, 2)), np.ones((1, 2)), rng), interleaved=True)


@pytest.mark.parametrize("n", [2, 5, 11, 16])
def test_variants_agree_random(n):
    rng = np.random.default_rng(10 + n)
    lt = rng.integers(0, 2, (2000, n), dtype=np.uint8)
    eq = rng.integers(0, 2, (2000, n), dtype=np.uint8)
    leaves = _leaves(lt, eq, rng)
    a = _open(*merge_baseline(Session(1), *leaves))
    b = _open(*polymult_tami(Session(2), *leaves))
    assert np.array_equal(a, b)


def test_plan_mismatch_detected():
    rng = np.random.default_rng(0)
    other = build_reuse_plan(ExponentMatrix(((1, 0, 0), (0, 1, 0), (0, 0, 1))))
    with pytest.raises(ConfigError):
        polymult_tami(Session(0), *_leaves(np.ones((1, 2)), np.ones((1, 2)), rng), plan=other)
    sess = Session(1)
    short = sess.sender_tape.subset_product_shares(other, 1)
    gen = tami_merge_party(sess.sender_ep, Role.SENDER, np.ones((1, 2), np.uint8), np.ones((1, 2), np.uint8),
                           short, merge_plan(2), False)
    with pytest.raises(ConfigError, match="plan/tape mismatch"):
        gen.send(None)
        gen.send(np.zeros((1, 3), np.uint8))


def test_opened_bits_balanced():
    rng = np.random.default_rng(0)
    lt = np.tile([[1, 0, 1]], (10_000, 1)).astype(np.uint8)
    eq = np.tile([[0, 1, 1]], (10_000, 1)).astype(np.uint8)
    sess = Session(4)
    polymult_tami(sess, *_leaves(lt, eq, rng))
    for e in sess.transcript():
        bits = np.unpackbits(np.frombuffer(e.payload, np.uint8), count=e.nbits, bitorder="little")
        f = bits.reshape(10_000, -1).mean(axis=0)
        assert np.all((f > 0.45) & (f < 0.55))


def test_comparison_matrix_shapes():
    assert comparison_merge_matrix(1).rows == ((1,),)
    E = comparison_merge_matrix(3)
    assert (E.m, E.n) == (3, 5)
    act = {frozenset(j for j in range(5) if a >> j & 1) for a in E.active_sets()}
    # variables: lt_0..lt_2 are 0..2, eq_1, eq_2 are 3, 4
    assert act == {frozenset({2}), frozenset({1, 4}), frozenset({0, 3, 4})}


@pytest.mark.parametrize("n", range(1, 7))
def test_comparison_matrix_equals_integer_compare(n):
    q = 1
    side = np.arange(1 << n, dtype=np.uint64)
    y, x = (a.ravel() for a in np.meshgrid(side, side, indexing="ij"))
    yc, xc = split_chunks(y, q, n).chunks, split_chunks(x, q, n).chunks
    lt, eq = (yc < xc).astype(np.uint8), (yc == xc).astype(np.uint8)
    values = np.concatenate([lt, eq[:, 1:]], axis=1)
    got = eval_matrix_plain(comparison_merge_matrix(n), values)
    assert np.array_equal(got, (y < x).astype(np.uint8))


def test_pure_product_n3():
    E = ExponentMatrix(((1, 1, 1),))
    assert len(build_reuse_plan(E)) == 7
    rng = np.random.default_rng(0)
    secrets = np.array(list(itertools.product((0, 1), repeat=3)), np.uint8)
    x = rng.integers(0, 2, secrets.shape, dtype=np.uint8)
    s, r = eval_poly_general(Session(1), E, x, x ^ secrets)
    assert (s ^ r).tolist() == secrets.all(axis=1).astype(int).tolist()


def test_gf2_exponent_collapse():
    rng = np.random.default_rng(2)
    v = rng.integers(0, 2, (500, 3), dtype=np.uint8)
    x = rng.integers(0, 2, v.shape, dtype=np.uint8)
    a = eval_poly_general(Session(1), ExponentMatrix(((2, 0, 1),)), x, x ^ v)
    b = eval_poly_general(Session(2), ExponentMatrix(((1, 0, 1),)), x, x ^ v)
    assert np.array_equal(a[0] ^ a[1], b[0] ^ b[1])
    sess = Session(3)
    eval_poly_general(sess, ExponentMatrix(((1, 1, 0), (0, 1, 1))), x, x ^ v)
    assert sess.stats.rounds == 1


def test_ring_square():
    for seed in range(20):
        x = np.array([[seed * 7919 % 65536]], np.uint64)
        y = (np.uint64(3) - x) & np.uint64(0xFFFF)
        s, r = eval_poly_general(Session(seed), ExponentMatrix(((2,),)), x, y, ring_bits=16)
        assert (s + r) & np.uint64(0xFFFF) == 9


def test_ring_random_polynomials():
    rng = np.random.default_rng(5)
    m = np.uint64(0xFFFF)
    for case in range(100):
        n = int(rng.integers(1, 4))
        rows = int(rng.integers(1, 4))
        E = rng.integers(0, 3, (rows, n))
        E[E.sum(axis=1) == 0, 0] = 1
        E = ExponentMatrix.from_array(E)
        v = rng.integers(0, 1 << 16, (8, n), dtype=np.uint64)
        x = rng.integers(0, 1 << 16, (8, n), dtype=np.uint64)
        s, r = eval_poly_general(Session(case), E, x, (v - x) & m, ring_bits=16)
        assert np.array_equal((s + r) & m, plain_poly(E, v, 16))


def test_randomness_coverage_gap():
    sess = Session(0)
    E = ExponentMatrix(((1, 1, 1),))
    partial = [(0,), (1,), (2,)]
    rand = (sess.sender_tape.subset_product_shares(partial, 1), sess.receiver_tape.subset_product_shares(partial, 1))
    with pytest.raises(ConfigError, match="coverage gap"):
        eval_poly_general(sess, E, np.zeros((1, 3)), np.zeros((1, 3)), randomness=rand)
    E2 = ExponentMatrix(((2, 1),))
    rand = (sess.sender_tape.monomial_shares([(1, 0), (0, 1)], 2, 1, 16),
            sess.receiver_tape.monomial_shares([(1, 0), (0, 1)], 2, 1, 16))
    with pytest.raises(ConfigError, match="coverage gap"):
        eval_poly_general(sess, E2, np.zeros((1, 2)), np.zeros((1, 2)), ring_bits=16, randomness=rand)


def test_merge_plan_matches_reuse_count():
    assert len(merge_plan(3)) == 10
