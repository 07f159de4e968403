"""Tree merge: combine per-chunk (lt, eq) shares into one comparison bit.

Baseline: pairwise merges (lt, eq) <- (lt_hi ^ eq_hi & lt_lo, eq_hi & eq_lo)
evaluated level by level with GF(2) Beaver triples, one round per level.

Trusted variant: each merge variable v is opened once as d_v = v ^ r_v and
every row prod_{v in A} v = prod (d_v ^ r_v) is expanded locally using
shares of the subset products of the r_v. With ``interleaved`` only the
receiver sends; the sender's half of each opening comes from the tape.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

from .bits import BitShareVector, ConfigError, MisuseError, Role, ring_mask
from .reuse import ExponentMatrix, ReusePlan, _submasks, build_reuse_plan, comparison_merge_matrix
from .transport import Tag


def baseline_triples_needed(n: int) -> int:
    return 2 * (n - 1)


def baseline_offline_bits(n: int, lam: int = 128) -> int:
    """Synthetic IKNP-row offline cost, 8(n-1)(lambda+1) bits."""
    return 8 * (n - 1) * (lam + 1)


def baseline_merge_rounds(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


# -- packed evaluation -----------------------------------------------------

def _pack_columns(bits) -> np.ndarray:
    """(count, k) bits -> (k, words) uint64, batch axis packed 64 per word."""
    bits = np.asarray(bits, dtype=np.uint8)
    packed = np.packbits(np.ascontiguousarray(bits.T), axis=1, bitorder="little")
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    return np.ascontiguousarray(packed).view("<u8")


def _unpack_column(words, count: int) -> np.ndarray:
    return np.unpackbits(np.ascontiguousarray(words).view(np.uint8), count=count, bitorder="little")


_BLOCK_ELEMENTS = 1 << 21


def _split_table(active: int):
    """Submasks U of ``active`` in ascending order with, per size level,
    (positions, parent positions, top bits) so prod_{U} d builds from
    prod_{U minus top}."""
    subs = [0] + sorted(_submasks(active))
    pos = {u: i for i, u in enumerate(subs)}
    levels: dict[int, tuple[list, list, list]] = {}
    for i, u in enumerate(subs[1:], start=1):
        top = u.bit_length() - 1
        lv = levels.setdefault(u.bit_count(), ([], [], []))
        lv[0].append(i)
        lv[1].append(pos[u & ~(1 << top)])
        lv[2].append(top)
    return subs, [tuple(np.array(a) for a in levels[k]) for k in sorted(levels)]


def local_share(d, plan: ReusePlan, shares, subsets, add_public: bool) -> np.ndarray:
    """One party's share of XOR_rows AND_{v in A} v given public openings d.

    For each row the product expands to XOR over splits A = U + S of
    prod_{U} d_v * <prod_{S} r_v>; the all-opened split (S empty) is public
    and added only when ``add_public`` is set. Batch items are packed 64 per
    word; each row is evaluated for all its splits at once.
    """
    count = d.shape[0]
    dp = _pack_columns(d)
    sp = _pack_columns(shares)
    where = {s: i for i, s in enumerate(subsets)}
    words = dp.shape[1]
    acc = np.zeros(words, dtype=np.uint64)
    for active, _ in plan.rows:
        subs, levels = _split_table(active)
        try:
            rest = np.array([where[active ^ u] for u in subs[:-1]], dtype=np.int64)
        except KeyError:
            raise ConfigError("missing subset share: plan/tape mismatch") from None
        block = max(1, _BLOCK_ELEMENTS // len(subs))
        for w0 in range(0, words, block):
            w1 = min(words, w0 + block)
            prod = np.empty((len(subs), w1 - w0), dtype=np.uint64)
            prod[0] = np.uint64(ring_mask(64))
            for idx, parent, top in levels:
                prod[idx] = prod[parent] & dp[top, w0:w1]
            part = np.bitwise_xor.reduce(prod[:-1] & sp[rest, w0:w1], axis=0)
            if add_public:
                part ^= prod[-1]
            acc[w0:w1] ^= part
    return _unpack_column(acc, count)


# -- party routines --------------------------------------------------------

def baseline_merge_party(ep, role: Role, lt, eq, triples):
    """Level-by-level merge of adjacent chunk pairs; an odd top chunk is
    carried to the next level untouched (the merge operator is associative)."""
    count, n = lt.shape
    if len(triples) < baseline_triples_needed(n):
        raise ConfigError(f"insufficient triples: need {baseline_triples_needed(n)}, have {len(triples)}")
    used = 0
    while lt.shape[1] > 1:
        h = lt.shape[1] // 2
        carry_lt, carry_eq = lt[:, 2 * h:], eq[:, 2 * h:]
        hi_eq = eq[:, 1:2 * h:2]
        x = np.concatenate([hi_eq, hi_eq], axis=1)
        y = np.concatenate([lt[:, 0:2 * h:2], eq[:, 0:2 * h:2]], axis=1)
        k = 2 * h
        a = triples.a[:, used:used + k]
        b = triples.b[:, used:used + k]
        c = triples.c[:, used:used + k]
        used += k
        d_own, e_own = x ^ a, y ^ b
        ep.send_bits(Tag.MERGE_OPEN_BASE, np.concatenate([d_own, e_own], axis=1))
        other = yield ep.recv_bits(Tag.MERGE_OPEN_BASE, (count, 2 * k))
        d, e = d_own ^ other[:, :k], e_own ^ other[:, k:]
        z = c ^ (d & b) ^ (e & a)
        if role is Role.SENDER:
            z ^= d & e
        lt = np.concatenate([lt[:, 1:2 * h:2] ^ z[:, :h], carry_lt], axis=1)
        eq = np.concatenate([z[:, h:], carry_eq], axis=1)
    return lt[:, 0]


def tami_merge_party(ep, role: Role, lt, eq, sps, plan: ReusePlan, interleaved: bool, release=None):
    v = np.concatenate([lt, eq[:, 1:]], axis=1)
    count, n_vars = v.shape
    where = sps.index()
    try:
        r_own = sps.shares[:, [where[1 << j] for j in range(n_vars)]]
    except KeyError:
        raise ConfigError("subset shares lack a singleton mask: plan/tape mismatch") from None
    masked = v ^ r_own
    if not interleaved:
        ep.send_bits(Tag.MERGE_OPEN_TAMI, masked)
        other = yield ep.recv_bits(Tag.MERGE_OPEN_TAMI, (count, n_vars))
        d = masked ^ other
    elif role is Role.RECEIVER:
        if release is None:
            raise MisuseError("interleaved merge needs the tape release of the sender's masked shares")
        ep.send_bits(Tag.MERGE_OPEN_TAMI, masked)
        d = masked ^ release
    else:
        other = yield ep.recv_bits(Tag.MERGE_OPEN_TAMI, (count, n_vars))
        d = masked ^ other
    return local_share(d, plan, sps.shares, sps.subsets, role is Role.SENDER)


# -- two-party drivers -----------------------------------------------------

def _leaf_bits(leaf):
    lt = np.atleast_2d(leaf.lt.bits)
    eq = np.atleast_2d(leaf.eq.bits)
    return lt, eq


def merge_baseline(session, s_leaf, r_leaf):
    s_lt, s_eq = _leaf_bits(s_leaf)
    r_lt, r_eq = _leaf_bits(r_leaf)
    count, n = s_lt.shape
    need = (count, baseline_triples_needed(n))
    s_tr = session.sender_tape.beaver_triples(need)
    r_tr = session.receiver_tape.beaver_triples(need)
    s_out, r_out = session.run(baseline_merge_party(session.sender_ep, Role.SENDER, s_lt, s_eq, s_tr),
                               baseline_merge_party(session.receiver_ep, Role.RECEIVER, r_lt, r_eq, r_tr))
    return BitShareVector.from_bits(s_out, Role.SENDER), BitShareVector.from_bits(r_out, Role.RECEIVER)


@functools.lru_cache(maxsize=64)
def merge_plan(n: int) -> ReusePlan:
    return build_reuse_plan(comparison_merge_matrix(n))


def polymult_tami(session, s_leaf, r_leaf, *, interleaved: bool = False, s_bundle=None, r_bundle=None,
                  plan: ReusePlan | None = None):
    """One-round merge. Pass the leaf bundles to tie the merge masks to the
    leaf preprocessing (required for ``interleaved``)."""
    s_lt, s_eq = _leaf_bits(s_leaf)
    r_lt, r_eq = _leaf_bits(r_leaf)
    count, n = s_lt.shape
    if plan is None:
        plan = merge_plan(n)
    elif [a for a, _ in plan.rows] != comparison_merge_matrix(n).active_sets():
        raise ConfigError(f"plan does not describe the {n}-chunk comparison merge")
    if interleaved and (s_bundle is None or r_bundle is None):
        raise MisuseError("interleaved merge requires the trusted leaf bundles")
    s_link = s_bundle.link if s_bundle is not None else None
    r_link = r_bundle.link if r_bundle is not None else None
    s_sps = session.sender_tape.subset_product_shares(plan, count, link=s_link)
    r_sps = session.receiver_tape.subset_product_shares(plan, count, link=r_link)
    release = r_bundle.release if r_bundle is not None else None
    s_out, r_out = session.run(
        tami_merge_party(session.sender_ep, Role.SENDER, s_lt, s_eq, s_sps, plan, interleaved),
        tami_merge_party(session.receiver_ep, Role.RECEIVER, r_lt, r_eq, r_sps, plan, interleaved, release),
    )
    return BitShareVector.from_bits(s_out, Role.SENDER), BitShareVector.from_bits(r_out, Role.RECEIVER)


def plain_merge(lt, eq) -> np.ndarray:
    """Plaintext reference: XOR_i lt_i AND_{j>i} eq_j."""
    lt = np.atleast_2d(np.asarray(lt, dtype=np.uint8))
    eq = np.atleast_2d(np.asarray(eq, dtype=np.uint8))
    n = lt.shape[1]
    out = np.zeros(lt.shape[0], dtype=np.uint8)
    for i in range(n):
        out ^= lt[:, i] & np.bitwise_and.reduce(eq[:, i + 1:], axis=1) if i + 1 < n else lt[:, i]
    return out


# -- general polynomial ----------------------------------------------------

def required_monomials(E: ExponentMatrix) -> list[tuple]:
    """Distinct nonzero exponent vectors e <= row (componentwise), plus the
    unit vectors of every used column (needed for the opening)."""
    seen = set()
    for row in E.rows:
        seen.update(itertools.product(*(range(v + 1) for v in row)))
    used = [j for j in range(E.n) if any(r[j] for r in E.rows)]
    for j in used:
        seen.add(tuple(1 if k == j else 0 for k in range(E.n)))
    seen.discard((0,) * E.n)
    return sorted(seen, key=lambda e: (sum(e), e))


def poly_arith_party(ep, role: Role, E: ExponentMatrix, x_own, mono, ring_bits: int):
    m = np.uint64(ring_mask(ring_bits))
    where = mono.index()
    need = required_monomials(E)
    missing = [e for e in need if e not in where]
    if missing:
        raise ConfigError(f"randomness coverage gap: {len(missing)} monomials missing, e.g. {missing[0]}")
    count = x_own.shape[0]
    used = [j for j in range(E.n) if any(r[j] for r in E.rows)]
    unit = [where[tuple(1 if k == j else 0 for k in range(E.n))] for j in used]
    masked = (x_own[:, used] - mono.shares[:, unit]) & m
    ep.send_uints(Tag.POLY_OPEN, masked, ring_bits)
    other = yield ep.recv_uints(Tag.POLY_OPEN, (count, len(used)), ring_bits)
    d = np.zeros((count, E.n), dtype=np.uint64)
    d[:, used] = (masked + other) & m
    acc = np.zeros(count, dtype=np.uint64)
    for row in E.rows:
        for k in itertools.product(*(range(v + 1) for v in row)):
            coeff = 1
            term = np.ones(count, dtype=np.uint64)
            for j, (e, kj) in enumerate(zip(row, k)):
                coeff *= math.comb(e, kj)
                for _ in range(e - kj):
                    term = (term * d[:, j]) & m
            term = (term * np.uint64(coeff & ring_mask(ring_bits))) & m
            if any(k):
                acc = (acc + term * mono.shares[:, where[k]]) & m
            elif role is Role.SENDER:
                acc = (acc + term) & m
    return acc


def poly_bool_party(ep, role: Role, plan: ReusePlan, x_own, sps):
    count, n = x_own.shape
    where = sps.index()
    cols = [j for j in range(n) if any(a >> j & 1 for a, _ in plan.rows)]
    r_own = sps.shares[:, [where[1 << j] for j in cols]]
    masked = x_own[:, cols] ^ r_own
    ep.send_bits(Tag.POLY_OPEN, masked)
    other = yield ep.recv_bits(Tag.POLY_OPEN, (count, len(cols)))
    d = np.zeros((count, n), dtype=np.uint8)
    d[:, cols] = masked ^ other
    return local_share(d, plan, sps.shares, sps.subsets, role is Role.SENDER)


def eval_poly_general(session, E: ExponentMatrix, x_shares, y_shares, ring_bits: int = 1, randomness=None):
    """Shares of sum_i prod_j (x_j + y_j)^{E_ij} in one round.

    ``x_shares`` are the sender's, ``y_shares`` the receiver's, shape
    (count, n). ring_bits=1 is GF(2), where exponents collapse to 0/1.
    ``randomness`` optionally supplies the (sender, receiver) offline views.
    """
    x = np.atleast_2d(np.asarray(x_shares, dtype=np.uint64))
    y = np.atleast_2d(np.asarray(y_shares, dtype=np.uint64))
    if x.shape != y.shape or x.shape[1] != E.n:
        raise ConfigError(f"share shapes {x.shape}/{y.shape} do not match {E.n} columns")
    count = x.shape[0]
    if ring_bits == 1:
        plan = build_reuse_plan(E)
        if randomness is None:
            randomness = (session.sender_tape.subset_product_shares(plan, count),
                          session.receiver_tape.subset_product_shares(plan, count))
        for view in randomness:
            missing = set(plan.subsets) - set(view.subsets)
            if missing:
                raise ConfigError(f"randomness coverage gap: {len(missing)} subset products missing")
        s_rand, r_rand = randomness
        return session.run(
            poly_bool_party(session.sender_ep, Role.SENDER, plan, x.astype(np.uint8) & 1, s_rand),
            poly_bool_party(session.receiver_ep, Role.RECEIVER, plan, y.astype(np.uint8) & 1, r_rand),
        )
    if randomness is None:
        need = required_monomials(E)
        randomness = (session.sender_tape.monomial_shares(need, E.n, count, ring_bits),
                      session.receiver_tape.monomial_shares(need, E.n, count, ring_bits))
    s_rand, r_rand = randomness
    return session.run(
        poly_arith_party(session.sender_ep, Role.SENDER, E, x, s_rand, ring_bits),
        poly_arith_party(session.receiver_ep, Role.RECEIVER, E, y, r_rand, ring_bits),
    )


def plain_poly(E: ExponentMatrix, values, ring_bits: int) -> np.ndarray:
    """Direct evaluation of sum_i prod_j v_j^{E_ij} (mod 2^ring_bits; XOR/AND for GF(2))."""
    v = np.atleast_2d(np.asarray(values, dtype=object))
    out = []
    for item in v:
        if ring_bits == 1:
            total = 0
            for row in E.rows:
                total ^= int(all(int(item[j]) & 1 for j, e in enumerate(row) if e))
        else:
            total = sum(math.prod(int(item[j]) ** e for j, e in enumerate(row)) for row in E.rows)
            total %= 1 << ring_bits
        out.append(total)
    return np.array(out, dtype=np.uint64)
