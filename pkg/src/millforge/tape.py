"""Emulated trusted tape of correlated randomness.

Both parties derive a :class:`TeeTape` from the same :class:`TapeSeed`. The
two tapes compute identical values; each one only *emits* the values whose
visibility tag licenses its host. TEE-internal values (selection values,
hidden merge masks, triple plaintexts) are computed and dropped, or kept
inside the tape object when a later offline call needs them.

PRG: SHAKE-256 keyed by ``sha256(DOMAIN || master_seed || session_id)``.
Every draw is addressed by (stream label, per-stream draw index) and reads
``shake256(key || len(label) || label || index)``; values are little-endian.
The draw order of each offline call is part of the wire-stability contract
and is listed in that call's docstring.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import struct
from dataclasses import dataclass, field

import numpy as np

from .bits import ConfigError, MisuseError, Role, pack_bits, ring_mask, uints_to_bits

DOMAIN = b"millforge/tape/v1"


@dataclass(frozen=True)
class TapeSeed:
    master_seed: bytes
    session_id: int = 0

    def __post_init__(self):
        if len(self.master_seed) != 32:
            raise ConfigError("master seed must be 32 bytes")
        if not 0 <= self.session_id < 1 << 64:
            raise ConfigError("session id must fit in 64 bits")

    @classmethod
    def from_int(cls, seed: int, session_id: int = 0) -> "TapeSeed":
        master = hashlib.sha256(b"millforge/seed" + int(seed).to_bytes(16, "little", signed=True)).digest()
        return cls(master, session_id)

    def session(self, session_id: int) -> "TapeSeed":
        return TapeSeed(self.master_seed, session_id)


class SeedLedger:
    """Hands out fresh session ids; pads are one-time, so a (seed, session)
    pair must never back two protocol runs."""

    def __init__(self, seed: TapeSeed):
        self.seed = seed
        self._used: set[int] = set()
        self._next = seed.session_id

    def claim(self, session_id: int | None = None) -> TapeSeed:
        if session_id is None:
            while self._next in self._used:
                self._next += 1
            session_id = self._next
        if session_id in self._used:
            raise MisuseError(f"session id {session_id} already used with this seed")
        self._used.add(session_id)
        return self.seed.session(session_id)


class Visibility(enum.IntEnum):
    SENDER_HOST = 1
    RECEIVER_HOST = 2
    BOTH_HOSTS = 3
    TEE_INTERNAL = 4

    def licenses(self, role: Role) -> bool:
        if self is Visibility.BOTH_HOSTS:
            return True
        if self is Visibility.SENDER_HOST:
            return role is Role.SENDER
        if self is Visibility.RECEIVER_HOST:
            return role is Role.RECEIVER
        return False


@dataclass(frozen=True)
class TapeRecord:
    label: str
    index: int
    visibility: Visibility
    value: bytes

    def encode(self) -> bytes:
        label = self.label.encode()
        body = struct.pack("<H", len(label)) + label + struct.pack("<IB", self.index, int(self.visibility)) + self.value
        return struct.pack("<I", len(body)) + body

    @classmethod
    def decode(cls, buf: bytes, offset: int = 0) -> tuple["TapeRecord", int]:
        (size,) = struct.unpack_from("<I", buf, offset)
        body = buf[offset + 4: offset + 4 + size]
        if len(body) != size:
            raise ConfigError("truncated tape record")
        (llen,) = struct.unpack_from("<H", body, 0)
        label = body[2:2 + llen].decode()
        index, vis = struct.unpack_from("<IB", body, 2 + llen)
        return cls(label, index, Visibility(vis), bytes(body[2 + llen + 5:])), offset + 4 + size


def load_dump(buf: bytes) -> list[TapeRecord]:
    out, offset = [], 0
    while offset < len(buf):
        rec, offset = TapeRecord.decode(buf, offset)
        out.append(rec)
    return out


# -- host views -------------------------------------------------------------

@dataclass(frozen=True)
class LeafOffline:
    """One host's view of the trusted leaf-comparison preprocessing.

    Arrays carry shape (count, n, ...). Fields the host is not licensed to
    see are ``None``.
    """

    role: Role
    n: int
    q: int
    width: int
    link: int
    x: np.ndarray | None = None  # receiver: its comparison input (the mask)
    tmp: np.ndarray | None = None  # sender: x ^ c
    pads: np.ndarray | None = None  # sender: (count, n, 2^q, 2) lt/eq pads
    retained_pad: np.ndarray | None = None  # receiver: pads[..., c, :]
    lt_share: np.ndarray | None = None  # sender
    eq_share: np.ndarray | None = None  # sender
    release: np.ndarray | None = None  # receiver: sender merge shares ^ sender mask shares

    @property
    def count(self) -> int:
        arr = self.x if self.x is not None else self.tmp
        return arr.shape[0]

    def __len__(self):
        return self.n

    def bundle(self, j: int, item: int = 0) -> dict:
        """Per-chunk slice; keys are only the licensed fields."""
        out = {}
        for name in ("x", "tmp", "pads", "retained_pad", "lt_share", "eq_share"):
            arr = getattr(self, name)
            if arr is not None:
                out[name] = arr[item, j]
        if self.release is not None:
            out["release"] = (self.release[item, j],
                              self.release[item, self.n + j - 1] if j > 0 else None)
        return out


@dataclass(frozen=True)
class RotOffline:
    """Baseline preprocessing (stands in for OT extension): the receiver
    learns its selection value c, unlike the trusted variant."""

    role: Role
    n: int
    q: int
    c: np.ndarray | None = None
    pads: np.ndarray | None = None
    retained_pad: np.ndarray | None = None
    lt_share: np.ndarray | None = None
    eq_share: np.ndarray | None = None


@dataclass(frozen=True)
class SubsetProductShares:
    role: Role
    subsets: tuple  # bitmasks, plan order
    shares: np.ndarray  # (count, len(subsets)) bits

    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.subsets)}


@dataclass(frozen=True)
class BeaverTriples:
    role: Role
    ring_bits: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __len__(self):
        return self.a.shape[-1]


@dataclass(frozen=True)
class MonomialShares:
    """Additive shares of r^e for exponent vectors e over Z_{2^ring_bits}."""

    role: Role
    ring_bits: int
    monomials: tuple  # exponent tuples, column order of ``shares``
    shares: np.ndarray  # (count, len(monomials)) uint64

    def index(self) -> dict:
        return {m: i for i, m in enumerate(self.monomials)}


def _subset_masks(subsets) -> tuple:
    masks = []
    for s in subsets:
        if isinstance(s, (int, np.integer)):
            masks.append(int(s))
        else:
            m = 0
            for j in s:
                m |= 1 << int(j)
            masks.append(m)
    if any(m == 0 for m in masks):
        raise MisuseError("empty subset in plan")
    if len(set(masks)) != len(masks):
        raise MisuseError("duplicate subset in plan; each subset product must be drawn once")
    return tuple(masks)


def _subset_products(r: np.ndarray, subsets: tuple) -> np.ndarray:
    """(count, len(subsets)) ANDs of the r columns named by each mask.

    Level by level in subset size: a subset whose parent (itself minus its
    top element) was already computed costs one vectorized AND.
    """
    values = np.empty((r.shape[0], len(subsets)), dtype=np.uint8)
    where: dict[int, int] = {}
    levels: dict[int, list[int]] = {}
    for k, m in enumerate(subsets):
        levels.setdefault(m.bit_count(), []).append(k)
    for size in sorted(levels):
        ks = levels[size]
        tops = [subsets[k].bit_length() - 1 for k in ks]
        parents = [subsets[k] & ~(1 << t) for k, t in zip(ks, tops)]
        if size == 1:
            values[:, ks] = r[:, tops]
        else:
            fast = [i for i, p in enumerate(parents) if p in where]
            if fast:
                cols = [ks[i] for i in fast]
                values[:, cols] = values[:, [where[parents[i]] for i in fast]] & r[:, [tops[i] for i in fast]]
            for i in sorted(set(range(len(ks))) - set(fast)):
                m = subsets[ks[i]]
                values[:, ks[i]] = np.bitwise_and.reduce(r[:, [j for j in range(m.bit_length()) if m >> j & 1]],
                                                         axis=1)
        where.update((subsets[k], k) for k in ks)
    return values


class TeeTape:
    def __init__(self, seed: TapeSeed, role: Role, *, keep_records: bool = True):
        self.seed = seed
        self.role = role
        self.keep_records = keep_records
        self._key = hashlib.sha256(DOMAIN + seed.master_seed + seed.session_id.to_bytes(8, "little")).digest()
        self._cursor: dict[str, int] = {}
        self._masks: dict[int, np.ndarray] = {}
        self._links = itertools.count()
        self.records: list[TapeRecord] = []
        self._emit("session", 0, Visibility.BOTH_HOSTS, seed.session_id.to_bytes(8, "little"))

    # -- raw PRG --------------------------------------------------------

    def stream_bytes(self, label: str, index: int, nbytes: int) -> bytes:
        lab = label.encode()
        h = hashlib.shake_256(self._key + struct.pack("<H", len(lab)) + lab + struct.pack("<Q", index))
        return h.digest(nbytes)

    def _next(self, label: str) -> int:
        i = self._cursor.get(label, 0)
        self._cursor[label] = i + 1
        return i

    def _bits(self, label: str, shape) -> tuple[int, np.ndarray]:
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        count = int(np.prod(shape, dtype=np.int64))
        idx = self._next(label)
        raw = np.frombuffer(self.stream_bytes(label, idx, -(-count // 8)), dtype=np.uint8)
        return idx, np.unpackbits(raw, count=count, bitorder="little").reshape(shape)

    def _uints(self, label: str, shape, width: int) -> tuple[int, np.ndarray]:
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        count = int(np.prod(shape, dtype=np.int64))
        size = 1 if width <= 8 else 2 if width <= 16 else 4 if width <= 32 else 8
        idx = self._next(label)
        raw = self.stream_bytes(label, idx, count * size)
        vals = np.frombuffer(raw, dtype=f"<u{size}").astype(np.uint64).reshape(shape)
        return idx, vals & np.uint64(ring_mask(width))

    def _emit(self, label: str, index: int, vis: Visibility, value, width: int = 1):
        if not vis.licenses(self.role):
            return None
        if self.keep_records:
            if isinstance(value, bytes):
                payload = value
            elif width == 1:
                payload = pack_bits(value).tobytes()
            else:
                payload = pack_bits(uints_to_bits(value, width)).tobytes()
            self.records.append(TapeRecord(label, index, vis, payload))
        return value

    def _share_label(self, label: str) -> str:
        """Record label for this party's half of a two-party share; the two
        halves are distinct values drawn at the same stream position."""
        return f"{label}@{self.role.value}"

    def dump_view(self) -> bytes:
        return b"".join(r.encode() for r in self.records)

    def first_bytes(self, nbytes: int = 1024) -> bytes:
        return self.stream_bytes("leaf/pads", 0, nbytes)

    # -- offline bundles ------------------------------------------------

    def input_mask(self, count: int, width: int):
        """Receiver-side input mask M (ReceiverHost). Draw: input/mask."""
        idx, m = self._uints("input/mask", (count,), width)
        return self._emit("input/mask", idx, Visibility.RECEIVER_HOST, m, width)

    def leaf_offline(self, n: int, q: int, count: int = 1, *, width: int | None = None, mask=None) -> LeafOffline:
        """Trusted leaf preprocessing for ``count`` comparisons of n chunks.

        Draw order: leaf/x, leaf/c, leaf/pads, leaf/lt, leaf/eq, merge/mask,
        merge/mask-s. The last two are the hidden merge masks r and the
        sender's XOR share of them; the receiver gets the release
        (sender merge shares ^ sender mask shares).
        ``mask`` injects the receiver's chunked input in place of the leaf/x
        draw (the draw still happens, so later draws keep their positions).
        """
        width = n * q if width is None else width
        top = width - (n - 1) * q
        if not 1 <= top <= q:
            raise ConfigError(f"width {width} does not fit {n} chunks of {q} bits")
        ix, x = self._uints("leaf/x", (count, n), q)
        x = x.astype(np.uint8)
        x[:, -1] &= np.uint8(ring_mask(top))
        if mask is not None:
            x = np.asarray(getattr(mask, "chunks", mask), dtype=np.uint8).reshape(count, n)
            if np.any(x >> q) or np.any(x[:, -1] >> top):
                raise ConfigError("injected mask does not fit the chunk layout")
        ic, c = self._uints("leaf/c", (count, n), q)
        c = c.astype(np.uint8)
        ip, pads = self._bits("leaf/pads", (count, n, 1 << q, 2))
        il, lt_s = self._bits("leaf/lt", (count, n))
        ie, eq_s = self._bits("leaf/eq", (count, n))
        _, r = self._bits("merge/mask", (count, 2 * n - 1))
        ir, r_s = self._bits("merge/mask-s", (count, 2 * n - 1))
        link = next(self._links)
        self._masks[link] = (r, r_s)
        rows, cols = np.indices((count, n))
        retained = pads[rows, cols, c]
        release = np.concatenate([lt_s, eq_s[:, 1:]], axis=1) ^ r_s
        self._emit("leaf/link", link, Visibility.BOTH_HOSTS, link.to_bytes(4, "little"))
        S, R = Visibility.SENDER_HOST, Visibility.RECEIVER_HOST
        return LeafOffline(
            role=self.role, n=n, q=q, width=width, link=link,
            x=self._emit("leaf/x", ix, R, x, q),
            tmp=self._emit("leaf/tmp", ic, S, x ^ c, q),
            pads=self._emit("leaf/pads", ip, S, pads),
            retained_pad=self._emit("leaf/pad-selected", ip, R, retained),
            lt_share=self._emit("leaf/lt", il, S, lt_s),
            eq_share=self._emit("leaf/eq", ie, S, eq_s),
            release=self._emit("leaf/release", ir, R, release),
        )

    def rot_offline(self, n: int, q: int, count: int = 1) -> RotOffline:
        """Baseline 1-of-2^q random-OT pads plus the sender's local shares.

        Draw order: rot/c, rot/pads, rot/lt, rot/eq.
        """
        ic, c = self._uints("rot/c", (count, n), q)
        c = c.astype(np.uint8)
        ip, pads = self._bits("rot/pads", (count, n, 1 << q, 2))
        il, lt_s = self._bits("rot/lt", (count, n))
        ie, eq_s = self._bits("rot/eq", (count, n))
        rows, cols = np.indices((count, n))
        S, R = Visibility.SENDER_HOST, Visibility.RECEIVER_HOST
        return RotOffline(
            role=self.role, n=n, q=q,
            c=self._emit("rot/c", ic, R, c, q),
            pads=self._emit("rot/pads", ip, S, pads),
            retained_pad=self._emit("rot/pad-selected", ip, R, pads[rows, cols, c]),
            lt_share=self._emit("rot/lt", il, S, lt_s),
            eq_share=self._emit("rot/eq", ie, S, eq_s),
        )

    def subset_product_shares(self, plan, count: int = 1, *, link: int | None = None) -> SubsetProductShares:
        """XOR shares of AND_{j in S} r_j for every subset S of ``plan``.

        With ``link`` the hidden r_j are the merge masks drawn by that
        leaf_offline call and the sender's singleton shares are the ones
        its release was built from; otherwise a fresh merge/mask draw is
        made. Draw order: [merge/mask], merge/subset.
        """
        subsets = _subset_masks(getattr(plan, "subsets", plan))
        n_vars = max(subsets).bit_length()
        r_s = None
        if link is not None:
            try:
                r, r_s = self._masks.pop(link)
            except KeyError:
                raise MisuseError(f"no pending merge masks for link {link}") from None
            if r.shape[0] != count or r.shape[1] < n_vars:
                raise MisuseError(f"plan needs {n_vars} masks x {count}, link {link} holds {r.shape}")
        else:
            n_vars = getattr(plan, "n_vars", n_vars)
            _, r = self._bits("merge/mask", (count, n_vars))
        values = _subset_products(r, subsets)
        idx, sender = self._bits("merge/subset", (count, len(subsets)))
        if r_s is not None:
            single = [k for k, m in enumerate(subsets) if m & (m - 1) == 0]
            sender[:, single] = r_s[:, [subsets[k].bit_length() - 1 for k in single]]
        own = sender if self.role is Role.SENDER else sender ^ values
        vis = Visibility.SENDER_HOST if self.role is Role.SENDER else Visibility.RECEIVER_HOST
        return SubsetProductShares(self.role, subsets, self._emit(self._share_label("merge/subset"), idx, vis, own))

    def beaver_triples(self, count, ring_bits: int = 1) -> BeaverTriples:
        """``count`` (int or shape) multiplication triples over Z_{2^ring_bits};
        ring_bits=1 is GF(2). Draw order: triple/a, triple/b, triple/a_s,
        triple/b_s, triple/c_s."""
        shape = (count,) if isinstance(count, (int, np.integer)) else tuple(count)
        if ring_bits == 1:
            _, a = self._bits("triple/a", shape)
            _, b = self._bits("triple/b", shape)
            ia, a_s = self._bits("triple/a_s", shape)
            ib, b_s = self._bits("triple/b_s", shape)
            ic, c_s = self._bits("triple/c_s", shape)
            c = a & b
            other = (a ^ a_s, b ^ b_s, c ^ c_s)
        else:
            m = np.uint64(ring_mask(ring_bits))
            _, a = self._uints("triple/a", shape, ring_bits)
            _, b = self._uints("triple/b", shape, ring_bits)
            ia, a_s = self._uints("triple/a_s", shape, ring_bits)
            ib, b_s = self._uints("triple/b_s", shape, ring_bits)
            ic, c_s = self._uints("triple/c_s", shape, ring_bits)
            c = (a * b) & m
            other = ((a - a_s) & m, (b - b_s) & m, (c - c_s) & m)
        own = (a_s, b_s, c_s) if self.role is Role.SENDER else other
        vis = Visibility.SENDER_HOST if self.role is Role.SENDER else Visibility.RECEIVER_HOST
        return BeaverTriples(
            self.role, ring_bits,
            self._emit(self._share_label("triple/a_s"), ia, vis, own[0], ring_bits),
            self._emit(self._share_label("triple/b_s"), ib, vis, own[1], ring_bits),
            self._emit(self._share_label("triple/c_s"), ic, vis, own[2], ring_bits),
        )

    def monomial_shares(self, monomials, n_vars: int, count: int, ring_bits: int) -> MonomialShares:
        """Additive shares of prod_j r_j^{e_j} for each exponent tuple e.

        Draw order: mono/r, mono/share.
        """
        monomials = tuple(tuple(int(v) for v in e) for e in monomials)
        if len(set(monomials)) != len(monomials):
            raise MisuseError("duplicate monomial")
        if any(len(e) != n_vars or not any(e) for e in monomials):
            raise MisuseError("monomials must be nonzero exponent tuples over n_vars variables")
        m = np.uint64(ring_mask(ring_bits))
        _, r = self._uints("mono/r", (count, n_vars), ring_bits)
        values = np.ones((count, len(monomials)), dtype=np.uint64)
        for k, e in enumerate(monomials):
            for j, power in enumerate(e):
                for _ in range(power):
                    values[:, k] = (values[:, k] * r[:, j]) & m
        idx, sender = self._uints("mono/share", (count, len(monomials)), ring_bits)
        own = sender if self.role is Role.SENDER else (values - sender) & m
        vis = Visibility.SENDER_HOST if self.role is Role.SENDER else Visibility.RECEIVER_HOST
        return MonomialShares(self.role, ring_bits, monomials, self._emit(self._share_label("mono/share"), idx, vis, own, ring_bits))


def derive_tape(seed: TapeSeed, role: Role, **kwargs) -> TeeTape:
    return TeeTape(seed, role, **kwargs)


def derive_pair(seed: TapeSeed, **kwargs) -> tuple[TeeTape, TeeTape]:
    return derive_tape(seed, Role.SENDER, **kwargs), derive_tape(seed, Role.RECEIVER, **kwargs)
