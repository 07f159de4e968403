"""Instrumented in-process duplex channel.

Party routines are generators. They send directly through their endpoint
and receive by yielding a request::

    def receiver(ep):
        ep.send_bits(Tag.LEAF_TMP, tmp_bits)
        msgs = yield ep.recv_bits(Tag.LEAF_MSGS, shape)
        ...

A scheduler (threads, or the single-threaded lock-step loop) drives both
generators and feeds each yielded request with the next inbound frame.

Rounds are causal depth: a frame sent after receiving frames of depth at
most ``d`` has depth ``d + 1``, and ``rounds`` is the maximum depth seen.
Frames sent in both directions before either side replies share a depth,
so a simultaneous exchange is one round and a ping-pong of k exchanges is
2k. Depth depends only on program order, never on thread timing.
"""

from __future__ import annotations

import collections
import enum
import struct
import threading
from dataclasses import dataclass, field, asdict

import numpy as np

from .bits import Role, pack_bits, unpack_bits, uints_to_bits, bits_to_uints


class ProtocolError(RuntimeError):
    pass


class Tag(enum.IntEnum):
    DATA = 0x01
    LEAF_TMP = 0x10
    LEAF_MSGS = 0x11
    MERGE_OPEN_BASE = 0x20
    MERGE_OPEN_TAMI = 0x21
    POLY_OPEN = 0x22
    MUX_OPEN = 0x30


class Direction(enum.IntEnum):
    S2R = 0
    R2S = 1

    @classmethod
    def from_sender(cls, role: Role) -> "Direction":
        return cls.S2R if role is Role.SENDER else cls.R2S


_HEADER = struct.Struct("<BI")


@dataclass(frozen=True)
class Frame:
    tag: Tag
    payload: bytes

    def encode(self) -> bytes:
        return _HEADER.pack(int(self.tag), len(self.payload)) + self.payload

    @classmethod
    def decode(cls, buf: bytes, offset: int = 0) -> tuple["Frame", int]:
        if len(buf) - offset < _HEADER.size:
            raise ProtocolError("truncated frame header")
        raw_tag, length = _HEADER.unpack_from(buf, offset)
        try:
            tag = Tag(raw_tag)
        except ValueError:
            raise ProtocolError(f"unknown frame tag 0x{raw_tag:02x}") from None
        start = offset + _HEADER.size
        if len(buf) - start < length:
            raise ProtocolError(f"frame declares {length} bytes, {len(buf) - start} available")
        return cls(tag, bytes(buf[start:start + length])), start + length


@dataclass
class ChannelStats:
    rounds: int = 0
    bytes_s2r: int = 0
    bytes_r2s: int = 0
    bits_s2r: int = 0
    bits_r2s: int = 0
    messages: int = 0

    @property
    def total_bytes(self) -> int:
        return self.bytes_s2r + self.bytes_r2s

    @property
    def total_bits(self) -> int:
        return self.bits_s2r + self.bits_r2s

    def copy(self) -> "ChannelStats":
        return ChannelStats(**asdict(self))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TranscriptEntry:
    round: int
    direction: Direction
    seq: int
    tag: Tag
    payload: bytes
    nbits: int


@dataclass(frozen=True)
class Recv:
    """Receive request yielded by a party routine."""

    tag: Tag
    decode: object = None

    def finish(self, payload: bytes):
        return self.decode(payload) if self.decode is not None else payload


class Channel:
    """Shared state between two endpoints."""

    def __init__(self):
        self.stats = ChannelStats()
        self._cond = threading.Condition()
        self._queues = {Direction.S2R: collections.deque(), Direction.R2S: collections.deque()}
        self._seq = {Direction.S2R: 0, Direction.R2S: 0}
        self._entries: list[TranscriptEntry] = []
        self._waiting: set[Role] = set()
        self._done: set[Role] = set()
        self._failed: BaseException | None = None

    def _post(self, direction: Direction, depth: int, tag: Tag, payload: bytes, nbits: int):
        with self._cond:
            s = self.stats
            s.rounds = max(s.rounds, depth)
            s.messages += 1
            if direction is Direction.S2R:
                s.bytes_s2r += len(payload)
                s.bits_s2r += nbits
            else:
                s.bytes_r2s += len(payload)
                s.bits_r2s += nbits
            seq = self._seq[direction]
            self._seq[direction] = seq + 1
            self._entries.append(TranscriptEntry(depth, direction, seq, tag, payload, nbits))
            self._queues[direction].append((depth, Frame(tag, payload)))
            self._cond.notify_all()

    def _available(self, role: Role) -> bool:
        return bool(self._queues[Direction.from_sender(role.other)])

    def _pop(self, role: Role, tag: Tag):
        depth, frame = self._queues[Direction.from_sender(role.other)].popleft()
        if frame.tag != tag:
            raise ProtocolError(f"{role.value} expected {tag.name}, got {frame.tag.name}")
        return depth, frame

    def _take_blocking(self, role: Role, tag: Tag):
        with self._cond:
            while not self._available(role):
                if self._failed is not None:
                    raise ProtocolError("peer failed") from self._failed
                other = role.other
                if other in self._done or (other in self._waiting and not self._available(other)):
                    raise ProtocolError(f"deadlock: {role.value} waits for {tag.name} that never comes")
                self._waiting.add(role)
                self._cond.wait(timeout=0.5)
                self._waiting.discard(role)
            return self._pop(role, tag)

    def _mark(self, role: Role, error: BaseException | None = None):
        with self._cond:
            self._done.add(role)
            if error is not None and self._failed is None:
                self._failed = error
            self._cond.notify_all()

    def transcript(self) -> list[TranscriptEntry]:
        """Frames in canonical order (round, direction, per-direction seq)."""
        with self._cond:
            return sorted(self._entries, key=lambda e: (e.round, e.direction, e.seq))


class Endpoint:
    def __init__(self, channel: Channel, role: Role):
        self.channel = channel
        self.role = role
        self.direction = Direction.from_sender(role)
        self._seen_depth = 0

    @property
    def stats(self) -> ChannelStats:
        return self.channel.stats

    def send(self, tag: Tag, payload: bytes, nbits: int | None = None):
        if nbits is None:
            nbits = 8 * len(payload)
        self.channel._post(self.direction, self._seen_depth + 1, Tag(tag), bytes(payload), nbits)

    def send_bits(self, tag: Tag, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        self.send(tag, pack_bits(bits).tobytes(), bits.size)

    def send_uints(self, tag: Tag, values, width: int):
        self.send_bits(tag, uints_to_bits(values, width))

    def recv(self, tag: Tag) -> Recv:
        return Recv(Tag(tag))

    def recv_bits(self, tag: Tag, shape) -> Recv:
        shape = tuple(shape) if np.ndim(shape) else (int(shape),)
        count = int(np.prod(shape, dtype=np.int64))
        return Recv(Tag(tag), lambda p: unpack_bits(p, count, shape))

    def recv_uints(self, tag: Tag, shape, width: int) -> Recv:
        shape = tuple(shape) if np.ndim(shape) else (int(shape),)
        count = int(np.prod(shape, dtype=np.int64)) * width
        return Recv(Tag(tag), lambda p: bits_to_uints(unpack_bits(p, count, shape + (width,)), width))

    def _deliver(self, depth: int):
        self._seen_depth = max(self._seen_depth, depth)


def open_session() -> tuple[Endpoint, Endpoint]:
    ch = Channel()
    return Endpoint(ch, Role.SENDER), Endpoint(ch, Role.RECEIVER)


def _step(gen, value):
    try:
        return False, gen.send(value)
    except StopIteration as stop:
        return True, stop.value


def _drive_blocking(ep: Endpoint, gen, out: dict):
    value = None
    try:
        while True:
            done, item = _step(gen, value)
            if done:
                out[ep.role] = item
                ep.channel._mark(ep.role)
                return
            if not isinstance(item, Recv):
                raise ProtocolError(f"party routine yielded {type(item).__name__}, expected Recv")
            depth, frame = ep.channel._take_blocking(ep.role, item.tag)
            ep._deliver(depth)
            value = item.finish(frame.payload)
    except BaseException as exc:
        out.setdefault("errors", []).append(exc)
        ep.channel._mark(ep.role, exc)


def run_threads(s_ep: Endpoint, s_gen, r_ep: Endpoint, r_gen):
    out: dict = {}
    threads = [threading.Thread(target=_drive_blocking, args=(ep, g, out), daemon=True)
               for ep, g in ((s_ep, s_gen), (r_ep, r_gen))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if out.get("errors"):
        errors = out["errors"]
        # report the root cause, not the peer's "peer failed"
        primary = next((e for e in errors if "peer failed" not in str(e)), errors[0])
        raise primary
    return out[Role.SENDER], out[Role.RECEIVER]


def run_lockstep(s_ep: Endpoint, s_gen, r_ep: Endpoint, r_gen):
    parties = [[s_ep, s_gen, None, False, None], [r_ep, r_gen, None, False, None]]
    started = [False, False]
    while not all(p[3] for p in parties):
        progressed = False
        for i, p in enumerate(parties):
            ep, gen, req, done, _ = p
            if done:
                continue
            if not started[i]:
                value, started[i] = None, True
            elif ep.channel._available(ep.role):
                depth, frame = ep.channel._pop(ep.role, req.tag)
                ep._deliver(depth)
                value = req.finish(frame.payload)
            else:
                continue
            progressed = True
            while True:
                done, item = _step(gen, value)
                if done:
                    p[3], p[4] = True, item
                    break
                if not isinstance(item, Recv):
                    raise ProtocolError(f"party routine yielded {type(item).__name__}, expected Recv")
                p[2] = item
                if not ep.channel._available(ep.role):
                    break
                depth, frame = ep.channel._pop(ep.role, item.tag)
                ep._deliver(depth)
                value = item.finish(frame.payload)
        if not progressed:
            raise ProtocolError("deadlock: both parties wait for frames that never come")
    return parties[0][4], parties[1][4]


SCHEDULERS = {"threads": run_threads, "lockstep": run_lockstep}


def run_parties(s_ep: Endpoint, s_gen, r_ep: Endpoint, r_gen, scheduler: str = "threads"):
    """Drive both party routines to completion; returns (sender, receiver) results."""
    try:
        runner = SCHEDULERS[scheduler]
    except KeyError:
        raise ValueError(f"unknown scheduler {scheduler!r}") from None
    return runner(s_ep, s_gen, r_ep, r_gen)


# -- transcript dump / replay ---------------------------------------------

_ENTRY = struct.Struct("<IBI")


def dump_transcript(entries) -> bytes:
    """Serialize entries as (round u32, direction u8, nbits u32, frame)."""
    out = bytearray()
    for e in entries:
        out += _ENTRY.pack(e.round, int(e.direction), e.nbits)
        out += Frame(e.tag, e.payload).encode()
    return bytes(out)


def load_transcript(buf: bytes) -> list[TranscriptEntry]:
    entries, offset = [], 0
    seq = {Direction.S2R: 0, Direction.R2S: 0}
    while offset < len(buf):
        rnd, raw_dir, nbits = _ENTRY.unpack_from(buf, offset)
        frame, offset = Frame.decode(buf, offset + _ENTRY.size)
        d = Direction(raw_dir)
        entries.append(TranscriptEntry(rnd, d, seq[d], frame.tag, frame.payload, nbits))
        seq[d] += 1
    return entries


def replay_stats(buf: bytes) -> ChannelStats:
    """Recount rounds/bytes/bits from a transcript dump."""
    stats = ChannelStats()
    rounds = set()
    for e in load_transcript(buf):
        rounds.add(e.round)
        stats.messages += 1
        if e.direction is Direction.S2R:
            stats.bytes_s2r += len(e.payload)
            stats.bits_s2r += e.nbits
        else:
            stats.bytes_r2s += len(e.payload)
            stats.bits_r2s += e.nbits
    stats.rounds = max(rounds, default=0)
    if rounds and rounds != set(range(1, stats.rounds + 1)):
        raise ProtocolError("transcript has gaps in its round sequence")
    return stats


# -- network model ----------------------------------------------------------

@dataclass(frozen=True)
class NetworkPreset:
    name: str
    bandwidth: float  # bits per second
    one_way_latency: float  # seconds


LAN = NetworkPreset("LAN", 3e9, 0.3e-3)
WAN = NetworkPreset("WAN", 200e6, 50e-3)
MOBILE = NetworkPreset("Mobile", 100e6, 80e-3)
PRESETS = {"lan": LAN, "wan": WAN, "mobile": MOBILE}


def simulated_time(stats: ChannelStats, preset: NetworkPreset) -> float:
    """Seconds: each round costs one round trip, plus serialization time."""
    return (stats.rounds * 2 * preset.one_way_latency
            + (stats.bytes_s2r + stats.bytes_r2s) * 8 / preset.bandwidth)
