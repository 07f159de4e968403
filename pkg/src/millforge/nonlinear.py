"""Millionaire comparison, DReLU and ReLU composed from leaf + merge.

All protocols are batched: every array has a leading item axis and each
protocol phase is a single flight for the whole batch, so round counts do
not depend on the batch size.

DReLU over Z_{2^l}: with a (sender) and b (receiver),
msb(a + b) = msb(a) ^ msb(b) ^ carry, carry = 1{a_low + b_low >= 2^{l-1}}
= 1{(2^{l-1} - 1 - a_low) < b_low}, which is one comparison with the
receiver's low bits as x. DReLU = 1 ^ msb. ReLU multiplies the value by the
DReLU bit with two private-input Beaver products in one extra round.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bits import (ArithShare, BitShareVector, ChunkVector, ConfigError, Role, check_chunking, chunk_count,
                   reconstruct, reconstruct_arith, ring_mask, split_chunks, to_signed)
from .leaf import baseline_receiver, baseline_sender, tami_receiver, tami_sender
from .merge import baseline_merge_party, baseline_triples_needed, merge_plan, tami_merge_party
from .session import Session
from .transport import Tag

VARIANTS = ("baseline", "tami")
OPS = ("millionaire", "drelu", "relu")


@dataclass(frozen=True)
class MillionaireConfig:
    bits: int = 32
    chunk: int = 4
    variant: str = "tami"
    interleaved: bool = False

    def __post_init__(self):
        check_chunking(self.bits, self.chunk)
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.interleaved and self.variant != "tami":
            raise ConfigError("interleaving applies to the trusted variant only")

    def compare_width(self, op: str) -> int:
        if op == "millionaire":
            return self.bits
        if self.bits < 2:
            raise ConfigError("DReLU needs at least 2 bits")
        return self.bits - 1

    def chunks(self, op: str = "millionaire") -> int:
        return chunk_count(self.compare_width(op), self.chunk)

    def as_dict(self) -> dict:
        return {"bits": self.bits, "chunk": self.chunk, "variant": self.variant,
                "interleaved": self.interleaved}


@dataclass
class Offline:
    """One party's preprocessing for a batch."""

    rot: object = None
    triples: object = None
    bundle: object = None
    sps: object = None
    plan: object = None
    mux: object = None
    input_msb: np.ndarray | None = None


def prepare_offline(tape, cfg: MillionaireConfig, op: str, count: int, mask=None) -> Offline:
    """Draws everything a party needs before any message is sent.

    ``mask`` (count, n) injects the receiver's comparison chunks into the
    trusted tape instead of drawing them.
    """
    width = cfg.compare_width(op)
    n = chunk_count(width, cfg.chunk)
    off = Offline()
    if cfg.variant == "baseline":
        off.rot = tape.rot_offline(n, cfg.chunk, count)
        off.triples = tape.beaver_triples((count, baseline_triples_needed(n)))
    else:
        off.bundle = tape.leaf_offline(n, cfg.chunk, count, width=width, mask=mask)
        off.plan = merge_plan(n)
        off.sps = tape.subset_product_shares(off.plan, count, link=off.bundle.link)
        if op != "millionaire":
            off.input_msb = tape.input_mask(count, 1)
    if op == "relu":
        off.mux = tape.beaver_triples((count, 2), ring_bits=cfg.bits)
    return off


# -- party routines --------------------------------------------------------

def compare_party(ep, role: Role, cfg: MillionaireConfig, chunks, off: Offline):
    """Shares of 1{y < x}; ``chunks`` is y for the sender, x for the receiver."""
    q = cfg.chunk
    if cfg.variant == "baseline":
        if role is Role.SENDER:
            leaf = yield from baseline_sender(ep, chunks, q, off.rot)
        else:
            leaf = yield from baseline_receiver(ep, chunks, q, off.rot)
        return (yield from baseline_merge_party(ep, role, leaf.lt.bits, leaf.eq.bits, off.triples))
    if role is Role.SENDER:
        leaf = yield from tami_sender(ep, chunks, off.bundle)
        release = None
    else:
        leaf = yield from tami_receiver(ep, off.bundle)
        release = off.bundle.release
    return (yield from tami_merge_party(ep, role, leaf.lt.bits, leaf.eq.bits, off.sps, off.plan,
                                        cfg.interleaved, release))


def mux_party(ep, role: Role, own, delta, triples, ring_bits: int):
    """Shares of (a + b) * (delta_S ^ delta_R) over Z_{2^ring_bits}.

    value*delta = a*dS + b*dR + X*dR + dS*Y with X = a(1 - 2dS) held by the
    sender and Y = b(1 - 2dR) held by the receiver; the two cross products
    use one Beaver triple each and open together.
    """
    m = np.uint64(ring_mask(ring_bits))
    own = np.asarray(own, dtype=np.uint64)
    dl = np.asarray(delta, dtype=np.uint64)
    zero = np.zeros_like(own)
    flipped = (own * ((np.uint64(1) - np.uint64(2) * dl) & m)) & m
    if role is Role.SENDER:
        x = np.stack([flipped, dl], axis=1)
        y = np.stack([zero, zero], axis=1)
    else:
        x = np.stack([zero, zero], axis=1)
        y = np.stack([dl, flipped], axis=1)
    a, b, c = triples.a, triples.b, triples.c
    d_own = (x - a) & m
    e_own = (y - b) & m
    ep.send_uints(Tag.MUX_OPEN, np.concatenate([d_own, e_own], axis=1), ring_bits)
    other = yield ep.recv_uints(Tag.MUX_OPEN, (own.shape[0], 4), ring_bits)
    d = (d_own + other[:, :2]) & m
    e = (e_own + other[:, 2:]) & m
    z = (c + d * b + e * a) & m
    if role is Role.SENDER:
        z = (z + d * e) & m
    return (own * dl + z[:, 0] + z[:, 1]) & m


def nonlinear_party(ep, role: Role, op: str, cfg: MillionaireConfig, own, off: Offline):
    """``own`` is the party's input: y / x values for ``millionaire``, its
    arithmetic share for ``drelu`` / ``relu``."""
    q = cfg.chunk
    own = np.asarray(own, dtype=np.uint64)
    if op == "millionaire":
        chunks = split_chunks(own, q, cfg.bits).chunks
        return (yield from compare_party(ep, role, cfg, chunks, off))
    w = cfg.bits - 1
    low = own & np.uint64(ring_mask(w))
    msb = ((own >> np.uint64(w)) & np.uint64(1)).astype(np.uint8)
    operand = (np.uint64(ring_mask(w)) - low) if role is Role.SENDER else low
    chunks = split_chunks(operand, q, w, exact=False).chunks
    carry = yield from compare_party(ep, role, cfg, chunks, off)
    delta = msb ^ carry ^ np.uint8(1 if role is Role.SENDER else 0)
    if op == "drelu":
        return delta
    return (yield from mux_party(ep, role, own, delta, off.mux, cfg.bits))


def timed(routine, sink: list):
    """Wraps a party routine, accumulating its own thread CPU seconds."""
    value = None
    while True:
        t0 = time.thread_time()
        try:
            item = routine.send(value)
        except StopIteration as stop:
            sink.append(time.thread_time() - t0)
            return stop.value
        sink.append(time.thread_time() - t0)
        value = yield item


# -- drivers ---------------------------------------------------------------

@dataclass
class OpRun:
    op: str
    cfg: MillionaireConfig
    sender: object  # BitShareVector or ArithShare
    receiver: object
    sender_input: np.ndarray
    receiver_input: np.ndarray
    cpu_s: dict = field(default_factory=dict)

    def output(self) -> np.ndarray:
        if isinstance(self.sender, ArithShare):
            return reconstruct_arith(self.sender, self.receiver)
        return reconstruct(self.sender, self.receiver)

    def expected(self) -> np.ndarray:
        return plain_result(self.op, self.cfg.bits, self.sender_input, self.receiver_input)


def plain_result(op: str, bits: int, sender_input, receiver_input) -> np.ndarray:
    s = np.asarray(sender_input, dtype=np.uint64)
    r = np.asarray(receiver_input, dtype=np.uint64)
    if op == "millionaire":
        return (s < r).astype(np.uint8)
    value = (s + r) & np.uint64(ring_mask(bits))
    signed = to_signed(value, bits)
    if op == "drelu":
        return (signed >= 0).astype(np.uint8)
    return np.where(signed >= 0, value, np.uint64(0)).astype(np.uint64)


def _injected_mask(cfg: MillionaireConfig, op: str, receiver_input):
    width = cfg.compare_width(op)
    vals = np.asarray(receiver_input, dtype=np.uint64) & np.uint64(ring_mask(width))
    return split_chunks(vals, cfg.chunk, width, exact=False).chunks


def run_op(session: Session, op: str, cfg: MillionaireConfig, sender_input=None, receiver_input=None,
           *, count: int | None = None, values=None, rng=None, timing: bool = False,
           tamper=None) -> OpRun:
    """Run one batched protocol.

    Inputs: ``sender_input`` (y, or share a) and ``receiver_input`` (x, or
    share b). In the trusted variant the receiver's comparison operand is
    the tape mask: when ``receiver_input`` is given it is injected into the
    tape, otherwise it is read back from the receiver's offline view. For
    drelu/relu, ``values`` may be given instead of shares; b is then the
    tape mask (trusted) or drawn from ``rng`` (baseline) and a = values - b.
    ``tamper`` maps the receiver's Offline to a modified one (negative
    controls only).
    """
    if op not in OPS:
        raise ConfigError(f"unknown op {op!r}")
    m = np.uint64(ring_mask(cfg.bits))
    if values is not None:
        values = np.atleast_1d(np.asarray(values, dtype=np.uint64)) & m
        count = values.shape[0]
    elif sender_input is not None:
        sender_input = np.atleast_1d(np.asarray(sender_input, dtype=np.uint64))
        count = sender_input.shape[0]
    if count is None:
        raise ConfigError("no inputs and no count given")
    if receiver_input is not None:
        receiver_input = np.atleast_1d(np.asarray(receiver_input, dtype=np.uint64))
        if receiver_input.shape[0] != count:
            raise ConfigError("sender and receiver batches differ in length")
        if np.any(receiver_input > m):
            raise ConfigError(f"receiver input exceeds {cfg.bits} bits")
    if sender_input is not None and np.any(sender_input > m):
        raise ConfigError(f"sender input exceeds {cfg.bits} bits")

    mask = None
    if cfg.variant == "tami" and receiver_input is not None:
        mask = _injected_mask(cfg, op, receiver_input)
    cpu = {"sender": [], "receiver": []}
    t0 = time.thread_time()
    s_off = prepare_offline(session.sender_tape, cfg, op, count, mask)
    cpu["sender"].append(time.thread_time() - t0)
    t0 = time.thread_time()
    r_off = prepare_offline(session.receiver_tape, cfg, op, count, mask)
    cpu["receiver"].append(time.thread_time() - t0)
    if tamper is not None:
        r_off = tamper(r_off)

    if receiver_input is None:
        if cfg.variant == "tami":
            width = cfg.compare_width(op)
            low = ChunkVector(r_off.bundle.x, cfg.chunk, width).recompose()
            receiver_input = np.asarray(low, dtype=np.uint64)
            if op != "millionaire":
                receiver_input |= r_off.input_msb.astype(np.uint64) << np.uint64(cfg.bits - 1)
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            receiver_input = rng.integers(0, 1 << cfg.bits, size=count, dtype=np.uint64)
    if sender_input is None:
        if values is None:
            raise ConfigError("sender input missing")
        sender_input = (values - receiver_input) & m

    s_gen = nonlinear_party(session.sender_ep, Role.SENDER, op, cfg, sender_input, s_off)
    r_gen = nonlinear_party(session.receiver_ep, Role.RECEIVER, op, cfg, receiver_input, r_off)
    if timing:
        s_gen, r_gen = timed(s_gen, cpu["sender"]), timed(r_gen, cpu["receiver"])
    s_out, r_out = session.run(s_gen, r_gen)
    if op == "relu":
        s_sh, r_sh = ArithShare(s_out, cfg.bits), ArithShare(r_out, cfg.bits)
    else:
        s_sh, r_sh = BitShareVector.from_bits(s_out, Role.SENDER), BitShareVector.from_bits(r_out, Role.RECEIVER)
    return OpRun(op, cfg, s_sh, r_sh, sender_input, receiver_input,
                 {k: sum(v) for k, v in cpu.items()})


def millionaire(session: Session, y, x, cfg: MillionaireConfig, **kw) -> OpRun:
    return run_op(session, "millionaire", cfg, y, x, **kw)


def drelu(session: Session, a, b, cfg: MillionaireConfig, **kw) -> OpRun:
    return run_op(session, "drelu", cfg, a, b, **kw)


def relu(session: Session, a, b, cfg: MillionaireConfig, **kw) -> OpRun:
    return run_op(session, "relu", cfg, a, b, **kw)
