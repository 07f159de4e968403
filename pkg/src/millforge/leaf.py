"""Per-chunk secure comparison: shares of lt_j = 1{y_j < x_j} and eq_j = 1{y_j = x_j}.

The sender holds y, the receiver holds x. For every chunk the sender
builds 2^q two-bit messages (lt payload, eq payload) masked with one-time
pads indexed by ``tmp ^ t``; the receiver can unmask only entry t = x_j.

Baseline: the receiver first sends tmp = x ^ c (2 rounds).
Trusted variant: tmp comes from the tape and x is the tape mask (1 round).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bits import BitShareVector, ChunkVector, ConfigError, Role, reconstruct
from .transport import Tag

LAMBDA = 128


@dataclass(frozen=True)
class LeafResult:
    lt: BitShareVector
    eq: BitShareVector

    @property
    def owner(self) -> Role:
        return self.lt.owner


def reconstruct_leaf(a: LeafResult, b: LeafResult) -> tuple[np.ndarray, np.ndarray]:
    return reconstruct(a.lt, b.lt), reconstruct(a.eq, b.eq)


def decrypt_selected(messages, index, pad) -> np.ndarray:
    """messages[..., index, :] ^ pad; messages has shape (..., 2^q, 2)."""
    messages = np.asarray(messages, dtype=np.uint8)
    index = np.asarray(index, dtype=np.int64)
    if np.any(index < 0) or np.any(index >= messages.shape[-2]):
        raise ConfigError(f"selection index out of range [0, {messages.shape[-2]})")
    picked = np.take_along_axis(messages, index[..., None, None], axis=-2)[..., 0, :]
    return picked ^ np.asarray(pad, dtype=np.uint8)


def oblivious_messages(y, tmp, q: int, pads, lt_share, eq_share) -> np.ndarray:
    """Sender payloads, shape (count, n, 2^q, 2), chunk-major then entry."""
    t = np.arange(1 << q, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)[..., None]
    lt = (y < t).astype(np.uint8) ^ lt_share[..., None]
    eq = (y == t).astype(np.uint8) ^ eq_share[..., None]
    idx = (np.asarray(tmp, dtype=np.uint8)[..., None] ^ t).astype(np.int64)
    pad = np.take_along_axis(pads, idx[..., None], axis=2)
    return np.stack([lt, eq], axis=-1) ^ pad


def _result(lt, eq, role: Role) -> LeafResult:
    return LeafResult(BitShareVector.from_bits(lt, role), BitShareVector.from_bits(eq, role))


# -- party routines --------------------------------------------------------

def baseline_sender(ep, y, q: int, rot):
    count, n = y.shape
    tmp = yield ep.recv_uints(Tag.LEAF_TMP, (count, n), q)
    ep.send_bits(Tag.LEAF_MSGS, oblivious_messages(y, tmp.astype(np.uint8), q, rot.pads,
                                                   rot.lt_share, rot.eq_share))
    return _result(rot.lt_share, rot.eq_share, Role.SENDER)


def baseline_receiver(ep, x, q: int, rot):
    count, n = x.shape
    ep.send_uints(Tag.LEAF_TMP, x ^ rot.c, q)
    msgs = yield ep.recv_bits(Tag.LEAF_MSGS, (count, n, 1 << q, 2))
    sel = decrypt_selected(msgs, x, rot.retained_pad)
    return _result(sel[..., 0], sel[..., 1], Role.RECEIVER)


def tami_sender(ep, y, bundle):
    if y.shape != bundle.tmp.shape:
        raise ConfigError(f"input chunks {y.shape} do not match offline bundles {bundle.tmp.shape}")
    ep.send_bits(Tag.LEAF_MSGS, oblivious_messages(y, bundle.tmp, bundle.q, bundle.pads,
                                                   bundle.lt_share, bundle.eq_share))
    return _result(bundle.lt_share, bundle.eq_share, Role.SENDER)
    yield  # pragma: no cover - makes this a generator


def tami_receiver(ep, bundle):
    count, n = bundle.x.shape
    msgs = yield ep.recv_bits(Tag.LEAF_MSGS, (count, n, 1 << bundle.q, 2))
    sel = decrypt_selected(msgs, bundle.x, bundle.retained_pad)
    return _result(sel[..., 0], sel[..., 1], Role.RECEIVER)


# -- two-party drivers -----------------------------------------------------

def as_chunk_array(chunks, q: int | None = None) -> tuple[np.ndarray, int]:
    if isinstance(chunks, ChunkVector):
        if q is not None and q != chunks.q:
            raise ConfigError(f"chunk-width mismatch: {q} vs {chunks.q}")
        return np.atleast_2d(chunks.chunks).astype(np.uint8), chunks.q
    if q is None:
        raise ConfigError("chunk width unknown for raw chunk arrays")
    return np.atleast_2d(np.asarray(chunks, dtype=np.uint8)), q


def baseline_offline_bits(n: int, q: int) -> int:
    """Synthetic offline cost of n*q IKNP-style random OTs."""
    return 2 * LAMBDA * n * q


def leaf_compare_baseline(session, y_chunks, x_chunks, q: int | None = None):
    """Returns (sender LeafResult, receiver LeafResult)."""
    y, qy = as_chunk_array(y_chunks, q if q is not None else getattr(x_chunks, "q", None))
    x, _ = as_chunk_array(x_chunks, qy)
    if y.shape != x.shape:
        raise ConfigError(f"chunk layout mismatch: {y.shape} vs {x.shape}")
    count, n = y.shape
    s_rot = session.sender_tape.rot_offline(n, qy, count)
    r_rot = session.receiver_tape.rot_offline(n, qy, count)
    return session.run(baseline_sender(session.sender_ep, y, qy, s_rot),
                       baseline_receiver(session.receiver_ep, x, qy, r_rot))


def leaf_compare_tami(session, y_chunks, s_bundle, r_bundle):
    y, _ = as_chunk_array(y_chunks, s_bundle.q)
    if r_bundle.x.shape != y.shape:
        raise ConfigError(f"bundle/chunk count mismatch: {r_bundle.x.shape} vs {y.shape}")
    return session.run(tami_sender(session.sender_ep, y, s_bundle),
                       tami_receiver(session.receiver_ep, r_bundle))
