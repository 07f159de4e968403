"""Fixed-width ring values, chunk decomposition and XOR/additive sharing.

Bit vectors are kept packed, eight logical bits per byte, least significant
bit first: logical bit ``i`` lives in bit ``i % 8`` of byte ``i // 8``.
Working arrays inside the protocols are unpacked ``uint8`` arrays holding
0/1 values; packing happens at type and wire boundaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

MAX_WIDTH = 64
MAX_CHUNK = 8


class ConfigError(ValueError):
    """Invalid protocol parameters (widths, chunk sizes, shapes)."""


class MisuseError(RuntimeError):
    """API used in a way the sharing semantics do not allow."""


class Role(enum.Enum):
    SENDER = "sender"
    RECEIVER = "receiver"

    @property
    def other(self) -> "Role":
        return Role.RECEIVER if self is Role.SENDER else Role.SENDER


def ring_mask(width: int) -> int:
    return (1 << width) - 1


def pack_bits(bits) -> np.ndarray:
    """Pack a 0/1 array (any shape, C order) into little-endian bytes."""
    flat = np.asarray(bits, dtype=np.uint8).ravel()
    return np.packbits(flat, bitorder="little")


def unpack_bits(data, count: int, shape=None) -> np.ndarray:
    """Inverse of :func:`pack_bits`; ``count`` logical bits are returned."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray, memoryview)) else np.asarray(data, dtype=np.uint8)
    if buf.size * 8 < count:
        raise ConfigError(f"need {count} bits, payload holds {buf.size * 8}")
    bits = np.unpackbits(buf, count=count, bitorder="little")
    return bits.reshape(shape) if shape is not None else bits


def uints_to_bits(values, width: int) -> np.ndarray:
    """Little-endian bit decomposition: shape (..., width)."""
    v = np.asarray(values, dtype=np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    return ((v[..., None] >> shifts) & np.uint64(1)).astype(np.uint8)


def bits_to_uints(bits, width: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    return np.bitwise_or.reduce(b << shifts, axis=-1) if width else np.zeros(b.shape[:-1], np.uint64)


@dataclass(frozen=True)
class RingValue:
    value: int
    width: int

    def __post_init__(self):
        if not 1 <= self.width <= MAX_WIDTH:
            raise ConfigError(f"width must be in [1, {MAX_WIDTH}], got {self.width}")
        if not 0 <= self.value <= ring_mask(self.width):
            raise ConfigError(f"value {self.value} does not fit in {self.width} bits")


@dataclass(frozen=True)
class ChunkVector:
    """q-bit chunks, index 0 least significant. ``chunks`` may carry a
    leading batch axis: shape (n,) or (batch, n)."""

    chunks: np.ndarray
    q: int
    width: int

    @property
    def n(self) -> int:
        return self.chunks.shape[-1]

    def recompose(self):
        shifts = (np.arange(self.n, dtype=np.uint64) * np.uint64(self.q))
        out = np.bitwise_or.reduce(self.chunks.astype(np.uint64) << shifts, axis=-1)
        if out.ndim == 0:
            return RingValue(int(out), self.width)
        return out


def chunk_count(width: int, q: int) -> int:
    return -(-width // q)


def check_chunking(width: int, q: int, *, exact: bool = True) -> int:
    if not 1 <= q <= MAX_CHUNK:
        raise ConfigError(f"chunk width must be in [1, {MAX_CHUNK}], got {q}")
    if not 1 <= width <= MAX_WIDTH:
        raise ConfigError(f"width must be in [1, {MAX_WIDTH}], got {width}")
    if exact and width % q:
        raise ConfigError(f"chunk width {q} does not divide ring width {width}")
    return chunk_count(width, q)


def split_chunks(x, q: int, width: int | None = None, *, exact: bool = True) -> ChunkVector:
    """Split a RingValue (or an integer array with explicit ``width``) into
    little-endian q-bit chunks.

    With ``exact=False`` a width that q does not divide is zero-extended to
    the next multiple of q.
    """
    if isinstance(x, RingValue):
        width = x.width
        values = np.asarray(x.value, dtype=np.uint64)
    else:
        if width is None:
            raise ConfigError("width is required for raw integer input")
        values = np.asarray(x, dtype=np.uint64)
        if np.any(values > np.uint64(ring_mask(width))):
            raise ConfigError(f"values exceed {width} bits")
    n = check_chunking(width, q, exact=exact)
    shifts = np.arange(n, dtype=np.uint64) * np.uint64(q)
    chunks = ((values[..., None] >> shifts) & np.uint64(ring_mask(q))).astype(np.uint8)
    return ChunkVector(chunks, q, width)


@dataclass(frozen=True)
class BitShareVector:
    """One party's XOR share of a Boolean vector, stored packed."""

    data: np.ndarray = field(repr=False)
    shape: tuple
    owner: Role

    @classmethod
    def from_bits(cls, bits, owner: Role) -> "BitShareVector":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(pack_bits(bits), tuple(bits.shape), owner)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def bits(self) -> np.ndarray:
        return unpack_bits(self.data, self.size, self.shape)

    def to_bytes(self) -> bytes:
        return self.data.tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes, shape, owner: Role) -> "BitShareVector":
        shape = tuple(shape)
        count = int(np.prod(shape, dtype=np.int64))
        if len(payload) != -(-count // 8):
            raise ConfigError(f"payload of {len(payload)} bytes cannot hold shape {shape}")
        return cls(np.frombuffer(payload, dtype=np.uint8).copy(), shape, owner)


def share_bits(secret, mask) -> tuple[BitShareVector, BitShareVector]:
    """Split ``secret`` into (mask, secret ^ mask), sender share first."""
    secret = np.asarray(secret, dtype=np.uint8)
    mask = np.asarray(mask, dtype=np.uint8)
    if secret.shape != mask.shape:
        raise ConfigError(f"length mismatch: secret {secret.shape} vs mask {mask.shape}")
    return (BitShareVector.from_bits(mask, Role.SENDER),
            BitShareVector.from_bits(secret ^ mask, Role.RECEIVER))


def reconstruct(a: BitShareVector, b: BitShareVector) -> np.ndarray:
    if a.owner is b.owner:
        raise MisuseError(f"both shares belong to {a.owner.value}")
    if a.shape != b.shape:
        raise ConfigError(f"share shapes differ: {a.shape} vs {b.shape}")
    return a.bits ^ b.bits


@dataclass(frozen=True)
class ArithShare:
    """Additive share over Z_{2^width}; ``value`` is an int or uint64 array."""

    value: np.ndarray
    width: int

    def __post_init__(self):
        if not 1 <= self.width <= MAX_WIDTH:
            raise ConfigError(f"width must be in [1, {MAX_WIDTH}], got {self.width}")
        object.__setattr__(self, "value",
                           np.asarray(self.value, dtype=np.uint64) & np.uint64(ring_mask(self.width)))


def share_arith(secret, mask, width: int) -> tuple[ArithShare, ArithShare]:
    secret = np.asarray(secret, dtype=np.uint64)
    mask = np.asarray(mask, dtype=np.uint64)
    return ArithShare(mask, width), ArithShare(secret - mask, width)


def reconstruct_arith(a: ArithShare, b: ArithShare) -> np.ndarray:
    if a.width != b.width:
        raise ConfigError(f"width mismatch: {a.width} vs {b.width}")
    return (a.value + b.value) & np.uint64(ring_mask(a.width))


def to_signed(values, width: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.uint64).astype(np.int64) if width < 64 else np.asarray(values, dtype=np.uint64).view(np.int64)
    if width == 64:
        return v
    half = 1 << (width - 1)
    return np.where(v >= half, v - (1 << width), v)
