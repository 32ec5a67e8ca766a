"""Bit-exact PPDU DATA-field codec with covert data in the pad bits.

Layout of one DATA field (pre-scrambling, pre-FEC logical bits)::

    SERVICE (16, zero) | PSDU (8 * L, MSB-first per octet)
    | TAIL (6, zero) | PAD (fills the last OFDM symbol)

Covert bits occupy the start of PAD, MSB-first within each payload octet;
the rest of PAD is zero.  Multi-frame messages are a 16-bit big-endian
octet count followed by the payload, split greedily over pad regions.

Frame-dump file format (one record per frame, concatenated)::

    u8      rate index into rate_table()
    u16 BE  PSDU length L in octets
    L       PSDU octets
    ceil(P / 8) octets of pad bits, MSB-first, zero-filled at the end,
            where P = pad_capacity_bits(L, rate)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from wipad.phy_padding import (
    SERVICE_BITS,
    TAIL_BITS,
    PhyRate,
    pad_capacity_bits,
    rate_index,
    rate_table,
    symbols_for,
)

LENGTH_PREFIX_BITS = 16
MAX_MESSAGE_OCTETS = 2**LENGTH_PREFIX_BITS - 1


class CapacityError(ValueError):
    def __init__(self, needed: int, available: int) -> None:
        super().__init__(f"covert data needs {needed} bits, only {available} available")
        self.needed = needed
        self.available = available


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit sequences may only contain 0 and 1")
    return arr


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    """Pack MSB-first; a trailing partial octet is zero-filled."""
    return np.packbits(_as_bits(bits)).tobytes()


@dataclass(frozen=True, eq=False)
class FrameBits:
    service: np.ndarray
    psdu: bytes
    tail: np.ndarray
    pad: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameBits):
            return NotImplemented
        return (
            self.psdu == other.psdu
            and np.array_equal(self.service, other.service)
            and np.array_equal(self.tail, other.tail)
            and np.array_equal(self.pad, other.pad)
        )

    def bits(self) -> np.ndarray:
        return np.concatenate([self.service, bytes_to_bits(self.psdu), self.tail, self.pad])

    def __len__(self) -> int:
        return SERVICE_BITS + 8 * len(self.psdu) + TAIL_BITS + self.pad.size


def build_frame(psdu: bytes, rate: PhyRate, covert_bits=()) -> FrameBits:
    covert = _as_bits(covert_bits)
    capacity = pad_capacity_bits(len(psdu), rate)
    if covert.size > capacity:
        raise CapacityError(covert.size, capacity)
    pad = np.zeros(capacity, dtype=np.uint8)
    pad[: covert.size] = covert
    return FrameBits(
        service=np.zeros(SERVICE_BITS, dtype=np.uint8),
        psdu=bytes(psdu),
        tail=np.zeros(TAIL_BITS, dtype=np.uint8),
        pad=pad,
    )


def parse_frame(bits, psdu_octets: int, rate: PhyRate) -> FrameBits:
    """Split a full DATA-field bit string back into its fields."""
    bits = _as_bits(bits)
    expected = rate.n_bps * symbols_for(SERVICE_BITS + 8 * psdu_octets + TAIL_BITS, rate)
    if bits.size != expected:
        raise ValueError(f"expected {expected} bits for a {psdu_octets}-octet PSDU, got {bits.size}")
    psdu_end = SERVICE_BITS + 8 * psdu_octets
    return FrameBits(
        service=bits[:SERVICE_BITS].copy(),
        psdu=np.packbits(bits[SERVICE_BITS:psdu_end]).tobytes(),
        tail=bits[psdu_end : psdu_end + TAIL_BITS].copy(),
        pad=bits[psdu_end + TAIL_BITS :].copy(),
    )


def extract(frame: FrameBits, rate: PhyRate, covert_len_bits: int) -> np.ndarray:
    if len(frame) % rate.n_bps or frame.pad.size != pad_capacity_bits(len(frame.psdu), rate):
        raise ValueError(f"frame of {len(frame)} bits does not match the {rate.rate_mbps} Mbit/s layout")
    if not 0 <= covert_len_bits <= frame.pad.size:
        raise ValueError(f"requested {covert_len_bits} covert bits from a {frame.pad.size}-bit pad")
    return frame.pad[:covert_len_bits].copy()


def zero_pad_check(frame: FrameBits) -> bool:
    """True if the pad looks like a standard frame (all zeros)."""
    return not frame.pad.any()


@dataclass(frozen=True)
class CovertMessage:
    payload: bytes

    def __post_init__(self) -> None:
        if len(self.payload) > MAX_MESSAGE_OCTETS:
            raise ValueError(f"message longer than {MAX_MESSAGE_OCTETS} octets")

    def bits(self) -> np.ndarray:
        prefix = struct.pack(">H", len(self.payload))
        return bytes_to_bits(prefix + self.payload)


def chunk_message(msg: CovertMessage, capacities: Sequence[int]) -> list[np.ndarray]:
    """Split prefix + payload greedily into one chunk per capacity entry."""
    stream = msg.bits()
    total = sum(capacities)
    if total < stream.size:
        raise CapacityError(stream.size, total)
    chunks = []
    pos = 0
    for cap in capacities:
        if cap < 0:
            raise ValueError("capacities must be non-negative")
        chunks.append(stream[pos : pos + cap].copy())
        pos = min(pos + cap, stream.size)
    return chunks


class MessageAssembler:
    """Accumulates covert chunks until the prefixed message is complete.

    One assembler per covert session; it is not safe to share.
    """

    def __init__(self) -> None:
        self._parts: list[np.ndarray] = []
        self._have = 0
        self._need: int | None = None

    def feed(self, bits) -> None:
        if self.complete:
            return
        chunk = _as_bits(bits)
        self._parts.append(chunk)
        self._have += chunk.size
        if self._need is None and self._have >= LENGTH_PREFIX_BITS:
            head = np.concatenate(self._parts)[:LENGTH_PREFIX_BITS]
            (length,) = struct.unpack(">H", bits_to_bytes(head))
            self._need = LENGTH_PREFIX_BITS + 8 * length

    @property
    def complete(self) -> bool:
        return self._need is not None and self._have >= self._need

    @property
    def bits_needed(self) -> int | None:
        return self._need

    def message(self) -> bytes:
        if not self.complete:
            raise ValueError("message incomplete")
        stream = np.concatenate(self._parts)
        return bits_to_bytes(stream[LENGTH_PREFIX_BITS : self._need])


def reassemble(chunks: Iterable) -> bytes:
    acc = MessageAssembler()
    for c in chunks:
        acc.feed(c)
    return acc.message()


def write_dump(stream: BinaryIO, records: Iterable[tuple[PhyRate, FrameBits]]) -> int:
    """Write frame-dump records; returns the number written."""
    count = 0
    for rate, frame in records:
        if frame.pad.size != pad_capacity_bits(len(frame.psdu), rate):
            raise ValueError("pad length does not match rate and PSDU length")
        if len(frame.psdu) > 0xFFFF:
            raise ValueError("PSDU longer than 65535 octets")
        stream.write(struct.pack(">BH", rate_index(rate), len(frame.psdu)))
        stream.write(frame.psdu)
        stream.write(bits_to_bytes(frame.pad))
        count += 1
    return count


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise ValueError("truncated frame-dump record")
    return data


def read_dump(stream: BinaryIO) -> Iterator[tuple[PhyRate, FrameBits]]:
    table = rate_table()
    while True:
        head = stream.read(3)
        if not head:
            return
        if len(head) != 3:
            raise ValueError("truncated frame-dump record header")
        idx, length = struct.unpack(">BH", head)
        if idx >= len(table):
            raise ValueError(f"unknown rate index {idx}")
        rate = table[idx]
        psdu = _read_exact(stream, length)
        n_pad = pad_capacity_bits(length, rate)
        raw = np.unpackbits(np.frombuffer(_read_exact(stream, -(-n_pad // 8)), dtype=np.uint8))
        if raw[n_pad:].any():
            raise ValueError("non-zero fill after pad bits")
        pad = raw[:n_pad].copy()
        yield rate, FrameBits(
            service=np.zeros(SERVICE_BITS, dtype=np.uint8),
            psdu=psdu,
            tail=np.zeros(TAIL_BITS, dtype=np.uint8),
            pad=pad,
        )
