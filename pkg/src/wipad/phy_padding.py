"""OFDM PHY rate table and PPDU DATA-field geometry for 802.11a/g.

The DATA field of a PPDU is SERVICE (16 bits) | PSDU (8 * L bits) |
TAIL (6 bits) | PAD, where PAD fills the last OFDM symbol.  The pad bits
are the covert carrier; everything here is integer arithmetic on that
layout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Final

SERVICE_BITS: Final[int] = 16
TAIL_BITS: Final[int] = 6
HEADER_BITS: Final[int] = SERVICE_BITS + TAIL_BITS

T_SYMBOL_US: Final[Fraction] = Fraction(4)

# 14-octet ACK: frame control, duration, RA, FCS.
ACK_OCTETS: Final[int] = 14

# lcm of every n_bps in the rate table (1728 bits), in octets.
PAD_PERIOD_OCTETS: Final[int] = 216


class Modulation(enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    QAM16 = "16-QAM"
    QAM64 = "64-QAM"


@dataclass(frozen=True)
class PhyRate:
    rate_mbps: int
    modulation: Modulation
    code_rate: Fraction
    n_bps: int
    t_symbol_us: Fraction = T_SYMBOL_US

    def __post_init__(self) -> None:
        if self.n_bps <= 0:
            raise ValueError(f"n_bps must be positive, got {self.n_bps}")
        if self.t_symbol_us <= 0:
            raise ValueError(f"t_symbol_us must be positive, got {self.t_symbol_us}")


# n_bps counts data bits per symbol (N_DBPS).  IEEE 802.11-2007 lists code
# rate 2/3 for the 48 Mbit/s row; only n_bps enters any computation.
_TABLE: Final[tuple[PhyRate, ...]] = (
    PhyRate(6, Modulation.BPSK, Fraction(1, 2), 24),
    PhyRate(9, Modulation.BPSK, Fraction(3, 4), 36),
    PhyRate(12, Modulation.QPSK, Fraction(1, 2), 48),
    PhyRate(18, Modulation.QPSK, Fraction(3, 4), 72),
    PhyRate(24, Modulation.QAM16, Fraction(1, 2), 96),
    PhyRate(36, Modulation.QAM16, Fraction(3, 4), 144),
    PhyRate(48, Modulation.QAM64, Fraction(3, 4), 192),
    PhyRate(54, Modulation.QAM64, Fraction(3, 4), 216),
)


def rate_table() -> tuple[PhyRate, ...]:
    """The eight 802.11a/g OFDM rates, ascending."""
    return _TABLE


def rate_by_mbps(rate_mbps: int) -> PhyRate:
    for row in _TABLE:
        if row.rate_mbps == rate_mbps:
            return row
    valid = ", ".join(str(r.rate_mbps) for r in _TABLE)
    raise ValueError(f"no OFDM rate {rate_mbps} Mbit/s (valid: {valid})")


def rate_index(rate: PhyRate) -> int:
    """Row index of ``rate`` in the table; used as the on-disk rate code."""
    for i, row in enumerate(_TABLE):
        if row.n_bps == rate.n_bps and row.rate_mbps == rate.rate_mbps:
            return i
    raise ValueError(f"{rate} is not a table rate")


def bits_lcm() -> int:
    return reduce(math.lcm, (r.n_bps for r in _TABLE))


def data_field_bits(frame_octets: int) -> int:
    """SERVICE + PSDU + TAIL bits for a PSDU of ``frame_octets``."""
    if frame_octets < 0:
        raise ValueError(f"frame_octets must be >= 0, got {frame_octets}")
    return HEADER_BITS + 8 * frame_octets


def symbols_for(total_bits: int, rate: PhyRate) -> int:
    if total_bits < 0:
        raise ValueError(f"total_bits must be >= 0, got {total_bits}")
    return -(-total_bits // rate.n_bps)


def airtime_us(
    frame_octets: int, rate: PhyRate, signal_extension_us: Fraction | int = 0
) -> Fraction:
    """Duration of the DATA field (excluding preamble and PLCP header).

    ``signal_extension_us`` optionally appends the 802.11g ERP-OFDM signal
    extension; it is zero by default.
    """
    n_sym = symbols_for(data_field_bits(frame_octets), rate)
    return rate.t_symbol_us * n_sym + Fraction(signal_extension_us)


def pad_capacity_bits(frame_octets: int, rate: PhyRate) -> int:
    """Number of pad bits after the TAIL for a PSDU of ``frame_octets``."""
    total = data_field_bits(frame_octets)
    return rate.n_bps * symbols_for(total, rate) - total


@dataclass(frozen=True)
class PpduDataField:
    psdu_octets: int
    rate: PhyRate

    @property
    def l_ser(self) -> int:
        return SERVICE_BITS

    @property
    def l_tail(self) -> int:
        return TAIL_BITS

    @property
    def psdu_bits(self) -> int:
        return 8 * self.psdu_octets

    @property
    def n_symbols(self) -> int:
        return symbols_for(data_field_bits(self.psdu_octets), self.rate)

    @property
    def pad_bits(self) -> int:
        return pad_capacity_bits(self.psdu_octets, self.rate)


def max_pad_frame_length(alpha: int) -> int:
    """Frame length (octets) whose padding is n_bps - 6 bits at every table rate."""
    if alpha < 1:
        raise ValueError(f"alpha must be a positive integer, got {alpha}")
    return PAD_PERIOD_OCTETS * alpha - 2
