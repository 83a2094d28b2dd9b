"""PHY abstraction shared by both stacks: MCS table and threshold reception.

Both technologies decode a packet iff its SINR stays at or above the MCS
minimum; there is no coding-level model. The four MCS rows are the minimum
settings that fit one, two, three, or four 300-byte packets into one 1 ms
TTI on the sidelink grid; the 802.11p* airtimes (preamble included) come from
the matching raw data rates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

TTI_US = 1000
BEACON_PAYLOAD_BYTES = 300


class Technology(str, enum.Enum):
    IEEE80211P_STAR = "80211p"
    LTEV2X = "ltev2x"


class Mcs(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


class PhyError(ValueError):
    """Invalid PHY parameters."""


@dataclass(frozen=True)
class McsProfile:
    id: Mcs
    label: str
    min_sinr_db: float
    airtime_11p_us: int
    packets_per_tti: int


MCS_TABLE = {
    Mcs.A: McsProfile(Mcs.A, "QPSK, 0.27", 1.49, 560, 1),
    Mcs.B: McsProfile(Mcs.B, "QPSK, 0.48", 5.79, 304, 2),
    Mcs.C: McsProfile(Mcs.C, "16QAM, 0.46", 12.83, 192, 3),
    Mcs.D: McsProfile(Mcs.D, "16QAM, 0.59", 16.39, 160, 4),
}


def mcs_profile(mcs_id) -> McsProfile:
    if isinstance(mcs_id, str) and not isinstance(mcs_id, Mcs):
        mcs_id = Mcs(mcs_id.upper())
    return MCS_TABLE[mcs_id]


def decode(sinr_db: float, mcs: McsProfile) -> bool:
    """Threshold reception; a tie at the minimum SINR decodes."""
    return sinr_db >= mcs.min_sinr_db


def airtime_us(mcs: McsProfile, tech: Technology) -> int:
    """On-air duration of one 300-byte beacon."""
    if tech is Technology.LTEV2X:
        return TTI_US
    return mcs.airtime_11p_us


def occupied_bandwidth_hz(tech: Technology, mcs: McsProfile,
                          channel_bandwidth_hz: float = 10e6) -> float:
    """Bandwidth one packet occupies; sets the receiver noise floor.

    802.11p* packets span the whole channel. A sidelink packet takes one of
    the packets_per_tti slots, so its receiver integrates proportionally less
    noise (half bandwidth for MCS B, etc.).
    """
    if tech is Technology.LTEV2X:
        return channel_bandwidth_hz / mcs.packets_per_tti
    return channel_bandwidth_hz


@dataclass(frozen=True)
class PhyConfig:
    payload_bytes: int = BEACON_PAYLOAD_BYTES
    channel_bandwidth_mhz: float = 10.0
    tx_power_dbm: float = 23.0

    def validate(self) -> list[str]:
        """Returns warnings; raises on hard violations."""
        if self.payload_bytes != BEACON_PAYLOAD_BYTES:
            raise PhyError(
                f"payload_bytes must be {BEACON_PAYLOAD_BYTES}: the MCS airtime table "
                f"is specific to that size (got {self.payload_bytes})")
        if self.channel_bandwidth_mhz <= 0:
            raise PhyError("channel bandwidth must be positive")
        warnings = []
        if not 8.0 <= self.tx_power_dbm <= 23.0:
            warnings.append(
                f"tx_power_dbm={self.tx_power_dbm} is outside the studied 8..23 dBm range")
        return warnings


def format_mcs_table() -> str:
    header = (f"{'MCS':<4} {'Mod./Coding':<12} {'Min SINR':>9} "
              f"{'802.11p* airtime':>17} {'Packets/TTI':>12}")
    lines = [header, "-" * len(header)]
    for profile in MCS_TABLE.values():
        lines.append(f"{profile.id.value:<4} {profile.label:<12} "
                     f"{profile.min_sinr_db:>6.2f} dB {profile.airtime_11p_us:>14d} us "
                     f"{profile.packets_per_tti:>12d}")
    return "\n".join(lines)
