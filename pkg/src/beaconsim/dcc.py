"""Congestion metrics measured by each node: CBR, CR and the neighbor count.

CBR (channel busy ratio) is the fraction of resources sensed busy over the
last tau_sense, own transmissions included. For 802.11p* it is time-based:

    cbr = (T_busy + T_tx) / tau_sense

For the sidelink it is slot-based; a half-duplex node cannot sense the
subframes where it transmits, so all their slots count as busy:

    cbr = (N_busy + S_tx * M_tot) / (S_sense * M_tot)

CR (channel occupation ratio) is the share of resources a single node uses
with its own beacons: airtime * f_b for 802.11p*, and the packet's share of
the subframe, (B_tx / M_tot) * tti * f_b, for the sidelink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import phy, propagation


class MetricNotReady(RuntimeError):
    """Raised when a CBR window has not yet spanned a full tau_sense."""


@dataclass
class CbrWindow:
    tau_sense_s: float = 1.0
    busy_time_s: float = 0.0
    own_tx_time_s: float = 0.0
    busy_slot_count: int = 0
    own_tx_subframes: int = 0
    window_subframes: int = 1000
    slots_per_subframe: int = 1
    complete: bool = True


def cbr_11p(window: CbrWindow) -> float:
    if not window.complete:
        raise MetricNotReady("sensing window has not elapsed yet")
    return (window.busy_time_s + window.own_tx_time_s) / window.tau_sense_s


def cbr_lte(window: CbrWindow) -> float:
    if not window.complete:
        raise MetricNotReady("sensing window has not elapsed yet")
    m_tot = window.slots_per_subframe
    return ((window.busy_slot_count + window.own_tx_subframes * m_tot)
            / (window.window_subframes * m_tot))


def cr_11p(airtime_us: float, f_b: float) -> float:
    if airtime_us <= 0 or f_b <= 0:
        raise ValueError("airtime and beacon frequency must be positive")
    return airtime_us * 1e-6 * f_b


def cr_lte(subchannels_per_packet: int, m_tot: int, f_b: float,
           tti_us: float = phy.TTI_US) -> float:
    if not 1 <= subchannels_per_packet <= m_tot:
        raise ValueError("subchannels per packet must be within 1..m_tot")
    return (subchannels_per_packet / m_tot) * tti_us * 1e-6 * f_b


# Table rows reported for the adopted parameter combinations, both stacks.
CR_TABLE_COMBOS = [(phy.Mcs.A, 10), (phy.Mcs.B, 10), (phy.Mcs.C, 10),
                   (phy.Mcs.D, 10), (phy.Mcs.B, 5), (phy.Mcs.B, 1)]


def channel_occupation_table() -> list[dict]:
    """CR of one node for the studied MCS/beacon-rate combinations."""
    rows = []
    for mcs_id, f_b in CR_TABLE_COMBOS:
        profile = phy.mcs_profile(mcs_id)
        rows.append({
            "mcs": mcs_id.value,
            "fb_hz": f_b,
            "cr_80211p": cr_11p(profile.airtime_11p_us, f_b),
            "cr_ltev2x": cr_lte(1, profile.packets_per_tti, f_b),
        })
    return rows


def format_cr_table() -> str:
    header = f"{'MCS':<4} {'Beacon freq':>11} {'CR 802.11p*':>12} {'CR LTE-V2X':>11}"
    lines = [header, "-" * len(header)]
    for row in channel_occupation_table():
        lines.append(f"{row['mcs']:<4} {row['fb_hz']:>8d} Hz "
                     f"{row['cr_80211p']:>12.5g} {row['cr_ltev2x']:>11.5g}")
    return "\n".join(lines)


@dataclass
class NeighborTable:
    """Per-node awareness list built from decoded beacons.

    Entries expire after expiry_s without a reception so the neighbor count
    tracks current reception quality rather than history.
    """

    awareness_range_m: float = 100.0
    expiry_s: float = 2.0
    entries: dict = field(default_factory=dict)
    now_s: float = 0.0

    def update(self, tx_id: int, tx_position_m: float, t_s: float) -> None:
        self.entries[tx_id] = (tx_position_m, t_s)
        if t_s > self.now_s:
            self.now_s = t_s
        self._expire()

    def advance(self, t_s: float) -> None:
        self.now_s = max(self.now_s, t_s)
        self._expire()

    def _expire(self) -> None:
        cutoff = self.now_s - self.expiry_s
        stale = [k for k, (_, t) in self.entries.items() if t < cutoff]
        for k in stale:
            del self.entries[k]


def neighbor_count(table: NeighborTable, self_position_m: float,
                   road_length_m: float | None = None) -> int:
    """Entries whose last known position is within the awareness range (inclusive)."""
    count = 0
    for pos, _ in table.entries.values():
        gap = abs(pos - self_position_m)
        if road_length_m is not None:
            gap = min(gap, road_length_m - gap)
        if gap <= table.awareness_range_m:
            count += 1
    return count


def median_range_m(p_tx_dbm: float, mcs: phy.McsProfile, cfg: propagation.PropagationConfig,
                   tech: phy.Technology, channel_bandwidth_hz: float = 10e6) -> float:
    """Largest distance where the zero-shadowing SNR still meets the MCS threshold.

    Uses the technology's per-packet noise bandwidth, so the sidelink range
    exceeds 802.11p* at equal power whenever a packet occupies less than the
    full channel.
    """
    noise = propagation.noise_dbm(
        phy.occupied_bandwidth_hz(tech, mcs, channel_bandwidth_hz), cfg)
    budget = (p_tx_dbm + cfg.antenna_gain_tx_db + cfg.antenna_gain_rx_db
              - mcs.min_sinr_db - noise)

    def snr_ok(d):
        return propagation.path_loss_db(d, cfg) <= budget

    lo = cfg.pathloss.min_distance_m
    if not snr_ok(lo):
        return 0.0
    hi = lo * 2
    while snr_ok(hi):
        hi *= 2
        if hi > 1e7:
            return math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if snr_ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
