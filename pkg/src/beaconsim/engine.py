"""Discrete-event simulation core for both MAC stacks.

One replication is a single-threaded event loop over one vehicle drop and one
frozen channel realization. 802.11p* runs on a 1 us event queue (beacon
generations, MAC timers, transmission ends); LTE-V2X advances subframe by
subframe. Reception is adjudicated per transmission against the concurrent
interference, aggregated over the packet as a time-weighted mean by default
(configurable to the worst overlapping segment); half-duplex receivers are
blocked outright.

Accounting: every beacon generated after the warmup contributes, for every
potential receiver within the farthest distance bin, exactly one of
{received, lost to SINR, lost to half duplex, lost to expiry}. Update-delay
(IPG) samples are the generation-time gaps between consecutively received
beacons of a pair within the awareness range, so they are exact multiples of
the beacon period; sub-period reception jitter is not congestion information.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dcc, mac_csma, mac_sps, phy, propagation, scenario as scenario_mod
from .config import SimConfig
from .mac_csma import CsmaEvent, CsmaPhase, MacAction, QueuedBeacon
from .phy import Mcs, Technology


class SimulationError(RuntimeError):
    """Internal consistency violation (engine bug trap)."""


@dataclass(frozen=True)
class TransmissionEvent:
    tx_id: int
    t_start_us: int
    airtime_us: int
    power_dbm: float
    mcs: Mcs
    beacon_seq: int
    generation_time_us: int
    subframe: int | None = None
    slot: int | None = None


def beacon_schedule(node: int, f_b: float, rng, period_us: int | None = None):
    """Infinite stream of generation times (us): uniform initial phase, then periodic."""
    if period_us is None:
        period_us = int(round(1e6 / f_b))
    t = int(rng.integers(0, period_us))
    while True:
        yield t
        t += period_us


def generation_times_us(f_b: float, horizon_us: int, rng, period_us: int | None = None):
    if period_us is None:
        period_us = int(round(1e6 / f_b))
    phase = int(rng.integers(0, period_us))
    return np.arange(phase, horizon_us, period_us, dtype=np.int64)


# ---------------------------------------------------------------------------
# metrics report
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    bin_width_m: float
    n_bins: int
    period_s: float
    awareness_range_m: float
    config_echo: dict = field(default_factory=dict)

    succ_bins: np.ndarray = None
    opp_bins: np.ndarray = None
    succ_100m: float = 0.0
    opp_100m: int = 0
    ipg_counts: np.ndarray = None  # index m = gap in beacon periods
    cbr_sum: float = 0.0
    cbr_samples: int = 0
    v_sum: float = 0.0
    v_samples: int = 0
    received: int = 0
    lost_sinr: int = 0
    lost_half_duplex: int = 0
    lost_expiry: int = 0
    generated: int = 0
    transmitted: int = 0
    opportunities: int = 0

    def __post_init__(self):
        if self.succ_bins is None:
            self.succ_bins = np.zeros(self.n_bins)
        if self.opp_bins is None:
            self.opp_bins = np.zeros(self.n_bins, dtype=np.int64)
        if self.ipg_counts is None:
            self.ipg_counts = np.zeros(2, dtype=np.int64)

    def merge(self, other: "MetricsReport") -> "MetricsReport":
        """Pure, associative reduction of per-replication reports."""
        if (self.n_bins != other.n_bins or self.bin_width_m != other.bin_width_m
                or self.period_s != other.period_s):
            raise SimulationError("cannot merge reports with different binning")
        cap = max(self.ipg_counts.size, other.ipg_counts.size)
        ipg = np.zeros(cap, dtype=np.int64)
        ipg[:self.ipg_counts.size] += self.ipg_counts
        ipg[:other.ipg_counts.size] += other.ipg_counts
        return replace(
            self,
            succ_bins=self.succ_bins + other.succ_bins,
            opp_bins=self.opp_bins + other.opp_bins,
            succ_100m=self.succ_100m + other.succ_100m,
            opp_100m=self.opp_100m + other.opp_100m,
            ipg_counts=ipg,
            cbr_sum=self.cbr_sum + other.cbr_sum,
            cbr_samples=self.cbr_samples + other.cbr_samples,
            v_sum=self.v_sum + other.v_sum,
            v_samples=self.v_samples + other.v_samples,
            received=self.received + other.received,
            lost_sinr=self.lost_sinr + other.lost_sinr,
            lost_half_duplex=self.lost_half_duplex + other.lost_half_duplex,
            lost_expiry=self.lost_expiry + other.lost_expiry,
            generated=self.generated + other.generated,
            transmitted=self.transmitted + other.transmitted,
            opportunities=self.opportunities + other.opportunities,
        )

    # -- derived metrics ----------------------------------------------------

    def pdr_by_distance(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.opp_bins > 0, self.succ_bins / self.opp_bins, np.nan)

    @property
    def pdr_within_100m(self) -> float:
        return self.succ_100m / self.opp_100m if self.opp_100m else math.nan

    @property
    def cbr_mean(self) -> float:
        return self.cbr_sum / self.cbr_samples if self.cbr_samples else math.nan

    @property
    def neighbor_mean(self) -> float:
        return self.v_sum / self.v_samples if self.v_samples else math.nan

    def range_with_pdr_at_least(self, threshold: float = 0.9) -> float:
        """Upper edge of the contiguous run of bins (from zero) with PDR >= threshold."""
        pdr = self.pdr_by_distance()
        edge = 0.0
        for b in range(self.n_bins):
            if self.opp_bins[b] == 0:
                continue  # empty bin does not break the run
            if pdr[b] >= threshold:
                edge = (b + 1) * self.bin_width_m
            else:
                break
        return edge

    def update_delay_percentile_s(self, q: float = 0.999) -> float:
        total = int(self.ipg_counts.sum())
        if total == 0:
            return math.nan
        cum = np.cumsum(self.ipg_counts)
        m = int(np.searchsorted(cum, q * total))
        return m * self.period_s

    def ipg_ccdf(self):
        """(delay_s, P[IPG >= delay]) at every observed multiple of the period."""
        total = int(self.ipg_counts.sum())
        if total == 0:
            return np.array([]), np.array([])
        ms = np.nonzero(self.ipg_counts)[0]
        tail = total - np.cumsum(self.ipg_counts)[ms] + self.ipg_counts[ms]
        return ms * self.period_s, tail / total

    def conservation_defect(self) -> int:
        return self.opportunities - (self.received + self.lost_sinr
                                     + self.lost_half_duplex + self.lost_expiry)


def collect(report: MetricsReport, rx: int, tx: int, t_reception_s: float,
            distance_m: float, generation_time_s: float | None = None) -> MetricsReport:
    """Credit one adjudicated reception (scalar surface mirroring the engine path).

    The first reception of a (tx, rx) pair contributes no IPG sample; later
    ones append the generation-time gap in whole beacon periods when the pair
    is within the awareness range.
    """
    if generation_time_s is None:
        generation_time_s = t_reception_s
    b = min(int(distance_m / report.bin_width_m), report.n_bins - 1)
    report.succ_bins[b] += 1
    report.received += 1
    if distance_m <= report.awareness_range_m:
        report.succ_100m += 1
    if not hasattr(report, "_pair_last_gen"):
        report._pair_last_gen = {}
    prev = report._pair_last_gen.get((tx, rx))
    if prev is not None and distance_m <= report.awareness_range_m:
        m = max(1, int(round((generation_time_s - prev) / report.period_s)))
        if m >= report.ipg_counts.size:
            grown = np.zeros(m + 1, dtype=np.int64)
            grown[:report.ipg_counts.size] = report.ipg_counts
            report.ipg_counts = grown
        report.ipg_counts[m] += 1
    report._pair_last_gen[(tx, rx)] = generation_time_s
    return report


# ---------------------------------------------------------------------------
# reception adjudication (scalar reference; the engine uses a vectorized twin)
# ---------------------------------------------------------------------------

def _overlaps(ev: TransmissionEvent, t0: int, t1: int) -> bool:
    return ev.t_start_us < t1 and ev.t_start_us + ev.airtime_us > t0


def adjudicate_reception(rx: int, tx_event: TransmissionEvent, concurrent,
                         channel: propagation.ChannelRealization, tech: Technology,
                         prop_cfg: propagation.PropagationConfig,
                         channel_bandwidth_hz: float = 10e6,
                         policy: str = "mean") -> bool:
    """Decide one (transmission, receiver) outcome from SINR and half duplex.

    LTE interference counts only co-slot transmissions; orthogonal slots of
    the same subframe do not interfere but still blind their transmitters.
    """
    if rx == tx_event.tx_id:
        return False
    mcs = phy.mcs_profile(tx_event.mcs)
    t0 = tx_event.t_start_us
    t1 = t0 + tx_event.airtime_us
    overl = [ev for ev in concurrent
             if ev is not tx_event and ev.tx_id != tx_event.tx_id and _overlaps(ev, t0, t1)]
    if any(ev.tx_id == rx for ev in overl):
        return False  # the receiver transmitted during the packet
    noise_mw = float(propagation.dbm_to_mw(propagation.noise_dbm(
        phy.occupied_bandwidth_hz(tech, mcs, channel_bandwidth_hz), prop_cfg)))
    rx_mw = float(propagation.dbm_to_mw(tx_event.power_dbm + channel.gain(tx_event.tx_id, rx)))

    if tech is Technology.LTEV2X:
        interferers = [ev for ev in overl if ev.slot == tx_event.slot]
        i_mw = sum(float(propagation.dbm_to_mw(ev.power_dbm + channel.gain(ev.tx_id, rx)))
                   for ev in interferers)
    else:
        bounds = sorted({t0, t1, *(max(ev.t_start_us, t0) for ev in overl),
                         *(min(ev.t_start_us + ev.airtime_us, t1) for ev in overl)})
        worst, weighted = 0.0, 0.0
        for s, e in zip(bounds[:-1], bounds[1:]):
            seg = sum(float(propagation.dbm_to_mw(ev.power_dbm + channel.gain(ev.tx_id, rx)))
                      for ev in overl if ev.t_start_us <= s < ev.t_start_us + ev.airtime_us)
            worst = max(worst, seg)
            weighted += seg * (e - s)
        i_mw = worst if policy == "worst" else weighted / (t1 - t0)

    sinr = 10.0 * math.log10(rx_mw / (noise_mw + i_mw))
    return phy.decode(sinr, mcs)


# ---------------------------------------------------------------------------
# shared replication scaffolding
# ---------------------------------------------------------------------------

class _ReplicationBase:
    def __init__(self, cfg: SimConfig, drop: scenario_mod.RoadScenario,
                 channel: propagation.ChannelRealization, rng,
                 trace_mac=None, trace_dcc=None, runtime_checks: bool = True):
        self.cfg = cfg
        self.drop = drop
        self.rng = rng
        self.trace_mac = trace_mac
        self.trace_dcc = trace_dcc
        self.runtime_checks = runtime_checks

        n = drop.n_vehicles
        self.n = n
        self.mcs = phy.mcs_profile(cfg.mcs)
        self.period_us = cfg.beacon_period_us
        self.sim_end_us = int(round(cfg.sim_time_s * 1e6))
        self.warmup_us = int(round(cfg.effective_warmup_s * 1e6))
        self.thr_lin = 10.0 ** (self.mcs.min_sinr_db / 10.0)

        met = cfg.metrics
        self.n_bins = int(round(met.max_distance_m / met.bin_width_m))
        dist = scenario_mod.distance_matrix(drop)
        self.dist = dist
        self.rxlin = float(propagation.dbm_to_mw(cfg.tx_power_dbm)) * channel.gain_linear()

        within = (dist <= met.max_distance_m) & ~np.eye(n, dtype=bool)
        self.recv_idx = [np.nonzero(within[i])[0] for i in range(n)]
        self.recv_count = within.sum(axis=1).astype(np.int64)
        self.bins_of = [np.minimum((dist[i, self.recv_idx[i]] / met.bin_width_m).astype(np.int64),
                                   self.n_bins - 1) for i in range(n)]
        self.within = within
        neigh = (dist <= met.awareness_range_m) & ~np.eye(n, dtype=bool)
        self.neigh_mask = neigh
        self.neigh_idx = [np.nonzero(neigh[i])[0] for i in range(n)]

        self.last_gen = np.full((n, n), -1, dtype=np.int64)
        self.last_rx = np.full((n, n), np.iinfo(np.int64).min // 2, dtype=np.int64)
        self.expiry_us = int(round(met.neighbor_expiry_periods * self.period_us))

        cap = int(cfg.sim_time_s / (self.period_us * 1e-6)) + 3
        self.report = MetricsReport(
            bin_width_m=met.bin_width_m, n_bins=self.n_bins,
            period_s=self.period_us * 1e-6, awareness_range_m=met.awareness_range_m,
            ipg_counts=np.zeros(cap, dtype=np.int64))
        self.ipg_cap = cap - 1

        self.epoch_us = int(round(met.cbr_update_s * 1e6))
        self.ring_depth = max(1, int(round(met.tau_sense_s / met.cbr_update_s)))
        self.tau_us = self.ring_depth * self.epoch_us

    # -- beacon-level accounting ---------------------------------------------

    def _counts(self, generation_time_us: int) -> bool:
        return generation_time_us >= self.warmup_us

    def on_generated(self, node: int, gen_us: int) -> None:
        if self._counts(gen_us):
            self.report.generated += 1
            self.report.opportunities += int(self.recv_count[node])

    def on_expired(self, node: int, gen_us: int) -> None:
        if self._counts(gen_us):
            self.report.lost_expiry += int(self.recv_count[node])

    def record_outcomes(self, i: int, ok: np.ndarray, blocked_ids, gen_us: int,
                        t_rx_us: int) -> None:
        """Fold one transmission's per-receiver outcomes into the report.

        Half-duplex-blocked receivers stay in the conservation ledger but are
        not PDR opportunities: a transceiver that was sending could not have
        received any message, so the distance histogram isolates radio losses.
        """
        rep = self.report
        if self._counts(gen_us):
            rep.transmitted += 1
            recv = self.recv_idx[i]
            ok_recv = ok[recv]
            n_ok = int(ok_recv.sum())
            rep.received += n_ok
            rep.succ_bins += np.bincount(self.bins_of[i], weights=ok_recv,
                                         minlength=self.n_bins)
            neigh = self.neigh_idx[i]
            rep.succ_100m += int(ok[neigh].sum())
            if len(blocked_ids):
                blocked_in = int(self.within[i, blocked_ids].sum())
                open_mask = np.ones(self.n, dtype=bool)
                open_mask[blocked_ids] = False
                rep.opp_bins += np.bincount(self.bins_of[i][open_mask[recv]],
                                            minlength=self.n_bins)
                rep.opp_100m += int(open_mask[neigh].sum())
            else:
                blocked_in = 0
                rep.opp_bins += np.bincount(self.bins_of[i], minlength=self.n_bins)
                rep.opp_100m += neigh.size
            rep.lost_half_duplex += blocked_in
            rep.lost_sinr += int(self.recv_count[i]) - n_ok - blocked_in

        # pair state and IPG samples (awareness range only)
        neigh = self.neigh_idx[i]
        rcv = neigh[ok[neigh]]
        if rcv.size:
            prev = self.last_gen[i, rcv]
            if self._counts(gen_us):
                has_prev = prev >= 0
                if has_prev.any():
                    m = np.rint((gen_us - prev[has_prev]) / self.period_us).astype(np.int64)
                    np.clip(m, 1, self.ipg_cap, out=m)
                    np.add.at(rep.ipg_counts, m, 1)
            self.last_gen[i, rcv] = gen_us
            self.last_rx[i, rcv] = t_rx_us

    def sample_dcc(self, t_us: int, cbr_vec: np.ndarray) -> None:
        """One CBR/neighbor sample per node at an epoch boundary past the warmup."""
        rep = self.report
        rep.cbr_sum += float(cbr_vec.sum())
        rep.cbr_samples += self.n
        fresh = (t_us - self.last_rx) <= self.expiry_us
        v_vec = (fresh & self.neigh_mask).sum(axis=0)
        rep.v_sum += float(v_vec.sum())
        rep.v_samples += self.n
        if self.trace_dcc is not None:
            cr = self._own_cr()
            for node in range(self.n):
                self.trace_dcc(t_us * 1e-6, node, float(cbr_vec[node]), cr, int(v_vec[node]))

    def _own_cr(self) -> float:
        if self.cfg.technology is Technology.LTEV2X:
            return dcc.cr_lte(1, self.mcs.packets_per_tti, self.cfg.beacon_rate_hz)
        return dcc.cr_11p(self.mcs.airtime_11p_us, self.cfg.beacon_rate_hz)


# ---------------------------------------------------------------------------
# 802.11p* replication
# ---------------------------------------------------------------------------

_PRIO_TX_END, _PRIO_TIMER, _PRIO_GEN, _PRIO_EPOCH = 0, 1, 2, 3


class _CsmaReplication(_ReplicationBase):
    def __init__(self, cfg, drop, channel, rng, **kw):
        super().__init__(cfg, drop, channel, rng, **kw)
        self.airtime_us = phy.airtime_us(self.mcs, Technology.IEEE80211P_STAR)
        self.noise_mw = float(propagation.dbm_to_mw(propagation.noise_dbm(
            phy.occupied_bandwidth_hz(Technology.IEEE80211P_STAR, self.mcs,
                                      cfg.channel_bandwidth_hz), cfg.propagation)))
        self.cs_thr_mw = float(propagation.dbm_to_mw(cfg.csma.cs_threshold_dbm))

        n = self.n
        self.sm = [mac_csma.CsmaNodeState() for _ in range(n)]
        self.timer_version = [0] * n
        self.sensed_mw = np.zeros(n)
        self.busy = np.zeros(n, dtype=bool)
        self.deaf = np.zeros(n, dtype=bool)

        self.epoch_busy_us = np.zeros(n)
        self.epoch_tx_us = np.zeros(n)
        self.busy_ring = np.zeros((self.ring_depth, n))
        self.tx_ring = np.zeros((self.ring_depth, n))
        self.epochs_done = 0
        self.last_accrue_us = 0

        self.active: dict[int, TransmissionEvent] = {}
        self.overlap_log: dict[TransmissionEvent, list] = {}
        self.heap: list = []
        self.seq = itertools.count()
        self.beacon_seq = itertools.count()

    # -- event plumbing -----------------------------------------------------

    def _push(self, t_us: int, prio: int, payload) -> None:
        heapq.heappush(self.heap, (t_us, prio, next(self.seq), payload))

    def _schedule_timer(self, node: int, kind: str, delay_us: int, t_us: int) -> None:
        self.timer_version[node] += 1
        self._push(t_us + delay_us, _PRIO_TIMER, ("timer", node, self.timer_version[node], kind))

    def _cancel_timer(self, node: int) -> None:
        self.timer_version[node] += 1

    def _accrue(self, t_us: int) -> None:
        dt = t_us - self.last_accrue_us
        if dt > 0:
            self.epoch_busy_us += dt * (self.busy & ~self.deaf)
            self.epoch_tx_us += dt * self.deaf
            self.last_accrue_us = t_us

    def _handle_action(self, node: int, res: mac_csma.StepResult, t_us: int, starts) -> None:
        if res.dropped_beacon is not None:
            self.on_expired(node, res.dropped_beacon.generation_time_us)
        if res.action is MacAction.SCHEDULE_AIFS:
            self._schedule_timer(node, "aifs", self.cfg.csma.aifs_us, t_us)
        elif res.action is MacAction.SCHEDULE_SLOT:
            self._schedule_timer(node, "slot", self.cfg.csma.slot_us, t_us)
        elif res.action is MacAction.START_TX:
            starts.append(node)

    def _trace(self, t_us, node, what) -> None:
        if self.trace_mac is not None:
            self.trace_mac(t_us, node, what, self.sm[node].phase.value)

    # -- main loop ------------------------------------------------------------

    def run(self) -> MetricsReport:
        rng, cfg = self.rng, self.cfg
        self._gen_times = {}
        self._gen_pos = {}
        for node in range(self.n):
            gen = generation_times_us(cfg.beacon_rate_hz, self.sim_end_us, rng,
                                      period_us=self.period_us)
            self._gen_times[node] = gen
            self._gen_pos[node] = 0
            if gen.size:
                self._push(int(gen[0]), _PRIO_GEN, ("gen", node))
        self._push(self.epoch_us, _PRIO_EPOCH, ("epoch",))

        heap = self.heap
        while heap:
            t_us = heap[0][0]
            batch = []
            while heap and heap[0][0] == t_us:
                batch.append(heapq.heappop(heap))

            ends = [b for b in batch if b[1] == _PRIO_TX_END]
            mids = [b for b in batch if b[1] in (_PRIO_TIMER, _PRIO_GEN)]
            epochs = [b for b in batch if b[1] == _PRIO_EPOCH]

            completions = []
            power_changed = False
            if ends:
                self._accrue(t_us)
                power_changed = True
                for _, _, _, payload in ends:
                    ev = payload[1]
                    self._end_tx(ev, t_us)
                    completions.append(ev.tx_id)

            starts: list[int] = []
            busy_before = self.busy.copy()
            for _, _, _, payload in mids:
                if payload[0] == "timer":
                    _, node, version, kind = payload
                    if version != self.timer_version[node]:
                        continue  # cancelled
                    event = CsmaEvent.AIFS_ELAPSED if kind == "aifs" else CsmaEvent.SLOT_ELAPSED
                    self._trace(t_us, node, kind)
                    res = mac_csma.step(self.sm[node], event, rng, cfg.csma)
                    self._handle_action(node, res, t_us, starts)
                else:  # generation
                    _, node = payload
                    self._on_gen(node, t_us, starts)

            if starts:
                self._accrue(t_us)
                power_changed = True
                for node in starts:
                    self._start_tx(node, t_us)

            if power_changed:
                self._dispatch_flips(busy_before, t_us, starts)

            for node in completions:
                sm = self.sm[node]
                sm.channel_busy = bool(self.busy[node])
                self._trace(t_us, node, "tx_complete")
                res = mac_csma.step(sm, CsmaEvent.TX_COMPLETE, rng, cfg.csma)
                self._handle_action(node, res, t_us, starts)

            for _ in epochs:
                self._on_epoch(t_us)

        # drain bookkeeping: beacons still queued when the run ends expire
        for node, sm in enumerate(self.sm):
            if sm.queued_beacon is not None:
                self.on_expired(node, sm.queued_beacon.generation_time_us)
        return self.report

    # -- handlers -------------------------------------------------------------

    def _on_gen(self, node: int, t_us: int, starts) -> None:
        pos = self._gen_pos[node] + 1
        self._gen_pos[node] = pos
        times = self._gen_times[node]
        if pos < times.size:
            self._push(int(times[pos]), _PRIO_GEN, ("gen", node))

        beacon = QueuedBeacon(seq=next(self.beacon_seq), generation_time_us=t_us)
        self.on_generated(node, t_us)
        sm = self.sm[node]
        if sm.phase is CsmaPhase.IDLE:
            sm.channel_busy = bool(self.busy[node])
        self._trace(t_us, node, "beacon_ready")
        res = mac_csma.step(sm, CsmaEvent.BEACON_READY, self.rng, self.cfg.csma, beacon=beacon)
        self._handle_action(node, res, t_us, starts)

    def _start_tx(self, node: int, t_us: int) -> None:
        if self.runtime_checks and self.busy[node]:
            raise SimulationError(f"node {node} started transmitting into a busy channel")
        beacon = self.sm[node].on_air_beacon
        ev = TransmissionEvent(tx_id=node, t_start_us=t_us, airtime_us=self.airtime_us,
                               power_dbm=self.cfg.tx_power_dbm, mcs=self.cfg.mcs,
                               beacon_seq=beacon.seq,
                               generation_time_us=beacon.generation_time_us)
        self.overlap_log[ev] = list(self.active.values())
        for other in self.active.values():
            self.overlap_log[other].append(ev)
        self.active[node] = ev
        self.deaf[node] = True
        self.sensed_mw += self.rxlin[node]
        self._push(t_us + self.airtime_us, _PRIO_TX_END, ("tx_end", ev))
        self._trace(t_us, node, "tx_start")

    def _end_tx(self, ev: TransmissionEvent, t_us: int) -> None:
        node = ev.tx_id
        del self.active[node]
        self.deaf[node] = False
        self.sensed_mw -= self.rxlin[node]
        np.maximum(self.sensed_mw, 0.0, out=self.sensed_mw)
        self._adjudicate(ev, t_us)
        self._trace(t_us, node, "tx_end")

    def _dispatch_flips(self, busy_before: np.ndarray, t_us: int, starts) -> None:
        np.greater_equal(self.sensed_mw, self.cs_thr_mw, out=self.busy)
        changed = np.nonzero(self.busy != busy_before)[0]
        for node in changed:
            sm = self.sm[node]
            if self.deaf[node] or sm.phase in (CsmaPhase.IDLE, CsmaPhase.TRANSMITTING):
                continue
            if self.busy[node]:
                self._cancel_timer(node)
                self._trace(t_us, node, "busy")
                res = mac_csma.step(sm, CsmaEvent.CHANNEL_BECOMES_BUSY, self.rng, self.cfg.csma)
            else:
                self._trace(t_us, node, "idle")
                res = mac_csma.step(sm, CsmaEvent.CHANNEL_BECOMES_IDLE, self.rng, self.cfg.csma)
            self._handle_action(node, res, t_us, starts)

    def _adjudicate(self, ev: TransmissionEvent, t_end_us: int) -> None:
        i = ev.tx_id
        t0 = ev.t_start_us
        overl = [ov for ov in self.overlap_log.pop(ev) if _overlaps(ov, t0, t_end_us)]
        if overl:
            bounds = sorted({t0, t_end_us,
                             *(max(ov.t_start_us, t0) for ov in overl),
                             *(min(ov.t_start_us + ov.airtime_us, t_end_us) for ov in overl)})
            i_mw = np.zeros(self.n)
            weighted = np.zeros(self.n) if self.cfg.metrics.sinr_policy == "mean" else None
            for s, e in zip(bounds[:-1], bounds[1:]):
                seg = np.zeros(self.n)
                for ov in overl:
                    if ov.t_start_us <= s < ov.t_start_us + ov.airtime_us:
                        seg += self.rxlin[ov.tx_id]
                if weighted is None:
                    np.maximum(i_mw, seg, out=i_mw)
                else:
                    weighted += seg * (e - s)
            if weighted is not None:
                i_mw = weighted / (t_end_us - t0)
            blocked = sorted({ov.tx_id for ov in overl})
        else:
            i_mw = 0.0
            blocked = []

        sinr_lin = self.rxlin[i] / (self.noise_mw + i_mw)
        ok = sinr_lin >= self.thr_lin
        ok[i] = False
        if blocked:
            ok[blocked] = False
        self.record_outcomes(i, ok, blocked, ev.generation_time_us, t_end_us)

    def _on_epoch(self, t_us: int) -> None:
        self._accrue(t_us)
        k = self.epochs_done % self.ring_depth
        self.busy_ring[k] = self.epoch_busy_us
        self.tx_ring[k] = self.epoch_tx_us
        self.epoch_busy_us = np.zeros(self.n)
        self.epoch_tx_us = np.zeros(self.n)
        self.epochs_done += 1
        if t_us >= self.warmup_us and self.epochs_done >= self.ring_depth:
            cbr_vec = (self.busy_ring.sum(axis=0) + self.tx_ring.sum(axis=0)) / self.tau_us
            self.sample_dcc(t_us, cbr_vec)
        if t_us + self.epoch_us <= self.sim_end_us:
            self._push(t_us + self.epoch_us, _PRIO_EPOCH, ("epoch",))


# ---------------------------------------------------------------------------
# LTE-V2X Mode 4 replication
# ---------------------------------------------------------------------------

class _SpsReplication(_ReplicationBase):
    def __init__(self, cfg, drop, channel, rng, initial_reservations=None, **kw):
        super().__init__(cfg, drop, channel, rng, **kw)
        m_tot = self.mcs.packets_per_tti
        self.m_tot = m_tot
        self.grid = mac_sps.ResourceGrid(
            slots_per_subframe=m_tot, period_sf=cfg.period_sf,
            selection_window_sf=mac_sps.selection_window_sf(
                cfg.period_sf, cfg.sps.selection_window_cap_sf),
            sensing_window_sf=cfg.sps.sensing_window_sf)
        self.bank = mac_sps.SpsSensingBank(self.n, self.grid)
        self.noise_mw = float(propagation.dbm_to_mw(propagation.noise_dbm(
            phy.occupied_bandwidth_hz(Technology.LTEV2X, self.mcs,
                                      cfg.channel_bandwidth_hz), cfg.propagation)))
        self.sense_thr_mw = float(propagation.dbm_to_mw(cfg.sps.sensing_threshold_dbm))

        n = self.n
        self.res_phase = np.full(n, -1, dtype=np.int64)
        self.res_slot = np.zeros(n, dtype=np.int64)
        self.rc = np.zeros(n, dtype=np.int64)
        self.needs_resel = np.ones(n, dtype=bool)
        self.pending_gen = np.full(n, -1, dtype=np.int64)
        self.pending_seq = np.zeros(n, dtype=np.int64)
        if initial_reservations:
            for node, (ph, sl, rc) in initial_reservations.items():
                self.res_phase[node] = ph
                self.res_slot[node] = sl
                self.rc[node] = rc
                self.needs_resel[node] = False

        self.epoch_sf = max(1, self.epoch_us // 1000)
        self.busy_ring = np.zeros((self.ring_depth, n), dtype=np.int64)
        self.stx_ring = np.zeros((self.ring_depth, n), dtype=np.int64)
        self.epoch_busy = np.zeros(n, dtype=np.int64)
        self.epoch_stx = np.zeros(n, dtype=np.int64)
        self.epochs_done = 0
        self.beacon_seq = itertools.count()

    def run(self) -> MetricsReport:
        cfg, rng = self.cfg, self.rng
        total_sf = (self.sim_end_us + 999) // 1000
        gens_by_sf: dict[int, list] = {}
        for node in range(self.n):
            for g in generation_times_us(cfg.beacon_rate_hz, self.sim_end_us, rng,
                                         period_us=self.period_us):
                gens_by_sf.setdefault(int(g) // 1000, []).append((int(g), node))
        for lst in gens_by_sf.values():
            lst.sort()

        sf = 0
        drain_limit = total_sf + self.grid.period_sf + 2
        while sf < total_sf or (np.any(self.pending_gen >= 0) and sf < drain_limit):
            self._run_subframe(sf, gens_by_sf.get(sf, ()))
            sf += 1

        for node in np.nonzero(self.pending_gen >= 0)[0]:
            self.on_expired(int(node), int(self.pending_gen[node]))
        return self.report

    def _run_subframe(self, sf: int, gens) -> None:
        cfg, rng = self.cfg, self.rng
        phase_now = sf % self.grid.period_sf
        tx_nodes = np.nonzero((self.pending_gen >= 0) & ~self.needs_resel
                              & (self.res_phase == phase_now))[0]

        rssi = np.zeros((self.m_tot, self.n))
        tx_mask = np.zeros(self.n, dtype=bool)
        tx_mask[tx_nodes] = True
        slots: dict[int, list[int]] = {}
        for node in tx_nodes:
            slots.setdefault(int(self.res_slot[node]), []).append(int(node))
        for s, nodes in slots.items():
            for node in nodes:
                rssi[s] += self.rxlin[node]

        t_rx_us = (sf + 1) * 1000
        for s, nodes in sorted(slots.items()):
            sum_slot = rssi[s]
            for i in nodes:
                sinr_lin = self.rxlin[i] / (self.noise_mw + (sum_slot - self.rxlin[i]))
                ok = sinr_lin >= self.thr_lin
                ok[tx_nodes] = False
                self.record_outcomes(i, ok, tx_nodes, int(self.pending_gen[i]), t_rx_us)
                if self.trace_mac is not None:
                    self.trace_mac(sf, i, s, int(self.rc[i]))

        self.bank.record_subframe(sf, rssi, tx_mask)
        busy_cnt = (rssi >= self.sense_thr_mw).sum(axis=0)
        busy_cnt[tx_nodes] = 0
        self.epoch_busy += busy_cnt
        self.epoch_stx[tx_nodes] += 1

        # reservation upkeep after this subframe's transmissions
        for node in tx_nodes:
            self.pending_gen[node] = -1
            self.rc[node] -= 1
            if self.rc[node] <= 0:
                if rng.random() < cfg.sps.keep_probability:
                    self.rc[node] = mac_sps.draw_rc(rng, self.grid.period_sf, cfg.sps)
                else:
                    self.needs_resel[node] = True
                    self.res_phase[node] = -1

        for g_us, node in gens:
            if self.pending_gen[node] >= 0:
                self.on_expired(node, int(self.pending_gen[node]))
            self.pending_gen[node] = g_us
            self.pending_seq[node] = next(self.beacon_seq)
            self.on_generated(node, g_us)
            if self.needs_resel[node]:
                ph, sl, rc = mac_sps.sps_select(self.bank, node, sf, cfg.sps, rng)
                self.res_phase[node] = ph
                self.res_slot[node] = sl
                self.rc[node] = rc
                self.needs_resel[node] = False

        if (sf + 1) % self.epoch_sf == 0:
            t_us = (sf + 1) * 1000
            k = self.epochs_done % self.ring_depth
            self.busy_ring[k] = self.epoch_busy
            self.stx_ring[k] = self.epoch_stx
            self.epoch_busy = np.zeros(self.n, dtype=np.int64)
            self.epoch_stx = np.zeros(self.n, dtype=np.int64)
            self.epochs_done += 1
            if (t_us >= self.warmup_us and t_us <= self.sim_end_us
                    and self.epochs_done >= self.ring_depth):
                window_sf = self.ring_depth * self.epoch_sf
                cbr_vec = ((self.busy_ring.sum(axis=0)
                            + self.stx_ring.sum(axis=0) * self.m_tot)
                           / (window_sf * self.m_tot))
                self.sample_dcc(t_us, cbr_vec)


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def _build_drop(cfg: SimConfig, seed: int) -> scenario_mod.RoadScenario:
    if cfg.positions_file:
        return scenario_mod.scenario_from_file(cfg.positions_file, cfg.road_length_m,
                                               cfg.wraparound)
    drop = scenario_mod.generate_drop(cfg.density_veh_per_km, cfg.road_length_m, seed)
    if not cfg.wraparound:
        drop = replace(drop, wraparound=False)
    return drop


def run_replication(cfg: SimConfig, rep_index: int, drop=None, initial_reservations=None,
                    trace_mac=None, trace_dcc=None, runtime_checks=True) -> MetricsReport:
    """One deterministic replication; independent RNG streams per (seed, rep_index)."""
    root = np.random.SeedSequence([cfg.seed, rep_index])
    kids = root.spawn(3)
    if drop is None:
        drop = _build_drop(cfg, int(kids[0].generate_state(1)[0]))
    channel = propagation.build_channel(drop, cfg.propagation,
                                        int(kids[1].generate_state(1)[0]))
    rng = np.random.default_rng(kids[2])
    common = dict(trace_mac=trace_mac, trace_dcc=trace_dcc, runtime_checks=runtime_checks)
    if cfg.technology is Technology.LTEV2X:
        rep = _SpsReplication(cfg, drop, channel, rng,
                              initial_reservations=initial_reservations, **common)
    else:
        rep = _CsmaReplication(cfg, drop, channel, rng, **common)
    report = rep.run()
    report.config_echo = cfg.to_dict()
    return report


def run(cfg: SimConfig, drop=None, initial_reservations=None,
        trace_mac=None, trace_dcc=None, runtime_checks=True) -> MetricsReport:
    """Run all replications of one configuration and merge their reports."""
    cfg.validate()
    merged = None
    for rep_index in range(cfg.replications):
        rep = run_replication(cfg, rep_index, drop=drop,
                              initial_reservations=initial_reservations,
                              trace_mac=trace_mac, trace_dcc=trace_dcc,
                              runtime_checks=runtime_checks)
        merged = rep if merged is None else merged.merge(rep)
    merged.config_echo = cfg.to_dict()
    return merged
