"""Broadcast CSMA/CA as used for 802.11p beaconing.

Single access category, no acknowledgements, no retransmissions, fixed
contention window. Every access attempt draws a fresh random backoff; after
an idle AIFS the counter runs down one decrement per fully idle slot (a zero
draw transmits right at the AIFS boundary) and freezes across busy periods,
resuming after the next idle AIFS. A transmitting node is deaf (half duplex).

The state machine here is pure: the simulation engine owns the clock, carrier
sensing and timers, and feeds events in. Inconsistent (phase, event) pairs
raise, which doubles as a conformance check on the engine's event discipline.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import propagation


class StateMachineError(RuntimeError):
    """Event delivered in a phase that cannot accept it."""


@dataclass(frozen=True)
class CsmaConfig:
    aifs_us: int = 110
    slot_us: int = 13
    cw_max_slots: int = 15
    cs_threshold_dbm: float = -65.0

    def __post_init__(self):
        if self.aifs_us <= 0 or self.slot_us <= 0:
            raise ValueError("AIFS and slot durations must be positive")
        if self.cw_max_slots < 0:
            raise ValueError("contention window must be >= 0")


class CsmaPhase(enum.Enum):
    IDLE = "idle"
    WAIT_AIFS = "wait_aifs"
    BACKOFF = "backoff"
    TRANSMITTING = "transmitting"


class CsmaEvent(enum.Enum):
    BEACON_READY = "beacon_ready"
    CHANNEL_BECOMES_IDLE = "channel_becomes_idle"
    CHANNEL_BECOMES_BUSY = "channel_becomes_busy"
    AIFS_ELAPSED = "aifs_elapsed"
    SLOT_ELAPSED = "slot_elapsed"
    TX_COMPLETE = "tx_complete"


class MacAction(enum.Enum):
    START_TX = "start_tx"
    SCHEDULE_AIFS = "schedule_aifs"
    SCHEDULE_SLOT = "schedule_slot"


@dataclass(frozen=True)
class QueuedBeacon:
    seq: int
    generation_time_us: int


@dataclass
class StepResult:
    action: MacAction | None = None
    dropped_beacon: QueuedBeacon | None = None


@dataclass
class CsmaNodeState:
    phase: CsmaPhase = CsmaPhase.IDLE
    backoff_slots_remaining: int | None = None
    queued_beacon: QueuedBeacon | None = None
    on_air_beacon: QueuedBeacon | None = None
    channel_busy: bool = False


def sense_busy(node: int, t_us: int, active_tx, channel: propagation.ChannelRealization,
               cfg: CsmaConfig) -> bool:
    """True iff the summed received power of concurrent transmissions reaches the CS threshold.

    The caller must not ask for a node that is itself transmitting (deaf).
    """
    total_mw = 0.0
    for ev in active_tx:
        if ev.tx_id == node:
            raise StateMachineError("carrier sense queried for a transmitting node")
        if ev.t_start_us <= t_us < ev.t_start_us + ev.airtime_us:
            total_mw += float(propagation.dbm_to_mw(ev.power_dbm + channel.gain(ev.tx_id, node)))
    return total_mw >= float(propagation.dbm_to_mw(cfg.cs_threshold_dbm))


def _draw_backoff(rng, cfg: CsmaConfig) -> int:
    return int(rng.integers(0, cfg.cw_max_slots + 1))


def _begin_access(node: CsmaNodeState, rng, cfg: CsmaConfig) -> MacAction | None:
    """Entry point of a fresh channel-access attempt for the queued beacon."""
    node.backoff_slots_remaining = _draw_backoff(rng, cfg)
    if node.channel_busy:
        node.phase = CsmaPhase.BACKOFF
        return None  # frozen until the channel goes idle
    node.phase = CsmaPhase.WAIT_AIFS
    return MacAction.SCHEDULE_AIFS


def step(node: CsmaNodeState, event: CsmaEvent, rng, cfg: CsmaConfig,
         beacon: QueuedBeacon | None = None) -> StepResult:
    """Advance one node state machine; returns the action the engine must perform."""
    res = StepResult()
    phase = node.phase

    if event is CsmaEvent.BEACON_READY:
        if beacon is None:
            raise StateMachineError("BEACON_READY without a beacon")
        if node.queued_beacon is not None:
            # saturation: the fresh beacon supersedes the stale queued one
            res.dropped_beacon = node.queued_beacon
        node.queued_beacon = beacon
        if phase is CsmaPhase.IDLE:
            res.action = _begin_access(node, rng, cfg)
        # in WAIT_AIFS / BACKOFF / TRANSMITTING the ongoing access continues
        return res

    if event is CsmaEvent.CHANNEL_BECOMES_BUSY:
        if phase is CsmaPhase.TRANSMITTING:
            raise StateMachineError("busy indication delivered to a deaf transmitter")
        if node.channel_busy:
            raise StateMachineError("busy indication while already busy")
        node.channel_busy = True
        if phase is CsmaPhase.WAIT_AIFS:
            if node.backoff_slots_remaining is None:
                node.backoff_slots_remaining = _draw_backoff(rng, cfg)
            node.phase = CsmaPhase.BACKOFF
        # in BACKOFF the counter freezes; engine cancels the pending slot timer
        return res

    if event is CsmaEvent.CHANNEL_BECOMES_IDLE:
        if phase is CsmaPhase.TRANSMITTING:
            raise StateMachineError("idle indication delivered to a deaf transmitter")
        if not node.channel_busy:
            raise StateMachineError("idle indication while already idle")
        node.channel_busy = False
        if phase is CsmaPhase.BACKOFF:
            node.phase = CsmaPhase.WAIT_AIFS
            res.action = MacAction.SCHEDULE_AIFS
        return res

    if event is CsmaEvent.AIFS_ELAPSED:
        if phase is not CsmaPhase.WAIT_AIFS or node.channel_busy:
            raise StateMachineError(f"AIFS_ELAPSED in phase {phase} (busy={node.channel_busy})")
        if not node.backoff_slots_remaining:
            # zero draw (or no counter at all): the AIFS boundary is the tx instant
            node.phase = CsmaPhase.TRANSMITTING
            node.on_air_beacon = node.queued_beacon
            node.queued_beacon = None
            res.action = MacAction.START_TX
        else:
            node.phase = CsmaPhase.BACKOFF
            res.action = MacAction.SCHEDULE_SLOT
        return res

    if event is CsmaEvent.SLOT_ELAPSED:
        if phase is not CsmaPhase.BACKOFF or node.channel_busy:
            raise StateMachineError(f"SLOT_ELAPSED in phase {phase} (busy={node.channel_busy})")
        if not node.backoff_slots_remaining:
            raise StateMachineError("slot elapsed with no backoff pending")
        node.backoff_slots_remaining -= 1
        if node.backoff_slots_remaining == 0:
            node.phase = CsmaPhase.TRANSMITTING
            node.on_air_beacon = node.queued_beacon
            node.queued_beacon = None
            res.action = MacAction.START_TX
        else:
            res.action = MacAction.SCHEDULE_SLOT
        return res

    if event is CsmaEvent.TX_COMPLETE:
        if phase is not CsmaPhase.TRANSMITTING:
            raise StateMachineError(f"TX_COMPLETE in phase {phase}")
        node.on_air_beacon = None
        node.phase = CsmaPhase.IDLE
        if node.queued_beacon is not None:
            res.action = _begin_access(node, rng, cfg)
        return res

    raise StateMachineError(f"unhandled event {event}")
