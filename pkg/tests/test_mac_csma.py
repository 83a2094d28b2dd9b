import numpy as np
import pytest

from beaconsim import mac_csma as mc
from beaconsim.engine import TransmissionEvent
from beaconsim.phy import Mcs
from conftest import ForcedRng, make_channel

CFG = mc.CsmaConfig()


def tx(node, t0=0, airtime=304, power=0.0):
    return TransmissionEvent(tx_id=node, t_start_us=t0, airtime_us=airtime,
                             power_dbm=power, mcs=Mcs.B, beacon_seq=0,
                             generation_time_us=0)


def test_sense_busy_empty_channel():
    ch = make_channel({}, 2)
    assert mc.sense_busy(1, 0, [], ch, CFG) is False


def test_sense_busy_single_strong():
    ch = make_channel({(0, 1): -60.0}, 2)
    assert mc.sense_busy(1, 10, [tx(0)], ch, CFG) is True


def test_sense_busy_linear_power_sum():
    # two signals at -68 dBm each sum to -64.99 dBm, just above -65
    ch = make_channel({(0, 2): -68.0, (1, 2): -68.0}, 3)
    active = [tx(0), tx(1)]
    assert mc.sense_busy(2, 5, active, ch, CFG) is True
    # one alone stays below threshold
    assert mc.sense_busy(2, 5, [tx(0)], ch, CFG) is False


def test_sense_busy_rejects_transmitting_node():
    ch = make_channel({(0, 1): -60.0}, 2)
    with pytest.raises(mc.StateMachineError):
        mc.sense_busy(0, 10, [tx(0)], ch, CFG)


def beacon(seq=0, t=0):
    return mc.QueuedBeacon(seq=seq, generation_time_us=t)


def test_idle_arrival_zero_draw_transmits_at_aifs_boundary():
    # a zero backoff draw transmits exactly one AIFS after the beacon arrival
    node = mc.CsmaNodeState()
    rng = ForcedRng(ints=[0])
    res = mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon())
    assert res.action is mc.MacAction.SCHEDULE_AIFS
    assert node.phase is mc.CsmaPhase.WAIT_AIFS
    res = mc.step(node, mc.CsmaEvent.AIFS_ELAPSED, rng, CFG)
    assert res.action is mc.MacAction.START_TX
    assert node.phase is mc.CsmaPhase.TRANSMITTING


def test_nonzero_draw_counts_idle_slots():
    node = mc.CsmaNodeState()
    rng = ForcedRng(ints=[3])
    mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon())
    res = mc.step(node, mc.CsmaEvent.AIFS_ELAPSED, rng, CFG)
    assert res.action is mc.MacAction.SCHEDULE_SLOT
    res = mc.step(node, mc.CsmaEvent.SLOT_ELAPSED, rng, CFG)
    assert res.action is mc.MacAction.SCHEDULE_SLOT
    assert node.backoff_slots_remaining == 2
    mc.step(node, mc.CsmaEvent.SLOT_ELAPSED, rng, CFG)
    res = mc.step(node, mc.CsmaEvent.SLOT_ELAPSED, rng, CFG)
    assert res.action is mc.MacAction.START_TX


def test_busy_channel_freezes_and_resumes_backoff():
    node = mc.CsmaNodeState(channel_busy=True)
    rng = ForcedRng(ints=[2])
    res = mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon())
    assert res.action is None
    assert node.phase is mc.CsmaPhase.BACKOFF
    assert node.backoff_slots_remaining == 2
    res = mc.step(node, mc.CsmaEvent.CHANNEL_BECOMES_IDLE, rng, CFG)
    assert res.action is mc.MacAction.SCHEDULE_AIFS
    mc.step(node, mc.CsmaEvent.AIFS_ELAPSED, rng, CFG)
    mc.step(node, mc.CsmaEvent.SLOT_ELAPSED, rng, CFG)
    assert node.backoff_slots_remaining == 1
    # busy again mid-backoff: freeze, then resume after idle AIFS
    mc.step(node, mc.CsmaEvent.CHANNEL_BECOMES_BUSY, rng, CFG)
    assert node.backoff_slots_remaining == 1
    mc.step(node, mc.CsmaEvent.CHANNEL_BECOMES_IDLE, rng, CFG)
    mc.step(node, mc.CsmaEvent.AIFS_ELAPSED, rng, CFG)
    res = mc.step(node, mc.CsmaEvent.SLOT_ELAPSED, rng, CFG)
    assert res.action is mc.MacAction.START_TX


def test_busy_whole_interval_never_transmits():
    node = mc.CsmaNodeState(channel_busy=True)
    rng = np.random.default_rng(0)
    mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon())
    for _ in range(1000):
        assert node.phase is not mc.CsmaPhase.TRANSMITTING


def test_beacon_replacement_reports_drop():
    node = mc.CsmaNodeState(channel_busy=True)
    rng = np.random.default_rng(0)
    mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon(seq=1))
    res = mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon(seq=2, t=100))
    assert res.dropped_beacon.seq == 1
    assert node.queued_beacon.seq == 2


def test_tx_complete_starts_queued_access():
    node = mc.CsmaNodeState()
    rng = ForcedRng(ints=[0, 1])
    mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon(seq=1))
    mc.step(node, mc.CsmaEvent.AIFS_ELAPSED, rng, CFG)
    mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon(seq=2))
    assert node.phase is mc.CsmaPhase.TRANSMITTING
    res = mc.step(node, mc.CsmaEvent.TX_COMPLETE, rng, CFG)
    assert res.action is mc.MacAction.SCHEDULE_AIFS
    assert node.queued_beacon.seq == 2


def test_inconsistent_events_raise():
    rng = np.random.default_rng(0)
    with pytest.raises(mc.StateMachineError):
        mc.step(mc.CsmaNodeState(), mc.CsmaEvent.AIFS_ELAPSED, rng, CFG)
    with pytest.raises(mc.StateMachineError):
        mc.step(mc.CsmaNodeState(), mc.CsmaEvent.TX_COMPLETE, rng, CFG)
    with pytest.raises(mc.StateMachineError):
        mc.step(mc.CsmaNodeState(), mc.CsmaEvent.SLOT_ELAPSED, rng, CFG)
    with pytest.raises(mc.StateMachineError):
        mc.step(mc.CsmaNodeState(channel_busy=False),
                mc.CsmaEvent.CHANNEL_BECOMES_IDLE, rng, CFG)
    busy_tx = mc.CsmaNodeState(phase=mc.CsmaPhase.TRANSMITTING)
    with pytest.raises(mc.StateMachineError):
        mc.step(busy_tx, mc.CsmaEvent.CHANNEL_BECOMES_BUSY, rng, CFG)


def test_backoff_draw_uniform():
    from scipy import stats

    rng = np.random.default_rng(123)
    counts = np.zeros(CFG.cw_max_slots + 1, dtype=int)
    for _ in range(100_000):
        node = mc.CsmaNodeState(channel_busy=True)
        mc.step(node, mc.CsmaEvent.BEACON_READY, rng, CFG, beacon=beacon())
        counts[node.backoff_slots_remaining] += 1
    _, p = stats.chisquare(counts)
    assert p > 0.01
