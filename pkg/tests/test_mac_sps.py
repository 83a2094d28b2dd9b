import numpy as np
import pytest

from beaconsim import mac_sps as ms
from beaconsim.propagation import dbm_to_mw

CFG = ms.SpsConfig()


def make_bank(n_nodes=2, m_tot=2, period_sf=100, window_sf=1000, fill_dbm=None,
              upto_sf=1000):
    grid = ms.ResourceGrid(slots_per_subframe=m_tot, period_sf=period_sf,
                           selection_window_sf=ms.selection_window_sf(period_sf),
                           sensing_window_sf=window_sf)
    bank = ms.SpsSensingBank(n_nodes, grid)
    if fill_dbm is not None:
        rssi = np.full((m_tot, n_nodes), float(dbm_to_mw(fill_dbm)))
        for sf in range(upto_sf):
            bank.record_subframe(sf, rssi, np.zeros(n_nodes, dtype=bool))
    return bank


def test_grid_validation():
    with pytest.raises(ms.SpsError):
        ms.ResourceGrid(slots_per_subframe=5, period_sf=100)
    with pytest.raises(ms.SpsError):
        ms.ResourceGrid(slots_per_subframe=1, period_sf=0)
    with pytest.raises(ms.SpsError):
        ms.ResourceGrid(slots_per_subframe=1, period_sf=50, selection_window_sf=100)


def test_selection_uniform_over_equal_power():
    from scipy import stats

    bank = make_bank(fill_dbm=-120.0)
    rng = np.random.default_rng(5)
    counts = np.zeros((100, 2), dtype=int)
    for _ in range(20_000):
        phase, slot, _ = ms.sps_select(bank, 0, 1000, CFG, rng)
        counts[phase, slot] += 1
    _, p = stats.chisquare(counts.ravel())
    assert p > 0.01


def test_hot_slot_never_selected():
    bank = make_bank(fill_dbm=-120.0)
    hot_mw = float(dbm_to_mw(-80.0))
    for sf in range(1000):
        rssi = np.full((2, 2), float(dbm_to_mw(-120.0)))
        rssi[1, :] = hot_mw  # slot 1 of every subframe is hot
        bank.record_subframe(sf, rssi, np.zeros(2, dtype=bool))
    rng = np.random.default_rng(1)
    for _ in range(2000):
        _, slot, _ = ms.sps_select(bank, 0, 1000, CFG, rng)
        assert slot == 0


def test_blind_phase_never_selected():
    bank = make_bank(fill_dbm=-120.0)
    # node 0 transmitted at every occurrence of phase 7
    for sf in range(7, 1000, 100):
        bank.own_tx[sf % 1000, 0] = True
    rng = np.random.default_rng(2)
    for _ in range(3000):
        phase, _, _ = ms.sps_select(bank, 0, 1000, CFG, rng)
        assert phase != 7


def test_selection_prefers_quietest_band():
    # graded occupancy: phases 0..49 loud, 50..99 quiet; picks stay quiet
    bank = make_bank(fill_dbm=None)
    for sf in range(1000):
        level = -60.0 if (sf % 100) < 50 else -120.0
        rssi = np.full((2, 2), float(dbm_to_mw(level)))
        bank.record_subframe(sf, rssi, np.zeros(2, dtype=bool))
    rng = np.random.default_rng(3)
    for _ in range(500):
        phase, _, _ = ms.sps_select(bank, 0, 1000, CFG, rng)
        assert phase >= 50


def test_selection_power_shift_invariance():
    # shifting every measurement by a common 15 dB leaves the pick set alike
    rng_a = np.random.default_rng(9)
    rng_b = np.random.default_rng(9)
    base = np.random.default_rng(42).uniform(-100, -70, size=(1000, 2, 1))
    bank_a = make_bank(n_nodes=1)
    bank_b = make_bank(n_nodes=1)
    for sf in range(1000):
        bank_a.record_subframe(sf, dbm_to_mw(base[sf]), np.zeros(1, dtype=bool))
        bank_b.record_subframe(sf, dbm_to_mw(base[sf] - 15.0), np.zeros(1, dtype=bool))
    picks_a = [ms.sps_select(bank_a, 0, 1000, CFG, rng_a)[:2] for _ in range(200)]
    picks_b = [ms.sps_select(bank_b, 0, 1000, CFG, rng_b)[:2] for _ in range(200)]
    assert picks_a == picks_b


def test_sensing_threshold_boundary():
    bank = make_bank()
    bank.record_node_subframe(0, 0, [-93.9, -94.1], transmitted=False)
    rec_busy = bank.slot_record(0, 0, 0, CFG)
    rec_idle = bank.slot_record(0, 0, 1, CFG)
    assert rec_busy.busy is True
    assert rec_idle.busy is False


def test_own_transmission_marks_subframe_busy():
    bank = make_bank()
    bank.record_node_subframe(0, 0, [-150.0, -150.0], transmitted=True)
    for slot in (0, 1):
        rec = bank.slot_record(0, 0, slot, CFG)
        assert rec.own_tx_subframe and rec.busy


def test_idle_window_reports_quiet():
    bank = make_bank(fill_dbm=None)
    for sf in range(1000):
        bank.record_subframe(sf, np.zeros((2, 2)), np.zeros(2, dtype=bool))
    avg, blind = bank.phase_statistics(0, 1000)
    assert np.all(avg == 0.0)
    assert not blind.any()
    rec = bank.slot_record(0, 500, 0, CFG)
    assert rec.busy is False


def test_sensing_window_slides():
    bank = make_bank()
    hot = np.full((2, 1), float(dbm_to_mw(-60.0)))
    bank.record_subframe(0, np.repeat(hot, 2, axis=1), np.zeros(2, dtype=bool))
    for sf in range(1, 1001):
        bank.record_subframe(sf, np.zeros((2, 2)), np.zeros(2, dtype=bool))
    avg, _ = bank.phase_statistics(0, 1001)
    assert np.all(avg == 0.0)  # the hot subframe 0 fell out of the window


def test_rc_draw_range_and_scaling():
    rng = np.random.default_rng(7)
    draws_10hz = {ms.draw_rc(rng, 100, CFG) for _ in range(2000)}
    assert draws_10hz == set(range(5, 16))
    draws_1hz = {ms.draw_rc(rng, 1000, CFG) for _ in range(2000)}
    assert draws_1hz == {1, 2}


def test_rc_lifecycle_and_keep_lottery():
    grid = ms.ResourceGrid(slots_per_subframe=2, period_sf=100)
    rng = np.random.default_rng(11)

    state = ms.SpsNodeState(reserved_phase=4, reserved_slot=1,
                            reselection_counter=5, keep_probability=0.0,
                            needs_reselection=False)
    ms.on_transmission_complete(state, grid, CFG, rng)
    assert state.reselection_counter == 4
    for _ in range(3):
        ms.on_transmission_complete(state, grid, CFG, rng)
    assert state.reselection_counter == 1 and not state.needs_reselection
    ms.on_transmission_complete(state, grid, CFG, rng)
    assert state.needs_reselection and state.reserved_phase is None

    keeper = ms.SpsNodeState(reserved_phase=4, reserved_slot=1,
                             reselection_counter=1, keep_probability=1.0,
                             needs_reselection=False)
    ms.on_transmission_complete(keeper, grid, CFG, rng)
    assert not keeper.needs_reselection
    assert keeper.reserved_phase == 4
    assert 5 <= keeper.reselection_counter <= 15


def test_selection_excludes_busy_at_threshold():
    # a slot averaging exactly at the threshold counts busy (inclusive)
    bank = make_bank(fill_dbm=None)
    for sf in range(1000):
        rssi = np.zeros((2, 2))
        if sf % 100 == 3:
            rssi[0, :] = float(dbm_to_mw(-94.0))
        bank.record_subframe(sf, rssi, np.zeros(2, dtype=bool))
    rng = np.random.default_rng(13)
    for _ in range(1000):
        phase, slot, _ = ms.sps_select(bank, 0, 1000, CFG, rng)
        assert (phase, slot) != (3, 0)
