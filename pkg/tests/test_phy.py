import math

import pytest

from beaconsim import phy
from beaconsim.phy import Mcs, Technology


def test_mcs_table_rows():
    a = phy.mcs_profile("A")
    assert (a.label, a.min_sinr_db, a.airtime_11p_us, a.packets_per_tti) == \
        ("QPSK, 0.27", 1.49, 560, 1)
    b = phy.mcs_profile(Mcs.B)
    assert (b.label, b.min_sinr_db, b.airtime_11p_us, b.packets_per_tti) == \
        ("QPSK, 0.48", 5.79, 304, 2)
    c = phy.mcs_profile("c")
    assert (c.label, c.min_sinr_db, c.airtime_11p_us, c.packets_per_tti) == \
        ("16QAM, 0.46", 12.83, 192, 3)
    d = phy.mcs_profile(Mcs.D)
    assert (d.label, d.min_sinr_db, d.airtime_11p_us, d.packets_per_tti) == \
        ("16QAM, 0.59", 16.39, 160, 4)


def test_mcs_table_orderings():
    rows = [phy.mcs_profile(m) for m in Mcs]
    assert len(rows) == 4
    sinrs = [r.min_sinr_db for r in rows]
    airtimes = [r.airtime_11p_us for r in rows]
    packets = [r.packets_per_tti for r in rows]
    assert sinrs == sorted(sinrs) and len(set(sinrs)) == 4
    assert airtimes == sorted(airtimes, reverse=True) and len(set(airtimes)) == 4
    assert packets == [1, 2, 3, 4]


def test_decode_threshold_inclusive():
    b = phy.mcs_profile(Mcs.B)
    assert phy.decode(5.79, b)
    assert not phy.decode(5.78, b)
    assert phy.decode(math.inf, b)


def test_decode_monotone():
    for mcs in Mcs:
        profile = phy.mcs_profile(mcs)
        for s in (-10.0, profile.min_sinr_db, 30.0):
            if phy.decode(s, profile):
                assert phy.decode(s + 1.0, profile)


def test_airtimes():
    assert phy.airtime_us(phy.mcs_profile(Mcs.C), Technology.IEEE80211P_STAR) == 192
    assert phy.airtime_us(phy.mcs_profile(Mcs.A), Technology.LTEV2X) == 1000
    assert phy.airtime_us(phy.mcs_profile(Mcs.B), Technology.IEEE80211P_STAR) == 304


def test_occupied_bandwidth():
    b = phy.mcs_profile(Mcs.B)
    assert phy.occupied_bandwidth_hz(Technology.IEEE80211P_STAR, b) == 10e6
    assert phy.occupied_bandwidth_hz(Technology.LTEV2X, b) == 5e6
    assert phy.occupied_bandwidth_hz(Technology.LTEV2X, phy.mcs_profile(Mcs.C)) == \
        pytest.approx(10e6 / 3)


def test_phyconfig_validation():
    with pytest.raises(phy.PhyError):
        phy.PhyConfig(payload_bytes=500).validate()
    warnings = phy.PhyConfig(tx_power_dbm=50.0).validate()
    assert warnings and "50.0" in warnings[0]
    assert phy.PhyConfig().validate() == []


def test_format_table_mentions_all_rows():
    text = phy.format_mcs_table()
    for token in ("QPSK, 0.27", "5.79", "192", "16QAM, 0.59", "560"):
        assert token in text
