import json
import os

import pytest

from beaconsim import cli, config, dcc
from beaconsim.config import ConfigError, SimConfig, SweepSpec, load_config, parse_config_text
from beaconsim.phy import Mcs, Technology


def test_empty_file_gives_table_defaults(tmp_path):
    path = tmp_path / "empty.ini"
    path.write_text("")
    cfg, sweep = load_config(path)
    assert cfg == SimConfig()
    assert cfg.beacon_rate_hz == 10
    assert cfg.mcs is Mcs.B
    assert cfg.tx_power_dbm == 23.0
    assert cfg.channel_bandwidth_mhz == 10.0
    assert cfg.propagation.noise_figure_db == 9.0
    assert cfg.propagation.shadowing_variance_db2 == 3.0
    assert cfg.propagation.decorrelation_distance_m == 25.0
    assert cfg.csma.aifs_us == 110
    assert cfg.csma.slot_us == 13
    assert cfg.csma.cw_max_slots == 15
    assert cfg.csma.cs_threshold_dbm == -65.0
    assert cfg.sps.keep_probability == 0.0
    assert cfg.sps.sensing_threshold_dbm == -94.0
    assert cfg.metrics.tau_sense_s == 1.0
    assert not sweep


def test_out_of_range_power_warns_but_runs():
    cfg, _ = parse_config_text("[phy]\ntx_power_dbm = 50\n")
    warnings = cfg.validate()
    assert any("50" in w for w in warnings)


def test_wrong_payload_is_hard_error():
    cfg, _ = parse_config_text("[phy]\npayload_bytes = 500\n")
    with pytest.raises(ConfigError, match="payload"):
        cfg.validate()


def test_unknown_key_reports_line(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[phy]\nmcs = B\nbogus_key = 3\n")
    with pytest.raises(ConfigError, match=r"bogus_key.*line 3"):
        load_config(path)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[nope]\nx = 1\n")


def test_bad_beacon_rate_rejected():
    cfg, _ = parse_config_text("[phy]\nbeacon_rate_hz = 15\n")
    with pytest.raises(ConfigError, match="beacon_rate_hz"):
        cfg.validate()


def test_warmup_must_cover_sensing_window():
    cfg, _ = parse_config_text("[run]\nwarmup_s = 0.2\n")
    with pytest.raises(ConfigError, match="tau_sense"):
        cfg.validate()


def test_config_roundtrip():
    cfg, _ = parse_config_text(
        "[phy]\ntechnology = ltev2x\nmcs = C\ntx_power_dbm = 11.5\n"
        "[scenario]\ndensity_veh_per_km = 123.5\nwraparound = false\n"
        "[sps]\nkeep_probability = 0.4\n"
        "[metrics]\nsinr_policy = worst\n"
        "[pathloss]\nantenna_height_m = 1.7\n")
    text = config.emit_config(cfg)
    back, _ = parse_config_text(text)
    assert back == cfg


def test_overrides():
    cfg = config.apply_overrides(SimConfig(), ["phy.mcs=D"])
    assert cfg.mcs is Mcs.D
    cfg = config.apply_overrides(cfg, ["scenario.density_veh_per_km=42",
                                       "sps.keep_probability=0.5",
                                       "pathloss.antenna_height_m=2.0",
                                       "beacon_rate_hz=5"])
    assert cfg.density_veh_per_km == 42.0
    assert cfg.sps.keep_probability == 0.5
    assert cfg.propagation.pathloss.antenna_height_m == 2.0
    assert cfg.beacon_rate_hz == 5
    with pytest.raises(ConfigError):
        config.apply_overrides(cfg, ["no_such_key=1"])
    with pytest.raises(ConfigError):
        config.apply_overrides(cfg, ["not-an-assignment"])


def test_technology_aliases():
    assert config.parse_technology("LTE") is Technology.LTEV2X
    assert config.parse_technology("802.11p") is Technology.IEEE80211P_STAR
    with pytest.raises(ConfigError):
        config.parse_technology("wimax")


def test_sweep_expansion_counts():
    text = ("[run]\nreplications = 2\nsim_time_s = 1.5\n"
            "[sweep]\ntechnology = both\nrho = 10, 20\n")
    cfg, axes = parse_config_text(text)
    spec = SweepSpec(base=cfg, axes=axes, output_dir="unused")
    points = spec.expand()
    assert len(points) == 4
    labels = {p.label for p in points}
    assert "tech=80211p_rho=10.0" in labels
    seeds = {p.config.seed for p in points}
    assert len(seeds) == 4  # distinct derived seeds


def test_point_seed_stable_under_axis_growth():
    base = SimConfig()
    s1 = config.derive_point_seed(base.seed, ["tech=80211p", "rho=100.0"])
    s2 = config.derive_point_seed(base.seed, ["tech=80211p", "rho=100.0"])
    assert s1 == s2
    s3 = config.derive_point_seed(base.seed, ["tech=80211p", "rho=200.0"])
    assert s3 != s1


def test_print_mcs(capsys):
    assert cli.main(["--print-mcs"]) == 0
    out = capsys.readouterr().out
    assert "QPSK, 0.27" in out and "16QAM, 0.59" in out


def test_cli_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[phy]\npayload_bytes = 400\n")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_cli_single_run_outputs(tmp_path):
    conf = tmp_path / "run.ini"
    conf.write_text(
        "[scenario]\ndensity_veh_per_km = 15\n"
        "[run]\nsim_time_s = 1.3\nreplications = 2\nseed = 5\n")
    out = tmp_path / "out"
    assert cli.main(["--config", str(conf), "--out", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert "sweep.csv" in names and "run_metadata.json" in names
    per_run = [n for n in names if n.startswith("80211p_seed")]
    assert len(per_run) == 2
    rows = (out / "sweep.csv").read_text().strip().split("\n")
    assert rows[0].split(",") == cli.ROW_FIELDS
    assert len(rows) == 3  # header + 2 replication rows
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["config"]["beacon_rate_hz"] == 10
    assert meta["config"]["metrics"]["tau_sense_s"] == 1.0
    assert meta["derived"]["effective_warmup_s"] == 1.0


def test_cli_sweep_run_deterministic(tmp_path):
    conf = tmp_path / "sweep.ini"
    conf.write_text(
        "[scenario]\ndensity_veh_per_km = 15\n"
        "[run]\nsim_time_s = 1.3\nreplications = 1\nseed = 7\n"
        "[sweep]\ntechnology = both\nfb = 10\n")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--config", str(conf), "--out", str(out1)]) == 0
    assert cli.main(["--config", str(conf), "--out", str(out2)]) == 0
    assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()
    rows = (out1 / "sweep.csv").read_text().strip().split("\n")
    assert len(rows) == 3  # two sweep points x one replication
    assert any(n.startswith("ltev2x_fb=10_seed") for n in os.listdir(out1))


def test_cli_trace_outputs(tmp_path):
    conf = tmp_path / "t.ini"
    conf.write_text("[scenario]\ndensity_veh_per_km = 10\n"
                    "[run]\nsim_time_s = 1.2\nreplications = 1\n")
    out = tmp_path / "out"
    assert cli.main(["--config", str(conf), "--out", str(out),
                     "--trace-mac", "--trace-dcc"]) == 0
    names = os.listdir(out)
    mac = [n for n in names if n.startswith("trace_mac_")]
    dcc_files = [n for n in names if n.startswith("trace_dcc_")]
    assert mac and dcc_files
    header = (out / mac[0]).read_text().splitlines()[0]
    assert header == "time,node,event,detail"


def test_figure_table3(tmp_path):
    out = tmp_path / "fig"
    assert cli.main(["--figure", "table3", "--out", str(out)]) == 0
    rows = (out / "table3.csv").read_text().strip().split("\n")
    assert rows[0] == "mcs,fb_hz,cr_80211p,cr_ltev2x"
    assert len(rows) == 7
    got = {tuple(r.split(",")[:2]) for r in rows[1:]}
    assert ("A", "10") in got and ("B", "1") in got


def test_figure_unknown_name(tmp_path):
    assert cli.main(["--figure", "fig9", "--out", str(tmp_path / "x")]) == 2


def test_report_row_cr_matches_table():
    cfg = SimConfig(technology=Technology.LTEV2X, mcs=Mcs.A)
    row = cli.report_row(cfg, __import__("beaconsim.engine", fromlist=["MetricsReport"])
                         .MetricsReport(bin_width_m=10, n_bins=100, period_s=0.1,
                                        awareness_range_m=100))
    assert row[cli.ROW_FIELDS.index("cr")] == pytest.approx(0.01)
