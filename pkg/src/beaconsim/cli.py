"""Experiment driver: config files, parameter sweeps, figure sweeps, CSV/JSON outputs.

Outputs per sweep:
  sweep.csv            one row per (sweep point, replication)
  {label}_seed{n}.csv  the same row, one file per run, deterministic names
  run_metadata.json    fully resolved configuration including every default
Figure sweeps additionally emit plot-ready CSVs named after the figure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import dcc, engine, phy
from .config import (ConfigError, SimConfig, SweepAxes, SweepPoint, SweepSpec,
                     apply_overrides, derive_point_seed, emit_config, load_config)
from .phy import Mcs, Technology

ROW_FIELDS = ["tech", "rho", "fb", "pt", "mcs", "seed", "pdr_100m",
              "range_pdr90_m", "cbr", "V", "ipg_p999", "cr"]

FIGURE_DENSITIES = [100.0, 200.0, 300.0, 400.0, 500.0]
FIGURE_POWERS = [8.0, 15.0, 23.0]
FIGURE_RATES = [1, 5, 10]
BOTH_TECHS = [Technology.IEEE80211P_STAR, Technology.LTEV2X]


def _fnum(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "nan"
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fnum(v) for v in row])
    _atomic_write(path, buf.getvalue())


def report_row(cfg: SimConfig, report: engine.MetricsReport) -> list:
    profile = phy.mcs_profile(cfg.mcs)
    if cfg.technology is Technology.LTEV2X:
        cr = dcc.cr_lte(1, profile.packets_per_tti, cfg.beacon_rate_hz)
    else:
        cr = dcc.cr_11p(profile.airtime_11p_us, cfg.beacon_rate_hz)
    return [cfg.technology.value, cfg.density_veh_per_km, cfg.beacon_rate_hz,
            cfg.tx_power_dbm, cfg.mcs.value, cfg.seed,
            report.pdr_within_100m, report.range_with_pdr_at_least(0.9),
            report.cbr_mean, report.neighbor_mean,
            report.update_delay_percentile_s(0.999), cr]


# ---------------------------------------------------------------------------
# sweep execution
# ---------------------------------------------------------------------------

def _run_point_rep(args):
    cfg, rep_index, trace_spec = args
    trace_mac = trace_dcc = None
    handles = []
    if trace_spec:
        out_dir, label, want_mac, want_dcc = trace_spec
        if want_mac:
            fh = open(os.path.join(out_dir, f"trace_mac_{label}_rep{rep_index}.csv"), "w")
            handles.append(fh)
            fh.write("time,node,event,detail\n")
            trace_mac = lambda *row: fh.write(",".join(str(v) for v in row) + "\n")
        if want_dcc:
            fh = open(os.path.join(out_dir, f"trace_dcc_{label}_rep{rep_index}.csv"), "w")
            handles.append(fh)
            fh.write("time_s,node,cbr,cr,neighbors\n")
            trace_dcc = lambda *row: fh.write(",".join(_fnum(v) for v in row) + "\n")
    try:
        return engine.run_replication(cfg, rep_index, trace_mac=trace_mac, trace_dcc=trace_dcc)
    finally:
        for fh in handles:
            fh.close()


def rep_seed(cfg: SimConfig, rep_index: int) -> int:
    """The integer identifying one replication's RNG root (for file names and rows)."""
    return int(np.random.SeedSequence([cfg.seed, rep_index]).generate_state(1)[0])


def run_points(points: list[SweepPoint], jobs: int, out_dir: str,
               trace_mac: bool = False, trace_dcc: bool = False):
    """Run every (point, replication). Returns (per-rep reports, merged per point)."""
    tasks = []
    for point in points:
        trace_spec = None
        if trace_mac or trace_dcc:
            trace_spec = (out_dir, point.label or point.config.technology.value,
                          trace_mac, trace_dcc)
        for rep in range(point.config.replications):
            tasks.append((point.index, (point.config, rep, trace_spec)))

    per_rep: dict[int, list] = {p.index: [] for p in points}
    if jobs <= 1:
        for index, args in tasks:
            per_rep[index].append(_run_point_rep(args))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(index, pool.submit(_run_point_rep, args)) for index, args in tasks]
            for index, fut in futures:
                per_rep[index].append(fut.result())

    merged = {}
    for point in points:
        reports = per_rep[point.index]
        report = reports[0]
        for extra in reports[1:]:
            report = report.merge(extra)
        report.config_echo = point.config.to_dict()
        merged[point.index] = report
    return per_rep, merged


def _metadata(base: SimConfig, points: list[SweepPoint], outputs: list[str]) -> dict:
    profile = phy.mcs_profile(base.mcs)
    derived = {
        "effective_warmup_s": base.effective_warmup_s,
        "beacon_period_us": base.beacon_period_us,
        "period_sf": base.period_sf,
        "selection_window_sf": min(base.period_sf, base.sps.selection_window_cap_sf),
        "rc_draw_example": "uniform [5,15] scaled by 100ms/period",
        "airtime_us_80211p": profile.airtime_11p_us,
        "packets_per_tti": profile.packets_per_tti,
        "sinr_policy": base.metrics.sinr_policy,
        "distance_bins_m": [base.metrics.bin_width_m, base.metrics.max_distance_m],
    }
    return {
        "config": base.to_dict(),
        "points": [{"label": p.label, "seed": p.config.seed} for p in points],
        "derived": derived,
        "outputs": sorted(outputs),
    }


def run_sweep(spec: SweepSpec, jobs: int = 1, trace_mac: bool = False,
              trace_dcc: bool = False) -> list[str]:
    """Execute a sweep and write per-run CSVs, the aggregated CSV and metadata."""
    os.makedirs(spec.output_dir, exist_ok=True)
    if not os.access(spec.output_dir, os.W_OK):
        raise OSError(f"output directory not writable: {spec.output_dir}")
    points = spec.expand()
    per_rep, _ = run_points(points, jobs, spec.output_dir, trace_mac, trace_dcc)

    written = []
    all_rows = []
    for point in points:
        cfg = point.config
        label = "_".join(p for p in point.label.split("_") if not p.startswith("tech="))
        for rep_index, report in enumerate(per_rep[point.index]):
            seed_n = rep_seed(cfg, rep_index)
            row = report_row(cfg, report)
            row[ROW_FIELDS.index("seed")] = seed_n
            all_rows.append(row)
            stem = f"{cfg.technology.value}_{label}" if label else cfg.technology.value
            path = os.path.join(spec.output_dir, f"{stem}_seed{seed_n}.csv")
            _write_csv(path, ROW_FIELDS, [row])
            written.append(path)

    agg = os.path.join(spec.output_dir, "sweep.csv")
    _write_csv(agg, ROW_FIELDS, all_rows)
    written.append(agg)

    meta_path = os.path.join(spec.output_dir, "run_metadata.json")
    _atomic_write(meta_path, json.dumps(_metadata(spec.base, points, written),
                                        indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written


# ---------------------------------------------------------------------------
# figure sweeps
# ---------------------------------------------------------------------------

def _point(base: SimConfig, index: int, **overrides) -> SweepPoint:
    cfg = dataclasses.replace(base, **overrides)
    parts = []
    for name, value in overrides.items():
        short = {"technology": "tech", "density_veh_per_km": "rho", "beacon_rate_hz": "fb",
                 "tx_power_dbm": "pt", "mcs": "mcs"}[name]
        parts.append(f"{short}={value.value if hasattr(value, 'value') else value}")
    cfg = dataclasses.replace(cfg, seed=derive_point_seed(base.seed, parts))
    return SweepPoint(config=cfg, label="_".join(parts), index=index)


def figure_jobs(name: str, base: SimConfig):
    """Sweep points plus an assembler writing the figure's plot-ready CSVs."""
    points: list[SweepPoint] = []

    def add(**overrides) -> int:
        points.append(_point(base, len(points), **overrides))
        return len(points) - 1

    if name == "table3":
        def assemble(reports, out_dir):
            rows = [[r["mcs"], r["fb_hz"], r["cr_80211p"], r["cr_ltev2x"]]
                    for r in dcc.channel_occupation_table()]
            path = os.path.join(out_dir, "table3.csv")
            _write_csv(path, ["mcs", "fb_hz", "cr_80211p", "cr_ltev2x"], rows)
            return [path]
        return points, assemble

    if name == "fig1":
        keys = {}
        for tech in BOTH_TECHS:
            for pt in (8.0, 23.0):
                for rho in FIGURE_DENSITIES:
                    keys[(tech, pt, rho)] = add(technology=tech, tx_power_dbm=pt,
                                                density_veh_per_km=rho)

        def assemble(reports, out_dir):
            rows = []
            for (tech, pt, rho), idx in keys.items():
                rep = reports[idx]
                cfg = points[idx].config
                rng_m = dcc.median_range_m(pt, phy.mcs_profile(cfg.mcs), cfg.propagation,
                                           tech, cfg.channel_bandwidth_hz)
                rows.append([tech.value, pt, rho, 2.0 * rng_m * rho / 1000.0,
                             rep.neighbor_mean, rep.cbr_mean])
            path = os.path.join(out_dir, "fig1.csv")
            _write_csv(path, ["tech", "pt_dbm", "rho", "neighbors_median_range",
                              "neighbors_100m", "cbr"], rows)
            return [path]
        return points, assemble

    if name == "fig2":
        axes = {"power": ("tx_power_dbm", FIGURE_POWERS),
                "beacon_rate": ("beacon_rate_hz", FIGURE_RATES),
                "mcs": ("mcs", list(Mcs))}
        keys = {}
        for axis, (field_name, values) in axes.items():
            for tech in BOTH_TECHS:
                for value in values:
                    keys[(axis, tech, value)] = add(
                        technology=tech, density_veh_per_km=300.0, **{field_name: value})

        def assemble(reports, out_dir):
            paths = []
            for axis in axes:
                rows = []
                for (ax, tech, value), idx in keys.items():
                    if ax != axis:
                        continue
                    rep = reports[idx]
                    pdr = rep.pdr_by_distance()
                    for b in range(rep.n_bins):
                        if rep.opp_bins[b]:
                            rows.append([tech.value, axis,
                                         value.value if hasattr(value, "value") else value,
                                         (b + 0.5) * rep.bin_width_m, pdr[b]])
                path = os.path.join(out_dir, f"fig2_{axis}.csv")
                _write_csv(path, ["tech", "param", "value", "distance_m", "pdr"], rows)
                paths.append(path)
            return paths
        return points, assemble

    if name in ("fig3", "fig4"):
        keys = {}
        for tech in BOTH_TECHS:
            for fb in FIGURE_RATES:
                keys[(tech, fb)] = add(technology=tech, density_veh_per_km=300.0,
                                       beacon_rate_hz=fb)

        def assemble(reports, out_dir):
            rows = []
            for (tech, fb), idx in keys.items():
                delays, ccdf = reports[idx].ipg_ccdf()
                for d, c in zip(delays, ccdf):
                    rows.append([tech.value, fb, d, c])
            path = os.path.join(out_dir, f"{name}.csv")
            _write_csv(path, ["tech", "fb_hz", "delay_s", "ccdf"], rows)
            return [path]
        return points, assemble

    if name == "fig5":
        axes = {"power": ("tx_power_dbm", FIGURE_POWERS),
                "beacon_rate": ("beacon_rate_hz", FIGURE_RATES),
                "mcs": ("mcs", list(Mcs))}
        keys = {}
        for axis, (field_name, values) in axes.items():
            for tech in BOTH_TECHS:
                for value in values:
                    for rho in FIGURE_DENSITIES:
                        keys[(axis, tech, value, rho)] = add(
                            technology=tech, density_veh_per_km=rho, **{field_name: value})

        def assemble(reports, out_dir):
            paths = []
            for axis in axes:
                rows = []
                for (ax, tech, value, rho), idx in keys.items():
                    if ax != axis:
                        continue
                    rows.append([tech.value, axis,
                                 value.value if hasattr(value, "value") else value,
                                 rho, reports[idx].pdr_within_100m])
                path = os.path.join(out_dir, f"fig5_{axis}.csv")
                _write_csv(path, ["tech", "param", "value", "rho", "pdr_100m"], rows)
                paths.append(path)
            return paths
        return points, assemble

    if name == "fig6":
        keys = {}
        for tech in BOTH_TECHS:
            for fb in FIGURE_RATES:
                for rho in FIGURE_DENSITIES:
                    keys[(tech, fb, rho)] = add(technology=tech, beacon_rate_hz=fb,
                                                density_veh_per_km=rho)

        def assemble(reports, out_dir):
            rows = [[tech.value, fb, rho, reports[idx].update_delay_percentile_s(0.999)]
                    for (tech, fb, rho), idx in keys.items()]
            path = os.path.join(out_dir, "fig6.csv")
            _write_csv(path, ["tech", "fb_hz", "rho", "delay_p999_s"], rows)
            return [path]
        return points, assemble

    raise ConfigError(f"unknown figure {name!r} "
                      "(fig1..fig6 or table3)")


def reproduce_figure(name: str, base: SimConfig, out_dir: str, jobs: int = 1) -> list[str]:
    points, assemble = figure_jobs(name, base)
    os.makedirs(out_dir, exist_ok=True)
    reports = run_points(points, jobs, out_dir)[1] if points else {}
    written = assemble(reports, out_dir)
    if points:
        rows = [report_row(p.config, reports[p.index]) for p in points]
        agg = os.path.join(out_dir, f"{name}_runs.csv")
        _write_csv(agg, ROW_FIELDS, rows)
        written.append(agg)
        meta = os.path.join(out_dir, f"{name}_metadata.json")
        _atomic_write(meta, json.dumps(_metadata(base, points, written),
                                       indent=2, sort_keys=True) + "\n")
        written.append(meta)
    return written


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beaconsim",
        description="Highway beaconing simulator: 802.11p* CSMA/CA vs LTE-V2X Mode 4")
    parser.add_argument("--config", metavar="PATH", help="INI config file")
    parser.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override a config value (repeatable), e.g. phy.mcs=C")
    parser.add_argument("--figure", metavar="NAME",
                        help="run the sweep behind a paper artifact: fig1..fig6, table3")
    parser.add_argument("--out", metavar="DIR", default="out", help="output directory")
    parser.add_argument("--seed", type=int, metavar="N", help="master seed override")
    parser.add_argument("--replications", type=int, metavar="N")
    parser.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="worker processes for independent runs")
    parser.add_argument("--trace-mac", action="store_true",
                        help="write per-run MAC event traces")
    parser.add_argument("--trace-dcc", action="store_true",
                        help="write per-run CBR/CR/neighbor time series")
    parser.add_argument("--print-mcs", action="store_true",
                        help="print the MCS table and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.print_mcs:
            print(phy.format_mcs_table())
            return 0

        if args.config:
            base, sweep_axes = load_config(args.config)
        else:
            base, sweep_axes = SimConfig(), SweepAxes()
        base = apply_overrides(base, args.set)
        if args.seed is not None:
            base = dataclasses.replace(base, seed=args.seed)
        if args.replications is not None:
            base = dataclasses.replace(base, replications=args.replications)
        for warning in base.validate():
            print(f"warning: {warning}", file=sys.stderr)

        if args.figure:
            written = reproduce_figure(args.figure, base, args.out, jobs=args.jobs)
        else:
            spec = SweepSpec(base=base, axes=sweep_axes, output_dir=args.out)
            written = run_sweep(spec, jobs=args.jobs,
                                trace_mac=args.trace_mac, trace_dcc=args.trace_dcc)
        for path in written:
            print(path)
        return 0
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
