"""LTE-V2X Mode 4 autonomous resource selection.

Time is a grid of 1 ms subframes; frequency is M_tot slots per subframe, one
slot being one 300-byte packet footprint for the active MCS. Every node keeps
a sliding 1000-subframe power record per slot, assumes its own transmit
subframes busy (half duplex), and on (re)selection:

  1. excludes every slot of subframe phases where it transmitted (blind) and
     slots whose window-average power reaches the busy threshold, with the
     threshold stepped in 3 dB increments, up or down, to the smallest value
     that keeps at least 20% of the window's resources in play;
  2. ranks the surviving candidates by average power and picks uniformly
     among the least interfered 20% of them (ties broken randomly).

The reservation repeats with the beacon period for RC transmissions; when RC
expires the slot is kept with probability p_k, else reselected before the
next beacon. RC is drawn from [5, 15] at a 100 ms period and rescaled with
the period so reservations cover comparable wall time at lower beacon rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import propagation


class SpsError(ValueError):
    """Invalid grid or selection configuration."""


@dataclass(frozen=True)
class SpsConfig:
    sensing_threshold_dbm: float = -94.0
    keep_probability: float = 0.0
    rc_low_at_100ms: int = 5
    rc_high_at_100ms: int = 15
    best_fraction: float = 0.2
    best_fraction_base: str = "candidates"  # candidates | window
    relax_step_db: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.keep_probability <= 1.0:
            raise SpsError("keep probability must be in [0, 1]")
        if not 0.0 < self.best_fraction <= 1.0:
            raise SpsError("best fraction must be in (0, 1]")
        if self.best_fraction_base not in ("candidates", "window"):
            raise SpsError("best_fraction_base must be 'candidates' or 'window'")


@dataclass(frozen=True)
class ResourceGrid:
    slots_per_subframe: int
    period_sf: int
    selection_window_sf: int = 100
    sensing_window_sf: int = 1000
    tti_us: int = 1000

    def __post_init__(self):
        if not 1 <= self.slots_per_subframe <= 4:
            raise SpsError(f"slots per subframe must be 1..4, got {self.slots_per_subframe}")
        if self.period_sf < 1 or self.selection_window_sf < 1:
            raise SpsError("empty resource grid")
        if self.selection_window_sf > self.period_sf:
            raise SpsError("selection window must not exceed the beacon period")


@dataclass(frozen=True)
class SlotSensingRecord:
    avg_rx_power_dbm: float
    busy: bool
    own_tx_subframe: bool


@dataclass
class SpsNodeState:
    reserved_phase: int | None = None
    reserved_slot: int | None = None
    reselection_counter: int = 0
    keep_probability: float = 0.0
    needs_reselection: bool = True


def selection_window_sf(period_sf: int, cap: int = 100) -> int:
    return min(period_sf, cap)


def draw_rc(rng, period_sf: int, cfg: SpsConfig) -> int:
    """Reselection counter, uniform over the period-scaled [5, 15] range."""
    scale = 100.0 / period_sf
    low = max(1, int(math.floor(cfg.rc_low_at_100ms * scale + 0.5)))
    high = max(low, int(math.floor(cfg.rc_high_at_100ms * scale + 0.5)))
    return int(rng.integers(low, high + 1))


class SpsSensingBank:
    """Sliding sensing windows for all nodes of one replication.

    Ring buffers indexed by subframe modulo the window length:
      rssi_mw[row, slot, node]  measured power (own contribution excluded)
      own_tx[row, node]         node transmitted in that subframe (blind)
    """

    def __init__(self, n_nodes: int, grid: ResourceGrid):
        w = grid.sensing_window_sf
        self.grid = grid
        self.n_nodes = n_nodes
        self.rssi_mw = np.zeros((w, grid.slots_per_subframe, n_nodes), dtype=np.float64)
        self.own_tx = np.zeros((w, n_nodes), dtype=bool)
        self.abs_sf = np.full(w, -1, dtype=np.int64)

    def record_subframe(self, sf: int, rssi_mw_by_slot: np.ndarray, tx_mask: np.ndarray) -> None:
        """Store one elapsed subframe for every node at once."""
        row = sf % self.grid.sensing_window_sf
        self.rssi_mw[row] = rssi_mw_by_slot
        self.own_tx[row] = tx_mask
        self.abs_sf[row] = sf

    def record_node_subframe(self, node: int, sf: int, per_slot_rx_power_dbm,
                             transmitted: bool) -> None:
        """Single-node update (unit-test surface mirroring the per-node semantics)."""
        row = sf % self.grid.sensing_window_sf
        self.rssi_mw[row, :, node] = propagation.dbm_to_mw(np.asarray(per_slot_rx_power_dbm))
        self.own_tx[row, node] = transmitted
        self.abs_sf[row] = sf

    def slot_record(self, node: int, sf: int, slot: int,
                    cfg: SpsConfig) -> SlotSensingRecord:
        row = sf % self.grid.sensing_window_sf
        if self.abs_sf[row] != sf:
            raise SpsError(f"subframe {sf} is outside the retained sensing window")
        own = bool(self.own_tx[row, node])
        mw = float(self.rssi_mw[row, slot, node])
        dbm = float(propagation.mw_to_dbm(mw)) if mw > 0 else -math.inf
        busy = bool(own or dbm >= cfg.sensing_threshold_dbm)
        return SlotSensingRecord(avg_rx_power_dbm=dbm, busy=busy, own_tx_subframe=own)

    def phase_statistics(self, node: int, sf_now: int):
        """Window-average linear power per (phase, slot) and the blind-phase mask.

        Phases with no listening measurement average to zero (treated idle).
        """
        period = self.grid.period_sf
        valid = (self.abs_sf >= 0) & (self.abs_sf < sf_now) \
            & (self.abs_sf >= sf_now - self.grid.sensing_window_sf)
        rows = np.nonzero(valid)[0]
        phases = (self.abs_sf[rows] % period).astype(np.int64)
        own = self.own_tx[rows, node]

        blind = np.zeros(period, dtype=bool)
        np.logical_or.at(blind, phases, own)

        listen = ~own
        sums = np.zeros((period, self.grid.slots_per_subframe))
        counts = np.zeros(period)
        np.add.at(sums, phases[listen], self.rssi_mw[rows[listen], :, node])
        np.add.at(counts, phases[listen], 1.0)
        avg = np.divide(sums, counts[:, None], out=np.zeros_like(sums),
                        where=counts[:, None] > 0)
        return avg, blind


def sps_select(bank: SpsSensingBank, node: int, sf_now: int, cfg: SpsConfig, rng):
    """Pick a (phase, slot) for a node due for (re)selection; returns (phase, slot, rc).

    The candidate window covers the selection_window_sf subframes after sf_now.
    """
    grid = bank.grid
    window = grid.selection_window_sf
    avg_mw, blind = bank.phase_statistics(node, sf_now)

    cand_sfs = np.arange(sf_now + 1, sf_now + 1 + window)
    cand_phases = cand_sfs % grid.period_sf
    m_tot = grid.slots_per_subframe
    total = window * m_tot

    phase_grid = np.repeat(cand_phases, m_tot)
    slot_grid = np.tile(np.arange(m_tot), window)
    power = avg_mw[phase_grid, slot_grid]
    not_blind = ~blind[phase_grid]
    if not not_blind.any():
        raise SpsError("no selectable resource: every candidate phase is blind")

    # Busy exclusion with the threshold stepped in relax_step_db increments to
    # the smallest value that keeps at least the 20% target in play. Stepping
    # down as well as up makes the candidate set invariant to a common shift
    # of every node's transmit power (the dB grid is scale free), which is
    # what keeps sidelink performance insensitive to the power knob.
    need = max(1, math.ceil(cfg.best_fraction * total))
    free = np.sort(power[not_blind])
    if free.size <= need:
        keep = not_blind
    else:
        p_need = free[need - 1]
        if p_need <= 0.0:
            keep = not_blind & (power <= 0.0)  # enough never-occupied slots
        else:
            thr0 = cfg.sensing_threshold_dbm
            p_need_db = 10.0 * math.log10(p_need)
            steps = math.floor((p_need_db - thr0) / cfg.relax_step_db) + 1
            thr_mw = float(propagation.dbm_to_mw(thr0 + steps * cfg.relax_step_db))
            keep = not_blind & (power < thr_mw)

    cand_idx = np.nonzero(keep)[0]
    order = np.lexsort((rng.random(cand_idx.size), power[cand_idx]))
    base = cand_idx.size if cfg.best_fraction_base == "candidates" else total
    pick_n = max(1, min(math.ceil(cfg.best_fraction * base), cand_idx.size))
    best = cand_idx[order[:pick_n]]
    pick = int(best[rng.integers(0, best.size)])
    return int(phase_grid[pick]), int(slot_grid[pick]), draw_rc(rng, grid.period_sf, cfg)


def on_transmission_complete(state: SpsNodeState, grid: ResourceGrid,
                             cfg: SpsConfig, rng) -> SpsNodeState:
    """Decrement RC after a transmission; run the keep lottery when it expires."""
    if state.reserved_phase is None:
        raise SpsError("transmission completed without a reservation")
    state.reselection_counter -= 1
    if state.reselection_counter <= 0:
        if rng.random() < state.keep_probability:
            state.reselection_counter = draw_rc(rng, grid.period_sf, cfg)
        else:
            state.needs_reselection = True
            state.reserved_phase = None
            state.reserved_slot = None
    return state
