"""Radio propagation: WINNER+ B1 LOS path loss, correlated shadowing, noise, SINR.

Path loss follows the published dual-slope B1 LOS formulation
    PL(d) = A1*log10(d) + B1 + C1*log10(fc/5)                   for d <= d_bp
    PL(d) = A2*log10(d) + B2 - 17.3*log10(h'_tx) - 17.3*log10(h'_rx)
            + C2*log10(fc/5)                                    for d >  d_bp
with effective antenna heights h' = h - 1 m and breakpoint
d_bp = 4 h'_tx h'_rx fc / c. The coefficient set is configurable and echoed in
run metadata so a different published variant can be swapped in.

Shadowing is a zero-mean log-normal term frozen per link for the whole drop.
Link values are drawn from a 1-D Gaussian field evaluated at the link midpoint
with decorrelation distance D/2, which makes two links sharing an endpoint
correlate as exp(-delta/D) where delta is the distance between their far
endpoints, and keeps the link gain matrix exactly symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 3.0e8
THERMAL_NOISE_DBM_PER_HZ = -174.0

# below this many links the shadowing field is sampled with an exact
# covariance factorization; above it, through a circulant FFT grid
_EXACT_MAX_LINKS = 2000
_FIELD_GRID_STEP_M = 0.1


class PropagationError(ValueError):
    """Invalid propagation parameters."""


@dataclass(frozen=True)
class PathLossCoefficients:
    """B1 LOS coefficient set (defaults: WINNER+/WINNER II values)."""

    a_pre_bp: float = 22.7
    b_pre_bp: float = 41.0
    c_pre_bp: float = 20.0
    a_post_bp: float = 40.0
    b_post_bp: float = 9.45
    c_post_bp: float = 2.7
    height_term_coeff: float = -17.3
    # roof-mount antennas; keeps the minimum-power (8 dBm) zero-shadowing
    # range well beyond the 100 m awareness disk
    antenna_height_m: float = 1.75
    min_distance_m: float = 1.0


@dataclass(frozen=True)
class PropagationConfig:
    carrier_freq_ghz: float = 5.9
    antenna_gain_tx_db: float = 3.0
    antenna_gain_rx_db: float = 3.0
    noise_figure_db: float = 9.0
    shadowing_variance_db2: float = 3.0
    decorrelation_distance_m: float = 25.0
    pathloss: PathLossCoefficients = field(default_factory=PathLossCoefficients)

    def __post_init__(self):
        if self.shadowing_variance_db2 < 0:
            raise PropagationError("shadowing variance must be >= 0")
        if self.decorrelation_distance_m <= 0:
            raise PropagationError("decorrelation distance must be > 0")


def dbm_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


def breakpoint_distance_m(cfg: PropagationConfig) -> float:
    h_eff = cfg.pathloss.antenna_height_m - 1.0
    if h_eff <= 0:
        raise PropagationError("antenna height must exceed 1 m for the B1 breakpoint")
    return 4.0 * h_eff * h_eff * cfg.carrier_freq_ghz * 1e9 / SPEED_OF_LIGHT


def path_loss_db(distance_m, cfg: PropagationConfig):
    """B1 LOS path loss in dB; vectorized, clamped below the minimum distance."""
    co = cfg.pathloss
    d = np.maximum(np.asarray(distance_m, dtype=float), co.min_distance_m)
    d_bp = breakpoint_distance_m(cfg)
    f_ratio = cfg.carrier_freq_ghz / 5.0
    h_eff = co.antenna_height_m - 1.0
    pre = co.a_pre_bp * np.log10(d) + co.b_pre_bp + co.c_pre_bp * math.log10(f_ratio)
    post = (co.a_post_bp * np.log10(d) + co.b_post_bp
            + 2.0 * co.height_term_coeff * math.log10(h_eff)
            + co.c_post_bp * math.log10(f_ratio))
    out = np.where(d <= d_bp, pre, post)
    return float(out) if np.isscalar(distance_m) else out


def noise_dbm(occupied_bandwidth_hz: float, cfg: PropagationConfig) -> float:
    """Thermal noise floor plus receiver noise figure over the occupied bandwidth."""
    if occupied_bandwidth_hz <= 0:
        raise PropagationError("bandwidth must be positive")
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(occupied_bandwidth_hz) + cfg.noise_figure_db


def sinr_db(rx_power_dbm: float, interferer_powers_dbm, noise_power_dbm: float) -> float:
    """Signal over (noise + sum of interference), summed in the linear domain."""
    denom = float(dbm_to_mw(noise_power_dbm))
    for p in interferer_powers_dbm:
        denom += float(dbm_to_mw(p))
    return float(rx_power_dbm - mw_to_dbm(denom))


@dataclass
class ChannelRealization:
    """Symmetric per-link total gains: -path_loss + shadowing + both antenna gains.

    The diagonal (self links) is -inf dB. Immutable by convention once built.
    """

    gain_db: np.ndarray
    seed: int

    def gain(self, a: int, b: int) -> float:
        return float(self.gain_db[a, b])

    def gain_linear(self) -> np.ndarray:
        """Linear power gains with zeros on the diagonal."""
        lin = np.power(10.0, self.gain_db / 10.0)
        np.fill_diagonal(lin, 0.0)
        return lin

    def save_text(self, path) -> None:
        np.savetxt(path, self.gain_db, fmt="%.8f", header=f"seed={self.seed}")

    @classmethod
    def load_text(cls, path) -> "ChannelRealization":
        seed = 0
        with open(path) as fh:
            first = fh.readline()
            if first.startswith("#") and "seed=" in first:
                seed = int(first.split("seed=")[1].strip())
        return cls(gain_db=np.atleast_2d(np.loadtxt(path)), seed=seed)


def _link_midpoints(positions: np.ndarray, length_m: float, wraparound: bool):
    """Midpoint of the shortest path between every pair. Shape (N, N)."""
    a = positions[:, None]
    b = positions[None, :]
    mid = (a + b) / 2.0
    if wraparound:
        # pairs whose shorter arc crosses the wrap point get the antipodal midpoint
        crosses = np.abs(a - b) > length_m / 2.0
        mid = np.where(crosses, (mid + length_m / 2.0) % length_m, mid)
    return mid


def _sample_field_exact(points: np.ndarray, theta: float, sigma2: float,
                        length_m: float, wraparound: bool, rng) -> np.ndarray:
    gap = np.abs(points[:, None] - points[None, :])
    if wraparound:
        gap = np.minimum(gap, length_m - gap)
    cov = sigma2 * np.exp(-gap / theta)
    cov[np.diag_indices_from(cov)] += 1e-10
    chol = np.linalg.cholesky(cov)
    return chol @ rng.standard_normal(points.size)


def _sample_field_grid(length_m: float, theta: float, sigma2: float, rng):
    """Stationary field on the circle via circulant embedding; returns (grid values, step)."""
    step = _FIELD_GRID_STEP_M
    m = max(16, int(round(length_m / step)))
    step = length_m / m
    lags = np.arange(m) * step
    ring = np.minimum(lags, length_m - lags)
    cov_row = sigma2 * np.exp(-ring / theta)
    eig = np.fft.fft(cov_row).real
    eig = np.maximum(eig, 0.0)
    xi = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    values = np.fft.ifft(np.sqrt(m * eig) * xi).real
    return values, step


def build_channel(scenario, cfg: PropagationConfig, rng_seed: int) -> ChannelRealization:
    """Freeze per-link gains for one drop: path loss + correlated shadowing + antenna gains."""
    from .scenario import distance_matrix  # local import avoids a cycle

    n = scenario.n_vehicles
    rng = np.random.default_rng(rng_seed)
    dist = distance_matrix(scenario)
    pl = path_loss_db(dist, cfg)
    gains = -pl + cfg.antenna_gain_tx_db + cfg.antenna_gain_rx_db

    sigma2 = cfg.shadowing_variance_db2
    if sigma2 > 0 and n > 1:
        theta = cfg.decorrelation_distance_m / 2.0
        mids = _link_midpoints(scenario.positions, scenario.length_m, scenario.wraparound)
        iu = np.triu_indices(n, k=1)
        mid_flat = mids[iu]
        if mid_flat.size <= _EXACT_MAX_LINKS:
            shadow_flat = _sample_field_exact(mid_flat, theta, sigma2,
                                              scenario.length_m, scenario.wraparound, rng)
        else:
            values, step = _sample_field_grid(scenario.length_m, theta, sigma2, rng)
            idx = np.round(mid_flat / step).astype(int) % values.size
            shadow_flat = values[idx]
        shadow = np.zeros((n, n))
        shadow[iu] = shadow_flat
        shadow += shadow.T
        gains = gains + shadow

    np.fill_diagonal(gains, -np.inf)
    return ChannelRealization(gain_db=gains, seed=rng_seed)
