"""Highway beaconing simulator: 802.11p* CSMA/CA vs LTE-V2X Mode 4 sidelink.

Library layout:
  scenario     Poisson vehicle drops and road geometry
  propagation  WINNER+ B1 path loss, correlated shadowing, noise, SINR
  phy          MCS table and threshold reception shared by both stacks
  mac_csma     broadcast CSMA/CA state machine
  mac_sps      Mode 4 sensing and semi-persistent resource selection
  dcc          congestion metrics: CBR, CR, neighbor count, median range
  engine       discrete-event core, reception adjudication, metrics reports
  config       defaults, config files, sweeps, seed derivation
  cli          experiment driver (``beaconsim`` entry point)
"""

from .config import MetricsConfig, SimConfig, SweepAxes, SweepSpec
from .dcc import channel_occupation_table, cr_11p, cr_lte, median_range_m
from .engine import MetricsReport, TransmissionEvent, adjudicate_reception, run
from .phy import MCS_TABLE, Mcs, McsProfile, Technology, decode, mcs_profile
from .propagation import ChannelRealization, PropagationConfig, build_channel, path_loss_db
from .scenario import RoadScenario, generate_drop

__all__ = [
    "MCS_TABLE", "ChannelRealization", "Mcs", "McsProfile", "MetricsConfig",
    "MetricsReport", "PropagationConfig", "RoadScenario", "SimConfig", "SweepAxes",
    "SweepSpec", "Technology", "TransmissionEvent", "adjudicate_reception",
    "build_channel", "channel_occupation_table", "cr_11p", "cr_lte", "decode",
    "generate_drop", "mcs_profile", "median_range_m", "path_loss_db", "run",
]

__version__ = "0.1.0"
