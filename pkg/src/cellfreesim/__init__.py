"""Uplink cell-free massive MIMO simulation lab.

Subpackages cover deployment geometry (scenario), channel synthesis and
measured-data ingestion (channel), pilot-based MMSE estimation (estimation),
receive combining (combining), per-UE link metrics (metrics), transmit power
control (tpc), the Monte-Carlo campaign runner (harness), and the CLI.
"""

from .channel import (
    ADJUSTED_MODEL,
    LITERATURE_MODEL,
    ChannelState,
    MeasuredDataset,
    PathLossModel,
    beta_from_measured,
    draw_large_scale,
    draw_small_scale,
    fit_path_loss,
    load_measured,
    path_loss_db,
    realize,
)
from .combining import CombinerBank, build_weights, mmse_weights, mr_weights
from .estimation import PilotBook, make_pilots, mmse_estimate, perfect_csi, simulate_pilot_rx
from .harness import (
    AlgorithmSpec,
    CampaignSpec,
    ResultTable,
    empirical_cdf,
    mix_seed,
    percentile,
    run_campaign,
    run_drop,
)
from .metrics import (
    LinkMetrics,
    SystemConfig,
    energy_efficiency,
    link_metrics,
    noise_power,
    sinr_and_se,
    transmit_snr,
    ue_power,
)
from .scenario import AreaSpec, Topology, link_distance, make_topology, place_aps, place_ues
from .tpc import (
    PowerAllocation,
    TpcOptions,
    TpcResult,
    brute_force_oracle,
    feasible_powers,
    max_min_ee,
    max_min_se,
    max_power,
    min_max_power,
)

__version__ = "0.1.0"
