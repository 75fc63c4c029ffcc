"""Drone virtual-array channel sounding simulator and cell-free massive MIMO analysis toolkit."""

from .analysis import (
    DistributionStats,
    LinkBudget,
    Ratio,
    SinrReport,
    ap_subset_sweep,
    distribution_stats,
    multi_user_sinr_eval,
    multiuser_sinr,
    mr_vector,
    optimum_vector,
    sinr,
    uplink_snr,
)
from .channel import (
    ChannelRecord,
    DatasetMetadata,
    GainProfile,
    SoundingDataset,
    average_gain,
    gain_db,
    gain_profile,
    rms_gain_error,
    synthesize_omni,
)
from .config import RunConfig, default_config, load_config
from .dataio import import_external, read_dataset, write_dataset
from .field import Building, EnvironmentModel, LinkGeometry, los_blocked, mean_gain_db, sample_channel
from .pipeline import run_pipeline
from .sounder import CaptureSchedule, FlightPlan, fly, multi_ue_campaign, plan_captures

__version__ = "0.1.0"
