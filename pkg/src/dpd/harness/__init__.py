from .config import Config, ConfigError, config_from_dict, load_config
from .metrics import (
    MetricsReport,
    compute_collision_rate,
    compute_driving_score,
    compute_l2,
    episode_l2,
    episode_report,
    route_completion,
    speed_at_stop_line,
)
from .report import export_report, read_report
from .runner import EpisodeLog, Mode, run_episode

__all__ = [
    "Config", "ConfigError", "EpisodeLog", "MetricsReport", "Mode", "compute_collision_rate",
    "compute_driving_score", "compute_l2", "config_from_dict", "episode_l2", "episode_report",
    "export_report", "load_config", "read_report", "route_completion", "run_episode", "speed_at_stop_line",
]
