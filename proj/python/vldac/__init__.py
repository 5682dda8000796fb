"""Token-action RL training laboratory: Python surface over the C++ core."""

from ._vldac import (
    Env,
    VldacError,
    cli,
    gae_advantages,
    leave_one_out_advantages,
    moving_average,
    read_metric_series,
    resolve_config,
    success_oracle,
    summarize_curve,
    train_run,
)

__all__ = [
    "Env",
    "VldacError",
    "cli",
    "gae_advantages",
    "leave_one_out_advantages",
    "moving_average",
    "read_metric_series",
    "resolve_config",
    "success_oracle",
    "summarize_curve",
    "train_run",
]
