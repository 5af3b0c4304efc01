"""Run orchestration: configuration, checkpoints, runner and command line."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, VerifyConfig, apply_overrides, load_config
from .runner import check, evaluate_verdicts, exit_status, read_series, resume, run, sweep

__all__ = [
    "RunConfig",
    "VerifyConfig",
    "load_config",
    "apply_overrides",
    "save_checkpoint",
    "load_checkpoint",
    "run",
    "resume",
    "sweep",
    "check",
    "evaluate_verdicts",
    "exit_status",
    "read_series",
]
