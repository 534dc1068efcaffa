"""Meta-transfer sequential recommendation with multi-head VQ.

Thin wrappers over the C++ core. Configs are the same dotted ``key = value``
text the CLI reads; ``overrides`` maps keys to string values.
"""

from ._metarec import (
    CheckpointError,
    ablate,
    default_config,
    evaluate,
    generate,
    k_core,
    leave_one_out,
    make_config,
    metrics_from_rank,
    rank_of_truth,
    task_weights,
    train,
    variants,
)

__all__ = [
    "CheckpointError",
    "ablate",
    "default_config",
    "evaluate",
    "generate",
    "k_core",
    "leave_one_out",
    "make_config",
    "metrics_from_rank",
    "rank_of_truth",
    "task_weights",
    "train",
    "variants",
]
