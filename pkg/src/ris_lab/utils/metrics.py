from typing import Sequence

import numpy as np


def metric_average_reward(rewards: Sequence[float]) -> list[float]:
    """Running mean: entry ``t`` is the mean of the first ``t + 1`` rewards."""
    if len(rewards) == 0:
        raise ValueError("metric_average_reward: rewards must not be empty")
    values = np.asarray(rewards, dtype=np.float64)
    return (np.cumsum(values) / np.arange(1, values.shape[0] + 1)).tolist()


def metric_avg_achievable_rate(r: float, t_interact: float, t_c: float) -> float:
    """Rate left for data after ``t_interact`` of ``t_c`` slots are spent interacting."""
    if t_c <= 0:
        raise ValueError(f"metric_avg_achievable_rate: coherence time must be positive, got {t_c}")
    return max(0.0, (t_c - t_interact) / t_c) * r


def tail_mean(values: Sequence[float], fraction: float = 0.1) -> float:
    """Mean of the last ``fraction`` of ``values`` (at least one entry)."""
    if len(values) == 0:
        raise ValueError("tail_mean: values must not be empty")
    count = max(1, int(round(len(values) * fraction)))
    return float(np.mean(values[-count:]))
