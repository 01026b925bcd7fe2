"""
Latency statistics for the bench harness

std is the sample standard deviation (n - 1) and the 95% interval uses the
normal approximation 1.96 * std / sqrt(n).
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np

Z_95 = 1.96


@dataclass(frozen=True)
class LatencyStats:
    model: str
    n: int
    mean_ms: float
    std_ms: float
    min_ms: float
    max_ms: float
    ci95_half_width_ms: float
    p50_ms: float
    p95_ms: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"latency statistics need at least 2 samples, got {self.n}")

    def as_dict(self) -> Dict:
        return asdict(self)


def latency_stats(model: str, timings_ms: Sequence[float]) -> LatencyStats:
    values = np.asarray(timings_ms, dtype=np.float64)
    n = int(values.size)
    if n < 2:
        raise ValueError(f"latency statistics need at least 2 samples, got {n}")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValueError("timings must be finite and non-negative")

    mean = float(values.mean())
    std = float(values.std(ddof=1))
    return LatencyStats(
        model=model,
        n=n,
        mean_ms=mean,
        std_ms=std,
        # clamp so min <= mean <= max survives float summation error
        min_ms=min(float(values.min()), mean),
        max_ms=max(float(values.max()), mean),
        ci95_half_width_ms=Z_95 * std / math.sqrt(n),
        p50_ms=float(np.percentile(values, 50)),
        p95_ms=float(np.percentile(values, 95)),
    )
