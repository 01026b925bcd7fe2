"""
Packet sampling policies

    all                   every packet
    1/N                   packets whose index is a multiple of N
    pool:<period>:<budget>  the first <budget> packets of each <period>
"""

import enum
import math
from dataclasses import dataclass
from typing import Optional

from src.utils.config import parse_duration
from src.utils.errors import ConfigError


class SamplingKind(enum.Enum):
    ALL = "all"
    ONE_IN_N = "one_in_n"
    TIME_POOL = "time_pool"


@dataclass(frozen=True)
class SamplingPolicy:
    kind: SamplingKind = SamplingKind.ALL
    n: int = 1
    period: float = 1.0
    budget: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"one_in_n needs n >= 1, got {self.n}")
        if not self.period > 0:
            raise ConfigError(f"time_pool needs a positive period, got {self.period}")
        if self.budget < 1:
            raise ConfigError(f"time_pool needs budget >= 1, got {self.budget}")

    @classmethod
    def all(cls) -> "SamplingPolicy":
        return cls(SamplingKind.ALL)

    @classmethod
    def one_in_n(cls, n: int) -> "SamplingPolicy":
        return cls(SamplingKind.ONE_IN_N, n=n)

    @classmethod
    def time_pool(cls, period: float, budget: int) -> "SamplingPolicy":
        return cls(SamplingKind.TIME_POOL, period=period, budget=budget)

    def describe(self) -> str:
        if self.kind is SamplingKind.ONE_IN_N:
            return f"1/{self.n}"
        if self.kind is SamplingKind.TIME_POOL:
            return f"pool:{self.period:g}s:{self.budget}"
        return "all"


def parse_sampling(text: str) -> SamplingPolicy:
    value = text.strip().lower()
    if value == "all":
        return SamplingPolicy.all()
    if value.startswith("1/"):
        try:
            return SamplingPolicy.one_in_n(int(value[2:]))
        except ValueError:
            raise ConfigError(f"invalid sampling {text!r}; expected 1/N") from None
    if value.startswith("pool:"):
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"invalid sampling {text!r}; expected pool:<period>:<budget>")
        try:
            budget = int(parts[2])
        except ValueError:
            raise ConfigError(f"invalid pool budget in {text!r}") from None
        return SamplingPolicy.time_pool(parse_duration(parts[1]), budget)
    raise ConfigError(f"unknown sampling policy {text!r}; use all, 1/N or pool:<period>:<budget>")


class SamplerState:
    """Per-run state of a policy; call should_sample once per packet, in order"""

    def __init__(self, policy: SamplingPolicy):
        self.policy = policy
        self._period_start: Optional[float] = None
        self._taken = 0

    def should_sample(self, index: int, now: float) -> bool:
        policy = self.policy
        if policy.kind is SamplingKind.ALL:
            return True
        if policy.kind is SamplingKind.ONE_IN_N:
            return index % policy.n == 0

        if self._period_start is None:
            self._period_start = now
        elif now >= self._period_start + policy.period:
            elapsed = math.floor((now - self._period_start) / policy.period)
            self._period_start += elapsed * policy.period
            self._taken = 0
        if self._taken < policy.budget:
            self._taken += 1
            return True
        return False


def should_sample(state: SamplerState, index: int, now: float) -> bool:
    return state.should_sample(index, now)
