"""
Domain models shared by the classifier, the metrics registry and the tools
"""

import enum
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple


class TrafficClass(enum.Enum):
    """Application classes predicted by the agent, in wire order"""
    BITTORRENT = "bittorrent"
    BROWSING = "browsing"
    DNS = "dns"
    IOT = "iot"
    RDP = "rdp"
    SSH = "ssh"
    VOIP = "voip"

    @classmethod
    def wire_names(cls) -> Tuple[str, ...]:
        return tuple(sorted(member.value for member in cls))

    @classmethod
    def from_wire(cls, name: str) -> "TrafficClass":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"Unknown traffic class: {name!r}") from None


class ClassifierSource(enum.Enum):
    MODEL = "model"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class ClassScores:
    """Probability vector aligned to a label list"""
    labels: Tuple[str, ...]
    scores: Tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.scores):
            raise ValueError("labels and scores must have the same length")

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.labels, self.scores))


@dataclass(frozen=True)
class ClassificationResult:
    traffic_class: TrafficClass
    confidence: float
    latency_ns: int
    source: ClassifierSource
    # time spent in packet -> tensor conversion, model path only
    transform_ns: Optional[int] = None
    scores: Optional[ClassScores] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")
        if self.latency_ns < 0:
            raise ValueError("latency must be non-negative")

    @property
    def latency_ms(self) -> float:
        return self.latency_ns / 1e6
