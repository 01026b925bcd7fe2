"""
PipelineConfig: everything one monitoring run needs
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from src.metrics.push import DEFAULT_JOB, DEFAULT_PUSH_INTERVAL, push_endpoint
from src.metrics.registry import DEFAULT_WINDOW_SECONDS
from src.pipeline.sampling import SamplingPolicy, parse_sampling
from src.utils.config import parse_bool, parse_duration, parse_int, resolve_settings
from src.utils.errors import ConfigError
from src.web.app import DEFAULT_LISTEN, parse_listen

logger = logging.getLogger(__name__)

DEFAULT_QUEUE_SIZE = 1024


@dataclass(frozen=True)
class PipelineConfig:
    pcap: Optional[Path] = None
    iface: Optional[str] = None
    pace: bool = False
    model: Optional[Path] = None
    heuristic: bool = False
    sampling: SamplingPolicy = field(default_factory=SamplingPolicy.all)
    window: float = DEFAULT_WINDOW_SECONDS
    listen: Optional[str] = DEFAULT_LISTEN
    push_url: Optional[str] = None
    job: str = DEFAULT_JOB
    push_interval: float = DEFAULT_PUSH_INTERVAL
    workers: int = 1
    queue_size: int = DEFAULT_QUEUE_SIZE
    # model results below this confidence fall back to the port heuristic
    min_confidence: float = 0.0

    def __post_init__(self):
        if (self.pcap is None) == (self.iface is None):
            raise ConfigError("exactly one packet source is required: --pcap or --iface")
        if (self.model is None) == (not self.heuristic):
            raise ConfigError("exactly one classifier is required: --model or --heuristic")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.queue_size < 1:
            raise ConfigError(f"queue size must be >= 1, got {self.queue_size}")
        if not self.window > 0:
            raise ConfigError("window must be positive")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ConfigError(f"min confidence must be within [0, 1], got {self.min_confidence}")
        if self.listen is not None:
            parse_listen(self.listen)
        if self.push_url is not None:
            try:
                push_endpoint(self.push_url, self.job)
            except ValueError as e:
                raise ConfigError(str(e)) from None

    @property
    def is_live(self) -> bool:
        return self.iface is not None

    @property
    def source_description(self) -> str:
        return f"pcap {self.pcap}" if self.pcap else f"interface {self.iface}"

    @property
    def classifier_description(self) -> str:
        return f"model {self.model}" if self.model else "heuristic"

    @classmethod
    def from_settings(cls, settings: Mapping[str, Any]) -> "PipelineConfig":
        def get(key):
            value = settings.get(key)
            return None if value in (None, "") else value

        try:
            min_confidence = float(settings.get("VINEVI_MIN_CONFIDENCE", 0.0))
        except ValueError:
            raise ConfigError("VINEVI_MIN_CONFIDENCE must be a number") from None

        pcap, model = get("VINEVI_PCAP"), get("VINEVI_MODEL")
        return cls(
            pcap=Path(pcap) if pcap else None,
            iface=get("VINEVI_IFACE"),
            pace=parse_bool(settings.get("VINEVI_PACE", False), "VINEVI_PACE"),
            model=Path(model) if model else None,
            heuristic=parse_bool(settings.get("VINEVI_HEURISTIC", False), "VINEVI_HEURISTIC"),
            sampling=parse_sampling(str(settings.get("VINEVI_SAMPLE", "all"))),
            window=parse_duration(settings.get("VINEVI_WINDOW", DEFAULT_WINDOW_SECONDS)),
            listen=get("VINEVI_LISTEN"),
            push_url=get("VINEVI_PUSH_URL"),
            job=str(settings.get("VINEVI_JOB") or DEFAULT_JOB),
            push_interval=parse_duration(settings.get("VINEVI_PUSH_INTERVAL", DEFAULT_PUSH_INTERVAL)),
            workers=parse_int(settings.get("VINEVI_WORKERS", 1), "VINEVI_WORKERS", 1),
            queue_size=parse_int(settings.get("VINEVI_QUEUE_SIZE", DEFAULT_QUEUE_SIZE), "VINEVI_QUEUE_SIZE", 1),
            min_confidence=min_confidence,
        )


def load_pipeline_config(flags: Mapping[str, Any], config_file: Optional[Union[str, Path]] = None,
                         environ: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    return PipelineConfig.from_settings(resolve_settings(flags, config_file, environ))
