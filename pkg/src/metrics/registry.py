"""
Gauge registry for per-class traffic and host metrics

Per-class gauges report the most recently closed tumbling window, so they
rise and fall with the traffic mix. Families render in text exposition
format 0.0.4, sorted by name; samples within a family are sorted by labels.
"""

import logging
import math
import re
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from src.models.models import TrafficClass

logger = logging.getLogger(__name__)

CONTENT_TYPE = "text/plain; version=0.0.4; charset=utf-8"
DEFAULT_WINDOW_SECONDS = 10.0

METRIC_NAME_RE = re.compile(r"^[a-zA-Z_:][a-zA-Z0-9_:]*$")
LABEL_NAME_RE = re.compile(r"^[a-zA-Z_][a-zA-Z0-9_]*$")

CLASS_PACKETS = "vinevi_traffic_class_packets"
CLASS_BYTES = "vinevi_traffic_class_bytes"
CLASSIFICATION_LATENCY = "vinevi_classification_latency_ms"
HOST_CPU = "vinevi_host_cpu_percent"
HOST_MEM_AVAILABLE = "vinevi_host_memory_available_bytes"
HOST_MEM_TOTAL = "vinevi_host_memory_total_bytes"
DROPPED_PACKETS = "vinevi_dropped_packets"
PUSH_FAILURES = "vinevi_push_failures"

Labels = Tuple[Tuple[str, str], ...]


@dataclass(frozen=True)
class Gauge:
    name: str
    help: str
    labels: Labels
    value: float

    def __post_init__(self):
        if not METRIC_NAME_RE.match(self.name):
            raise ValueError(f"invalid metric name {self.name!r}")
        for key, _ in self.labels:
            if not LABEL_NAME_RE.match(key):
                raise ValueError(f"invalid label name {key!r}")
        object.__setattr__(self, "labels", tuple(sorted(self.labels)))


@dataclass(frozen=True)
class HostMetrics:
    cpu_percent: float
    mem_total: int
    mem_available: int

    def __post_init__(self):
        if not 0.0 <= self.cpu_percent <= 100.0:
            raise ValueError(f"cpu_percent out of range: {self.cpu_percent}")
        if self.mem_available > self.mem_total:
            raise ValueError("mem_available exceeds mem_total")


def _zero_counts() -> Dict[TrafficClass, int]:
    return {cls: 0 for cls in TrafficClass}


@dataclass
class ClassWindow:
    """Tumbling window of per-class packet and byte counts"""
    window: float = DEFAULT_WINDOW_SECONDS
    start: Optional[float] = None
    packets: Dict[TrafficClass, int] = field(default_factory=_zero_counts)
    bytes: Dict[TrafficClass, int] = field(default_factory=_zero_counts)
    latency_ns: int = 0
    previous_packets: Dict[TrafficClass, int] = field(default_factory=_zero_counts)
    previous_bytes: Dict[TrafficClass, int] = field(default_factory=_zero_counts)
    previous_latency_ns: int = 0
    closed_windows: int = 0
    closed_packets: int = 0

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("window length must be positive")

    def _close(self) -> None:
        self.previous_packets, self.packets = self.packets, _zero_counts()
        self.previous_bytes, self.bytes = self.bytes, _zero_counts()
        self.previous_latency_ns, self.latency_ns = self.latency_ns, 0
        self.closed_windows += 1
        self.closed_packets += sum(self.previous_packets.values())

    def roll(self, now: float) -> None:
        if self.start is None:
            self.start = now
            return
        if now < self.start + self.window:
            return
        elapsed = int((now - self.start) // self.window)
        self._close()
        if elapsed > 1:
            # the windows in between saw no traffic
            self._close()
        self.start += elapsed * self.window

    def force_close(self, now: float) -> None:
        if self.start is None:
            self.start = now
        self._close()
        self.start = now

    def add(self, traffic_class: TrafficClass, nbytes: int, latency_ns: int = 0) -> None:
        self.packets[traffic_class] += 1
        self.bytes[traffic_class] += nbytes
        self.latency_ns += latency_ns


def format_value(value: float) -> str:
    """Shortest decimal that round-trips; integral values drop the '.0'"""
    value = float(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "+Inf" if value > 0 else "-Inf"
    if value.is_integer() and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(value)


def escape_label_value(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\"", "\\\"").replace("\n", "\\n")


def escape_help(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def render_gauges(gauges: Iterable[Gauge]) -> str:
    families: Dict[str, List[Gauge]] = {}
    for gauge in gauges:
        families.setdefault(gauge.name, []).append(gauge)

    lines = []
    for name in sorted(families):
        samples = sorted(families[name], key=lambda g: g.labels)
        lines.append(f"# HELP {name} {escape_help(samples[0].help)}")
        lines.append(f"# TYPE {name} gauge")
        for gauge in samples:
            if gauge.labels:
                label_text = ",".join(f'{k}="{escape_label_value(v)}"' for k, v in gauge.labels)
                lines.append(f"{name}{{{label_text}}} {format_value(gauge.value)}")
            else:
                lines.append(f"{name} {format_value(gauge.value)}")
    return "".join(line + "\n" for line in lines)


class GaugeRegistry:
    """Thread-safe registry; readers always see one consistent snapshot"""

    def __init__(self, window: float = DEFAULT_WINDOW_SECONDS, start: Optional[float] = None):
        self._lock = threading.Lock()
        self._window = ClassWindow(window=window, start=start)
        self._host: Optional[HostMetrics] = None
        self._extra: Dict[Tuple[str, Labels], Gauge] = {}
        self.recorded_total = 0

    @property
    def window_seconds(self) -> float:
        return self._window.window

    def record(self, traffic_class: TrafficClass, nbytes: int, now: float, latency_ns: int = 0) -> None:
        with self._lock:
            self._window.roll(now)
            self._window.add(traffic_class, nbytes, latency_ns)
            self.recorded_total += 1

    def close_window(self, now: float) -> None:
        """Close the current window immediately (used on shutdown)"""
        with self._lock:
            self._window.force_close(now)

    def set_host(self, host: Optional[HostMetrics]) -> None:
        with self._lock:
            self._host = host

    def set_gauge(self, name: str, help_text: str, value: float, labels: Optional[Dict[str, str]] = None) -> None:
        gauge = Gauge(name, help_text, tuple((labels or {}).items()), value)
        with self._lock:
            self._extra[(gauge.name, gauge.labels)] = gauge

    def inc_gauge(self, name: str, help_text: str, amount: float = 1.0) -> float:
        with self._lock:
            current = self._extra.get((name, ()))
            value = (current.value if current else 0.0) + amount
            self._extra[(name, ())] = Gauge(name, help_text, (), value)
        return value

    def closed_counts(self) -> Dict[TrafficClass, int]:
        with self._lock:
            return dict(self._window.previous_packets)

    def closed_packets_total(self) -> int:
        """Packets accounted in all closed windows so far"""
        with self._lock:
            return self._window.closed_packets

    def snapshot(self, now: Optional[float] = None) -> List[Gauge]:
        with self._lock:
            if now is not None and self._window.start is not None:
                self._window.roll(now)
            packets = dict(self._window.previous_packets)
            nbytes = dict(self._window.previous_bytes)
            latency_ns = self._window.previous_latency_ns
            host = self._host
            extra = list(self._extra.values())

        gauges = []
        for cls in TrafficClass:
            labels = (("class", cls.value),)
            gauges.append(Gauge(CLASS_PACKETS, "Packets classified per traffic class in the last closed window",
                                labels, packets[cls]))
            gauges.append(Gauge(CLASS_BYTES, "Bytes classified per traffic class in the last closed window",
                                labels, nbytes[cls]))
        total = sum(packets.values())
        gauges.append(Gauge(CLASSIFICATION_LATENCY, "Mean classification latency in the last closed window (ms)",
                            (), latency_ns / total / 1e6 if total else 0))
        if host is not None:
            gauges.append(Gauge(HOST_CPU, "Host CPU utilisation percent", (), host.cpu_percent))
            gauges.append(Gauge(HOST_MEM_AVAILABLE, "Host available memory in bytes", (), host.mem_available))
            gauges.append(Gauge(HOST_MEM_TOTAL, "Host total memory in bytes", (), host.mem_total))
        gauges.extend(extra)
        return gauges

    def render_exposition(self, now: Optional[float] = None) -> str:
        return render_gauges(self.snapshot(now))


def render_exposition(registry: GaugeRegistry, now: Optional[float] = None) -> str:
    return registry.render_exposition(now)
