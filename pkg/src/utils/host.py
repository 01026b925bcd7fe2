"""
Host resource collector reading procfs

CPU utilisation is the busy share of jiffies between two /proc/stat samples;
memory comes from MemTotal / MemAvailable in /proc/meminfo (kB).
"""

import logging
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Union

from src.metrics.registry import GaugeRegistry, HostMetrics
from src.utils.errors import Unsupported

logger = logging.getLogger(__name__)

DEFAULT_PROC_ROOT = "/proc"
DEFAULT_SPACING = 0.1
MEMINFO_RE = re.compile(r"^(\w+):\s+(\d+)(?:\s+kB)?")


@dataclass(frozen=True)
class CpuTimes:
    busy: int
    total: int


def parse_cpu_line(line: str) -> CpuTimes:
    fields = line.split()
    if not fields or fields[0] != "cpu":
        raise ValueError(f"not an aggregate cpu line: {line!r}")
    values = [int(v) for v in fields[1:]]
    if len(values) < 4:
        raise ValueError("cpu line has fewer than 4 counters")
    # guest time is already included in user/nice
    total = sum(values[:8])
    idle = values[3] + (values[4] if len(values) > 4 else 0)
    return CpuTimes(busy=total - idle, total=total)


def cpu_percent_between(first: CpuTimes, second: CpuTimes) -> float:
    d_total = second.total - first.total
    if d_total <= 0:
        return 0.0
    d_busy = max(0, second.busy - first.busy)
    return min(100.0, max(0.0, 100.0 * d_busy / d_total))


def parse_meminfo(text: str) -> Dict[str, int]:
    values = {}
    for line in text.splitlines():
        match = MEMINFO_RE.match(line)
        if match:
            values[match.group(1)] = int(match.group(2))
    return values


class HostCollector:
    def __init__(self, proc_root: Union[str, Path] = DEFAULT_PROC_ROOT, spacing: float = DEFAULT_SPACING,
                 sleep: Callable[[float], None] = time.sleep):
        self.proc_root = Path(proc_root)
        self.spacing = spacing
        self._sleep = sleep

    @property
    def available(self) -> bool:
        return (self.proc_root / "stat").is_file() and (self.proc_root / "meminfo").is_file()

    def _read(self, name: str) -> str:
        try:
            return (self.proc_root / name).read_text()
        except OSError as e:
            raise Unsupported(f"procfs not readable at {self.proc_root}: {e}") from e

    def read_cpu_times(self) -> CpuTimes:
        for line in self._read("stat").splitlines():
            if line.startswith("cpu "):
                return parse_cpu_line(line)
        raise Unsupported(f"no aggregate cpu line in {self.proc_root / 'stat'}")

    def read_memory(self) -> "tuple[int, int]":
        info = parse_meminfo(self._read("meminfo"))
        if "MemTotal" not in info:
            raise Unsupported("MemTotal missing from meminfo")
        total = info["MemTotal"] * 1024
        # kernels before 3.14 have no MemAvailable
        available = info.get("MemAvailable", info.get("MemFree", 0)) * 1024
        return total, min(available, total)

    def collect(self) -> HostMetrics:
        first = self.read_cpu_times()
        self._sleep(self.spacing)
        second = self.read_cpu_times()
        mem_total, mem_available = self.read_memory()
        return HostMetrics(cpu_percent_between(first, second), mem_total, mem_available)


def collect_host(proc_root: Union[str, Path] = DEFAULT_PROC_ROOT) -> HostMetrics:
    return HostCollector(proc_root).collect()


class HostSampler:
    """Refreshes the registry's host gauges on a fixed period"""

    def __init__(self, registry: GaugeRegistry, collector: Optional[HostCollector] = None, period: float = 5.0):
        self.registry = registry
        self.collector = collector or HostCollector()
        self.period = period
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def sample_once(self) -> Optional[HostMetrics]:
        try:
            metrics = self.collector.collect()
        except Unsupported as e:
            logger.debug(f"Host metrics unavailable: {e}")
            self.registry.set_host(None)
            return None
        except (OSError, ValueError) as e:
            logger.warning(f"Host metrics collection failed: {e}")
            return None
        self.registry.set_host(metrics)
        return metrics

    def _loop(self) -> None:
        while not self._stop.is_set():
            self.sample_once()
            self._stop.wait(self.period)

    def start(self) -> "HostSampler":
        if not self.collector.available:
            logger.info("procfs not available; host gauges disabled")
            return self
        self._thread = threading.Thread(target=self._loop, name="host-sampler", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=self.period + 1)
            self._thread = None
