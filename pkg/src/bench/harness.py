"""
Prediction latency and CPU benchmarks

The measurement loop is single-threaded. Latency is taken with
time.perf_counter_ns around each prediction; CPU is sampled from the
process (psutil) and the host (/proc/stat) on a fixed period while a
sustained prediction loop runs in a second thread.
"""

import logging
import math
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union

import psutil

from src.engine.accounting import count_params, flops_total, last_layer_complexity
from src.engine.model_file import load_model
from src.utils.classifier import ModelClassifier
from src.utils.errors import Unsupported, VineviError
from src.utils.host import HostCollector, cpu_percent_between
from src.utils.statistics import LatencyStats, latency_stats
from src.vision.transform import PacketImage, packet_to_image

logger = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 50
DEFAULT_WARMUP = 10
DEFAULT_SAMPLE_PERIOD = 0.25

T = TypeVar("T")


def time_predictions(predict: Callable[[T], Any], inputs: Sequence[T], iterations: int,
                     warmup: int = DEFAULT_WARMUP) -> List[float]:
    """Per-call wall time in ms; inputs are cycled"""
    if iterations < 2:
        raise ValueError(f"iterations must be >= 2, got {iterations}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    if not inputs:
        raise ValueError("at least one input is required")

    for i in range(warmup):
        predict(inputs[i % len(inputs)])

    timings = []
    for i in range(iterations):
        item = inputs[i % len(inputs)]
        started = time.perf_counter_ns()
        predict(item)
        timings.append((time.perf_counter_ns() - started) / 1e6)
    return timings


def measure_latency(predict: Callable[[T], Any], inputs: Sequence[T], iterations: int = DEFAULT_ITERATIONS,
                    warmup: int = DEFAULT_WARMUP, name: str = "") -> LatencyStats:
    return latency_stats(name, time_predictions(predict, inputs, iterations, warmup))


@dataclass
class CpuReport:
    model: str
    duration: float
    mean_cpu_percent: float
    samples: List[Tuple[float, float]]
    system_samples: List[Tuple[float, float]] = field(default_factory=list)
    predictions: int = 0

    @property
    def mean_system_cpu_percent(self) -> float:
        if not self.system_samples:
            return 0.0
        return sum(v for _, v in self.system_samples) / len(self.system_samples)

    def as_dict(self) -> Dict:
        return {
            "model": self.model,
            "duration": self.duration,
            "mean_cpu_percent": self.mean_cpu_percent,
            "mean_system_cpu_percent": self.mean_system_cpu_percent,
            "predictions": self.predictions,
            "samples": [list(s) for s in self.samples],
            "system_samples": [list(s) for s in self.system_samples],
        }


def measure_cpu(predict: Callable[[T], Any], inputs: Sequence[T], duration: float,
                sample_period: float = DEFAULT_SAMPLE_PERIOD, name: str = "",
                host: Optional[HostCollector] = None) -> CpuReport:
    """CPU share of the current process while `predict` runs back to back"""
    if duration < 2 * sample_period:
        raise ValueError(f"duration {duration}s must be at least twice the sample period {sample_period}s")
    if not inputs:
        raise ValueError("at least one input is required")
    host = host or HostCollector()
    if not host.available:
        raise Unsupported(f"CPU sampling needs procfs at {host.proc_root}")

    stop = threading.Event()
    done = [0]

    def loop():
        i = 0
        while not stop.is_set():
            predict(inputs[i % len(inputs)])
            i += 1
        done[0] = i

    process = psutil.Process()
    worker = threading.Thread(target=loop, name="cpu-bench", daemon=True)

    def process_seconds() -> float:
        times = process.cpu_times()
        return times.user + times.system

    started = time.monotonic()
    last_wall, last_cpu, last_sys = started, process_seconds(), host.read_cpu_times()
    worker.start()
    samples, system_samples = [], []
    try:
        while True:
            time.sleep(sample_period)
            now = time.monotonic()
            cpu, sys_times = process_seconds(), host.read_cpu_times()
            wall = now - last_wall
            if wall > 0:
                share = min(100.0, max(0.0, 100.0 * (cpu - last_cpu) / wall))
                samples.append((round(now - started, 6), share))
                system_samples.append((round(now - started, 6), cpu_percent_between(last_sys, sys_times)))
            last_wall, last_cpu, last_sys = now, cpu, sys_times
            if now - started >= duration:
                break
    finally:
        stop.set()
        worker.join()

    mean = sum(v for _, v in samples) / len(samples) if samples else 0.0
    report = CpuReport(name, round(time.monotonic() - started, 6), mean, samples, system_samples, done[0])
    logger.info(f"CPU {name or 'predict'}: mean {mean:.1f}% over {report.duration:.2f}s "
                f"({report.predictions} predictions)")
    return report


@dataclass
class ModelRow:
    name: str
    path: str
    params: int
    flops: int
    last_layer_complexity: float
    latency: LatencyStats
    exclusive: LatencyStats
    timings_ms: List[float] = field(default_factory=list, repr=False)
    exclusive_timings_ms: List[float] = field(default_factory=list, repr=False)
    cpu: Optional[CpuReport] = None

    def as_dict(self) -> Dict:
        return {
            "name": self.name,
            "path": self.path,
            "params": self.params,
            "flops": self.flops,
            "last_layer_complexity": self.last_layer_complexity,
            "latency": self.latency.as_dict(),
            "latency_exclusive": self.exclusive.as_dict(),
            "cpu": self.cpu.as_dict() if self.cpu else None,
        }


@dataclass
class ComparisonReport:
    iterations: int
    warmup: int
    input_count: int
    rows: List[ModelRow] = field(default_factory=list)
    errors: List[Dict[str, str]] = field(default_factory=list)
    generated_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def as_dict(self) -> Dict:
        return {
            "generated_at": self.generated_at,
            "iterations": self.iterations,
            "warmup": self.warmup,
            "input_count": self.input_count,
            "rows": [row.as_dict() for row in self.rows],
            "errors": list(self.errors),
        }


def benchmark_model(path: Union[str, Path], packets: Sequence[bytes], iterations: int,
                    warmup: int = DEFAULT_WARMUP, cpu_duration: Optional[float] = None,
                    sample_period: float = DEFAULT_SAMPLE_PERIOD) -> ModelRow:
    model = load_model(path)
    classifier = ModelClassifier(model)
    images: List[PacketImage] = [packet_to_image(data, classifier.cfg) for data in packets]

    inclusive = time_predictions(classifier.classify_bytes, packets, iterations, warmup)
    exclusive = time_predictions(classifier.classify_image, images, iterations, warmup)
    cpu = None
    if cpu_duration:
        cpu = measure_cpu(classifier.classify_bytes, packets, cpu_duration, sample_period, model.name)

    row = ModelRow(
        name=model.name,
        path=str(path),
        params=count_params(model),
        flops=flops_total(model),
        last_layer_complexity=last_layer_complexity(model),
        latency=latency_stats(model.name, inclusive),
        exclusive=latency_stats(model.name, exclusive),
        timings_ms=inclusive,
        exclusive_timings_ms=exclusive,
        cpu=cpu,
    )
    logger.info(f"{model.name}: mean {row.latency.mean_ms:.3f} ms "
                f"(+/- {row.latency.ci95_half_width_ms:.3f}), {row.params} params, {row.flops} FLOPs")
    return row


def compare_models(model_paths: Sequence[Union[str, Path]], packets: Sequence[bytes],
                   iterations: int = DEFAULT_ITERATIONS, warmup: int = DEFAULT_WARMUP,
                   cpu_duration: Optional[float] = None,
                   sample_period: float = DEFAULT_SAMPLE_PERIOD) -> ComparisonReport:
    """Rows sorted by transform-inclusive mean latency; load failures become error entries"""
    if not model_paths:
        raise ValueError("at least one model is required")
    report = ComparisonReport(iterations=iterations, warmup=warmup, input_count=len(packets))
    for path in model_paths:
        try:
            row = benchmark_model(path, packets, iterations, warmup, cpu_duration, sample_period)
        except (VineviError, OSError) as e:
            logger.error(f"Skipping {path}: {type(e).__name__}: {e}")
            report.errors.append({"path": str(path), "error": f"{type(e).__name__}: {e}"})
            continue
        if not math.isfinite(row.latency.mean_ms):
            report.errors.append({"path": str(path), "error": "non-finite latency"})
            continue
        report.rows.append(row)
    report.rows.sort(key=lambda row: row.latency.mean_ms)
    return report
