"""
Monitoring loop: packet source -> sampling -> classifier -> gauge registry

One reader thread feeds a bounded queue; N worker threads classify and
record. File sources block when the queue is full, live sources drop and
count the drop. Every packet that enters the queue is classified and
recorded exactly once, including during shutdown.
"""

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

from src.capture.pcap import RawPacket
from src.capture.sources import PacketSource, open_source
from src.engine.model_file import load_model
from src.metrics.push import MetricsPusher, redact_url
from src.metrics.registry import DROPPED_PACKETS, GaugeRegistry
from src.models.models import ClassificationResult, TrafficClass
from src.pipeline.config import PipelineConfig
from src.pipeline.sampling import SamplerState, SamplingPolicy
from src.utils.classifier import Classifier, HeuristicClassifier, ModelClassifier
from src.utils.errors import CorruptHeader, EmptyPacket, Truncated, VineviError
from src.utils.host import HostSampler
from src.web.app import MetricsServer, serve

logger = logging.getLogger(__name__)

ResultCallback = Callable[[int, RawPacket, ClassificationResult], None]

_SENTINEL = None
_PUT_POLL = 0.1


@dataclass
class RunSummary:
    packets_seen: int = 0
    packets_sampled: int = 0
    dropped: int = 0
    fallbacks: int = 0
    per_class: Dict[str, int] = field(default_factory=lambda: {name: 0 for name in TrafficClass.wire_names()})
    latency_total_ns: int = 0
    latency_max_ns: int = 0
    truncated: bool = False
    error: Optional[str] = None

    @property
    def classified(self) -> int:
        return sum(self.per_class.values())

    @property
    def latency_mean_ms(self) -> float:
        return self.latency_total_ns / self.classified / 1e6 if self.classified else 0.0

    @property
    def latency_max_ms(self) -> float:
        return self.latency_max_ns / 1e6

    def as_dict(self) -> Dict:
        return {
            "packets_seen": self.packets_seen,
            "packets_sampled": self.packets_sampled,
            "dropped": self.dropped,
            "fallbacks": self.fallbacks,
            "per_class": dict(self.per_class),
            "latency_mean_ms": self.latency_mean_ms,
            "latency_max_ms": self.latency_max_ms,
            "truncated": self.truncated,
            "error": self.error,
        }


class Pipeline:
    def __init__(self, source: PacketSource, classifier: Classifier, registry: GaugeRegistry,
                 policy: Optional[SamplingPolicy] = None, workers: int = 1, queue_size: int = 1024,
                 min_confidence: float = 0.0, on_result: Optional[ResultCallback] = None,
                 limit: Optional[int] = None, clock: Callable[[], float] = time.time):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.source = source
        self.classifier = classifier
        self.registry = registry
        self.sampler = SamplerState(policy or SamplingPolicy.all())
        self.workers = workers
        self.min_confidence = min_confidence
        self.on_result = on_result
        self.limit = limit
        self.summary = RunSummary()
        self._fallback = HeuristicClassifier()
        self._clock = clock
        self._queue: "queue.Queue" = queue.Queue(maxsize=queue_size)
        self._index = 0
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._reader: Optional[threading.Thread] = None
        self._threads = []
        self._started = False
        self._finished = False
        if source.is_live:
            self.registry.set_gauge(DROPPED_PACKETS, "Sampled packets dropped on a full queue", 0)

    # reader side
    def _enqueue(self, item) -> bool:
        if self.source.is_live:
            try:
                self._queue.put_nowait(item)
                return True
            except queue.Full:
                with self._lock:
                    self.summary.dropped += 1
                    dropped = self.summary.dropped
                self.registry.set_gauge(DROPPED_PACKETS, "Sampled packets dropped on a full queue", dropped)
                return False
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=_PUT_POLL)
                return True
            except queue.Full:
                continue
        return False

    def _intake(self, pkt: RawPacket, link_type: int) -> bool:
        """Count, sample and queue one packet; False once reading should stop"""
        if self._stop.is_set():
            return False
        index = self._index
        self._index += 1
        self.summary.packets_seen += 1
        if self.sampler.should_sample(index, pkt.timestamp) and self._enqueue((index, pkt, link_type)):
            self.summary.packets_sampled += 1
            if self.limit is not None and self.summary.packets_sampled >= self.limit:
                return False
        return True

    def _read(self) -> None:
        link_type = self.source.link_type
        try:
            self.source.feed(lambda pkt: self._intake(pkt, link_type))
        except (Truncated, CorruptHeader) as e:
            logger.error(f"Source {self.source.description} ended early: {e}")
            self.summary.truncated = True
            self.summary.error = f"{type(e).__name__}: {e}"
        except Exception as e:
            logger.exception(f"Source {self.source.description} failed")
            self.summary.error = f"{type(e).__name__}: {e}"
        finally:
            self.source.close()
            for _ in self._threads:
                self._queue.put(_SENTINEL)

    # worker side
    def _classify(self, pkt: RawPacket, link_type: int) -> ClassificationResult:
        try:
            result = self.classifier.classify(pkt, link_type)
        except VineviError as e:
            if not isinstance(e, EmptyPacket):
                logger.warning(f"Classifier {self.classifier.name} failed, using port heuristic: {e}")
            with self._lock:
                self.summary.fallbacks += 1
            return self._fallback.classify(pkt, link_type)
        if result.confidence < self.min_confidence and self.classifier is not self._fallback:
            with self._lock:
                self.summary.fallbacks += 1
            return self._fallback.classify(pkt, link_type)
        return result

    def _work(self) -> None:
        while True:
            item = self._queue.get()
            if item is _SENTINEL:
                return
            index, pkt, link_type = item
            result = self._classify(pkt, link_type)
            self.registry.record(result.traffic_class, pkt.captured_len, self._clock(), result.latency_ns)
            logger.debug(f"#{index} {result.traffic_class.value} {result.confidence:.2f} {result.latency_ms:.3f}ms")
            with self._lock:
                summary = self.summary
                summary.per_class[result.traffic_class.value] += 1
                summary.latency_total_ns += result.latency_ns
                summary.latency_max_ns = max(summary.latency_max_ns, result.latency_ns)
                if self.on_result is not None:
                    self.on_result(index, pkt, result)

    def start(self) -> "Pipeline":
        if self._started:
            return self
        self._started = True
        self._threads = [
            threading.Thread(target=self._work, name=f"classify-{i}", daemon=True)
            for i in range(self.workers)
        ]
        for thread in self._threads:
            thread.start()
        self._reader = threading.Thread(target=self._read, name="packet-reader", daemon=True)
        self._reader.start()
        return self

    def wait(self, timeout: Optional[float] = None) -> bool:
        """True once the source is exhausted and the queue is drained"""
        if not self._started:
            return True
        deadline = None if timeout is None else time.monotonic() + timeout
        for thread in [self._reader] + self._threads:
            remaining = None if deadline is None else max(0.0, deadline - time.monotonic())
            thread.join(remaining)
            if thread.is_alive():
                return False
        return True

    def request_stop(self) -> None:
        """Signal-safe: only sets flags"""
        self._stop.set()
        self.source.close()

    def shutdown(self) -> RunSummary:
        if not self._started or self._finished:
            return self.summary
        self.request_stop()
        self.wait()
        self._finished = True
        return self.summary

    def run(self) -> RunSummary:
        self.start()
        self.wait()
        self._finished = True
        return self.summary


def build_classifier(cfg: PipelineConfig) -> Classifier:
    if cfg.model is not None:
        return ModelClassifier(load_model(cfg.model))
    return HeuristicClassifier()


class MonitorHandle:
    """A running monitor: pipeline plus endpoint, push client and host sampler"""

    def __init__(self, cfg: PipelineConfig, registry: Optional[GaugeRegistry] = None,
                 on_result: Optional[ResultCallback] = None, limit: Optional[int] = None,
                 clock: Callable[[], float] = time.time):
        self.cfg = cfg
        self.clock = clock
        self.registry = registry or GaugeRegistry(window=cfg.window)
        # startup errors (model, source, bind) surface here, before any thread runs
        classifier = build_classifier(cfg)
        self.source = open_source(str(cfg.pcap) if cfg.pcap else None, cfg.iface, cfg.pace)
        self.server: Optional[MetricsServer] = None
        self.pusher: Optional[MetricsPusher] = None
        self.host_sampler: Optional[HostSampler] = None
        try:
            if cfg.listen:
                self.server = serve(self.registry, cfg.listen, clock)
        except Exception:
            self.source.close()
            raise
        self.pipeline = Pipeline(self.source, classifier, self.registry, cfg.sampling, cfg.workers,
                                 cfg.queue_size, cfg.min_confidence, on_result, limit, clock)
        self._lock = threading.Lock()
        self._closed = False
        self.final_exposition: Optional[str] = None

    @property
    def summary(self) -> RunSummary:
        return self.pipeline.summary

    def start(self) -> "MonitorHandle":
        cfg = self.cfg
        if cfg.push_url:
            self.pusher = MetricsPusher(self.registry, cfg.push_url, cfg.job, cfg.push_interval, clock=self.clock).start()
        if self.server is not None:
            self.host_sampler = HostSampler(self.registry).start()
        logger.info(
            f"Monitoring {cfg.source_description} with {cfg.classifier_description}, "
            f"sampling {cfg.sampling.describe()}, window {cfg.window:g}s, workers {cfg.workers}, "
            f"listen {self.server.address if self.server else 'off'}, "
            f"push {redact_url(cfg.push_url) if cfg.push_url else 'off'}"
        )
        self.pipeline.start()
        return self

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self.pipeline.wait(timeout)

    def request_stop(self) -> None:
        self.pipeline.request_stop()

    def finish_source(self) -> None:
        """Close the last window once the source is drained; the endpoint keeps serving"""
        with self._lock:
            if self.final_exposition is None:
                self.registry.close_window(self.clock())
                self.final_exposition = self.registry.render_exposition()

    def shutdown(self) -> RunSummary:
        with self._lock:
            if self._closed:
                return self.summary
            self._closed = True
        summary = self.pipeline.shutdown()
        self.finish_source()
        if self.pusher is not None:
            self.pusher.stop()
        if self.host_sampler is not None:
            self.host_sampler.stop()
        if self.server is not None:
            self.server.stop()
        logger.info(
            f"Run finished: seen {summary.packets_seen}, sampled {summary.packets_sampled}, "
            f"dropped {summary.dropped}, classes {summary.per_class}"
        )
        return summary


def start_monitor(cfg: PipelineConfig, **kwargs) -> MonitorHandle:
    return MonitorHandle(cfg, **kwargs).start()


def shutdown(handle: Optional[MonitorHandle]) -> None:
    if handle is not None:
        handle.shutdown()


def run(cfg: PipelineConfig, **kwargs) -> RunSummary:
    handle = start_monitor(cfg, **kwargs)
    try:
        handle.wait()
    finally:
        summary = handle.shutdown()
    return summary
