import threading
import time
from collections import Counter

import pytest
import requests

from src.capture.pcap import LINKTYPE_ETHERNET
from src.capture.sources import LiveCaptureSource, PacketSource, PcapFileSource
from src.capture.synthetic import labelled_packets, mixed_labels
from src.metrics.registry import CLASS_PACKETS, DROPPED_PACKETS, GaugeRegistry
from src.models.models import TrafficClass
from src.pipeline.config import PipelineConfig
from src.pipeline.runner import MonitorHandle, Pipeline, run, shutdown
from src.pipeline.sampling import SamplingPolicy
from src.utils.classifier import HeuristicClassifier, ModelClassifier
from src.utils.errors import ImageIoError, Unsupported


def zero_classes(**counts):
    per_class = {name: 0 for name in TrafficClass.wire_names()}
    per_class.update(counts)
    return per_class


class ListSource(PacketSource):
    """In-memory live source; sets `exhausted` after yielding everything"""

    is_live = True

    def __init__(self, packets):
        self._packets = packets
        self.exhausted = threading.Event()
        self.closed = False

    @property
    def link_type(self):
        return LINKTYPE_ETHERNET

    @property
    def description(self):
        return "list"

    def packets(self):
        yield from self._packets
        self.exhausted.set()

    def close(self):
        self.closed = True


class GatedClassifier(HeuristicClassifier):
    def __init__(self):
        self.gate = threading.Event()

    def classify(self, pkt, link_type=LINKTYPE_ETHERNET):
        self.gate.wait(timeout=10)
        return super().classify(pkt, link_type)


class FailingClassifier(HeuristicClassifier):
    @property
    def name(self):
        return "failing"

    def classify(self, pkt, link_type=LINKTYPE_ETHERNET):
        raise ImageIoError("model backend unavailable")


def heuristic_pipeline(path, **kwargs):
    return Pipeline(PcapFileSource(path), HeuristicClassifier(), GaugeRegistry(), **kwargs)


def test_dns_capture_all_packets(dns_pcap):
    summary = heuristic_pipeline(dns_pcap).run()
    assert (summary.packets_seen, summary.packets_sampled) == (30, 30)
    assert summary.per_class == zero_classes(dns=30)
    assert summary.error is None


def test_dns_capture_one_in_three(dns_pcap):
    summary = heuristic_pipeline(dns_pcap, policy=SamplingPolicy.one_in_n(3)).run()
    assert (summary.packets_seen, summary.packets_sampled) == (30, 10)
    assert summary.per_class == zero_classes(dns=10)


def test_empty_capture(empty_pcap):
    summary = heuristic_pipeline(empty_pcap).run()
    assert (summary.packets_seen, summary.packets_sampled, summary.classified) == (0, 0, 0)
    assert summary.per_class == zero_classes()


def test_mixed_capture_is_counted_exactly_once(make_capture):
    labels = mixed_labels(1000, seed=9)
    path = make_capture("mixed.pcap", labels, seed=9)
    registry = GaugeRegistry(window=0.05)
    pipeline = Pipeline(PcapFileSource(path), HeuristicClassifier(), registry, workers=4, queue_size=16)
    summary = pipeline.run()
    registry.close_window(time.time())
    assert summary.packets_sampled == 1000
    assert summary.per_class == {cls.value: n for cls, n in Counter(labels).items()}
    assert registry.recorded_total == 1000
    assert registry.closed_packets_total() == 1000


def test_limit_stops_after_n(dns_pcap):
    seen = []
    summary = heuristic_pipeline(dns_pcap, limit=5, on_result=lambda i, p, r: seen.append(i)).run()
    assert summary.packets_sampled == 5
    assert sorted(seen) == [0, 1, 2, 3, 4]


def test_on_result_sees_every_classification(dns_pcap):
    results = []
    heuristic_pipeline(dns_pcap, workers=3, on_result=lambda i, p, r: results.append((i, r))).run()
    assert sorted(i for i, _ in results) == list(range(30))
    assert all(r.traffic_class is TrafficClass.DNS for _, r in results)


def test_live_source_drops_on_full_queue():
    packets = labelled_packets([TrafficClass.SSH] * 20)
    source = ListSource(packets)
    classifier = GatedClassifier()
    registry = GaugeRegistry()
    pipeline = Pipeline(source, classifier, registry, queue_size=1).start()
    assert source.exhausted.wait(timeout=10)
    classifier.gate.set()
    assert pipeline.wait(timeout=10)
    summary = pipeline.summary
    assert summary.dropped >= 1
    assert summary.packets_sampled + summary.dropped == summary.packets_seen == 20
    assert summary.classified == summary.packets_sampled
    assert f"{DROPPED_PACKETS} {summary.dropped}" in registry.render_exposition().splitlines()
    assert source.closed


class FakeFrame:
    """Enough of a scapy packet for the live source: bytes, time, wirelen"""

    def __init__(self, pkt):
        self._data = pkt.data
        self.time = pkt.timestamp
        self.wirelen = pkt.original_len

    def __bytes__(self):
        return self._data


class StubSniffer:
    """Plays a frame list through prn on its own thread, like AsyncSniffer"""

    def __init__(self, frames, iface, prn, store):
        self.frames = frames
        self.iface = iface
        self.prn = prn
        self.running = False
        self.stopped = False
        self.done = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        for frame in self.frames:
            if self.stopped:
                break
            self.prn(frame)
        self.running = False
        self.done.set()

    def start(self):
        self.running = True
        self._thread.start()

    def stop(self):
        self.stopped = True
        self.running = False
        self._thread.join(timeout=5)


def stub_live_source(packets):
    sniffers = []

    def factory(**kwargs):
        sniffers.append(StubSniffer([FakeFrame(pkt) for pkt in packets], **kwargs))
        return sniffers[-1]

    return LiveCaptureSource("eth-test", poll_interval=0.01, sniffer_factory=factory), sniffers


def test_live_capture_drops_at_the_pipeline_queue():
    source, sniffers = stub_live_source(labelled_packets([TrafficClass.DNS] * 20))
    classifier = GatedClassifier()
    registry = GaugeRegistry()
    pipeline = Pipeline(source, classifier, registry, queue_size=2).start()
    deadline = time.monotonic() + 10
    while not sniffers and time.monotonic() < deadline:
        time.sleep(0.01)
    assert sniffers[0].done.wait(timeout=10)
    # one packet held by the blocked worker plus a full queue
    assert pipeline.summary.packets_sampled <= 2 + 1
    classifier.gate.set()
    assert pipeline.wait(timeout=10)

    summary = pipeline.summary
    assert summary.packets_seen == 20
    assert summary.dropped >= 20 - 3
    assert summary.packets_sampled + summary.dropped == 20
    assert summary.per_class == zero_classes(dns=summary.packets_sampled)
    assert f"{DROPPED_PACKETS} {summary.dropped}" in registry.render_exposition().splitlines()


def test_live_capture_stops_sniffer_at_limit():
    source, sniffers = stub_live_source(labelled_packets([TrafficClass.SSH] * 50))
    summary = Pipeline(source, HeuristicClassifier(), GaugeRegistry(), queue_size=64, limit=5).run()
    assert summary.packets_sampled == 5
    assert summary.per_class == zero_classes(ssh=5)
    assert summary.dropped == 0


def test_live_source_has_no_pull_iterator():
    source, _ = stub_live_source([])
    with pytest.raises(Unsupported):
        source.packets()


def test_time_pool_over_paced_capture(make_capture):
    path = make_capture("paced.pcap", [TrafficClass.DNS] * 12, spacing=0.25)
    delays = []
    sampled = []
    source = PcapFileSource(path, pace=True, sleep=delays.append)
    pipeline = Pipeline(source, HeuristicClassifier(), GaugeRegistry(), SamplingPolicy.time_pool(1.0, 2),
                        on_result=lambda index, pkt, result: sampled.append(pkt.timestamp))
    summary = pipeline.run()
    assert delays == pytest.approx([0.25] * 11)
    assert (summary.packets_seen, summary.packets_sampled) == (12, 6)
    assert Counter(int(ts) for ts in sampled) == {1000: 2, 1001: 2, 1002: 2}


def test_classifier_errors_fall_back_to_heuristic(dns_pcap):
    pipeline = Pipeline(PcapFileSource(dns_pcap), FailingClassifier(), GaugeRegistry())
    summary = pipeline.run()
    assert summary.per_class == zero_classes(dns=30)
    assert summary.fallbacks == 30


def test_low_confidence_model_results_fall_back(dns_pcap, reference_models):
    classifier = ModelClassifier(reference_models["tiny-res"])
    summary = Pipeline(PcapFileSource(dns_pcap), classifier, GaugeRegistry(), min_confidence=1.0).run()
    assert summary.per_class == zero_classes(dns=30)
    assert summary.fallbacks == 30


def test_model_pipeline_classifies_every_packet(dns_pcap, reference_models):
    classifier = ModelClassifier(reference_models["tiny-mobile"])
    summary = Pipeline(PcapFileSource(dns_pcap), classifier, GaugeRegistry(), workers=2).run()
    assert summary.classified == 30
    assert summary.fallbacks == 0
    assert summary.latency_mean_ms > 0


def test_shutdown_mid_file(make_capture):
    path = make_capture("slow.pcap", mixed_labels(200), spacing=0.02)
    pipeline = Pipeline(PcapFileSource(path, pace=True), HeuristicClassifier(), GaugeRegistry()).start()
    time.sleep(0.2)
    summary = pipeline.shutdown()
    assert summary.packets_seen >= summary.packets_sampled >= summary.classified
    assert summary.packets_seen < 200
    assert pipeline.shutdown() is summary


def test_shutdown_before_start(dns_pcap):
    pipeline = heuristic_pipeline(dns_pcap)
    summary = pipeline.shutdown()
    assert summary.packets_seen == 0
    assert pipeline.shutdown().packets_seen == 0


def test_monitor_serves_final_window(dns_pcap):
    cfg = PipelineConfig(pcap=dns_pcap, heuristic=True, listen="127.0.0.1:0")
    handle = MonitorHandle(cfg).start()
    try:
        assert handle.wait(timeout=10)
        handle.finish_source()
        line = f'{CLASS_PACKETS}{{class="dns"}} 30'
        assert line in handle.final_exposition.splitlines()
        body = requests.get(f"http://{handle.server.address}/metrics", timeout=5).text
        assert line in body.splitlines()
    finally:
        summary = handle.shutdown()
    assert summary.per_class["dns"] == 30
    assert handle.shutdown() is summary
    shutdown(handle)
    shutdown(None)


def test_run_without_endpoint(dns_pcap):
    cfg = PipelineConfig(pcap=dns_pcap, heuristic=True, listen=None, sampling=SamplingPolicy.one_in_n(3))
    summary = run(cfg)
    assert summary.per_class == zero_classes(dns=10)


def test_truncated_capture_keeps_partial_counts(make_capture):
    path = make_capture("cut.pcap", [TrafficClass.DNS] * 10)
    path.write_bytes(path.read_bytes()[:-5])
    summary = heuristic_pipeline(path).run()
    assert summary.truncated
    assert "Truncated" in summary.error
    assert summary.per_class == zero_classes(dns=9)


@pytest.mark.parametrize("workers", [0, -1])
def test_invalid_worker_count(dns_pcap, workers):
    with pytest.raises(ValueError):
        heuristic_pipeline(dns_pcap, workers=workers)
