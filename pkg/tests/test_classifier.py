import json
import random
from pathlib import Path

import numpy as np
import pytest

from src.capture.pcap import IPPROTO_TCP, IPPROTO_UDP, LINKTYPE_RAW, FlowKey, RawPacket
from src.capture.synthetic import CLASS_PORTS, class_packet, ethernet_ipv4_packet, labelled_packets
from src.engine.layers import dense, global_avg_pool, softmax
from src.engine.model_file import load_model
from src.engine.network import Model
from src.models.models import ClassifierSource, TrafficClass
from src.utils.classifier import (
    HeuristicClassifier, ModelClassifier, classify_heuristic, classify_with_model, heuristic_class, port_class,
)
from src.utils.errors import LabelMismatch
from src.vision.transform import packet_to_image

FIXTURES = Path(__file__).parent / "fixtures"


def gap_model(weights, bias):
    return Model("gap", TrafficClass.wire_names(), [global_avg_pool(), dense(3, 7, weights, bias), softmax()])


def test_udp_dst_53_is_dns():
    pkt = RawPacket.from_bytes(ethernet_ipv4_packet(IPPROTO_UDP, 50000, 53))
    result = classify_heuristic(pkt)
    assert result.traffic_class is TrafficClass.DNS
    assert result.confidence == 1.0
    assert result.source is ClassifierSource.HEURISTIC


def test_tcp_src_22_is_ssh():
    pkt = RawPacket.from_bytes(ethernet_ipv4_packet(IPPROTO_TCP, 22, 50000))
    assert classify_heuristic(pkt).traffic_class is TrafficClass.SSH


def test_non_ip_defaults_to_browsing():
    arp = bytes.fromhex("ffffffffffff" "020000000001" "0806") + b"\x00" * 28
    result = classify_heuristic(RawPacket.from_bytes(arp))
    assert result.traffic_class is TrafficClass.BROWSING
    assert result.confidence == 0.5


@pytest.mark.parametrize("port,proto,expected", [
    (3389, IPPROTO_TCP, TrafficClass.RDP),
    (5061, IPPROTO_TCP, TrafficClass.VOIP),
    (20000, IPPROTO_UDP, TrafficClass.VOIP),
    (20000, IPPROTO_TCP, None),
    (6885, IPPROTO_TCP, TrafficClass.BITTORRENT),
    (8080, IPPROTO_TCP, TrafficClass.BROWSING),
    (5683, IPPROTO_UDP, TrafficClass.IOT),
    (12345, IPPROTO_TCP, None),
])
def test_port_table(port, proto, expected):
    assert port_class(port, proto) is expected


def test_source_port_wins_over_destination():
    assert heuristic_class(FlowKey(IPPROTO_TCP, 22, 53)) == (TrafficClass.SSH, 1.0)


def test_portless_key_defaults():
    assert heuristic_class(FlowKey(IPPROTO_UDP)) == (TrafficClass.BROWSING, 0.5)


def test_heuristic_recovers_every_synthetic_class():
    classifier = HeuristicClassifier()
    labels = list(TrafficClass) * 3
    for label, pkt in zip(labels, labelled_packets(labels, seed=5)):
        assert classifier.classify(pkt).traffic_class is label
    assert set(CLASS_PORTS) == set(TrafficClass)


def test_heuristic_on_raw_link_type():
    frame = class_packet(TrafficClass.RDP, random.Random(0))
    result = classify_heuristic(RawPacket.from_bytes(frame[14:]), LINKTYPE_RAW)
    assert result.traffic_class is TrafficClass.RDP


def test_model_with_five_labels_is_rejected():
    labels = ("a", "b", "c", "d", "e")
    model = Model("five", labels, [dense(12, 5, np.zeros((5, 12))), softmax()], input_shape=(3, 2, 2))
    with pytest.raises(LabelMismatch):
        ModelClassifier(model)


def test_single_byte_packet(reference_models):
    result = classify_with_model(RawPacket.from_bytes(b"\x7b"), reference_models["tiny-mobile"])
    assert isinstance(result.traffic_class, TrafficClass)
    assert 0.0 <= result.confidence <= 1.0
    assert result.source is ClassifierSource.MODEL


def test_committed_model_matches_golden_record():
    golden = json.loads((FIXTURES / "tiny-res.golden.json").read_text())
    pkt = RawPacket.from_bytes(bytes.fromhex(golden["packet_hex"]))
    for _ in range(2):
        result = classify_with_model(pkt, load_model(FIXTURES / golden["model"]))
        assert result.traffic_class.value == golden["class"]
        assert result.confidence == pytest.approx(golden["confidence"], abs=1e-9)
        assert result.scores.as_dict() == pytest.approx(golden["scores"], abs=1e-9)


def test_constant_logit_shift_keeps_prediction():
    rng = np.random.default_rng(3)
    weights = rng.standard_normal((7, 3)).astype(np.float32)
    bias = (rng.integers(-8, 8, size=7) / 4).astype(np.float32)
    pkt = RawPacket.from_bytes(bytes(range(1, 200)))
    base = classify_with_model(pkt, gap_model(weights, bias))
    for shift in (-40.0, -1.5, 2.0, 64.0):
        moved = classify_with_model(pkt, gap_model(weights, bias + np.float32(shift)))
        assert moved.traffic_class is base.traffic_class
        assert moved.scores.scores == pytest.approx(base.scores.scores, abs=1e-12)


def test_result_carries_scores_and_timings(reference_models):
    classifier = ModelClassifier(reference_models["tiny-squeeze"])
    result = classifier.classify(RawPacket.from_bytes(bytes(range(80))))
    assert result.scores.labels == TrafficClass.wire_names()
    assert result.confidence == pytest.approx(max(result.scores.scores))
    assert result.traffic_class.value == result.scores.labels[result.scores.scores.index(max(result.scores.scores))]
    assert 0 <= result.transform_ns <= result.latency_ns


def test_image_path_matches_bytes_path(reference_models):
    classifier = ModelClassifier(reference_models["tiny-res"])
    data = bytes(range(33))
    assert classifier.classify_image(packet_to_image(data)).scores == classifier.classify_bytes(data).scores
