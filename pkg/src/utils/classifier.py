"""
Packet classifiers

ModelClassifier runs the image transform and the network; HeuristicClassifier
maps well-known ports to classes and works without a model.
"""

import logging
import time
from abc import ABC, abstractmethod
from typing import Optional, Tuple

from src.capture.pcap import IPPROTO_UDP, LINKTYPE_ETHERNET, FlowKey, RawPacket, extract_flow_key
from src.engine.network import Model, argmax_class, forward
from src.models.models import ClassificationResult, ClassifierSource, TrafficClass
from src.utils.errors import LabelMismatch
from src.vision.transform import DEFAULT_TRANSFORM, PacketImage, TransformConfig, normalize, packet_to_image

logger = logging.getLogger(__name__)

EXACT_CONFIDENCE = 1.0
DEFAULT_CONFIDENCE = 0.5
DEFAULT_CLASS = TrafficClass.BROWSING

RTP_PORTS = range(16384, 32768)


class Classifier(ABC):
    source: ClassifierSource

    @property
    @abstractmethod
    def name(self) -> str:
        ...

    @abstractmethod
    def classify(self, pkt: RawPacket, link_type: int = LINKTYPE_ETHERNET) -> ClassificationResult:
        ...


class ModelClassifier(Classifier):
    source = ClassifierSource.MODEL

    def __init__(self, model: Model, cfg: TransformConfig = DEFAULT_TRANSFORM):
        if sorted(model.class_labels) != list(TrafficClass.wire_names()):
            raise LabelMismatch(
                f"model {model.name} labels {list(model.class_labels)} are not the traffic classes "
                f"{list(TrafficClass.wire_names())}"
            )
        self.model = model
        self.cfg = cfg
        self._classes = tuple(TrafficClass.from_wire(label) for label in model.class_labels)

    @property
    def name(self) -> str:
        return self.model.name

    def _result(self, scores, started_ns: int, transform_ns: Optional[int]) -> ClassificationResult:
        _, index = argmax_class(scores)
        latency = time.perf_counter_ns() - started_ns
        confidence = min(1.0, max(0.0, scores.scores[index]))
        return ClassificationResult(self._classes[index], confidence, latency, self.source, transform_ns, scores)

    def classify(self, pkt: RawPacket, link_type: int = LINKTYPE_ETHERNET) -> ClassificationResult:
        """Transform-inclusive prediction of one packet"""
        return self.classify_bytes(pkt.data)

    def classify_bytes(self, data: bytes) -> ClassificationResult:
        started = time.perf_counter_ns()
        tensor = normalize(packet_to_image(data, self.cfg), self.model.mean, self.model.std)
        transform_ns = time.perf_counter_ns() - started
        return self._result(forward(self.model, tensor), started, transform_ns)

    def classify_image(self, img: PacketImage) -> ClassificationResult:
        """Prediction from an already rendered image (normalize + forward)"""
        started = time.perf_counter_ns()
        tensor = normalize(img, self.model.mean, self.model.std)
        return self._result(forward(self.model, tensor), started, None)


def classify_with_model(pkt: RawPacket, model: Model, cfg: TransformConfig = DEFAULT_TRANSFORM) -> ClassificationResult:
    return ModelClassifier(model, cfg).classify(pkt)


def port_class(port: int, ip_proto: int) -> Optional[TrafficClass]:
    if port == 53:
        return TrafficClass.DNS
    if port == 22:
        return TrafficClass.SSH
    if port == 3389:
        return TrafficClass.RDP
    if port in (5060, 5061) or (ip_proto == IPPROTO_UDP and port in RTP_PORTS):
        return TrafficClass.VOIP
    if 6881 <= port <= 6889:
        return TrafficClass.BITTORRENT
    if port in (80, 443, 8080):
        return TrafficClass.BROWSING
    if port in (1883, 8883, 5683):
        return TrafficClass.IOT
    return None


def heuristic_class(key: Optional[FlowKey]) -> Tuple[TrafficClass, float]:
    if key is not None:
        for port in (key.src_port, key.dst_port):
            if port is None:
                continue
            match = port_class(port, key.ip_proto)
            if match is not None:
                return match, EXACT_CONFIDENCE
    return DEFAULT_CLASS, DEFAULT_CONFIDENCE


class HeuristicClassifier(Classifier):
    source = ClassifierSource.HEURISTIC

    @property
    def name(self) -> str:
        return "heuristic"

    def classify(self, pkt: RawPacket, link_type: int = LINKTYPE_ETHERNET) -> ClassificationResult:
        started = time.perf_counter_ns()
        traffic_class, confidence = heuristic_class(extract_flow_key(pkt, link_type))
        return ClassificationResult(traffic_class, confidence, time.perf_counter_ns() - started, self.source)


def classify_heuristic(pkt: RawPacket, link_type: int = LINKTYPE_ETHERNET) -> ClassificationResult:
    return HeuristicClassifier().classify(pkt, link_type)
