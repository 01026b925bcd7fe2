"""
Synthetic Ethernet/IPv4 captures with known class-defining ports

Used by the fixture scripts, the dataset tooling demos and the test suite.
"""

import random
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from src.capture.pcap import (
    ETHERTYPE_IPV4, IPPROTO_TCP, IPPROTO_UDP, ByteOrder, RawPacket, write_pcap,
)
from src.models.models import TrafficClass

# (ip_proto, server port) that identifies each class
CLASS_PORTS: Dict[TrafficClass, Tuple[int, int]] = {
    TrafficClass.BITTORRENT: (IPPROTO_TCP, 6881),
    TrafficClass.BROWSING: (IPPROTO_TCP, 443),
    TrafficClass.DNS: (IPPROTO_UDP, 53),
    TrafficClass.IOT: (IPPROTO_TCP, 1883),
    TrafficClass.RDP: (IPPROTO_TCP, 3389),
    TrafficClass.SSH: (IPPROTO_TCP, 22),
    TrafficClass.VOIP: (IPPROTO_UDP, 5060),
}

# IANA dynamic range; never collides with a heuristic port rule
EPHEMERAL_PORTS = (49152, 65535)


def _checksum(header: bytes) -> int:
    total = sum(struct.unpack(f"!{len(header) // 2}H", header))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def ethernet_ipv4_packet(
    proto: int,
    src_port: int,
    dst_port: int,
    payload: bytes = b"",
    src_ip: str = "10.0.0.1",
    dst_ip: str = "10.0.0.2",
) -> bytes:
    """Ethernet II + IPv4 + UDP/TCP frame with correct lengths and IP checksum"""
    if proto == IPPROTO_UDP:
        l4 = struct.pack("!HHHH", src_port, dst_port, 8 + len(payload), 0)
    elif proto == IPPROTO_TCP:
        # data offset 5 words, ACK|PSH
        l4 = struct.pack("!HHIIBBHHH", src_port, dst_port, 1, 1, 5 << 4, 0x18, 65535, 0, 0)
    else:
        raise ValueError(f"unsupported protocol {proto}")

    total_len = 20 + len(l4) + len(payload)
    src = bytes(int(part) for part in src_ip.split("."))
    dst = bytes(int(part) for part in dst_ip.split("."))
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total_len, 0, 0x4000, 64, proto, 0, src, dst)
    ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]

    eth = bytes.fromhex("020000000002") + bytes.fromhex("020000000001") + struct.pack("!H", ETHERTYPE_IPV4)
    return eth + ip + l4 + payload


def class_packet(
    traffic_class: TrafficClass,
    rng: random.Random,
    payload_len: int = 32,
    to_server: Optional[bool] = None,
) -> bytes:
    proto, server_port = CLASS_PORTS[traffic_class]
    client_port = rng.randint(*EPHEMERAL_PORTS)
    payload = bytes(rng.getrandbits(8) for _ in range(payload_len))
    if to_server is None:
        to_server = rng.random() < 0.5
    if to_server:
        return ethernet_ipv4_packet(proto, client_port, server_port, payload)
    return ethernet_ipv4_packet(proto, server_port, client_port, payload)


def labelled_packets(
    labels: Sequence[TrafficClass],
    seed: int = 0,
    start_ts: float = 1_000.0,
    spacing: float = 0.01,
    payload_len: int = 32,
) -> List[RawPacket]:
    rng = random.Random(seed)
    packets = []
    for i, traffic_class in enumerate(labels):
        frame = class_packet(traffic_class, rng, payload_len)
        packets.append(RawPacket.from_bytes(frame, ts=start_ts + i * spacing))
    return packets


def write_labelled_capture(
    path: Union[str, Path],
    labels: Sequence[TrafficClass],
    seed: int = 0,
    spacing: float = 0.01,
    byte_order: ByteOrder = ByteOrder.LITTLE,
    nanosecond: bool = False,
) -> List[RawPacket]:
    packets = labelled_packets(labels, seed=seed, spacing=spacing)
    write_pcap(path, packets, byte_order=byte_order, nanosecond=nanosecond)
    return packets


def mixed_labels(count: int, seed: int = 0) -> List[TrafficClass]:
    """Class sequence cycling through every class, shuffled deterministically"""
    classes = list(TrafficClass)
    labels = [classes[i % len(classes)] for i in range(count)]
    random.Random(seed).shuffle(labels)
    return labels
