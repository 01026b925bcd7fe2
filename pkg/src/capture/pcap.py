"""
Classic pcap reader/writer and minimal flow-key extraction

Layout: global header | record header | packet data | record header | ...
Only the classic format is handled (microsecond and nanosecond magics, both
byte orders); pcapng is not.
"""

import enum
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Union

from src.utils.errors import BadMagic, CorruptHeader, Truncated, UnsupportedVersion

logger = logging.getLogger(__name__)

PCAP_MAGIC_USEC = 0xA1B2C3D4
PCAP_MAGIC_NSEC = 0xA1B23C4D
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LINUX_SLL = 113
LINKTYPE_IPV4 = 228
LINKTYPE_IPV6 = 229

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
ETHERTYPE_VLAN = (0x8100, 0x88A8)

IPPROTO_TCP = 6
IPPROTO_UDP = 17

# IPv6 extension headers walked before the transport header
_IPV6_EXT_HEADERS = {0, 43, 60}
_IPV6_FRAGMENT = 44


class ByteOrder(enum.Enum):
    LITTLE = "little"
    BIG = "big"

    @property
    def prefix(self) -> str:
        return "<" if self is ByteOrder.LITTLE else ">"


@dataclass(frozen=True)
class PcapMeta:
    byte_order: ByteOrder
    version_major: int
    version_minor: int
    snaplen: int
    link_type: int
    nanosecond: bool = False
    thiszone: int = 0
    sigfigs: int = 0


@dataclass(frozen=True)
class RawPacket:
    """One captured packet; immutable so it can cross thread boundaries"""
    ts_sec: int
    ts_frac: int
    captured_len: int
    original_len: int
    data: bytes
    nanosecond: bool = False

    def __post_init__(self):
        if len(self.data) != self.captured_len:
            raise ValueError(f"captured_len {self.captured_len} != payload length {len(self.data)}")
        if self.captured_len > self.original_len:
            raise ValueError("captured_len exceeds original_len")

    @classmethod
    def from_bytes(cls, data: bytes, ts: float = 0.0, original_len: Optional[int] = None) -> "RawPacket":
        data = bytes(data)
        sec = int(ts)
        usec = int(round((ts - sec) * 1_000_000))
        if usec >= 1_000_000:
            sec, usec = sec + 1, usec - 1_000_000
        return cls(sec, usec, len(data), original_len if original_len is not None else len(data), data)

    @property
    def timestamp(self) -> float:
        scale = 1e9 if self.nanosecond else 1e6
        return self.ts_sec + self.ts_frac / scale


@dataclass(frozen=True)
class FlowKey:
    ip_proto: int
    src_port: Optional[int] = None
    dst_port: Optional[int] = None

    def __post_init__(self):
        has_ports = self.src_port is not None or self.dst_port is not None
        if has_ports and self.ip_proto not in (IPPROTO_TCP, IPPROTO_UDP):
            raise ValueError("ports are only meaningful for TCP and UDP")
        for port in (self.src_port, self.dst_port):
            if port is not None and not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")


def parse_pcap_header(data: bytes) -> PcapMeta:
    """Decode the 24-byte global header"""
    if len(data) != GLOBAL_HEADER_LEN:
        raise Truncated(f"pcap global header is {len(data)} bytes, expected {GLOBAL_HEADER_LEN}")

    for order in (ByteOrder.LITTLE, ByteOrder.BIG):
        (magic,) = struct.unpack(order.prefix + "I", data[:4])
        if magic in (PCAP_MAGIC_USEC, PCAP_MAGIC_NSEC):
            break
    else:
        raise BadMagic(f"not a pcap file (magic {data[:4].hex()})")

    _, major, minor, thiszone, sigfigs, snaplen, link_type = struct.unpack(order.prefix + "IHHiIII", data)
    if (major, minor) != (2, 4):
        raise UnsupportedVersion(f"pcap version {major}.{minor} is not supported")
    if snaplen <= 0:
        raise CorruptHeader("snaplen must be positive")

    return PcapMeta(
        byte_order=order,
        version_major=major,
        version_minor=minor,
        snaplen=snaplen,
        link_type=link_type,
        nanosecond=magic == PCAP_MAGIC_NSEC,
        thiszone=thiszone,
        sigfigs=sigfigs,
    )


def _read_exact(reader: BinaryIO, size: int) -> bytes:
    chunks = []
    remaining = size
    while remaining > 0:
        chunk = reader.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def next_packet(reader: BinaryIO, meta: PcapMeta) -> Optional[RawPacket]:
    """Read one record; None on a clean end of stream"""
    header = _read_exact(reader, RECORD_HEADER_LEN)
    if not header:
        return None
    if len(header) != RECORD_HEADER_LEN:
        raise Truncated(f"record header cut short ({len(header)} of {RECORD_HEADER_LEN} bytes)")

    ts_sec, ts_frac, incl_len, orig_len = struct.unpack(meta.byte_order.prefix + "IIII", header)
    if incl_len > meta.snaplen:
        raise CorruptHeader(f"captured_len {incl_len} exceeds snaplen {meta.snaplen}")
    if incl_len > orig_len:
        raise CorruptHeader(f"captured_len {incl_len} exceeds original_len {orig_len}")

    payload = _read_exact(reader, incl_len)
    if len(payload) != incl_len:
        raise Truncated(f"packet payload cut short ({len(payload)} of {incl_len} bytes)")

    return RawPacket(ts_sec, ts_frac, incl_len, orig_len, payload, meta.nanosecond)


class PcapReader:
    """Sequential reader over one capture file; single consumer"""

    def __init__(self, source: Union[str, Path, BinaryIO]):
        if isinstance(source, (str, Path)):
            self._fp = open(source, "rb")
            self._owns_fp = True
            self.name = str(source)
        else:
            self._fp = source
            self._owns_fp = False
            self.name = getattr(source, "name", "<stream>")
        try:
            self.meta = parse_pcap_header(_read_exact(self._fp, GLOBAL_HEADER_LEN))
        except Exception:
            self.close()
            raise
        logger.debug("Opened %s: %s", self.name, self.meta)

    def __iter__(self) -> Iterator[RawPacket]:
        while True:
            packet = next_packet(self._fp, self.meta)
            if packet is None:
                return
            yield packet

    def close(self):
        if self._owns_fp:
            self._fp.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_pcap(path: Union[str, Path]) -> Iterator[RawPacket]:
    with PcapReader(path) as reader:
        yield from reader


def count_packets(path: Union[str, Path]) -> int:
    return sum(1 for _ in iter_pcap(path))


def write_pcap(
    target: Union[str, Path, BinaryIO],
    packets: Iterable[RawPacket],
    byte_order: ByteOrder = ByteOrder.LITTLE,
    nanosecond: bool = False,
    link_type: int = LINKTYPE_ETHERNET,
    snaplen: int = 65535,
) -> int:
    """Write a classic pcap file; returns the number of records written"""
    prefix = byte_order.prefix
    magic = PCAP_MAGIC_NSEC if nanosecond else PCAP_MAGIC_USEC
    fp = open(target, "wb") if isinstance(target, (str, Path)) else target
    count = 0
    try:
        fp.write(struct.pack(prefix + "IHHiIII", magic, 2, 4, 0, 0, snaplen, link_type))
        for packet in packets:
            if packet.captured_len > snaplen:
                raise CorruptHeader(f"packet of {packet.captured_len} bytes exceeds snaplen {snaplen}")
            frac = packet.ts_frac
            if packet.nanosecond != nanosecond:
                frac = frac * 1000 if nanosecond else frac // 1000
            fp.write(struct.pack(prefix + "IIII", packet.ts_sec, frac, packet.captured_len, packet.original_len))
            fp.write(packet.data)
            count += 1
    finally:
        if isinstance(target, (str, Path)):
            fp.close()
    return count


def _transport_key(data: bytes, offset: int, proto: int, first_fragment: bool) -> Optional[FlowKey]:
    if proto not in (IPPROTO_TCP, IPPROTO_UDP) or not first_fragment:
        return FlowKey(proto)
    if len(data) < offset + 4:
        return None
    src_port, dst_port = struct.unpack_from("!HH", data, offset)
    return FlowKey(proto, src_port, dst_port)


def _ipv4_key(data: bytes, offset: int) -> Optional[FlowKey]:
    if len(data) < offset + 20 or data[offset] >> 4 != 4:
        return None
    ihl = (data[offset] & 0x0F) * 4
    if ihl < 20 or len(data) < offset + ihl:
        return None
    (flags_frag,) = struct.unpack_from("!H", data, offset + 6)
    proto = data[offset + 9]
    return _transport_key(data, offset + ihl, proto, first_fragment=(flags_frag & 0x1FFF) == 0)


def _ipv6_key(data: bytes, offset: int) -> Optional[FlowKey]:
    if len(data) < offset + 40 or data[offset] >> 4 != 6:
        return None
    next_header = data[offset + 6]
    offset += 40
    first_fragment = True
    while next_header in _IPV6_EXT_HEADERS or next_header == _IPV6_FRAGMENT:
        if len(data) < offset + 8:
            return None
        if next_header == _IPV6_FRAGMENT:
            (frag,) = struct.unpack_from("!H", data, offset + 2)
            first_fragment = (frag >> 3) == 0
            length = 8
        else:
            length = (data[offset + 1] + 1) * 8
        next_header = data[offset]
        offset += length
    return _transport_key(data, offset, next_header, first_fragment)


def _ip_key(data: bytes, offset: int, ethertype: Optional[int] = None) -> Optional[FlowKey]:
    if ethertype == ETHERTYPE_IPV4:
        return _ipv4_key(data, offset)
    if ethertype == ETHERTYPE_IPV6:
        return _ipv6_key(data, offset)
    if ethertype is None and len(data) > offset:
        version = data[offset] >> 4
        if version == 4:
            return _ipv4_key(data, offset)
        if version == 6:
            return _ipv6_key(data, offset)
    return None


def extract_flow_key(pkt: RawPacket, link_type: int) -> Optional[FlowKey]:
    """Protocol and ports of an IP packet; None for non-IP or truncated input"""
    data = pkt.data
    if link_type == LINKTYPE_ETHERNET:
        if len(data) < 14:
            return None
        offset = 12
        (ethertype,) = struct.unpack_from("!H", data, offset)
        while ethertype in ETHERTYPE_VLAN:
            offset += 4
            if len(data) < offset + 2:
                return None
            (ethertype,) = struct.unpack_from("!H", data, offset)
        return _ip_key(data, offset + 2, ethertype)
    if link_type == LINKTYPE_LINUX_SLL:
        if len(data) < 16:
            return None
        (ethertype,) = struct.unpack_from("!H", data, 14)
        return _ip_key(data, 16, ethertype)
    if link_type in (LINKTYPE_RAW, LINKTYPE_IPV4, LINKTYPE_IPV6):
        return _ip_key(data, 0)
    return None
