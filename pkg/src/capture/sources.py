"""
Packet sources feeding the monitoring pipeline

A source hands RawPacket values to a sink until exhausted (file replay) or
closed (live capture). Live capture goes through scapy when it is installed.
"""

import logging
import threading
import time
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Union

from src.capture.pcap import LINKTYPE_ETHERNET, PcapReader, RawPacket
from src.utils.errors import Unsupported

logger = logging.getLogger(__name__)

try:
    from scapy.all import AsyncSniffer
    SCAPY_AVAILABLE = True
except ImportError:
    SCAPY_AVAILABLE = False
    logger.debug("scapy is not installed; live capture unavailable")

PacketSink = Callable[[RawPacket], bool]


class PacketSource(ABC):
    """Common interface of file replay and live capture

    Pull sources implement packets(); push sources override feed().
    """

    is_live: bool = False

    @property
    @abstractmethod
    def link_type(self) -> int:
        ...

    @property
    @abstractmethod
    def description(self) -> str:
        ...

    def packets(self) -> Iterator[RawPacket]:
        raise Unsupported(f"{self.description} only delivers packets through feed()")

    def feed(self, sink: PacketSink) -> None:
        """Hand packets to sink until it returns False or the source ends"""
        packets = self.packets()
        try:
            for packet in packets:
                if not sink(packet):
                    return
        finally:
            packets.close()

    @abstractmethod
    def close(self) -> None:
        ...


class PcapFileSource(PacketSource):
    """Replays a pcap file, optionally sleeping to reproduce capture timing"""

    def __init__(self, path: Union[str, Path], pace: bool = False,
                 sleep: Callable[[float], None] = time.sleep):
        self.path = Path(path)
        self.pace = pace
        self._sleep = sleep
        self._stop = threading.Event()
        # header errors surface at construction, before any worker starts
        self._reader = PcapReader(self.path)

    @property
    def link_type(self) -> int:
        return self._reader.meta.link_type

    @property
    def description(self) -> str:
        return f"pcap:{self.path}{' (paced)' if self.pace else ''}"

    def packets(self) -> Iterator[RawPacket]:
        previous_ts: Optional[float] = None
        try:
            for packet in self._reader:
                if self._stop.is_set():
                    return
                if self.pace and previous_ts is not None:
                    delay = packet.timestamp - previous_ts
                    if delay > 0:
                        self._sleep(delay)
                previous_ts = packet.timestamp
                yield packet
        finally:
            self._reader.close()

    def close(self) -> None:
        self._stop.set()


class LiveCaptureSource(PacketSource):
    """Captures from a network interface through scapy's AsyncSniffer

    Packets go straight from the sniffer thread to the sink; nothing is
    buffered here, so a full pipeline queue drops at the pipeline.
    """

    is_live = True

    def __init__(self, iface: str, poll_interval: float = 0.2,
                 sniffer_factory: Optional[Callable[..., Any]] = None):
        if sniffer_factory is None:
            if not SCAPY_AVAILABLE:
                raise Unsupported("live capture requires scapy (pip install scapy)")
            sniffer_factory = AsyncSniffer
        self.iface = iface
        self.poll_interval = poll_interval
        self._sniffer_factory = sniffer_factory
        self._stop = threading.Event()
        self._sniffer = None

    @property
    def link_type(self) -> int:
        return LINKTYPE_ETHERNET

    @property
    def description(self) -> str:
        return f"iface:{self.iface}"

    def feed(self, sink: PacketSink) -> None:
        def deliver(pkt) -> None:
            if self._stop.is_set():
                return
            try:
                data = bytes(pkt)
                raw = RawPacket.from_bytes(data, ts=float(pkt.time),
                                           original_len=getattr(pkt, "wirelen", None) or len(data))
            except Exception as e:
                # keep the sniffer thread alive
                logger.warning(f"Dropping undecodable live packet: {e}")
                return
            if not sink(raw):
                self._stop.set()

        self._sniffer = self._sniffer_factory(iface=self.iface, prn=deliver, store=False)
        self._sniffer.start()
        logger.info(f"Live capture started on {self.iface}")
        try:
            while not self._stop.wait(self.poll_interval):
                if not getattr(self._sniffer, "running", True):
                    logger.warning(f"Sniffer on {self.iface} stopped on its own")
                    break
        finally:
            self._stop_sniffer()

    def _stop_sniffer(self) -> None:
        if self._sniffer is not None and getattr(self._sniffer, "running", False):
            try:
                self._sniffer.stop()
            except Exception as e:
                logger.warning(f"Error stopping sniffer on {self.iface}: {e}")
        self._sniffer = None

    def close(self) -> None:
        self._stop.set()


def open_source(pcap: Optional[str] = None, iface: Optional[str] = None, pace: bool = False) -> PacketSource:
    if pcap:
        return PcapFileSource(pcap, pace=pace)
    if iface:
        return LiveCaptureSource(iface)
    raise ValueError("either a pcap path or an interface is required")
