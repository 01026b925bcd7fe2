"""
Error types raised across the agent
"""


class VineviError(Exception):
    """Base class for all agent errors"""


class ConfigError(VineviError):
    """Invalid flags, config file or pipeline configuration"""


# pcap parsing
class BadMagic(VineviError):
    """Input does not start with a recognised magic number"""


class UnsupportedVersion(VineviError):
    """pcap file version other than 2.4"""


class Truncated(VineviError):
    """Stream ended inside a header or a packet payload"""


class CorruptHeader(VineviError):
    """Record header violates the file's declared limits"""


# image transform
class EmptyPacket(VineviError):
    """Packet has no bytes to render"""


class ZeroStd(VineviError):
    """Normalization std has a zero channel"""


class ImageIoError(VineviError):
    """Image could not be written or read"""


# model files and inference
class SchemaError(VineviError):
    """Model file header or weight blob is inconsistent"""


class ShapeError(VineviError):
    """Layer chain does not line up"""


class LabelMismatch(VineviError):
    """Model labels are not the seven traffic classes"""


# runtime surfaces
class BindError(VineviError):
    """Metrics endpoint could not bind its address"""


class Unsupported(VineviError):
    """Feature not available on this platform"""
