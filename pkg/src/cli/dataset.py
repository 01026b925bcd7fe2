"""
Labelled image dataset generation from pcap captures

Each sampled packet becomes <out>/<split>/<class>/<pcap stem>_<index>.<fmt>.
A later input whose stem is already taken is named <pcap stem>-<input position>.
Split assignment draws from random.Random(seed) in input order, so the same
inputs and seed always produce the same tree and manifest.
"""

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from src.capture.pcap import PcapReader
from src.models.models import TrafficClass
from src.pipeline.sampling import SamplerState, SamplingPolicy
from src.utils.errors import ConfigError, VineviError
from src.vision.transform import IMAGE_FORMATS, DEFAULT_TRANSFORM, packet_to_image, write_image

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.json"

# class sizes of the published reference corpus; the source traces are not shipped
REFERENCE_CLASS_SIZES = {
    "bittorrent": 1217,
    "browsing": 1225,
    "dns": 1412,
    "iot": 1848,
    "rdp": 1271,
    "ssh": 1352,
    "voip": 1320,
}
REFERENCE_TOTAL = 9645


@dataclass(frozen=True)
class DatasetEntry:
    pcap: Path
    label: TrafficClass


@dataclass(frozen=True)
class SplitRatios:
    train: float = 1.0
    val: float = 0.0
    test: float = 0.0

    def __post_init__(self):
        values = (self.train, self.val, self.test)
        if any(v < 0 for v in values):
            raise ConfigError(f"split ratios must be non-negative: {values}")
        if not math.isclose(sum(values), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split ratios must sum to 1, got {sum(values)}")

    def pick(self, draw: float) -> str:
        if draw < self.train:
            return "train"
        if draw < self.train + self.val:
            return "val"
        return "test"

    def as_dict(self) -> Dict[str, float]:
        return {"train": self.train, "val": self.val, "test": self.test}


def parse_split(text: str) -> SplitRatios:
    """'0.8/0.1/0.1' or '1/0/0'"""
    parts = text.split("/")
    if len(parts) != 3:
        raise ConfigError(f"split must be train/val/test, got {text!r}")
    try:
        return SplitRatios(*(float(p) for p in parts))
    except ValueError:
        raise ConfigError(f"split ratios must be numbers, got {text!r}") from None


def parse_entry(text: str) -> DatasetEntry:
    """'<pcap>:<label>'"""
    path, sep, label = text.rpartition(":")
    if not sep or not path:
        raise ConfigError(f"dataset input must be PCAP:LABEL, got {text!r}")
    try:
        traffic_class = TrafficClass.from_wire(label)
    except ValueError:
        raise ConfigError(f"invalid label {label!r}; expected one of {', '.join(TrafficClass.wire_names())}") from None
    return DatasetEntry(Path(path), traffic_class)


@dataclass
class DatasetManifest:
    output_dir: Path
    format: str
    split: SplitRatios
    seed: int
    entries: List[Dict] = field(default_factory=list)
    counts: Dict[str, int] = field(default_factory=lambda: {name: 0 for name in TrafficClass.wire_names()})
    split_counts: Dict[str, Dict[str, int]] = field(
        default_factory=lambda: {s: {name: 0 for name in TrafficClass.wire_names()} for s in SPLITS})
    errors: List[Dict] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> Dict:
        return {
            "output_dir": str(self.output_dir),
            "format": self.format,
            "seed": self.seed,
            "split": self.split.as_dict(),
            "entries": self.entries,
            "counts": dict(self.counts),
            "split_counts": {s: dict(c) for s, c in self.split_counts.items()},
            "total": self.total,
            "errors": self.errors,
            "reference_counts": dict(REFERENCE_CLASS_SIZES, total=REFERENCE_TOTAL),
        }

    def write(self, path: Optional[Union[str, Path]] = None) -> Path:
        path = Path(path) if path else self.output_dir / MANIFEST_NAME
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        return path


def _convert_file(entry: DatasetEntry, stem: str, manifest: DatasetManifest, rng: random.Random,
                  policy: SamplingPolicy, limit: Optional[int]) -> int:
    """Images emitted for one input; a mid-file failure keeps what was written"""
    emitted = 0
    sampler = SamplerState(policy)
    label = entry.label.value
    try:
        with PcapReader(entry.pcap) as reader:
            for index, pkt in enumerate(reader):
                if limit is not None and emitted >= limit:
                    break
                if not sampler.should_sample(index, pkt.timestamp):
                    continue
                split = manifest.split.pick(rng.random())
                target = manifest.output_dir / split / label / f"{stem}_{index}.{manifest.format}"
                try:
                    write_image(packet_to_image(pkt.data, DEFAULT_TRANSFORM), target, manifest.format)
                except VineviError as e:
                    manifest.errors.append({"pcap": str(entry.pcap), "index": index,
                                            "error": f"{type(e).__name__}: {e}"})
                    continue
                manifest.counts[label] += 1
                manifest.split_counts[split][label] += 1
                emitted += 1
    except (VineviError, OSError) as e:
        logger.error(f"Dataset input {entry.pcap} failed: {type(e).__name__}: {e}")
        manifest.errors.append({"pcap": str(entry.pcap), "error": f"{type(e).__name__}: {e}"})
    return emitted


def _file_stems(entries: Sequence[DatasetEntry]) -> List[str]:
    """Image name prefix per input; a repeated pcap stem gets its input position appended"""
    stems: List[str] = []
    for position, entry in enumerate(entries):
        stem = entry.pcap.stem
        while stem in stems:
            stem = f"{stem}-{position}"
        stems.append(stem)
    return stems


def build_dataset(entries: Sequence[DatasetEntry], out_dir: Union[str, Path], fmt: str = "ppm",
                  split: Optional[SplitRatios] = None, seed: int = 0,
                  policy: Optional[SamplingPolicy] = None, limit_per_file: Optional[int] = None) -> DatasetManifest:
    if fmt not in IMAGE_FORMATS:
        raise ConfigError(f"unsupported image format {fmt!r}; use one of {', '.join(IMAGE_FORMATS)}")
    manifest = DatasetManifest(Path(out_dir), fmt, split or SplitRatios(), seed)
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    policy = policy or SamplingPolicy.all()

    for entry, stem in zip(entries, _file_stems(entries)):
        emitted = _convert_file(entry, stem, manifest, rng, policy, limit_per_file)
        manifest.entries.append({"pcap": str(entry.pcap), "label": entry.label.value, "emitted": emitted})
        logger.info(f"{entry.pcap}: {emitted} images labelled {entry.label.value}")

    path = manifest.write()
    logger.info(f"Dataset of {manifest.total} images written to {manifest.output_dir} (manifest {path})")
    return manifest


def reference_table() -> List[Tuple[str, int]]:
    return sorted(REFERENCE_CLASS_SIZES.items()) + [("total", REFERENCE_TOTAL)]
