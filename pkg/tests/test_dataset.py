import json

import pytest

from src.capture.synthetic import write_labelled_capture
from src.cli.dataset import (
    MANIFEST_NAME, REFERENCE_CLASS_SIZES, REFERENCE_TOTAL, DatasetEntry, build_dataset, parse_entry, parse_split,
    reference_table,
)
from src.models.models import TrafficClass
from src.pipeline.sampling import SamplingPolicy
from src.utils.errors import ConfigError
from src.vision.transform import read_image


@pytest.fixture
def inputs(make_capture):
    dns = make_capture("dns3.pcap", [TrafficClass.DNS] * 3)
    ssh = make_capture("ssh2.pcap", [TrafficClass.SSH] * 2, seed=1)
    return [DatasetEntry(dns, TrafficClass.DNS), DatasetEntry(ssh, TrafficClass.SSH)]


def tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
            and p.name != MANIFEST_NAME}


def test_train_only_split(inputs, tmp_path):
    out = tmp_path / "ds"
    manifest = build_dataset(inputs, out, split=parse_split("1/0/0"))
    assert len(list((out / "train" / "dns").iterdir())) == 3
    assert len(list((out / "train" / "ssh").iterdir())) == 2
    assert not (out / "val").exists()
    assert manifest.counts["dns"] == 3 and manifest.counts["ssh"] == 2
    assert manifest.total == 5

    data = json.loads((out / MANIFEST_NAME).read_text())
    assert data["counts"]["dns"] == 3
    assert data["counts"]["ssh"] == 2
    assert data["reference_counts"]["total"] == 9645
    assert [e["emitted"] for e in data["entries"]] == [3, 2]


def test_file_names_and_contents(inputs, tmp_path):
    out = tmp_path / "ds"
    build_dataset(inputs, out, fmt="pgm")
    first = out / "train" / "dns" / "dns3_0.pgm"
    assert first.read_bytes().startswith(b"P5\n224 224\n255\n")
    assert read_image(first).array.shape == (224, 224, 3)


def test_same_seed_same_tree(inputs, tmp_path):
    split = parse_split("0.6/0.2/0.2")
    a = build_dataset(inputs, tmp_path / "a", split=split, seed=4)
    b = build_dataset(inputs, tmp_path / "b", split=split, seed=4)
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    da, db = a.as_dict(), b.as_dict()
    da.pop("output_dir")
    db.pop("output_dir")
    assert da == db


def test_split_counts_add_up(inputs, tmp_path):
    manifest = build_dataset(inputs, tmp_path / "ds", split=parse_split("0.5/0.25/0.25"), seed=2)
    per_split = sum(sum(counts.values()) for counts in manifest.split_counts.values())
    assert per_split == manifest.total == 5


def test_sampling_and_limit(inputs, tmp_path):
    manifest = build_dataset(inputs, tmp_path / "one", policy=SamplingPolicy.one_in_n(2))
    assert manifest.counts["dns"] == 2 and manifest.counts["ssh"] == 1
    manifest = build_dataset(inputs, tmp_path / "lim", limit_per_file=1)
    assert manifest.total == 2


def test_broken_input_is_reported(inputs, tmp_path):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"\x00" * 24)
    manifest = build_dataset(inputs + [DatasetEntry(bad, TrafficClass.IOT)], tmp_path / "ds")
    assert manifest.total == 5
    assert len(manifest.errors) == 1
    assert "BadMagic" in manifest.errors[0]["error"]


def test_parse_entry():
    entry = parse_entry("/data/c:dns.pcap:DNS")
    assert str(entry.pcap) == "/data/c:dns.pcap"
    assert entry.label is TrafficClass.DNS


@pytest.mark.parametrize("text", ["capture.pcap", ":dns", "capture.pcap:http"])
def test_parse_entry_rejects(text):
    with pytest.raises(ConfigError):
        parse_entry(text)


@pytest.mark.parametrize("text", ["1/0", "0.5/0.5/0.5", "a/b/c", "-1/1/1"])
def test_parse_split_rejects(text):
    with pytest.raises(ConfigError):
        parse_split(text)


def test_unknown_format(inputs, tmp_path):
    with pytest.raises(ConfigError):
        build_dataset(inputs, tmp_path / "ds", fmt="png")


def test_reference_table():
    table = dict(reference_table())
    assert table["total"] == REFERENCE_TOTAL == sum(REFERENCE_CLASS_SIZES.values())
    assert set(REFERENCE_CLASS_SIZES) == set(TrafficClass.wire_names())


def test_inputs_sharing_a_stem_keep_all_images(tmp_path):
    for folder, seed in (("a", 0), ("b", 1)):
        (tmp_path / folder).mkdir()
        write_labelled_capture(tmp_path / folder / "dns.pcap", [TrafficClass.DNS] * 3, seed=seed)
    entries = [parse_entry(f"{tmp_path / 'a' / 'dns.pcap'}:dns"), parse_entry(f"{tmp_path / 'b' / 'dns.pcap'}:dns")]
    out = tmp_path / "ds"
    manifest = build_dataset(entries, out)

    names = sorted(p.name for p in (out / "train" / "dns").iterdir())
    assert len(names) == manifest.counts["dns"] == 6
    assert names[:3] == ["dns-1_0.ppm", "dns-1_1.ppm", "dns-1_2.ppm"]
    assert names[3:] == ["dns_0.ppm", "dns_1.ppm", "dns_2.ppm"]
