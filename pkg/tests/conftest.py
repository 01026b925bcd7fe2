"""
Shared fixtures: synthetic captures, committed reference models, fake procfs trees
"""

import os
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.capture.synthetic import write_labelled_capture  # noqa: E402
from src.engine.model_file import load_model  # noqa: E402
from src.engine.reference import REFERENCE_MODELS  # noqa: E402
from src.models.models import TrafficClass  # noqa: E402

PROC_STAT = (
    "cpu  {user} 0 {system} {idle} 0 0 0 0 0 0\n"
    "cpu0 {user} 0 {system} {idle} 0 0 0 0 0 0\n"
    "intr 0\n"
)
PROC_MEMINFO = (
    "MemTotal:       16384 kB\n"
    "MemFree:         2048 kB\n"
    "MemAvailable:    8192 kB\n"
    "Buffers:          512 kB\n"
)


def write_proc_stat(root: Path, user: int, system: int, idle: int) -> None:
    (root / "stat").write_text(PROC_STAT.format(user=user, system=system, idle=idle))


@pytest.fixture
def fake_proc(tmp_path):
    root = tmp_path / "proc"
    root.mkdir()
    write_proc_stat(root, 100, 0, 100)
    (root / "meminfo").write_text(PROC_MEMINFO)
    return root


@pytest.fixture
def make_capture(tmp_path):
    """make_capture(name, labels, **kwargs) -> Path of a synthetic pcap"""
    def _make(name, labels, **kwargs):
        path = tmp_path / name
        write_labelled_capture(path, labels, **kwargs)
        return path
    return _make


@pytest.fixture
def dns_pcap(make_capture):
    return make_capture("dns.pcap", [TrafficClass.DNS] * 30)


@pytest.fixture
def empty_pcap(make_capture):
    return make_capture("empty.pcap", [])


@pytest.fixture(scope="session")
def model_files():
    """Committed reference models, one per family"""
    return {name: FIXTURES / f"{name}.vnn" for name in REFERENCE_MODELS}


@pytest.fixture(scope="session")
def reference_models(model_files):
    return {name: load_model(path) for name, path in model_files.items()}


def pytest_collection_modifyitems(config, items):
    if sys.platform.startswith("linux") and os.path.exists("/proc/stat"):
        return
    skip = pytest.mark.skip(reason="timing tests need Linux procfs")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
