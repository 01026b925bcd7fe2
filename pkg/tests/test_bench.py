import json
import math
import time

import pandas as pd
import pytest

from src.bench.harness import compare_models, measure_cpu, measure_latency, time_predictions
from src.bench.plots import plot_comparison
from src.capture.synthetic import labelled_packets, mixed_labels
from src.utils.errors import Unsupported
from src.utils.host import HostCollector
from src.utils.reports import (
    SUMMARY_COLUMNS, format_table, summary_frame, write_json, write_timings_csv, write_xlsx,
)
from src.utils.statistics import latency_stats


@pytest.fixture(scope="module")
def packets():
    return [pkt.data for pkt in labelled_packets(mixed_labels(7, seed=1), seed=1)]


@pytest.fixture(scope="module")
def report(model_files, packets, tmp_path_factory):
    bad = tmp_path_factory.mktemp("bad") / "missing.vnn"
    paths = [model_files["tiny-squeeze"], model_files["tiny-mobile"], bad, model_files["tiny-res"]]
    return compare_models(paths, packets, iterations=3, warmup=1)


def test_two_sample_statistics():
    stats = latency_stats("m", [10.0, 20.0])
    assert stats.mean_ms == 15.0
    assert stats.std_ms == pytest.approx(7.0710678, abs=1e-6)
    assert stats.ci95_half_width_ms == pytest.approx(9.80, abs=1e-2)
    assert stats.min_ms <= stats.p50_ms <= stats.p95_ms <= stats.max_ms


def test_statistics_need_two_samples():
    with pytest.raises(ValueError):
        latency_stats("m", [1.0])
    with pytest.raises(ValueError):
        latency_stats("m", [1.0, float("nan")])


def test_single_iteration_is_rejected():
    with pytest.raises(ValueError):
        measure_latency(lambda x: x, [1], iterations=1)


def test_warmup_calls_are_not_timed():
    calls = []
    timings = time_predictions(calls.append, ["a", "b"], iterations=4, warmup=3)
    assert len(timings) == 4
    assert calls == ["a", "b", "a", "a", "b", "a", "b"]


@pytest.mark.slow
@pytest.mark.parametrize("sleep_ms", [5, 10, 50])
def test_sleeping_stub_latency(sleep_ms):
    stats = measure_latency(lambda _: time.sleep(sleep_ms / 1000), [None], iterations=50, warmup=2)
    assert stats.n == 50
    assert sleep_ms <= stats.mean_ms <= sleep_ms + 3.0


@pytest.mark.slow
def test_busy_stub_uses_one_core():
    def spin(_):
        end = time.perf_counter() + 0.01
        while time.perf_counter() < end:
            pass

    cpu = measure_cpu(spin, [None], duration=2.0, sample_period=0.25)
    assert cpu.mean_cpu_percent >= 90.0
    assert len(cpu.samples) >= 7
    assert cpu.predictions > 0


@pytest.mark.slow
def test_sleeping_stub_is_idle():
    cpu = measure_cpu(lambda _: time.sleep(0.01), [None], duration=1.0, sample_period=0.25)
    assert cpu.mean_cpu_percent <= 10.0


def test_cpu_duration_must_cover_two_periods():
    with pytest.raises(ValueError):
        measure_cpu(lambda _: None, [None], duration=0.4, sample_period=0.25)


def test_cpu_needs_procfs(tmp_path):
    with pytest.raises(Unsupported):
        measure_cpu(lambda _: None, [None], duration=1.0, host=HostCollector(tmp_path))


def test_compare_three_fixtures_with_one_bad_path(report):
    assert len(report.rows) == 3
    assert len(report.errors) == 1
    assert report.errors[0]["path"].endswith("missing.vnn")
    assert {row.name for row in report.rows} == {"tiny-squeeze", "tiny-mobile", "tiny-res"}
    means = [row.latency.mean_ms for row in report.rows]
    assert means == sorted(means)
    for row in report.rows:
        assert math.isfinite(row.latency.mean_ms) and row.latency.mean_ms > 0
        assert row.latency.n == 3
        assert row.params > 0 and row.flops > 0


def test_duplicate_model_paths(model_files, packets):
    path = model_files["tiny-mobile"]
    report = compare_models([path, path], packets, iterations=2, warmup=0)
    assert [row.name for row in report.rows] == ["tiny-mobile", "tiny-mobile"]
    assert report.rows[0].params == report.rows[1].params


def test_json_report(report, tmp_path):
    data = json.loads(write_json(report, tmp_path / "bench.json").read_text())
    assert set(data) == {"generated_at", "iterations", "warmup", "input_count", "rows", "errors"}
    row = data["rows"][0]
    assert set(row["latency"]) >= {"mean_ms", "std_ms", "ci95_half_width_ms", "p50_ms", "p95_ms"}
    assert row["latency"]["mean_ms"] == report.rows[0].latency.mean_ms
    assert row["cpu"] is None


def test_timings_csv(report, tmp_path):
    frame = pd.read_csv(write_timings_csv(report, tmp_path / "timings.csv"))
    assert list(frame.columns) == ["model", "iteration", "mode", "latency_ms"]
    assert len(frame) == 3 * 2 * 3


def test_xlsx_sheets(report, tmp_path):
    path = write_xlsx(report, tmp_path / "bench.xlsx")
    sheets = pd.read_excel(path, sheet_name=None, engine="openpyxl")
    assert set(sheets) == {"Summary", "Timings", "CPU", "Errors"}
    assert len(sheets["Summary"]) == 3
    assert len(sheets["Errors"]) == 1


def test_table_lists_rows_and_errors(report):
    text = format_table(report)
    for name in ("tiny-squeeze", "tiny-mobile", "tiny-res"):
        assert name in text
    assert "error:" in text
    assert list(summary_frame(report)["model"]) == [row.name for row in report.rows]


def test_table_numbers_match_json(report, tmp_path):
    data = json.loads(write_json(report, tmp_path / "bench.json").read_text())
    lines = format_table(report).splitlines()
    header = lines[0].split()
    assert header == SUMMARY_COLUMNS
    json_rows = {row["name"]: row for row in data["rows"]}
    for line in lines[1:1 + len(report.rows)]:
        cells = dict(zip(header, line.split()))
        row = json_rows[cells["model"]]
        assert int(cells["params"]) == row["params"]
        assert int(cells["flops"]) == row["flops"]
        assert float(cells["last_layer_pct"]) == row["last_layer_complexity"]
        for column, key in (("mean_ms", "mean_ms"), ("std_ms", "std_ms"), ("ci95_ms", "ci95_half_width_ms"),
                            ("min_ms", "min_ms"), ("max_ms", "max_ms"), ("p95_ms", "p95_ms")):
            assert float(cells[column]) == row["latency"][key], column
        assert float(cells["exclusive_mean_ms"]) == row["latency_exclusive"]["mean_ms"]
        assert cells["cpu_pct"] == "-"


def test_plot(report, tmp_path):
    path = plot_comparison(report, tmp_path / "bench.png")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
