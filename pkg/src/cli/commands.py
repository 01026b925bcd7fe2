"""
Subcommand implementations

Each command takes the parsed argparse namespace and returns an exit code.
Startup failures are raised and mapped to exit codes by src.cli.main.
"""

import dataclasses
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO

from src.capture.pcap import iter_pcap
from src.capture.sources import open_source
from src.capture.synthetic import labelled_packets, mixed_labels
from src.cli.dataset import build_dataset, parse_entry, parse_split
from src.engine.accounting import count_params, flops_total, last_layer_complexity, layer_summary
from src.engine.model_file import load_model
from src.engine.reference import DEFAULT_SEED, write_reference_models
from src.metrics.registry import GaugeRegistry
from src.models.models import ClassificationResult, TrafficClass
from src.pipeline.config import PipelineConfig, load_pipeline_config
from src.pipeline.runner import MonitorHandle, Pipeline, RunSummary, build_classifier
from src.pipeline.sampling import parse_sampling
from src.utils.config import parse_duration
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def _pipeline_flags(args) -> Dict[str, Any]:
    return {
        "VINEVI_PCAP": getattr(args, "pcap", None),
        "VINEVI_PACE": getattr(args, "pace", False),
        "VINEVI_IFACE": getattr(args, "iface", None),
        "VINEVI_MODEL": getattr(args, "model", None),
        "VINEVI_HEURISTIC": getattr(args, "heuristic", False),
        "VINEVI_LISTEN": getattr(args, "listen", None),
        "VINEVI_PUSH_URL": getattr(args, "push_url", None),
        "VINEVI_JOB": getattr(args, "job", None),
        "VINEVI_PUSH_INTERVAL": getattr(args, "push_interval", None),
        "VINEVI_WINDOW": getattr(args, "window", None),
        "VINEVI_SAMPLE": getattr(args, "sample", None),
        "VINEVI_WORKERS": getattr(args, "workers", None),
        "VINEVI_QUEUE_SIZE": getattr(args, "queue_size", None),
        "VINEVI_MIN_CONFIDENCE": getattr(args, "min_confidence", None),
    }


def _check_paths(cfg: PipelineConfig) -> None:
    if cfg.pcap is not None and not cfg.pcap.is_file():
        raise ConfigError(f"pcap file not found: {cfg.pcap}")
    if cfg.model is not None and not cfg.model.is_file():
        raise ConfigError(f"model file not found: {cfg.model}")


def _summary_line(summary: RunSummary) -> str:
    classes = " ".join(f"{name}={count}" for name, count in summary.per_class.items())
    line = f"summary seen={summary.packets_seen} sampled={summary.packets_sampled} {classes}"
    if summary.truncated:
        line += " truncated=true"
    return line


def cmd_monitor(args, environ=None) -> int:
    cfg = load_pipeline_config(_pipeline_flags(args), args.config, environ)
    _check_paths(cfg)
    handle = MonitorHandle(cfg)
    stop = threading.Event()

    def on_signal(signum, frame):
        logger.info(f"Received signal {signum}, shutting down")
        stop.set()
        handle.request_stop()

    previous = {}
    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            previous[sig] = signal.signal(sig, on_signal)
    try:
        handle.start()
        while not stop.is_set():
            if not handle.wait(timeout=0.5):
                continue
            handle.finish_source()
            if args.exit_on_eof or cfg.is_live or handle.server is None:
                break
            logger.info("Source exhausted; serving the final window until interrupted")
            stop.wait()
    finally:
        summary = handle.shutdown()
        for sig, handler in previous.items():
            signal.signal(sig, handler)
    return 1 if summary.error else 0


def cmd_classify(args, environ=None, out: Optional[TextIO] = None) -> int:
    out = out or sys.stdout
    cfg = load_pipeline_config(_pipeline_flags(args), args.config, environ)
    cfg = dataclasses.replace(cfg, listen=None, push_url=None)
    _check_paths(cfg)
    if args.limit is not None and args.limit < 0:
        raise ConfigError("--limit must be >= 0")

    classifier = build_classifier(cfg)
    source = open_source(str(cfg.pcap) if cfg.pcap else None, cfg.iface, cfg.pace)

    def on_result(index: int, pkt, result: ClassificationResult) -> None:
        out.write(f"{index} {result.traffic_class.value} {result.confidence:.2f} {result.latency_ms:.3f}\n")

    pipeline = Pipeline(source, classifier, GaugeRegistry(window=cfg.window), cfg.sampling, cfg.workers,
                        cfg.queue_size, cfg.min_confidence, on_result, args.limit)
    if args.limit == 0:
        source.close()
        summary = pipeline.summary
    else:
        try:
            summary = pipeline.run()
        except KeyboardInterrupt:
            summary = pipeline.shutdown()
    out.write(_summary_line(summary) + "\n")
    out.flush()
    if summary.error:
        logger.error(f"Classification stopped early: {summary.error}")
        return 1
    return 0


def cmd_dataset(args, environ=None) -> int:
    if not args.input:
        raise ConfigError("dataset needs at least one --input PCAP:LABEL")
    entries = [parse_entry(text) for text in args.input]
    manifest = build_dataset(
        entries,
        args.out,
        fmt=args.format,
        split=parse_split(args.split),
        seed=args.seed,
        policy=parse_sampling(args.sample) if args.sample else None,
        limit_per_file=args.limit,
    )
    counts = " ".join(f"{name}={n}" for name, n in manifest.counts.items())
    print(f"images={manifest.total} {counts} errors={len(manifest.errors)}")
    return 0


def _bench_packets(args) -> List[bytes]:
    if args.pcap:
        if not Path(args.pcap).is_file():
            raise ConfigError(f"pcap file not found: {args.pcap}")
        packets = [pkt.data for pkt in iter_pcap(args.pcap) if pkt.data]
        if not packets:
            raise ConfigError(f"{args.pcap} has no non-empty packets to benchmark with")
        return packets
    return [pkt.data for pkt in labelled_packets(mixed_labels(len(TrafficClass) * 4, args.seed), args.seed)]


def cmd_bench(args, environ=None) -> int:
    # heavy imports stay out of the monitor path
    from src.bench.harness import compare_models
    from src.bench.plots import plot_comparison
    from src.utils.reports import format_table, write_json, write_timings_csv, write_xlsx

    if not args.model:
        raise ConfigError("bench needs at least one --model")
    if args.iterations < 2:
        raise ConfigError("--iterations must be >= 2")
    if args.warmup < 0:
        raise ConfigError("--warmup must be >= 0")
    cpu_duration = parse_duration(args.duration) if args.duration else None

    report = compare_models(args.model, _bench_packets(args), args.iterations, args.warmup, cpu_duration)
    print(format_table(report))
    if args.json:
        write_json(report, args.json)
    if args.csv:
        write_timings_csv(report, args.csv)
    if args.xlsx:
        write_xlsx(report, args.xlsx)
    if args.plot and report.rows:
        plot_comparison(report, args.plot)
    return 0


def cmd_model_info(args, environ=None) -> int:
    model = load_model(args.path)
    print(f"name: {model.name}")
    print(f"labels: {', '.join(model.class_labels)}")
    print(f"input: {'x'.join(str(d) for d in model.input_shape)}")
    print(f"{'#':<6} {'kind':<18} {'output':<14} {'params':>10} {'flops':>14}  detail")
    for row in layer_summary(model):
        shape = "x".join(str(d) for d in row.output_shape)
        print(f"{row.index:<6} {row.kind:<18} {shape:<14} {row.params:>10,} {row.flops:>14,}  {row.detail}")
    print(f"total params: {count_params(model):,}")
    print(f"total flops: {flops_total(model):,}")
    print(f"last layer complexity: {last_layer_complexity(model):.4f}%")
    return 0


def cmd_build_models(args, environ=None) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    for path in write_reference_models(args.out, seed):
        print(path)
    return 0
