"""
vinevi command line

    monitor       run the agent: classify traffic and publish per-class gauges
    classify      one-shot classification of a capture, one line per packet
    dataset       render labelled captures into an image dataset
    bench         compare models: latency, CPU, parameters and FLOPs
    model-info    per-layer shapes, parameters and FLOPs of a model file
    build-models  write the reference toy models

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from src.cli import commands
from src.utils.errors import (
    BadMagic, BindError, ConfigError, CorruptHeader, LabelMismatch, SchemaError, ShapeError, Truncated,
    Unsupported, UnsupportedVersion, VineviError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# raised before any packet is processed
STARTUP_ERRORS = (
    ConfigError, BadMagic, UnsupportedVersion, Truncated, CorruptHeader,
    SchemaError, ShapeError, LabelMismatch, BindError, Unsupported,
)


def _add_source_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="dotenv-style file with VINEVI_* settings")
    source = parser.add_argument_group("source")
    source.add_argument("--pcap", help="replay a pcap file")
    source.add_argument("--pace", action="store_true", help="reproduce capture timing when replaying")
    source.add_argument("--iface", help="capture live from a network interface (needs scapy)")
    clf = parser.add_argument_group("classifier")
    clf.add_argument("--model", help="path to a .vnn model file")
    clf.add_argument("--heuristic", action="store_true", help="classify by well-known ports")
    clf.add_argument("--min-confidence", type=float, dest="min_confidence",
                     help="model results below this fall back to the port heuristic")
    parser.add_argument("--sample", help="all | 1/N | pool:<period>:<budget>")
    parser.add_argument("--window", help="gauge window length, e.g. 10s")
    parser.add_argument("--workers", help="classification worker threads")
    parser.add_argument("--queue-size", dest="queue_size", help="bounded queue capacity")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vinevi", description="Traffic-class monitoring agent")
    parser.add_argument("--log-level", dest="log_level", help="override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    monitor = sub.add_parser("monitor", help="run the monitoring agent")
    _add_source_flags(monitor)
    monitor.add_argument("--listen", help="metrics endpoint host:port (default 127.0.0.1:9155)")
    monitor.add_argument("--push-url", dest="push_url", help="push gateway base URL")
    monitor.add_argument("--job", help="push job name (default vinevi)")
    monitor.add_argument("--push-interval", dest="push_interval", help="push period (default 15s)")
    monitor.add_argument("--exit-on-eof", dest="exit_on_eof", action="store_true",
                         help="stop when a pcap source is exhausted instead of serving the final window")
    monitor.set_defaults(handler=commands.cmd_monitor, usage=monitor.format_usage)

    classify = sub.add_parser("classify", help="classify a capture and print one line per packet")
    _add_source_flags(classify)
    classify.add_argument("--limit", type=int, help="stop after N classified packets")
    classify.set_defaults(handler=commands.cmd_classify, usage=classify.format_usage)

    dataset = sub.add_parser("dataset", help="render labelled pcaps into an image tree")
    dataset.add_argument("--input", action="append", metavar="PCAP:LABEL", help="labelled capture (repeatable)")
    dataset.add_argument("--out", required=True, help="output directory")
    dataset.add_argument("--format", default="ppm", choices=("ppm", "pgm"),
                         help="image encoding: binary PPM (P6) or PGM (P5); PNG is not written")
    dataset.add_argument("--split", default="1/0/0", help="train/val/test ratios (default 1/0/0)")
    dataset.add_argument("--seed", type=int, default=0)
    dataset.add_argument("--sample", help="all | 1/N | pool:<period>:<budget>")
    dataset.add_argument("--limit", type=int, help="at most N images per input")
    dataset.set_defaults(handler=commands.cmd_dataset, usage=dataset.format_usage)

    bench = sub.add_parser("bench", help="compare model latency and CPU")
    bench.add_argument("--model", action="append", help="model file (repeatable)")
    bench.add_argument("--pcap", help="packets to predict on (default: synthetic mix)")
    bench.add_argument("--iterations", type=int, default=50)
    bench.add_argument("--warmup", type=int, default=10)
    bench.add_argument("--duration", help="also sample CPU for this long per model, e.g. 2s")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--json", help="write the JSON report here")
    bench.add_argument("--csv", help="write raw timings here")
    bench.add_argument("--xlsx", help="write an Excel workbook here")
    bench.add_argument("--plot", help="write a PNG chart here")
    bench.set_defaults(handler=commands.cmd_bench, usage=bench.format_usage)

    info = sub.add_parser("model-info", help="describe a model file")
    info.add_argument("path")
    info.set_defaults(handler=commands.cmd_model_info, usage=info.format_usage)

    build = sub.add_parser("build-models", help="write the reference toy models")
    build.add_argument("--out", default="models")
    build.add_argument("--seed", type=int)
    build.set_defaults(handler=commands.cmd_build_models, usage=build.format_usage)
    return parser


def configure_logging(level: Optional[str]) -> None:
    if level:
        logging.getLogger().setLevel(getattr(logging, level.upper(), logging.INFO))


def main(argv: Optional[List[str]] = None, environ: Optional[Dict[str, str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and 2 for usage errors
        return int(e.code or 0)
    configure_logging(args.log_level)

    handler: Callable = args.handler
    try:
        return handler(args, environ)
    except STARTUP_ERRORS as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        if isinstance(e, ConfigError):
            sys.stderr.write(args.usage())
        return EXIT_USAGE
    except (VineviError, OSError) as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        return EXIT_RUNTIME
