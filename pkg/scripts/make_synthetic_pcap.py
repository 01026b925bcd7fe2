#!/usr/bin/env python3
"""Generate labelled synthetic captures using each class's well-known port.

    make_synthetic_pcap.py --out fixtures/ --count 30            one pcap per class
    make_synthetic_pcap.py --out mixed.pcap --count 1000 --mixed one shuffled pcap
"""

import argparse
import os
import sys
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)
from src.capture.pcap import ByteOrder
from src.capture.synthetic import mixed_labels, write_labelled_capture
from src.models.models import TrafficClass


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--count", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--spacing", type=float, default=0.01, help="seconds between packets")
    parser.add_argument("--mixed", action="store_true")
    parser.add_argument("--big-endian", action="store_true")
    parser.add_argument("--nanosecond", action="store_true")
    args = parser.parse_args()
    byte_order = ByteOrder.BIG if args.big_endian else ByteOrder.LITTLE

    if args.mixed:
        labels = mixed_labels(args.count, args.seed)
        write_labelled_capture(args.out, labels, args.seed, args.spacing, byte_order, args.nanosecond)
        print(f"{args.out}: {len(labels)} packets")
        return

    os.makedirs(args.out, exist_ok=True)
    for traffic_class in TrafficClass:
        path = os.path.join(args.out, f"{traffic_class.value}.pcap")
        write_labelled_capture(path, [traffic_class] * args.count, args.seed, args.spacing,
                               byte_order, args.nanosecond)
        print(f"{path}: {args.count} packets labelled {traffic_class.value}")


if __name__ == "__main__":
    main()
