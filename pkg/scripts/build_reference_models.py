#!/usr/bin/env python3
"""Write the three reference toy models (tiny-squeeze, tiny-mobile, tiny-res).

Weights come from a counter hash, so rerunning with the same seed reproduces
the files byte for byte. The committed test fixtures are:

    python scripts/build_reference_models.py --out tests/fixtures --golden
"""

import argparse
import json
import os
import sys
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)
from src.capture.pcap import RawPacket
from src.engine.accounting import count_params, flops_total, last_layer_complexity
from src.engine.model_file import load_model
from src.engine.reference import DEFAULT_SEED, write_reference_models
from src.utils.classifier import classify_with_model

# Ethernet + IPv4 + UDP DNS query for example.org
GOLDEN_PACKET = bytes.fromhex(
    "020000000002020000000001080045000039"
    "1c46400040110000c0a8000108080808c3500035002500001a2b0100000100000000000007"
    "6578616d706c65036f72670000010001"
)
GOLDEN_MODEL = "tiny-res.vnn"


def record_golden(out_dir):
    path = os.path.join(out_dir, "tiny-res.golden.json")
    result = classify_with_model(RawPacket.from_bytes(GOLDEN_PACKET), load_model(os.path.join(out_dir, GOLDEN_MODEL)))
    record = {
        "model": GOLDEN_MODEL,
        "packet_hex": GOLDEN_PACKET.hex(),
        "class": result.traffic_class.value,
        "confidence": result.confidence,
        "scores": result.scores.as_dict(),
    }
    with open(path, "w") as fp:
        json.dump(record, fp, indent=2)
        fp.write("\n")
    return path


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.path.join(ROOT, "models"))
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--golden", action="store_true", help="also record tiny-res on a fixed DNS packet")
    args = parser.parse_args()

    for path in write_reference_models(args.out, args.seed):
        model = load_model(path)
        print(f"{path}: {count_params(model):,} params, {flops_total(model):,} FLOPs, "
              f"last layer {last_layer_complexity(model):.4f}%")
    if args.golden:
        print(f"golden record: {record_golden(args.out)}")


if __name__ == "__main__":
    main()
