#!/usr/bin/env python3
"""Regenerate the evaluation split across SNR bands and report dataset stats.

Every segment is mixed with noise (the no-noise outcome is disabled) at an
SNR drawn from the band, so each run isolates one noise severity.  The
printed table summarizes what a detector would be trained/evaluated on;
plug real model scores into eval-detect / eval-localize to complete the
experiment.
"""

import argparse
import json
import sys

from longspoof.cli import main as cli
from longspoof.protocol import read_annotations, read_manifest

BANDS = ((0, 5), (5, 10), (10, 15), (15, 20), (20, 25), (25, 30))


def run(argv):
    print("+ longspoof " + " ".join(argv), file=sys.stderr)
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/snr_sweep")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--counts-eval", default="10,10", help="BONAFIDE,SPOOFED long counts")
    args = ap.parse_args()

    corpus = f"{args.out}/corpus"
    run(
        [
            "make-synthetic-source",
            "--out", corpus,
            "--eval", "24,24",
            "--seed", str(args.seed),
        ]
    )

    rows = []
    for lo, hi in BANDS:
        out = f"{args.out}/snr_{lo}_{hi}"
        run(
            [
                "generate",
                "--manifest", f"{corpus}/source_manifest.jsonl",
                "--out", out,
                "--noise", "on",
                "--noise-manifest", f"{corpus}/noise_manifest.jsonl",
                "--snr-min", str(lo),
                "--snr-max", str(hi),
                "--counts-eval", args.counts_eval,
                "--seed", str(args.seed),
                "--set", "noise.weight_none=0",
            ]
        )
        manifest = read_manifest(f"{out}/long_manifest.jsonl")
        _, annotations = read_annotations(f"{out}/annotations.jsonl")
        snrs = [s.noise.snr_db for a in annotations.values() for s in a.annotations]
        dur_s = sum(e.duration for e in manifest.entries) / 16000.0
        rows.append(
            {
                "band_db": f"{lo}-{hi}",
                "longs": len(manifest.entries),
                "total_s": round(dur_s, 1),
                "noisy_segments": len(snrs),
                "mean_snr_db": round(sum(snrs) / len(snrs), 2),
                "manifest": f"{out}/long_manifest.jsonl",
            }
        )

    print(f"{'band':>8} {'longs':>6} {'total_s':>9} {'segments':>9} {'mean_snr':>9}")
    for r in rows:
        print(
            f"{r['band_db']:>8} {r['longs']:>6} {r['total_s']:>9} "
            f"{r['noisy_segments']:>9} {r['mean_snr_db']:>9}"
        )
    with open(f"{args.out}/sweep.json", "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    print(f"\nwrote {args.out}/sweep.json", file=sys.stderr)


if __name__ == "__main__":
    main()
