#!/usr/bin/env python3
"""End-to-end walkthrough of the dataset pipeline on synthetic sources.

Steps: synthesize a labeled source corpus, compose long-form records with
noise augmentation, cut N-second windows, score them with the synthetic
oracle, and run both evaluation protocols.  Everything lands under --out.
"""

import argparse
import sys

from longspoof.cli import main as cli


def run(argv):
    print("+ longspoof " + " ".join(argv), file=sys.stderr)
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/demo", help="working directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma", type=float, default=0.3, help="oracle score noise")
    ap.add_argument("--n-seconds", type=float, default=4.0, help="window length")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    corpus = f"{args.out}/corpus"
    dataset = f"{args.out}/dataset"
    windows = f"{args.out}/windows"

    run(
        [
            "make-synthetic-source",
            "--out", corpus,
            "--train", "40,40",
            "--dev", "24,24",
            "--eval", "24,24",
            "--seed", str(args.seed),
        ]
    )
    run(
        [
            "generate",
            "--manifest", f"{corpus}/source_manifest.jsonl",
            "--out", dataset,
            "--noise", "on",
            "--noise-manifest", f"{corpus}/noise_manifest.jsonl",
            "--counts-train", "8,12",
            "--counts-dev", "6,6",
            "--counts-eval", "6,6",
            "--seed", str(args.seed),
            "--jobs", str(args.jobs),
        ]
    )
    run(
        [
            "resegment",
            "--long-manifest", f"{dataset}/long_manifest.jsonl",
            "--out", windows,
            "--n-seconds", str(args.n_seconds),
        ]
    )
    for part in ("dev", "eval"):
        run(
            [
                "score-oracle",
                "--manifest", f"{windows}/window_manifest.jsonl",
                "--out", f"{args.out}/{part}_windows.tsv",
                "--partition", part,
                "--sigma", str(args.sigma),
                "--seed", str(args.seed),
            ]
        )
        run(
            [
                "score-oracle",
                "--manifest", f"{dataset}/long_manifest.jsonl",
                "--out", f"{args.out}/{part}_longs.tsv",
                "--partition", part,
                "--sigma", str(args.sigma),
                "--seed", str(args.seed),
            ]
        )

    print("\n== utterance-level detection ==")
    run(
        [
            "eval-detect",
            "--eval-scores", f"{args.out}/eval_longs.tsv",
            "--eval-manifest", f"{dataset}/long_manifest.jsonl",
            "--dev-scores", f"{args.out}/dev_longs.tsv",
            "--dev-manifest", f"{dataset}/long_manifest.jsonl",
            "--out-json", f"{args.out}/detect_report.json",
        ]
    )
    print("\n== window-level detection + localization ==")
    run(
        [
            "eval-localize",
            "--eval-scores", f"{args.out}/eval_windows.tsv",
            "--eval-manifest", f"{windows}/window_manifest.jsonl",
            "--dev-scores", f"{args.out}/dev_windows.tsv",
            "--dev-manifest", f"{windows}/window_manifest.jsonl",
            "--ap-ar",
            "--out-json", f"{args.out}/localize_report.json",
        ]
    )
    print(f"\nreports under {args.out}/", file=sys.stderr)


if __name__ == "__main__":
    main()
