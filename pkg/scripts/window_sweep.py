#!/usr/bin/env python3
"""Re-segment one generated dataset at several window lengths N and evaluate.

Uses the synthetic oracle scorer (label + Gaussian noise) so the sweep runs
without a trained model; the window-level EER stays roughly flat while the
number of trials, and the localization scores, shift with N.
"""

import argparse
import json
import sys

from longspoof.cli import main as cli
from longspoof.protocol import read_manifest

N_VALUES = (0.01, 0.1, 0.5, 1.0, 2.0, 4.0)


def run(argv):
    print("+ longspoof " + " ".join(argv), file=sys.stderr)
    rc = cli(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/window_sweep")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sigma", type=float, default=0.3, help="oracle score noise")
    args = ap.parse_args()

    corpus = f"{args.out}/corpus"
    dataset = f"{args.out}/dataset"
    run(
        [
            "make-synthetic-source",
            "--out", corpus,
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
            "--counts-dev", "8,8",
            "--counts-eval", "8,8",
            "--seed", str(args.seed),
        ]
    )

    rows = []
    for n in N_VALUES:
        tag = f"{n:g}".replace(".", "p")
        windows = f"{args.out}/seg_{tag}"
        run(
            [
                "resegment",
                "--long-manifest", f"{dataset}/long_manifest.jsonl",
                "--out", windows,
                "--n-seconds", str(n),
            ]
        )
        manifest = f"{windows}/window_manifest.jsonl"
        for part in ("dev", "eval"):
            run(
                [
                    "score-oracle",
                    "--manifest", manifest,
                    "--out", f"{windows}/{part}.tsv",
                    "--partition", part,
                    "--sigma", str(args.sigma),
                    "--seed", str(args.seed),
                ]
            )
        report = f"{windows}/report.json"
        run(
            [
                "eval-localize",
                "--eval-scores", f"{windows}/eval.tsv",
                "--eval-manifest", manifest,
                "--dev-scores", f"{windows}/dev.tsv",
                "--dev-manifest", manifest,
                "--ap-ar",
                "--out-json", report,
            ]
        )
        payload = json.load(open(report, encoding="utf-8"))
        n_windows = len(read_manifest(manifest).entries)
        rows.append(
            {
                "n_seconds": n,
                "windows": n_windows,
                "eer": round(payload["detection"]["eer_percent"], 2),
                "hter": round(payload["detection"]["hter_percent"], 2),
                "ap25": round(payload["localization"]["ap_percent"]["0.25"], 2),
                "ar100": round(payload["localization"]["ar_percent"]["100"], 2),
            }
        )

    print(f"{'N (s)':>7} {'windows':>8} {'EER%':>7} {'HTER%':>7} {'AP@.25':>7} {'AR@100':>7}")
    for r in rows:
        print(
            f"{r['n_seconds']:>7g} {r['windows']:>8} {r['eer']:>7} "
            f"{r['hter']:>7} {r['ap25']:>7} {r['ar100']:>7}"
        )
    with open(f"{args.out}/sweep.json", "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    print(f"\nwrote {args.out}/sweep.json", file=sys.stderr)


if __name__ == "__main__":
    main()
