#!/usr/bin/env python3
"""Desk-scale reruns of the training and trimming comparisons.

Trains every experiment arm (cascade vs one-shot; cascade trim vs one-shot
trim vs trim-train) for several seeds on a small synthetic corpus and prints
the per-seed and mean held-out PSNR tables. Expect tens of minutes total.
"""

import argparse
import time

from cascadesr import evaluate, experiments


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="desk_runs", help="output directory for corpora/models")
    parser.add_argument("--seeds", type=int, nargs="+", default=list(experiments.DESK_SEEDS))
    parser.add_argument("--corpus-seed", type=int, default=99)
    args = parser.parse_args()

    t0 = time.time()
    manifest, patches = experiments.desk_corpus(f"{args.workdir}/corpus", corpus_seed=args.corpus_seed)
    bicubic = evaluate.benchmark(None, manifest).mean_psnr
    print(f"{len(patches)} training patches; bicubic baseline {bicubic:.2f} dB\n")

    results = []
    for seed in args.seeds:
        print(f"seed {seed} [{time.time() - t0:.0f}s elapsed]")
        results.append(experiments.run_seed(patches, manifest, seed, f"{args.workdir}/work"))

    print("\n=== mean held-out PSNR over seeds (dB) ===")
    for depth in (3, 5, 7):
        print(f"cascade depth {depth}:   {experiments.mean(r.cascade_psnr[depth] for r in results):6.2f}")
    print(f"one-shot depth 5:  {experiments.mean(r.one_shot5_psnr for r in results):6.2f}")
    for method in ("one_shot", "trim_train", "cascade_trim"):
        print(f"{method:18s} {experiments.mean(r.trim_psnr[method] for r in results):6.2f}")
    print(f"\ntotal {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
