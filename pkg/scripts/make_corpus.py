#!/usr/bin/env python3
"""Generate a synthetic PGM corpus plus manifest for training/evaluation."""

import argparse

from cascadesr.data import PatchParams
from cascadesr.synth import make_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--train", type=int, default=20, help="number of training images")
    parser.add_argument("--test", type=int, default=5, help="number of test images")
    parser.add_argument("--size", type=int, default=180, help="image side length in pixels")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scale", type=int, default=2)
    parser.add_argument("--lr-size", type=int, default=33, help="LR patch side (HR side is lr-16)")
    parser.add_argument("--stride", type=int, default=33)
    args = parser.parse_args()
    patch = PatchParams(args.lr_size, args.stride, args.lr_size - 16)
    manifest = make_corpus(
        args.out_dir,
        n_train=args.train,
        n_test=args.test,
        image_size=args.size,
        seed=args.seed,
        scale=args.scale,
        patch=patch,
    )
    print(f"wrote {args.train} train + {args.test} test images; manifest at {manifest}")


if __name__ == "__main__":
    main()
