#!/usr/bin/env python3
"""Rebuild IDX files from the 10k-digit subset bundled in the npm ``mnist``
package (``src/digits/<d>.json``, pixels stored as value/255 to 3 decimals).

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/mnist_from_npm.py package/src/digits data/

The 3-decimal rounding error (< 5e-4) is far below the 1/510 needed to
recover the original bytes exactly. Digits are interleaved in a fixed
seeded order so that any prefix is class-balanced.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from csenkit.harness.idx import IMAGES_MAGIC, LABELS_MAGIC, write_idx
from csenkit.numerics import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=20200101)
    args = ap.parse_args()

    images, labels = [], []
    for d in range(10):
        flat = np.asarray(json.loads((args.digits_dir / f"{d}.json").read_text())["data"], dtype=float)
        u8 = np.rint(flat * 255.0)
        assert np.max(np.abs(u8 / 255.0 - flat)) < 1 / 510, "pixel values not recoverable"
        images.append(u8.astype(np.uint8).reshape(-1, 28, 28))
        labels.append(np.full(len(images[-1]), d, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = make_rng(args.seed).permutation(len(images))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "mnist10k-images-idx3-ubyte.gz", images[order], IMAGES_MAGIC)
    write_idx(args.out_dir / "mnist10k-labels-idx1-ubyte.gz", labels[order], LABELS_MAGIC)
    print(f"wrote {len(images)} digits to {args.out_dir}")


if __name__ == "__main__":
    main()
