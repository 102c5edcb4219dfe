#!/usr/bin/env python3
"""Convert the npm `mnist` package's digit JSON files into standard IDX files.

The npm package (https://www.npmjs.com/package/mnist) ships 10,000 genuine
MNIST 28x28 samples as per-digit JSON arrays of floats in [0,1] (pixel/255).
This script rebuilds uncompressed IDX image/label files from them:

    npm pack mnist && tar xf mnist-*.tgz        # yields package/src/digits/*.json
    python3 scripts/prepare_mnist.py package/src/digits data/mnist

Split: per digit, the first 80% of samples go to train, the rest to test.
Within each split, samples are interleaved round-robin across digits so any
prefix of the file is approximately class-balanced.
"""

import json
import struct
import sys
from pathlib import Path

ROWS = COLS = 28


def load_digit(path: Path):
    with open(path) as f:
        flat = json.load(f)["data"]
    n = len(flat) // (ROWS * COLS)
    assert n * ROWS * COLS == len(flat), f"{path}: ragged data"
    out = []
    for i in range(n):
        px = flat[i * ROWS * COLS : (i + 1) * ROWS * COLS]
        out.append(bytes(min(255, max(0, round(v * 255))) for v in px))
    return out


def interleave(per_digit):
    """Round-robin over digits until all pools are exhausted."""
    images, labels = [], []
    cursors = [0] * 10
    remaining = sum(len(p) for p in per_digit)
    while remaining:
        for d in range(10):
            if cursors[d] < len(per_digit[d]):
                images.append(per_digit[d][cursors[d]])
                labels.append(d)
                cursors[d] += 1
                remaining -= 1
    return images, labels


def write_idx_images(path: Path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), ROWS, COLS))
        for img in images:
            f.write(img)


def write_idx_labels(path: Path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src = Path(sys.argv[1] if len(sys.argv) > 1 else "package/src/digits")
    dst = Path(sys.argv[2] if len(sys.argv) > 2 else "data/mnist")
    dst.mkdir(parents=True, exist_ok=True)

    train_pd, test_pd = [], []
    for d in range(10):
        samples = load_digit(src / f"{d}.json")
        cut = (len(samples) * 4) // 5
        train_pd.append(samples[:cut])
        test_pd.append(samples[cut:])
        print(f"digit {d}: {cut} train / {len(samples) - cut} test")

    for name, per_digit in (("train", train_pd), ("t10k", test_pd)):
        images, labels = interleave(per_digit)
        write_idx_images(dst / f"{name}-images-idx3-ubyte", images)
        write_idx_labels(dst / f"{name}-labels-idx1-ubyte", labels)
        print(f"{name}: {len(images)} samples")


if __name__ == "__main__":
    main()
