#!/usr/bin/env python3
"""Build IDX-format MNIST files from the `mnist` npm package.

The npm package (https://www.npmjs.com/package/mnist) bundles 10,000 MNIST
digits as JSON, one file per class, pixels stored as round(byte/255, 3).
That rounding is lossless: int(v*255 + 0.5) recovers the original byte.

Usage:
    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_idx.py package/src/digits data/mnist

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (8,000 images)
and t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (2,000 images) after a
fixed-seed shuffle so both splits are class-balanced.
"""
import json
import os
import random
import struct
import sys


def main(src_dir: str, out_dir: str) -> None:
    samples = []
    for digit in range(10):
        with open(os.path.join(src_dir, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            px = bytes(int(v * 255 + 0.5) for v in flat[i * 784:(i + 1) * 784])
            samples.append((px, digit))

    random.Random(20240229).shuffle(samples)
    n_test = len(samples) // 5
    splits = {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"): samples[n_test:],
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"): samples[:n_test],
    }

    os.makedirs(out_dir, exist_ok=True)
    for (img_name, lbl_name), subset in splits.items():
        with open(os.path.join(out_dir, img_name), "wb") as f:
            f.write(struct.pack(">iiii", 0x803, len(subset), 28, 28))
            for px, _ in subset:
                f.write(px)
        with open(os.path.join(out_dir, lbl_name), "wb") as f:
            f.write(struct.pack(">ii", 0x801, len(subset)))
            f.write(bytes(lbl for _, lbl in subset))
        print(f"{img_name}: {len(subset)} images")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
