#!/usr/bin/env python3
"""Write scikit-learn's bundled 8x8 digits as IDX files (the offline MNIST-subset stand-in).

Pixels 0..16 are rescaled to bytes 0..255. Fixed shuffle, 1500 train / rest test.
"""
import argparse
import pathlib
import struct

import numpy as np
from sklearn.datasets import load_digits


def write_idx(prefix: pathlib.Path, images: np.ndarray, labels: np.ndarray) -> None:
    n, rows, cols = images.shape
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--train", type=int, default=1500)
    args = ap.parse_args()

    d = load_digits()
    images = np.rint(d.images * (255.0 / 16.0)).astype(np.uint8)
    order = np.random.RandomState(0).permutation(len(images))
    images, labels = images[order], d.target[order]

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "digits-train", images[: args.train], labels[: args.train])
    write_idx(out / "digits-test", images[args.train :], labels[args.train :])


if __name__ == "__main__":
    main()
