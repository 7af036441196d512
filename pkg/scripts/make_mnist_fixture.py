"""Build the gzipped IDX digit fixture used by the end-to-end tests.

Input is the ``src/digits/{0..9}.json`` directory of the npm ``mnist`` package
(10 000 genuine MNIST digits stored as flat [0, 1] arrays).

    python3 scripts/make_mnist_fixture.py /path/to/mnist/src/digits tests/data/mnist
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", s) for s in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + array.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits")
    ap.add_argument("out")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        flat = np.asarray(json.loads((Path(args.digits) / f"{digit}.json").read_text())["data"], float)
        block = np.rint(flat.reshape(-1, 784) * 255).clip(0, 255)
        images.append(block)
        labels.append(np.full(len(block), digit))
    X = np.concatenate(images).reshape(-1, 28, 28)
    y = np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(y))
    X, y = X[order], y[order]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_test = args.test
    write_idx(out / "train-images-idx3-ubyte.gz", X[n_test:], 0x803)
    write_idx(out / "train-labels-idx1-ubyte.gz", y[n_test:], 0x801)
    write_idx(out / "t10k-images-idx3-ubyte.gz", X[:n_test], 0x803)
    write_idx(out / "t10k-labels-idx1-ubyte.gz", y[:n_test], 0x801)
    print(f"train {len(y) - n_test}, test {n_test} -> {out}")


if __name__ == "__main__":
    main()
