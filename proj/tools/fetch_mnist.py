#!/usr/bin/env python3
"""Write a 5,000-digit MNIST subset (500 per class) as gzipped IDX files.

The full MNIST distribution is not always reachable from build machines, but
the mlxtend wheel on PyPI bundles a balanced 5k subset of the MNIST training
set as CSV. This script pulls that wheel through pip, extracts the CSV and
re-encodes it in the standard IDX layout so the C++ loaders see ordinary
MNIST files.
"""
import argparse
import glob
import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile


def write_idx_images(path, images, rows, cols):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist5k"))
    ap.add_argument("--wheel", help="use an already-downloaded mlxtend wheel")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                                   "-q", "-d", tmp, "mlxtend==0.24.0"])
            wheel = glob.glob(os.path.join(tmp, "mlxtend-*.whl"))[0]
        with zipfile.ZipFile(wheel) as z:
            raw = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz"))

    images, labels = [], []
    for line in io.StringIO(raw.decode("ascii")):
        line = line.strip()
        if not line:
            continue
        vals = [int(float(v)) for v in line.split(",")]
        images.append(vals[:784])
        labels.append(vals[784])
    assert all(len(img) == 784 for img in images)

    os.makedirs(args.out_dir, exist_ok=True)
    write_idx_images(os.path.join(args.out_dir, "images-idx3-ubyte.gz"), images, 28, 28)
    write_idx_labels(os.path.join(args.out_dir, "labels-idx1-ubyte.gz"), labels)
    counts = [labels.count(c) for c in range(10)]
    print(f"wrote {len(images)} images to {args.out_dir}; per-class {counts}")


if __name__ == "__main__":
    main()
