#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Write a 5000-image MNIST subset as gzipped IDX files.

The subset ships inside the mlxtend wheel (mlxtend/data/data/mnist_5k.csv.gz,
784 pixel columns followed by the label). Usage:

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path


def load_rows(source: Path):
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as wheel:
            raw = wheel.read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        raw = source.read_bytes()
    text = gzip.decompress(raw).decode()
    for line in io.StringIO(text):
        line = line.strip()
        if line:
            yield [int(float(v)) for v in line.split(",")]


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 1
    rows = list(load_rows(Path(sys.argv[1])))
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    images = bytearray(struct.pack(">IIII", 0x803, len(rows), 28, 28))
    labels = bytearray(struct.pack(">II", 0x801, len(rows)))
    for row in rows:
        images.extend(bytes(row[:784]))
        labels.append(row[784])
    # mtime=0 keeps the archives reproducible.
    with gzip.GzipFile(out / "train-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(out / "train-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {len(rows)} images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
