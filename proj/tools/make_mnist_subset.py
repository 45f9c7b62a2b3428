#!/usr/bin/env python3
"""Write a class-balanced MNIST subset in IDX format.

The source is the 5000-sample MNIST CSV shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz: 784 pixel columns then the label,
500 images per class, sorted by label).  The subset is shuffled with a
fixed seed so the output is reproducible.

    pip download --no-deps mlxtend -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-subset
"""

import argparse
import gzip
import io
import os
import random
import struct
import zipfile


def read_rows(source):
    if source.endswith(".whl"):
        with zipfile.ZipFile(source) as z:
            raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        with open(source, "rb") as f:
            raw = f.read()
    text = gzip.decompress(raw).decode()
    rows = []
    for line in io.StringIO(text):
        fields = line.strip().split(",")
        if len(fields) != 785:
            continue
        pixels = bytes(int(float(v)) for v in fields[:784])
        rows.append((pixels, int(float(fields[784]))))
    return rows


def write_idx(path, rows):
    with open(path + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with open(path + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("source", help="mlxtend wheel or mnist_5k.csv.gz")
    ap.add_argument("outdir")
    ap.add_argument("--train-per-class", type=int, default=200)
    ap.add_argument("--test-per-class", type=int, default=50)
    ap.add_argument("--seed", type=int, default=20190601)
    args = ap.parse_args()

    rows = read_rows(args.source)
    by_class = {}
    for row in rows:
        by_class.setdefault(row[1], []).append(row)

    rng = random.Random(args.seed)
    train, test = [], []
    for label in sorted(by_class):
        members = by_class[label]
        rng.shuffle(members)
        train += members[: args.train_per_class]
        test += members[args.train_per_class: args.train_per_class + args.test_per_class]
    rng.shuffle(train)
    rng.shuffle(test)

    os.makedirs(args.outdir, exist_ok=True)
    write_idx(os.path.join(args.outdir, "train"), train)
    write_idx(os.path.join(args.outdir, "test"), test)
    print(f"train={len(train)} test={len(test)} -> {args.outdir}")


if __name__ == "__main__":
    main()
