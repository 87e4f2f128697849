"""Build the vendored MNIST subset from the `mnist` npm package (v1.1.0).

The package ships 10,000 MNIST digits as JSON arrays of pixel intensities in
[0, 1] (rounded to three decimals). This script shuffles them with a fixed
seed and writes a 5,000-image train split and a 1,000-image test split as
gzip-compressed IDX files, the same layout as the original distribution.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""

import gzip
import json
import random
import struct
import sys
from pathlib import Path


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst, n_train=5000, n_test=1000, seed=20200614):
    samples = []
    for digit in range(10):
        raw = json.loads((Path(src) / f"{digit}.json").read_text())["data"]
        for start in range(0, len(raw), 784):
            pixels = [min(255, max(0, round(v * 255))) for v in raw[start : start + 784]]
            samples.append((pixels, digit))
    random.Random(seed).shuffle(samples)
    train = samples[:n_train]
    test = samples[n_train : n_train + n_test]
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
