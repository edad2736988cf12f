"""Write the 5000-image MNIST sample shipped inside the mlxtend wheel as IDX files.

    pip download --no-deps -d /tmp/wheels mlxtend
    python scripts/make_mnist5k.py /tmp/wheels/mlxtend-*.whl data/mnist5k

The rows are sorted by class; within each class the first 400 images go to the
training split and the remaining 100 to the test split. Each split is then
shuffled with a fixed seed so that any prefix (``train_limit``) covers every
class.
"""
import gzip
import io
import sys
import zipfile
from pathlib import Path

import numpy as np

from artifact.data import write_idx

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
TRAIN_PER_CLASS = 400
SHUFFLE_SEED = 0


def main(wheel, out):
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",").astype(np.uint8)
    images, labels = table[:, :-1].reshape(-1, 28, 28), table[:, -1]
    train = np.concatenate([np.flatnonzero(labels == c)[:TRAIN_PER_CLASS] for c in range(10)])
    test = np.setdiff1d(np.arange(len(labels)), train)
    rng = np.random.default_rng(SHUFFLE_SEED)
    train, test = rng.permutation(train), rng.permutation(test)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(images[train], labels[train],
              out / "train-images-idx3-ubyte.gz", out / "train-labels-idx1-ubyte.gz")
    write_idx(images[test], labels[test],
              out / "t10k-images-idx3-ubyte.gz", out / "t10k-labels-idx1-ubyte.gz")
    print(f"train {len(train)}, test {len(test)} ->", out)


if __name__ == "__main__":
    main(*sys.argv[1:3])
