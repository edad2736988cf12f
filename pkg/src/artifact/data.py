"""IDX (MNIST) and CIFAR-10 binary loaders, plus writers for test fixtures.

IDX files may be gzip-compressed; this is detected from the gzip magic bytes.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConsistencyError, FormatError, LengthError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
CIFAR_SHAPE = (3, 32, 32)


@dataclass
class DatasetHandle:
    images: np.ndarray  # (N, H, W, C) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    name: str = ""

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ConsistencyError(
                f"{len(self.images)} images but {len(self.labels)} labels in {self.name!r}"
            )

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def subset(self, idx) -> DatasetHandle:
        return DatasetHandle(self.images[idx], self.labels[idx], self.name)


def _read(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw: bytes, path, magic: int, ndim: int) -> tuple[int, ...]:
    if len(raw) < 4:
        raise LengthError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < 4 + 4 * ndim:
        raise LengthError(f"{path}: IDX header truncated")
    return struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])


def load_idx_images(path) -> np.ndarray:
    raw = _read(path)
    n, h, w = _idx_header(raw, path, IDX_IMAGES_MAGIC, 3)
    body = raw[16:]
    if len(body) != n * h * w:
        raise LengthError(f"{path}: expected {n * h * w} pixel bytes, found {len(body)}")
    px = np.frombuffer(body, dtype=np.uint8).reshape(n, h, w, 1)
    return px / 255.0


def load_idx_labels(path) -> np.ndarray:
    raw = _read(path)
    (n,) = _idx_header(raw, path, IDX_LABELS_MAGIC, 1)
    body = raw[8:]
    if len(body) != n:
        raise LengthError(f"{path}: expected {n} label bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).astype(np.int64)


def load_idx(images_path, labels_path, name: str = "mnist") -> DatasetHandle:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise ConsistencyError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    return DatasetHandle(images, labels, name)


def load_cifar_bin(paths: Iterable, name: str = "cifar10") -> DatasetHandle:
    images, labels = [], []
    for path in paths:
        raw = _read(path)
        if len(raw) % CIFAR_RECORD:
            raise LengthError(
                f"{path}: length {len(raw)} is not a multiple of the {CIFAR_RECORD}-byte record"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        # channel-major planes -> channels-last
        images.append(rec[:, 1:].reshape((-1,) + CIFAR_SHAPE).transpose(0, 2, 3, 1) / 255.0)
    if not images:
        raise ValueError("no CIFAR batch files given")
    return DatasetHandle(np.concatenate(images), np.concatenate(labels), name)


def write_idx(images_u8: np.ndarray, labels_u8: np.ndarray, images_path, labels_path) -> None:
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    labels_u8 = np.asarray(labels_u8, dtype=np.uint8)
    if images_u8.ndim == 4:
        images_u8 = images_u8[..., 0]
    n, h, w = images_u8.shape
    img = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + images_u8.tobytes()
    lab = struct.pack(">II", IDX_LABELS_MAGIC, len(labels_u8)) + labels_u8.tobytes()
    for path, blob in ((images_path, img), (labels_path, lab)):
        path = Path(path)
        path.write_bytes(gzip.compress(blob, mtime=0) if path.suffix == ".gz" else blob)


def write_cifar_bin(images_u8: np.ndarray, labels_u8: np.ndarray, path) -> None:
    """``images_u8`` is channels-last ``(N, 32, 32, 3)``."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    planes = images_u8.transpose(0, 3, 1, 2).reshape(len(images_u8), -1)
    rec = np.concatenate([np.asarray(labels_u8, dtype=np.uint8)[:, None], planes], axis=1)
    Path(path).write_bytes(rec.tobytes())


def load_dataset(section: dict, base: Path | None = None) -> tuple[DatasetHandle, DatasetHandle]:
    """Train and test sets described by a config ``dataset`` section."""
    base = Path(base or ".")

    def p(rel):
        return base / rel

    fmt = section.get("format", "idx")
    name = section.get("name", fmt)
    if fmt == "idx":
        train = load_idx(p(section["train_images"]), p(section["train_labels"]), name)
        test = load_idx(p(section["test_images"]), p(section["test_labels"]), name)
    elif fmt == "cifar":
        train = load_cifar_bin([p(x) for x in section["train"]], name)
        test = load_cifar_bin([p(x) for x in section["test"]], name)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if section.get("train_limit"):
        train = train.subset(slice(0, int(section["train_limit"])))
    if section.get("test_limit"):
        test = test.subset(slice(0, int(section["test_limit"])))
    return train, test
