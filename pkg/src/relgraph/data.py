"""Dataset I/O (CSV and a little-endian binary format) and the synthetic mixing task."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .generators import make_rng
from .nn import Dataset

BINARY_HEADER = struct.Struct("<III")  # samples, features, classes


def mixing_task(
    samples: int = 3000,
    features: int = 16,
    groups: int = 4,
    classes: int = 2,
    noise: float = 0.0,
    val_fraction: float = 0.25,
    seed: int = 0,
) -> Dataset:
    """Binary labels from the sign of a product of group sums.

    Features are split into ``groups`` disjoint groups; the label is whether
    the product of the per-group sums is positive. No single group (or sum of
    per-group functions) predicts the label, so a network must mix features
    across groups. ``classes`` > 2 bins the product by quantile instead.
    """
    rng = make_rng(seed, 7)
    x = rng.standard_normal((samples, features))
    sums = np.stack([g.sum(axis=1) for g in np.array_split(x, groups, axis=1)], axis=1)
    score = np.prod(sums, axis=1)
    if noise:
        score = score + noise * rng.standard_normal(samples)
    if classes == 2:
        y = (score > 0).astype(np.int64)
    else:
        cuts = np.quantile(score, np.linspace(0, 1, classes + 1)[1:-1])
        y = np.searchsorted(cuts, score).astype(np.int64)
    n_val = int(round(samples * val_fraction))
    return Dataset(x[n_val:], y[n_val:], x[:n_val], y[:n_val], classes)


def separable_task(samples: int = 600, features: int = 8, margin: float = 0.5, seed: int = 0) -> Dataset:
    """Two linearly separable classes with a gap of ``2 * margin`` along a random direction."""
    rng = make_rng(seed, 11)
    direction = rng.standard_normal(features)
    direction /= np.linalg.norm(direction)
    x = rng.standard_normal((samples, features))
    proj = x @ direction
    x += np.outer(np.sign(proj) * margin, direction)
    y = (proj > 0).astype(np.int64)
    n_val = samples // 4
    return Dataset(x[n_val:], y[n_val:], x[:n_val], y[:n_val], 2)


def split(x: np.ndarray, y: np.ndarray, classes: int, val_fraction: float, seed: int = 0) -> Dataset:
    order = make_rng(seed, 3).permutation(len(y))
    n_val = int(round(len(y) * val_fraction))
    val, tr = order[:n_val], order[n_val:]
    return Dataset(x[tr], y[tr], x[val], y[val], classes)


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``label, feature...``; a non-numeric first row is treated as a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0:
                    continue
                raise
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, 1:], arr[:, 0].astype(np.int64)


def write_csv(path, x: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for label, row in zip(y, x):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def read_binary(path) -> tuple[np.ndarray, np.ndarray, int]:
    raw = Path(path).read_bytes()
    samples, features, classes = BINARY_HEADER.unpack_from(raw, 0)
    off = BINARY_HEADER.size
    x = np.frombuffer(raw, dtype="<f4", count=samples * features, offset=off).reshape(samples, features)
    off += 4 * samples * features
    y = np.frombuffer(raw, dtype="<u4", count=samples, offset=off)
    if off + 4 * samples != len(raw):
        raise ValueError(f"binary dataset {path} has {len(raw)} bytes, header implies {off + 4 * samples}")
    return x.astype(np.float64), y.astype(np.int64), int(classes)


def write_binary(path, x: np.ndarray, y: np.ndarray, classes: int) -> None:
    x = np.asarray(x, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(BINARY_HEADER.pack(x.shape[0], x.shape[1], classes))
        fh.write(x.tobytes())
        fh.write(np.asarray(y, dtype="<u4").tobytes())


def load_dataset(path, val_fraction: float = 0.25, seed: int = 0, classes: int | None = None) -> Dataset:
    path = Path(path)
    if path.suffix == ".csv":
        x, y = read_csv(path)
        classes = classes or int(y.max()) + 1
    else:
        x, y, classes = read_binary(path)
    return split(x, y, classes, val_fraction, seed)
