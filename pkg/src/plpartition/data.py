"""Sparse multi-label dataset ingestion (the XMLC repository text format).

Layout: a header line ``num_samples num_features num_labels`` followed by one
line per sample, ``l1,l2,... f1:v1 f2:v2 ...``.  The label field may be empty
(the line then starts with a space).  UTF-8, LF or CRLF, transparent gzip by
``.gz`` extension.  Parsing is strict: duplicate or decreasing feature
indices, out-of-range ids, and malformed tokens fail fast with the line
number attached.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np

from .training import TrainExample


class MalformedHeaderError(ValueError):
    pass


class MalformedLineError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class IndexOutOfRangeError(MalformedLineError):
    pass


class EmptyLabelSetError(ValueError):
    pass


class FullLabelSetError(ValueError):
    pass


@dataclass(frozen=True)
class SparseSample:
    """Feature (index, value) pairs sorted by index plus a sorted label-id set."""

    feat_idx: np.ndarray
    feat_val: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class Dataset:
    samples: list[SparseSample]
    n_features: int
    n_labels: int
    label_counts: np.ndarray

    def __len__(self):
        return len(self.samples)


def _open_text(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _parse_line(line: str, line_no: int, n_features: int, n_labels: int) -> SparseSample:
    head, _, rest = line.partition(" ")
    if head:
        try:
            labels = np.array(sorted({int(tok) for tok in head.split(",")}), dtype=np.int64)
        except ValueError as exc:
            raise MalformedLineError(line_no, f"bad label field {head!r}") from exc
        if head.count(",") + 1 != labels.size:
            raise MalformedLineError(line_no, "duplicate label ids")
        if labels.size and (labels[0] < 0 or labels[-1] >= n_labels):
            raise IndexOutOfRangeError(line_no, "label id out of range")
    else:
        labels = np.empty(0, dtype=np.int64)
    idxs, vals = [], []
    for tok in rest.split():
        pair = tok.split(":")
        if len(pair) != 2:
            raise MalformedLineError(line_no, f"bad feature token {tok!r}")
        try:
            idx, val = int(pair[0]), float(pair[1])
        except ValueError as exc:
            raise MalformedLineError(line_no, f"bad feature token {tok!r}") from exc
        if not 0 <= idx < n_features:
            raise IndexOutOfRangeError(line_no, f"feature index {idx} out of range")
        if idxs and idx <= idxs[-1]:
            raise MalformedLineError(line_no, "feature indices must be strictly increasing")
        idxs.append(idx)
        vals.append(val)
    return SparseSample(feat_idx=np.array(idxs, dtype=np.int64),
                        feat_val=np.array(vals, dtype=np.float64),
                        labels=labels)


def parse_xmlc(path) -> Dataset:
    """Parse a sparse multi-label text file (optionally gzipped)."""
    with _open_text(path, "r") as handle:
        header = handle.readline()
        parts = header.split()
        if len(parts) != 3:
            raise MalformedHeaderError(f"expected 'n_samples n_features n_labels', got {header!r}")
        try:
            n_samples, n_features, n_labels = (int(p) for p in parts)
        except ValueError as exc:
            raise MalformedHeaderError(f"non-integer header {header!r}") from exc
        samples = []
        counts = np.zeros(n_labels, dtype=np.int64)
        for line_no, raw in enumerate(handle, start=2):
            line = raw.rstrip("\r\n")
            if not line and line_no - 2 >= n_samples:
                continue  # trailing blank line
            sample = _parse_line(line, line_no, n_features, n_labels)
            counts[sample.labels] += 1
            samples.append(sample)
    if len(samples) != n_samples:
        raise MalformedHeaderError(
            f"header promises {n_samples} samples, file holds {len(samples)}")
    return Dataset(samples=samples, n_features=n_features, n_labels=n_labels,
                   label_counts=counts)


def serialize_xmlc(dataset: Dataset, path) -> None:
    """Write a dataset back in canonical form (sorted labels, repr values)."""
    with _open_text(path, "w") as handle:
        handle.write(f"{len(dataset.samples)} {dataset.n_features} {dataset.n_labels}\n")
        for s in dataset.samples:
            label_part = ",".join(str(int(l)) for l in s.labels)
            feat_part = " ".join(f"{int(i)}:{v!r}" for i, v in zip(s.feat_idx, s.feat_val))
            handle.write(f"{label_part} {feat_part}".rstrip() + "\n"
                         if label_part or feat_part else "\n")


def _subset(dataset: Dataset, index: np.ndarray) -> Dataset:
    samples = [dataset.samples[int(i)] for i in index]
    counts = np.zeros(dataset.n_labels, dtype=np.int64)
    for s in samples:
        counts[s.labels] += 1
    return Dataset(samples=samples, n_features=dataset.n_features,
                   n_labels=dataset.n_labels, label_counts=counts)


def split(dataset: Dataset, valid_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seed-deterministic shuffle split into (train, valid)."""
    if not 0.0 <= valid_fraction < 1.0:
        raise ValueError("valid_fraction must lie in [0, 1)")
    order = np.random.default_rng(seed).permutation(len(dataset.samples))
    n_valid = int(len(dataset.samples) * valid_fraction)
    return _subset(dataset, order[n_valid:]), _subset(dataset, order[:n_valid])


def to_partitioned_preference(sample: SparseSample, n_labels: int):
    """Two-block preference: relevant labels above everything else."""
    from .core import PartitionedPreference

    if sample.labels.size == 0:
        raise EmptyLabelSetError("sample has no relevant labels")
    if sample.labels.size >= n_labels:
        raise FullLabelSetError("every label is relevant; no complement block")
    return PartitionedPreference.from_top_blocks([sample.labels], n_labels)


def to_train_examples(dataset: Dataset) -> list[TrainExample]:
    """Training rows for the LTR losses.

    Samples with empty label sets (nothing to rank above the rest) and
    samples whose labels cover the whole label space (no complement block)
    are excluded.
    """
    out = []
    for s in dataset.samples:
        if 0 < s.labels.size < dataset.n_labels:
            out.append(TrainExample(n_items=dataset.n_labels, feat_idx=s.feat_idx,
                                    feat_val=s.feat_val, labels=s.labels))
    return out
