"""Labeled DNA sequence datasets: parsing, one-hot encoding and synthesis."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence as Seq

import numpy as np

ALPHABET = "ACGT"
VALID_BASES = frozenset("ACGTN")
BASE_INDEX = {b: i for i, b in enumerate(ALPHABET)}


class DataError(ValueError):
    """Malformed or inconsistent sequence data."""


@dataclass(frozen=True)
class Sequence:
    id: str
    bases: str
    label: int

    def __post_init__(self):
        if not self.bases:
            raise DataError(f"sequence {self.id!r} is empty")
        for ch in self.bases:
            if ch not in VALID_BASES:
                raise DataError(f"invalid character {ch!r} in sequence {self.id!r}")
        if self.label not in (0, 1):
            raise DataError(f"invalid label {self.label!r} for sequence {self.id!r}")


@dataclass(frozen=True)
class Dataset:
    sequences: tuple[Sequence, ...]

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        lengths = {len(s.bases) for s in self.sequences}
        if len(lengths) > 1:
            raise DataError(f"inconsistent sequence length: {sorted(lengths)}")

    @property
    def length(self) -> int:
        return len(self.sequences[0].bases) if self.sequences else 0

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.sequences], dtype=int)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def positives(self) -> list[Sequence]:
        return [s for s in self.sequences if s.label == 1]

    def require_both_classes(self) -> None:
        labels = set(self.labels.tolist())
        if labels != {0, 1}:
            raise DataError(f"dataset needs both labels for training, found {sorted(labels)}")

    def one_hot(self) -> np.ndarray:
        """Stacked ``[N, L, 4]`` encoding."""
        if not self.sequences:
            return np.zeros((0, 0, 4))
        return np.stack([encode_one_hot(s) for s in self.sequences])


def parse_dataset(path: str | Path) -> Dataset:
    """Read ``id<TAB>bases<TAB>label`` lines (no header)."""
    seqs: list[Sequence] = []
    length = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataError(f"malformed line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
            sid, bases, label = fields
            for ch in bases:
                if ch not in VALID_BASES:
                    raise DataError(f"invalid character {ch!r} at line {lineno}")
            if label not in ("0", "1"):
                raise DataError(f"invalid label {label!r} at line {lineno}")
            if not bases:
                raise DataError(f"empty sequence at line {lineno}")
            if length is None:
                length = len(bases)
            elif len(bases) != length:
                raise DataError(
                    f"inconsistent sequence length at line {lineno}: {len(bases)} != {length}")
            seqs.append(Sequence(sid, bases, int(label)))
    return Dataset(seqs)


def write_dataset(ds: Dataset | Iterable[Sequence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in ds:
            fh.write(f"{s.id}\t{s.bases}\t{s.label}\n")


def encode_one_hot(seq: Sequence | str) -> np.ndarray:
    """``L x 4`` matrix in A,C,G,T order; ``N`` becomes a uniform 0.25 row."""
    bases = seq.bases if isinstance(seq, Sequence) else seq
    out = np.zeros((len(bases), 4))
    for i, ch in enumerate(bases):
        j = BASE_INDEX.get(ch)
        if j is None:
            if ch != "N":
                raise DataError(f"invalid character {ch!r}")
            out[i] = 0.25
        else:
            out[i, j] = 1.0
    return out


def decode_argmax(matrix: np.ndarray) -> str:
    """Per-row argmax back to a base string (first base wins ties)."""
    return "".join(ALPHABET[j] for j in np.asarray(matrix).argmax(axis=1))


def generate_synthetic(n_pos: int, n_neg: int, length: int, planted: np.ndarray,
                       seed: int) -> Dataset:
    """Uniform-background sequences; positives carry one sampled motif site.

    ``planted`` is a ``W x 4`` probability matrix.  Each positive gets one
    occurrence sampled column-by-column and written at a uniform offset.
    """
    planted = np.asarray(planted, dtype=float)
    width = planted.shape[0]
    if width > length:
        raise DataError(f"planted motif width {width} exceeds sequence length {length}")
    if n_pos < 1 or n_neg < 1:
        raise DataError("n_pos and n_neg must both be >= 1")
    rng = np.random.default_rng(seed)
    alphabet = np.array(list(ALPHABET))
    cum = np.cumsum(planted / planted.sum(axis=1, keepdims=True), axis=1)
    seqs = []
    for i in range(n_pos):
        bg = rng.integers(0, 4, size=length)
        site = (rng.random((width, 1)) < cum).argmax(axis=1)
        off = int(rng.integers(0, length - width + 1))
        bg[off:off + width] = site
        seqs.append(Sequence(f"pos{i}", "".join(alphabet[bg]), 1))
    for i in range(n_neg):
        bg = rng.integers(0, 4, size=length)
        seqs.append(Sequence(f"neg{i}", "".join(alphabet[bg]), 0))
    return Dataset(seqs)


def shuffle_negatives(pos: Seq[Sequence], seed: int) -> list[Sequence]:
    """One composition-preserving shuffled negative per positive."""
    if not pos:
        raise DataError("shuffle_negatives needs at least one positive")
    rng = np.random.default_rng(seed)
    out = []
    for s in pos:
        chars = np.array(list(s.bases))
        out.append(Sequence(f"{s.id}_shuf", "".join(rng.permutation(chars)), 0))
    return out


def split(ds: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Label-stratified split into (train, held-out)."""
    if len(ds) < 2:
        raise DataError("split needs at least 2 sequences")
    if not 0.0 < train_frac < 1.0:
        raise DataError(f"train_frac must be in (0, 1), got {train_frac}")
    rng = np.random.default_rng(seed)
    labels = ds.labels
    train_idx, test_idx = [], []
    for lab in (0, 1):
        idx = np.flatnonzero(labels == lab)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        n_train = int(round(train_frac * idx.size))
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())
    if not train_idx or not test_idx:
        raise DataError(f"train_frac {train_frac} leaves an empty partition for {len(ds)} sequences")
    seqs = ds.sequences
    return (Dataset([seqs[i] for i in sorted(train_idx)]),
            Dataset([seqs[i] for i in sorted(test_idx)]))


def consensus_pwm(consensus: str) -> np.ndarray:
    """Deterministic ``W x 4`` matrix whose columns spell ``consensus``."""
    return encode_one_hot(consensus.upper())
