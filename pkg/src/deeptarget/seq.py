"""RNA alphabet handling, FASTA ingestion, and numeric sequence encodings.

Sequences are stored 5'->3' over the alphabet {A, C, G, U}. A fifth PAD
code exists only for length alignment of already-parsed sequences; it never
occurs inside a biological sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable

import numpy as np

from .errors import FastaError, SequenceError, ShapeError


class Nucleotide(IntEnum):
    """Fixed integer codes for the RNA alphabet plus the PAD sentinel."""

    A = 0
    C = 1
    G = 2
    U = 3
    PAD = 4


ALPHABET = "ACGU"
PAD_INDEX = int(Nucleotide.PAD)
ALPHABET_SIZE = 5  # four bases + PAD

_BASE_TO_INDEX = {b: i for i, b in enumerate(ALPHABET)}
_COMPLEMENT = {"A": "U", "U": "A", "C": "G", "G": "C"}

# Watson-Crick pairs only; G-U wobble is deliberately excluded here.
_WC_PAIRS = {("A", "U"), ("U", "A"), ("C", "G"), ("G", "C")}


@dataclass(frozen=True)
class RnaSequence:
    """An identified RNA sequence, stored 5'->3'."""

    id: str
    bases: str

    def __post_init__(self):
        if len(self.bases) < 1:
            raise SequenceError(f"sequence {self.id!r} is empty")
        bad = set(self.bases) - set(ALPHABET)
        if bad:
            raise SequenceError(
                f"sequence {self.id!r} contains non-RNA characters {sorted(bad)}"
            )

    def __len__(self) -> int:
        return len(self.bases)

    def indices(self) -> np.ndarray:
        """Integer codes of the bases, shape (n,), dtype int64."""
        return np.fromiter((_BASE_TO_INDEX[b] for b in self.bases), dtype=np.int64)

    def window(self, start: int, length: int, id: str | None = None) -> "RnaSequence":
        """Slice [start, start+length) as a new sequence."""
        if start < 0 or start + length > len(self.bases):
            raise SequenceError(
                f"window [{start}, {start + length}) leaves sequence {self.id!r} "
                f"of length {len(self.bases)}"
            )
        return RnaSequence(id if id is not None else self.id,
                           self.bases[start:start + length])


def wc_pair(a: str, b: str) -> bool:
    """True iff a and b form a Watson-Crick pair (A-U or C-G), symmetric."""
    if a not in ALPHABET or b not in ALPHABET:
        raise SequenceError(f"wc_pair requires biological bases, got {a!r}, {b!r}")
    return (a, b) in _WC_PAIRS


def complement(base: str) -> str:
    """Watson-Crick complement of a single base."""
    try:
        return _COMPLEMENT[base]
    except KeyError:
        raise SequenceError(f"no complement for {base!r}") from None


def reverse_complement(bases: str) -> str:
    """Reverse complement of a 5'->3' base string (result is again 5'->3')."""
    return "".join(_COMPLEMENT[b] for b in reversed(bases))


@dataclass
class FastaParse:
    """Accepted records plus the count of records rejected for containing N."""

    records: list[RnaSequence] = field(default_factory=list)
    rejected: int = 0


def parse_fasta(text: str) -> FastaParse:
    """Parse FASTA text into RNA sequences.

    Headers start with '>'; the id is the header up to the first whitespace.
    Sequence lines are uppercased and T is normalized to U. Records holding
    the ambiguity code N are dropped and counted in ``rejected``. Any other
    non-ACGUTN character raises FastaError, as do sequence data before the
    first header and records with no sequence at all.
    """
    records: list[RnaSequence] = []
    rejected = 0
    header: str | None = None
    chunks: list[str] = []

    def flush():
        nonlocal rejected
        if header is None:
            return
        seq = "".join(chunks)
        if not seq:
            raise FastaError(f"record {header!r} has an empty sequence")
        if "N" in seq:
            rejected += 1
            return
        records.append(RnaSequence(header, seq))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            flush()
            header = line[1:].split()[0] if line[1:].split() else ""
            if not header:
                raise FastaError(f"line {lineno}: header with no identifier")
            chunks = []
            continue
        if header is None:
            raise FastaError(f"line {lineno}: sequence data before any header")
        upper = line.upper().replace("T", "U")
        bad = set(upper) - set(ALPHABET) - {"N"}
        if bad:
            raise FastaError(
                f"line {lineno}: illegal characters {sorted(bad)} in record {header!r}"
            )
        chunks.append(upper)
    flush()
    return FastaParse(records, rejected)


def write_fasta(records: Iterable[RnaSequence], width: int = 60) -> str:
    """Serialize records to FASTA with fixed-width line wrapping."""
    lines: list[str] = []
    for rec in records:
        lines.append(f">{rec.id}")
        for i in range(0, len(rec.bases), width):
            lines.append(rec.bases[i:i + width])
    return "\n".join(lines) + "\n" if lines else ""


def one_hot_encode(seq: RnaSequence) -> np.ndarray:
    """Binary indicator rows, shape (n, 4); exactly one 1 per row."""
    idx = seq.indices()
    out = np.zeros((len(idx), 4), dtype=np.float64)
    out[np.arange(len(idx)), idx] = 1.0
    return out


def pad_to(seq: RnaSequence, length: int) -> np.ndarray:
    """Base indices right-padded with PAD up to ``length``."""
    n = len(seq)
    if n > length:
        raise SequenceError(
            f"sequence {seq.id!r} of length {n} does not fit in window {length}"
        )
    out = np.full(length, PAD_INDEX, dtype=np.int64)
    out[:n] = seq.indices()
    return out


class EmbeddingTable:
    """Trainable dense 4-dim vectors, one row per alphabet code (incl. PAD).

    ``grad`` mirrors ``weights``; accumulation is a no-op while the table is
    frozen, so a frozen table never drifts during optimization.
    """

    def __init__(self, weights: np.ndarray, trainable: bool = True):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (ALPHABET_SIZE, 4):
            raise ShapeError(
                f"embedding table must be {ALPHABET_SIZE}x4, got {weights.shape}"
            )
        self.weights = weights
        self.grad = np.zeros_like(weights)
        self.trainable = trainable

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 0.5) -> "EmbeddingTable":
        """Rows drawn i.i.d. uniform on [-scale, scale]."""
        return cls(rng.uniform(-scale, scale, size=(ALPHABET_SIZE, 4)))

    @classmethod
    def one_hot(cls) -> "EmbeddingTable":
        """Frozen identity table: bases map to indicator vectors, PAD to zeros."""
        w = np.zeros((ALPHABET_SIZE, 4))
        w[:4] = np.eye(4)
        return cls(w, trainable=False)

    def accumulate_grad(self, indices: np.ndarray, upstream: np.ndarray) -> None:
        """Add upstream gradients into the rows selected by ``indices``."""
        if not self.trainable:
            return
        np.add.at(self.grad, np.asarray(indices).ravel(),
                  upstream.reshape(-1, self.weights.shape[1]))

    def zero_grad(self) -> None:
        self.grad[:] = 0.0


def embed(indices: np.ndarray, table: EmbeddingTable) -> np.ndarray:
    """Dense encoding: row t of the output is table.weights[indices[t]]."""
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= ALPHABET_SIZE):
        raise SequenceError(f"embedding index out of range 0..{ALPHABET_SIZE - 1}")
    return table.weights[idx]
