"""Mock (negative) miRNA generation and decoy-pair filtering.

Mock miRNAs are Fisher-Yates shuffles of real miRNAs whose positions 2-8
seed does not collide with any real miRNA seed. Candidate negative pairs
are kept only when the mock still aligns plausibly against the target
window: a complementarity score above a configurable threshold plus at
least one remaining seed match inside the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DatasetError, MockGenerationError
from .scan import PairExample, seed_match_at
from .seq import RnaSequence, wc_pair

# Alignment scoring for complementarity between a reversed miRNA and a
# window read 5'->3'. A gap run of length g costs OPEN + (g-1)*EXTEND.
WC_SCORE = 5.0
WOBBLE_SCORE = 1.0
MISMATCH_SCORE = -4.0
GAP_OPEN = -8.0
GAP_EXTEND = -2.0


@dataclass
class MockConfig:
    max_retries: int = 100
    score_threshold: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_retries < 1:
            raise DatasetError("max_retries must be >= 1")
        if not np.isfinite(self.score_threshold):
            raise DatasetError("score_threshold must be finite")


class SeedIndex:
    """Set of positions 2-8 seed 7-mers of all real mature miRNAs."""

    def __init__(self, seeds: Iterable[str] = ()):
        self._seeds = set(seeds)

    @classmethod
    def from_mirnas(cls, mirnas: Iterable[RnaSequence]) -> "SeedIndex":
        index = cls()
        for m in mirnas:
            index.add(m)
        return index

    @staticmethod
    def seed_of(mirna: RnaSequence) -> str:
        if len(mirna) < 8:
            raise DatasetError(f"miRNA {mirna.id!r} too short for a 2-8 seed")
        return mirna.bases[1:8]

    def add(self, mirna: RnaSequence) -> None:
        self._seeds.add(self.seed_of(mirna))

    def __contains__(self, seed: str) -> bool:
        return seed in self._seeds

    def __len__(self) -> int:
        return len(self._seeds)


def fisher_yates(seq: RnaSequence, rng: np.random.Generator) -> RnaSequence:
    """Uniformly random permutation of the bases (Fisher-Yates, top-down)."""
    bases = list(seq.bases)
    for i in range(len(bases) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        bases[i], bases[j] = bases[j], bases[i]
    return RnaSequence(seq.id, "".join(bases))


def generate_mock(real: RnaSequence, index: SeedIndex, cfg: MockConfig,
                  rng: np.random.Generator) -> RnaSequence:
    """Shuffle ``real`` until the shuffle's 2-8 seed misses the index.

    Raises MockGenerationError once cfg.max_retries shuffles have all
    collided (e.g. a homopolymer, whose every permutation shares one seed).
    """
    if len(real) < 8:
        raise DatasetError(f"miRNA {real.id!r} too short to mock")
    for _ in range(cfg.max_retries):
        mock = fisher_yates(real, rng)
        if SeedIndex.seed_of(mock) not in index:
            return RnaSequence(f"{real.id}.mock", mock.bases)
    raise MockGenerationError(
        f"no seed-free permutation of {real.id!r} within {cfg.max_retries} retries"
    )


def _pair_score(a: str, b: str) -> float:
    if wc_pair(a, b):
        return WC_SCORE
    if {a, b} == {"G", "U"}:
        return WOBBLE_SCORE
    return MISMATCH_SCORE


def complementarity_score(mirna: RnaSequence, window: RnaSequence) -> float:
    """Best local alignment score of reverse(mirna) against the window.

    Affine-gap Smith-Waterman (Gotoh three-state recurrence) over the
    complementarity scoring above; the local floor keeps the score >= 0.
    A run of g gap positions costs GAP_OPEN + (g-1)*GAP_EXTEND.
    """
    a = mirna.bases[::-1]
    b = window.bases
    n, m = len(a), len(b)
    neg = -1e30
    # Row arrays indexed 0..m; column 0 is the "nothing of b consumed"
    # boundary. mat = a[i] aligned to b[j]; del_a = gap in b consuming a;
    # ins_b = gap in a consuming b.
    prev_mat = np.full(m + 1, neg)
    prev_del = np.full(m + 1, neg)
    prev_ins = np.full(m + 1, neg)
    offsets = np.arange(m) * GAP_EXTEND
    best = 0.0
    for i in range(1, n + 1):
        srow = np.fromiter((_pair_score(a[i - 1], bj) for bj in b),
                           dtype=np.float64, count=m)
        diag = np.maximum.reduce(
            [prev_mat[:-1], prev_del[:-1], prev_ins[:-1], np.zeros(m)])
        mat = np.concatenate(([neg], diag + srow))
        del_a = np.concatenate(
            ([neg], np.maximum(prev_mat[1:] + GAP_OPEN, prev_del[1:] + GAP_EXTEND)))
        # ins_b chains within the row only through mat entries; unroll the
        # left-to-right recurrence as a running maximum
        run = np.maximum.accumulate(mat[:-1] - offsets)
        ins_b = np.concatenate(([neg], GAP_OPEN + offsets + run))
        best = max(best, float(mat[1:].max()))
        prev_mat, prev_del, prev_ins = mat, del_a, ins_b
    return max(best, 0.0)


@dataclass
class MockResult:
    """Outcome of negative-pair construction, with skip accounting."""

    examples: list[PairExample] = field(default_factory=list)
    shuffle_failures: int = 0
    filtered_out: int = 0


def build_negative_pairs(positives: Sequence[PairExample], index: SeedIndex,
                         cfg: MockConfig) -> MockResult:
    """Replace each positive's miRNA with a mock and keep plausible decoys.

    A decoy survives when its complementarity score against the original
    window reaches cfg.score_threshold and it still seed-matches somewhere
    in the window. Mock-generation failures are counted, never fatal.
    Each positive uses an rng stream derived from (rng_seed, ordinal), so
    output is deterministic and order-independent of any parallel split.
    """
    for ex in positives:
        if ex.label != 1:
            raise DatasetError(f"build_negative_pairs expects positives, got label {ex.label}")
    result = MockResult()
    for ordinal, ex in enumerate(positives):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.rng_seed, ordinal)))
        try:
            mock = generate_mock(ex.mirna, index, cfg, rng)
        except MockGenerationError:
            result.shuffle_failures += 1
            continue
        window = ex.cts.window
        if complementarity_score(mock, window) < cfg.score_threshold:
            result.filtered_out += 1
            continue
        if not _has_seed_match(mock, window):
            result.filtered_out += 1
            continue
        result.examples.append(PairExample(
            mirna=mock, cts=ex.cts, label=0, provenance="MOCK",
        ))
    return result


def _has_seed_match(mirna: RnaSequence, window: RnaSequence) -> bool:
    return any(seed_match_at(mirna, window, anchor) is not None
               for anchor in range(len(window)))
