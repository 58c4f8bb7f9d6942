"""Seed-match detection and candidate target site (CTS) extraction.

Indexing convention used throughout: miRNA nucleotide i (1-based from the
5' end) pairs antiparallel with mRNA position ``anchor - (i - 1)``, so the
anchor is the mRNA position facing miRNA nucleotide 1. A CTS window of
length k is placed with its 3'-most eight positions covering
[anchor-7, anchor]; windows that would run off the 5' end are discarded.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import DatasetError
from .seq import RnaSequence, wc_pair


class SeedMatchType(Enum):
    """Canonical seed-match classes, ordered least to most specific."""

    SIXMER = "6mer"
    SEVENMER_A1 = "7mer-A1"
    SEVENMER_M8 = "7mer-m8"
    EIGHTMER = "8mer"

    def __str__(self) -> str:
        return self.value


_TYPE_BY_NAME = {t.value: t for t in SeedMatchType}


def match_type_from_name(name: str) -> SeedMatchType:
    try:
        return _TYPE_BY_NAME[name]
    except KeyError:
        raise DatasetError(f"unknown seed match type {name!r}") from None


@dataclass(frozen=True)
class CandidateTargetSite:
    """A length-k mRNA window whose 3' end carries the seed-pairing region."""

    mrna_id: str
    start: int
    k: int
    match: SeedMatchType
    window: RnaSequence

    @property
    def anchor(self) -> int:
        """mRNA position pairing with miRNA nucleotide 1 (window's 3' end)."""
        return self.start + self.k - 1


@dataclass(frozen=True)
class PairExample:
    """One labeled miRNA-CTS pair; the atomic training/evaluation record."""

    mirna: RnaSequence
    cts: CandidateTargetSite
    label: int
    provenance: str  # REAL or MOCK

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")
        if self.provenance not in ("REAL", "MOCK"):
            raise DatasetError(f"provenance must be REAL or MOCK, got {self.provenance!r}")
        if self.provenance == "MOCK" and self.label != 0:
            raise DatasetError("MOCK provenance implies label 0")

    @property
    def key(self) -> str:
        """Stable identifier used by the CLI to address single pairs."""
        return f"{self.mirna.id}:{self.cts.mrna_id}:{self.cts.start}"


def seed_match_at(mirna: RnaSequence, mrna: RnaSequence,
                  anchor: int) -> SeedMatchType | None:
    """Most specific seed-match type at ``anchor``, or None.

    Out-of-bounds pairing positions simply fail the match; they never fault.
    """
    if len(mirna) < 8:
        raise DatasetError(f"miRNA {mirna.id!r} shorter than 8 nt cannot seed-match")
    mi = mirna.bases
    m = mrna.bases
    n = len(m)

    def pairs(i: int) -> bool:
        pos = anchor - (i - 1)
        return 0 <= pos < n and wc_pair(mi[i - 1], m[pos])

    core = all(pairs(i) for i in range(2, 8))  # seed positions 2-7
    if not core:
        return None
    m8 = pairs(8)
    a1 = 0 <= anchor < n and m[anchor] == "A"
    if m8 and a1:
        return SeedMatchType.EIGHTMER
    if m8:
        return SeedMatchType.SEVENMER_M8
    if a1:
        return SeedMatchType.SEVENMER_A1
    return SeedMatchType.SIXMER


def scan_cts(mirna: RnaSequence, mrna: RnaSequence, k: int) -> list[CandidateTargetSite]:
    """All length-k candidate target sites of ``mirna`` in ``mrna``.

    One site per matching anchor; the window's 3'-most eight positions are
    [anchor-7, anchor]. Anchors too close to the mRNA 5' end for a full
    window are skipped. Output is sorted by start position.
    """
    if k < 8:
        raise DatasetError(f"window length k must be >= 8, got {k}")
    sites: list[CandidateTargetSite] = []
    if len(mrna) < k or len(mirna) < 8:
        return sites
    for anchor in range(k - 1, len(mrna)):
        match = seed_match_at(mirna, mrna, anchor)
        if match is None:
            continue
        start = anchor - k + 1
        sites.append(CandidateTargetSite(
            mrna_id=mrna.id,
            start=start,
            k=k,
            match=match,
            window=mrna.window(start, k),
        ))
    return sites


def build_site_dataset(positives: Sequence[PairExample],
                       negatives: Sequence[PairExample],
                       seed: int) -> list[PairExample]:
    """Merge labeled site records into one seeded, shuffled dataset."""
    if not positives or not negatives:
        raise DatasetError("one-class dataset: need both positive and negative examples")
    for ex in positives:
        if ex.label != 1:
            raise DatasetError(f"positive record {ex.key} carries label {ex.label}")
    for ex in negatives:
        if ex.label != 0:
            raise DatasetError(f"negative record {ex.key} carries label {ex.label}")
    merged = list(positives) + list(negatives)
    k = merged[0].cts.k
    for ex in merged:
        if ex.cts.k != k or len(ex.cts.window) != k:
            raise DatasetError(
                f"record {ex.key} has window length {len(ex.cts.window)}, expected {k}"
            )
    random.Random(seed).shuffle(merged)
    return merged


def gene_level_label(site_predictions: Sequence[int]) -> int:
    """Gene is a predicted target iff any of its sites is predicted (disjunction)."""
    if len(site_predictions) == 0:
        raise DatasetError("gene_level_label requires at least one site prediction")
    return 1 if any(p == 1 for p in site_predictions) else 0


# --- site dataset TSV -------------------------------------------------------

TSV_HEADER = "mirna_id\tmirna_seq\tmrna_id\tcts_start\tcts_seq\tmatch_type\tlabel\tprovenance"


def write_pairs_tsv(examples: Iterable[PairExample]) -> str:
    """Serialize pair examples to the tab-separated site dataset format."""
    out = io.StringIO()
    out.write(TSV_HEADER + "\n")
    for ex in examples:
        out.write("\t".join([
            ex.mirna.id,
            ex.mirna.bases,
            ex.cts.mrna_id,
            str(ex.cts.start),
            ex.cts.window.bases,
            ex.cts.match.value,
            str(ex.label),
            ex.provenance,
        ]) + "\n")
    return out.getvalue()


def read_pairs_tsv(text: str) -> list[PairExample]:
    """Parse the site dataset TSV. Repeated header lines are tolerated so
    files produced separately (e.g. positives then mocks) can be concatenated."""
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0] != TSV_HEADER:
        raise DatasetError("site dataset TSV must start with the standard header")
    examples: list[PairExample] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == TSV_HEADER:
            continue
        cols = line.split("\t")
        if len(cols) != 8:
            raise DatasetError(f"line {lineno}: expected 8 columns, got {len(cols)}")
        mirna_id, mirna_seq, mrna_id, start, cts_seq, mtype, label, prov = cols
        window = RnaSequence(mrna_id, cts_seq)
        cts = CandidateTargetSite(
            mrna_id=mrna_id,
            start=int(start),
            k=len(cts_seq),
            match=match_type_from_name(mtype),
            window=window,
        )
        examples.append(PairExample(
            mirna=RnaSequence(mirna_id, mirna_seq),
            cts=cts,
            label=int(label),
            provenance=prov,
        ))
    return examples
