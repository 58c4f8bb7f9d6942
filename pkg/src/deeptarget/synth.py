"""Synthetic benchmark data with planted complementary binding sites.

Positive pairs complement the miRNA across the whole window (seed plus
extended 3' pairing); negative pairs carry a shuffled (mock) miRNA whose
window complements only its seed, i.e. a decoy that still seed-matches and
aligns, but lacks the extended interaction pattern. Both classes share the
same miRNA base composition, so only the pairing structure separates them.
"""

from __future__ import annotations

import numpy as np

from .errors import MockGenerationError
from .mock import MockConfig, SeedIndex, generate_mock
from .scan import PairExample, build_site_dataset, scan_cts
from .seq import ALPHABET, RnaSequence, complement


def random_bases(rng: np.random.Generator, n: int) -> str:
    return "".join(ALPHABET[i] for i in rng.integers(0, 4, size=n))


def planted_window(rng: np.random.Generator, mirna: RnaSequence, k: int,
                   pair_depth: int) -> str:
    """A length-k window whose 3' end pairs with miRNA positions 2..pair_depth+1
    and presents an A opposite position 1 (an 8mer site when pair_depth >= 7)."""
    win = list(random_bases(rng, k))
    win[k - 1] = "A"
    for i in range(2, 2 + pair_depth):
        if i > len(mirna) or i > k:
            break
        win[k - i] = complement(mirna.bases[i - 1])
    return "".join(win)


def _site_for(mirna: RnaSequence, gene: RnaSequence, k: int):
    sites = [s for s in scan_cts(mirna, gene, k) if s.start == 0]
    return sites[0] if sites else None


def make_pair_benchmark(n_pos: int, n_neg: int, k: int = 30, seed: int = 0,
                        mirna_len: int = 22) -> list[PairExample]:
    """Planted-complement positives and seed-only mock negatives, shuffled."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    positives: list[PairExample] = []
    reals: list[RnaSequence] = []
    while len(positives) < n_pos:
        j = len(positives)
        mir = RnaSequence(f"mir{j:05d}", random_bases(rng, mirna_len))
        gene = RnaSequence(f"gene{j:05d}",
                           planted_window(rng, mir, k, pair_depth=mirna_len - 1))
        cts = _site_for(mir, gene, k)
        if cts is None:
            continue
        positives.append(PairExample(mir, cts, 1, "REAL"))
        reals.append(mir)

    index = SeedIndex.from_mirnas(reals)
    cfg = MockConfig(max_retries=200, rng_seed=seed)
    negatives: list[PairExample] = []
    attempt = 0
    while len(negatives) < n_neg:
        base = reals[attempt % len(reals)]
        sub = np.random.default_rng(np.random.SeedSequence((seed, 2, attempt)))
        attempt += 1
        try:
            mockseq = generate_mock(base, index, cfg, sub)
        except MockGenerationError:
            continue
        mock = RnaSequence(f"{mockseq.id}{len(negatives):05d}", mockseq.bases)
        gene = RnaSequence(f"decoy{len(negatives):05d}",
                           planted_window(sub, mock, k, pair_depth=7))
        cts = _site_for(mock, gene, k)
        if cts is None:
            continue
        negatives.append(PairExample(mock, cts, 0, "MOCK"))
    return build_site_dataset(positives, negatives, seed=seed)


def make_gene_fixture(n_genes: int, k: int = 30, seed: int = 0, flank: int = 12,
                      mirna_len: int = 22, with_empty: int = 0):
    """FASTA-ready miRNAs and genes plus a labeled pairing list.

    Each of the first n_genes genes embeds one planted site between random
    flanks; ``with_empty`` extra genes carry no site for their miRNA (their
    pairs are labeled 0 and exercise the dropped-pair accounting).
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 3)))
    mirnas: list[RnaSequence] = []
    genes: list[RnaSequence] = []
    pairings: list[tuple[str, str, int]] = []
    for j in range(n_genes):
        mir = RnaSequence(f"mir{j:03d}", random_bases(rng, mirna_len))
        site = planted_window(rng, mir, k, pair_depth=mirna_len - 1)
        gene = RnaSequence(f"gene{j:03d}",
                           random_bases(rng, flank) + site + random_bases(rng, flank))
        mirnas.append(mir)
        genes.append(gene)
        pairings.append((mir.id, gene.id, 1))
    for j in range(with_empty):
        # A/C-only miRNA tail against a G-free gene cannot seed-match: the
        # seed needs G or U partners somewhere, so an all-A gene stays empty.
        mir = RnaSequence(f"mirx{j:03d}", "U" + "C" * (mirna_len - 1))
        gene = RnaSequence(f"genex{j:03d}", "A" * (2 * flank + k))
        mirnas.append(mir)
        genes.append(gene)
        pairings.append((mir.id, gene.id, 0))
    return mirnas, genes, pairings
