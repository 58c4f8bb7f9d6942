"""Command-line pipeline surface: preprocess, mock, train, eval, predict, activations.

Configuration comes from an optional JSON file; command-line flags override
it. Every command honors --seed, writes outputs only under the output
directory, and finishes by writing a run manifest listing inputs and
outputs with their content digests.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (
    CheckpointError,
    DatasetError,
    DeepTargetError,
    FastaError,
    MockGenerationError,
    NumericError,
    SequenceError,
)
from .evaluate import CrossValidationReport, cross_validate
from .mock import MockConfig, SeedIndex, build_negative_pairs
from .model import (
    ArchitectureSpec,
    TrainConfig,
    capture_activations,
    encode_pair_arrays,
    interaction_widths_for_depth,
    predict_batch,
    predict_gene,
    train_pipeline,
)
from .scan import PairExample, read_pairs_tsv, scan_cts, write_pairs_tsv
from .seq import RnaSequence, parse_fasta


class UsageError(DeepTargetError):
    """Bad command line or inconsistent configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with status 2
        raise UsageError(message)


@dataclass
class PipelineConfig:
    """Paths plus all knobs of the pipeline; defaults match the reference
    setup (GRU, [(4-30-4) || (4-30-4)]-(60-30)-2, batch 50, epochs 50/400,
    dropout 0.1)."""

    mirna_fasta: str = "mirnas.fa"
    mrna_fasta: str = "mrnas.fa"
    pairs_tsv: str = "pairs.tsv"
    out_dir: str = "out"
    sites_tsv: str = ""          # defaults to <out>/sites.tsv
    mock_tsv: str = ""           # defaults to <out>/mock.tsv
    checkpoint: str = ""         # defaults to <out>/model.ckpt
    k: int = 30
    cell: str = "GRU"
    ae_hidden: int = 30
    layers: int = 2
    bidirectional: bool = False
    input_encoding: str = "dense"
    batch_size: int = 50
    pretrain_epochs: int = 50
    finetune_epochs: int = 400
    dropout: float = 0.1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    mock_max_retries: int = 100
    mock_score_threshold: float = 0.0
    folds: int = 10
    workers: int = 1
    seed: int = 0

    @classmethod
    def load(cls, path: str | None) -> "PipelineConfig":
        if path is None:
            return cls()
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def apply_flags(self, args: argparse.Namespace) -> "PipelineConfig":
        cfg = self
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if args.cell is not None:
            cfg = replace(cfg, cell=args.cell.upper())
        if args.layers is not None:
            cfg = replace(cfg, layers=args.layers)
        if args.bidirectional:
            cfg = replace(cfg, bidirectional=True)
        if args.dropout is not None:
            cfg = replace(cfg, dropout=args.dropout)
        if args.k is not None:
            cfg = replace(cfg, k=args.k)
        if args.folds is not None:
            cfg = replace(cfg, folds=args.folds)
        return cfg

    # resolved artifact paths
    def path_sites(self) -> Path:
        return Path(self.sites_tsv) if self.sites_tsv else Path(self.out_dir) / "sites.tsv"

    def path_mock(self) -> Path:
        return Path(self.mock_tsv) if self.mock_tsv else Path(self.out_dir) / "mock.tsv"

    def path_checkpoint(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else Path(self.out_dir) / "model.ckpt"

    def architecture(self) -> ArchitectureSpec:
        return ArchitectureSpec(
            ae_hidden=self.ae_hidden,
            interaction_widths=interaction_widths_for_depth(self.layers, self.ae_hidden),
            direction="BI" if self.bidirectional else "UNI",
            cell=self.cell,
            seq_len=self.k,
            input_encoding=self.input_encoding,
        )

    def training(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            pretrain_epochs=self.pretrain_epochs,
            finetune_epochs=self.finetune_epochs,
            dropout=self.dropout,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            clip_norm=self.clip_norm,
            seed=self.seed,
        )

    def mock_config(self) -> MockConfig:
        return MockConfig(
            max_retries=self.mock_max_retries,
            score_threshold=self.mock_score_threshold,
            rng_seed=self.seed,
        )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    tool_version: str = __version__
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def add_input(self, path: Path) -> None:
        self.inputs[str(path)] = _sha256(path)

    def add_output(self, path: Path) -> None:
        self.outputs[str(path)] = _sha256(path)

    def write(self, out_dir: Path) -> Path:
        out = out_dir / f"manifest-{self.command}.json"
        out.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        return out


class _Stopwatch:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest = manifest
        self.stage = stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.stage] = round(time.perf_counter() - self.t0, 3)
        return False


def _read_fasta_file(path: Path) -> dict[str, RnaSequence]:
    parsed = parse_fasta(path.read_text(encoding="utf-8"))
    if parsed.rejected:
        print(f"warning: {parsed.rejected} record(s) with N rejected in {path}",
              file=sys.stderr)
    return {rec.id: rec for rec in parsed.records}


def load_pairings(text: str, require_label: bool = True) -> list[tuple[str, str, int]]:
    """Parse the pairing list TSV: mirna_id, mrna_id[, label]."""
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise DatasetError("pairing file is empty")
    header = lines[0].split("\t")
    if header[:2] != ["mirna_id", "mrna_id"]:
        raise DatasetError("pairing file must start with: mirna_id<TAB>mrna_id[<TAB>label]")
    has_label = len(header) >= 3 and header[2] == "label"
    if require_label and not has_label:
        raise DatasetError("pairing file needs a label column for this command")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if len(cols) < 2:
            raise DatasetError(f"pairing line {lineno}: expected at least 2 columns")
        label = int(cols[2]) if has_label and len(cols) > 2 else 0
        if label not in (0, 1):
            raise DatasetError(f"pairing line {lineno}: label must be 0/1")
        out.append((cols[0], cols[1], label))
    return out


# --- commands -----------------------------------------------------------------


def cmd_preprocess(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("preprocess", cfg.seed, asdict(cfg))
    mirna_path, mrna_path, pairs_path = (Path(cfg.mirna_fasta), Path(cfg.mrna_fasta),
                                         Path(cfg.pairs_tsv))
    for p in (mirna_path, mrna_path, pairs_path):
        if not p.exists():
            raise DatasetError(f"input file not found: {p}")
        manifest.add_input(p)
    with _Stopwatch(manifest, "scan"):
        mirnas = _read_fasta_file(mirna_path)
        mrnas = _read_fasta_file(mrna_path)
        pairings = load_pairings(pairs_path.read_text(encoding="utf-8"))
        examples: list[PairExample] = []
        retained = dropped = 0
        for mirna_id, mrna_id, label in pairings:
            if mirna_id not in mirnas:
                raise DatasetError(f"unresolvable miRNA id {mirna_id!r}")
            if mrna_id not in mrnas:
                raise DatasetError(f"unresolvable mRNA id {mrna_id!r}")
            sites = scan_cts(mirnas[mirna_id], mrnas[mrna_id], cfg.k)
            if not sites:
                dropped += 1
                continue
            retained += 1
            for cts in sites:
                examples.append(PairExample(mirnas[mirna_id], cts, label, "REAL"))
    if not examples:
        raise DatasetError("zero candidate target sites found across all pairs")
    sites_path = cfg.path_sites()
    sites_path.parent.mkdir(parents=True, exist_ok=True)
    with _Stopwatch(manifest, "write"):
        sites_path.write_text(write_pairs_tsv(examples), encoding="utf-8")
    manifest.add_output(sites_path)
    manifest.write(out_dir)
    print(f"{retained} retained, {dropped} dropped")
    print(f"{len(examples)} site records -> {sites_path}")
    return 0


def cmd_mock(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("mock", cfg.seed, asdict(cfg))
    sites_path = cfg.path_sites()
    if not sites_path.exists():
        raise DatasetError(f"site dataset not found: {sites_path} (run preprocess first)")
    manifest.add_input(sites_path)
    with _Stopwatch(manifest, "mock"):
        examples = read_pairs_tsv(sites_path.read_text(encoding="utf-8"))
        positives = [ex for ex in examples if ex.label == 1]
        if not positives:
            raise DatasetError("no positive examples to derive mocks from")
        index = SeedIndex.from_mirnas([ex.mirna for ex in positives])
        result = build_negative_pairs(positives, index, cfg.mock_config())
    mock_path = cfg.path_mock()
    mock_path.parent.mkdir(parents=True, exist_ok=True)
    mock_path.write_text(write_pairs_tsv(result.examples), encoding="utf-8")
    manifest.add_output(mock_path)
    manifest.write(out_dir)
    print(f"{len(result.examples)} negatives emitted "
          f"({result.shuffle_failures} shuffle failures, "
          f"{result.filtered_out} filtered out)")
    if not result.examples:
        print("empty-output: no negatives survived the filters", file=sys.stderr)
        return 2
    return 0


def _load_dataset(cfg: PipelineConfig) -> list[PairExample]:
    sites_path = cfg.path_sites()
    if not sites_path.exists():
        raise DatasetError(f"site dataset not found: {sites_path}")
    examples = read_pairs_tsv(sites_path.read_text(encoding="utf-8"))
    mock_path = cfg.path_mock()
    if mock_path.exists():
        examples += read_pairs_tsv(mock_path.read_text(encoding="utf-8"))
    return examples


def cmd_train(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("train", cfg.seed, asdict(cfg))
    dataset = _load_dataset(cfg)
    manifest.add_input(cfg.path_sites())
    if cfg.path_mock().exists():
        manifest.add_input(cfg.path_mock())
    spec = cfg.architecture()
    print(spec.render())
    with _Stopwatch(manifest, "train"):
        model, history = train_pipeline(dataset, spec, cfg.training())
    ckpt_path = cfg.path_checkpoint()
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = ckpt_path.with_suffix(ckpt_path.suffix + ".tmp")
    save_checkpoint(model, tmp)
    os.replace(tmp, ckpt_path)  # never leave a partial checkpoint behind
    history_path = out_dir / "history.csv"
    with history_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["phase", "epoch", "loss"])
        for epoch, (a, b) in enumerate(zip(history.pretrain_mi, history.pretrain_m), 1):
            writer.writerow(["pretrain", epoch, f"{(a + b) / 2:.10g}"])
        for epoch, loss in enumerate(history.finetune, 1):
            writer.writerow(["finetune", epoch, f"{loss:.10g}"])
    manifest.add_output(ckpt_path)
    manifest.add_output(history_path)
    manifest.write(out_dir)
    print(f"checkpoint -> {ckpt_path}")
    print(f"history -> {history_path}")
    return 0


def _majority_stub(train: list[PairExample], fold_seed: int):
    ones = sum(ex.label for ex in train)
    constant = 1 if ones * 2 >= len(train) else 0

    def predict(test):
        return [constant] * len(test)

    return predict


def _workers(cfg: PipelineConfig) -> int:
    limit = os.environ.get("DEEPTARGET_THREADS")
    workers = cfg.workers
    if limit is not None:
        workers = min(workers, max(1, int(limit)))
    return max(1, workers)


def cmd_eval(cfg: PipelineConfig, dry_run: bool = False) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("eval", cfg.seed, asdict(cfg))
    dataset = _load_dataset(cfg)
    manifest.add_input(cfg.path_sites())
    if cfg.path_mock().exists():
        manifest.add_input(cfg.path_mock())
    spec = cfg.architecture()
    train_cfg = cfg.training()

    if dry_run:
        fit = _majority_stub
    else:
        def fit(train, fold_seed):
            fold_cfg = replace(train_cfg, seed=fold_seed)
            model, _ = train_pipeline(train, spec, fold_cfg)

            def predict(test):
                mi, m, _ = encode_pair_arrays(test, spec.seq_len)
                return predict_batch(model, mi, m)[1].tolist()

            return predict

    with _Stopwatch(manifest, "cross_validate"):
        report = cross_validate(dataset, cfg.folds, cfg.seed, fit,
                                workers=_workers(cfg))
    json_path = out_dir / "metrics.json"
    text_path = out_dir / "metrics.txt"
    json_path.write_text(report.to_json() + "\n", encoding="utf-8")
    text_path.write_text(report.to_text(), encoding="utf-8")
    manifest.add_output(json_path)
    manifest.add_output(text_path)
    manifest.write(out_dir)
    print(report.to_text(), end="")
    return 0


def cmd_predict(cfg: PipelineConfig) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("predict", cfg.seed, asdict(cfg))
    ckpt_path = cfg.path_checkpoint()
    if not ckpt_path.exists():
        raise DatasetError(f"checkpoint not found: {ckpt_path}")
    manifest.add_input(ckpt_path)
    model = load_checkpoint(ckpt_path)
    mirnas = _read_fasta_file(Path(cfg.mirna_fasta))
    mrnas = _read_fasta_file(Path(cfg.mrna_fasta))
    pairings = load_pairings(Path(cfg.pairs_tsv).read_text(encoding="utf-8"),
                             require_label=False)
    for p in (cfg.mirna_fasta, cfg.mrna_fasta, cfg.pairs_tsv):
        manifest.add_input(Path(p))
    rows = []
    with _Stopwatch(manifest, "predict"):
        for mirna_id, mrna_id, _ in pairings:
            if mirna_id not in mirnas:
                raise DatasetError(f"unresolvable miRNA id {mirna_id!r}")
            if mrna_id not in mrnas:
                raise DatasetError(f"unresolvable mRNA id {mrna_id!r}")
            mirna, mrna = mirnas[mirna_id], mrnas[mrna_id]
            n_sites = len(scan_cts(mirna, mrna, cfg.k))
            label = predict_gene(model, mirna, mrna, cfg.k)
            rows.append((mirna_id, mrna_id, n_sites, label))
    pred_path = out_dir / "predictions.tsv"
    with pred_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("mirna_id\tmrna_id\tn_sites\tgene_label\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")
    manifest.add_output(pred_path)
    manifest.write(out_dir)
    print(f"{len(rows)} gene predictions -> {pred_path}")
    return 0


def _write_pgm(matrix: np.ndarray, path: Path) -> None:
    """8-bit grayscale PGM; darker = higher |activation|, min-max normalized.
    A constant matrix renders all-white."""
    mag = np.abs(matrix)
    lo, hi = float(mag.min()), float(mag.max())
    if hi > lo:
        norm = (mag - lo) / (hi - lo)
    else:
        norm = np.zeros_like(mag)
    pixels = np.round(255.0 * (1.0 - norm)).astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())


def cmd_activations(cfg: PipelineConfig, pair_key: str,
                    checkpoint: str | None = None) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("activations", cfg.seed, asdict(cfg))
    ckpt_path = Path(checkpoint) if checkpoint else cfg.path_checkpoint()
    if not ckpt_path.exists():
        raise DatasetError(f"checkpoint not found: {ckpt_path}")
    manifest.add_input(ckpt_path)
    model = load_checkpoint(ckpt_path)
    dataset = _load_dataset(cfg)
    manifest.add_input(cfg.path_sites())
    matches = [ex for ex in dataset if ex.key == pair_key]
    if not matches:
        raise DatasetError(f"unknown pair id {pair_key!r} "
                           f"(expected mirna_id:mrna_id:start)")
    pair = matches[0]
    with _Stopwatch(manifest, "capture"):
        layers = capture_activations(model, pair)
    safe_key = pair_key.replace(":", "_").replace("/", "_")
    for j, matrix in enumerate(layers):
        csv_path = out_dir / f"activations-{safe_key}-layer{j}.csv"
        pgm_path = out_dir / f"activations-{safe_key}-layer{j}.pgm"
        np.savetxt(csv_path, matrix, delimiter=",", fmt="%.17g")
        _write_pgm(matrix, pgm_path)
        manifest.add_output(csv_path)
        manifest.add_output(pgm_path)
        print(f"layer {j}: {matrix.shape[0]} units x {matrix.shape[1]} positions "
              f"-> {csv_path.name}, {pgm_path.name}")
    manifest.write(out_dir)
    return 0


# --- entry point ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="deeptarget", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--cell", choices=["gru", "lstm"], help="recurrent unit")
    parser.add_argument("--layers", type=int, choices=[1, 2, 3],
                        help="interaction stack depth")
    parser.add_argument("--bidirectional", action="store_true",
                        help="bidirectional interaction layers")
    parser.add_argument("--dropout", type=float, help="dropout probability")
    parser.add_argument("--k", type=int, help="CTS window length")
    parser.add_argument("--folds", type=int, help="cross-validation folds")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", help="scan FASTA inputs into a site dataset")
    sub.add_parser("mock", help="generate mock-miRNA negatives")
    sub.add_parser("train", help="pretrain autoencoders and fine-tune the model")
    p_eval = sub.add_parser("eval", help="k-fold cross-validation metrics")
    p_eval.add_argument("--dry-run", action="store_true",
                        help="score a constant-prediction stub instead of training")
    sub.add_parser("predict", help="gene-level predictions from a checkpoint")
    p_act = sub.add_parser("activations", help="export activation heatmaps")
    p_act.add_argument("--pair", required=True,
                       help="pair id: mirna_id:mrna_id:start")
    p_act.add_argument("--checkpoint", help="checkpoint path override")
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = PipelineConfig.load(args.config).apply_flags(args)
    if args.command == "preprocess":
        return cmd_preprocess(cfg)
    if args.command == "mock":
        return cmd_mock(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "eval":
        return cmd_eval(cfg, dry_run=args.dry_run)
    if args.command == "predict":
        return cmd_predict(cfg)
    if args.command == "activations":
        return cmd_activations(cfg, args.pair, args.checkpoint)
    raise UsageError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FastaError, SequenceError, DatasetError, CheckpointError,
            MockGenerationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
