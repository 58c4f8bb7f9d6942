"""Architecture assembly, two-stage training, prediction, and activation capture.

Stage one pretrains two sequence autoencoders (one per RNA kind) on the
reconstruction loss; stage two bypasses the decoders, concatenates the two
encoders' per-position representations, and fine-tunes the stacked
interaction RNN plus the two-unit output layer on the classification loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DatasetError, NumericError, ShapeError
from .nn import (
    AdamState,
    GruCell,
    LstmCell,
    Mode,
    ParamStore,
    adam_step,
    bce_loss,
    clip_global_norm,
    dropout,
    glorot_uniform,
    mse_loss,
    output_probability,
    output_probability_vjp,
)
from .scan import CandidateTargetSite, PairExample, gene_level_label, scan_cts
from .seq import EmbeddingTable, RnaSequence, pad_to

_CELLS = {"GRU": GruCell, "LSTM": LstmCell}
_GATES = {"GRU": 3, "LSTM": 4}


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer widths and structural choices of the full network."""

    embed_dim: int = 4
    ae_hidden: int = 30
    interaction_widths: tuple[int, ...] = (60, 30)
    direction: str = "UNI"          # UNI or BI
    cell: str = "GRU"               # GRU or LSTM
    seq_len: int = 30               # L; equals the CTS window length k
    input_encoding: str = "dense"   # dense (trainable) or onehot (frozen)

    def __post_init__(self):
        object.__setattr__(self, "interaction_widths",
                           tuple(int(w) for w in self.interaction_widths))
        if self.embed_dim != 4:
            raise ShapeError("embedding dimension is fixed at 4")
        if self.cell not in _CELLS:
            raise ShapeError(f"cell must be GRU or LSTM, got {self.cell!r}")
        if self.direction not in ("UNI", "BI"):
            raise ShapeError(f"direction must be UNI or BI, got {self.direction!r}")
        if self.input_encoding not in ("dense", "onehot"):
            raise ShapeError("input_encoding must be dense or onehot")
        if not 1 <= len(self.interaction_widths) <= 3:
            raise ShapeError("interaction stack depth must be 1, 2, or 3")
        if self.interaction_widths[0] != 2 * self.ae_hidden:
            raise ShapeError(
                f"first interaction width {self.interaction_widths[0]} must equal "
                f"twice the encoder width ({2 * self.ae_hidden})")
        if self.seq_len < 1 or self.ae_hidden < 1:
            raise ShapeError("widths and sequence length must be positive")

    @property
    def depth(self) -> int:
        return len(self.interaction_widths)

    def render(self) -> str:
        """Architecture string, e.g. ``[(4-30-4) || (4-30-4)]-(60-30)-2``."""
        ae = f"({self.embed_dim}-{self.ae_hidden}-{self.embed_dim})"
        stack = "-".join(str(w) for w in self.interaction_widths)
        return f"[{ae} || {ae}]-({stack})-2"

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "ae_hidden": self.ae_hidden,
            "interaction_widths": list(self.interaction_widths),
            "direction": self.direction,
            "cell": self.cell,
            "seq_len": self.seq_len,
            "input_encoding": self.input_encoding,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(
            embed_dim=int(d["embed_dim"]),
            ae_hidden=int(d["ae_hidden"]),
            interaction_widths=tuple(d["interaction_widths"]),
            direction=d["direction"],
            cell=d["cell"],
            seq_len=int(d["seq_len"]),
            input_encoding=d.get("input_encoding", "dense"),
        )


def interaction_widths_for_depth(depth: int, ae_hidden: int = 30) -> tuple[int, ...]:
    """Stack widths used by the depth ablation: the first layer always spans
    the concatenated pair width, deeper layers stay at the narrow width."""
    if depth not in (1, 2, 3):
        raise ShapeError("interaction depth must be 1, 2, or 3")
    widths = [2 * ae_hidden] + [ae_hidden] * (depth - 1)
    return tuple(widths)


@dataclass
class TrainConfig:
    """Optimization settings for both training stages."""

    batch_size: int = 50
    pretrain_epochs: int = 50
    finetune_epochs: int = 400
    dropout: float = 0.1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise DatasetError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise DatasetError("dropout must be in [0, 1)")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise DatasetError("epoch counts must be >= 0")

    def adam_state(self) -> AdamState:
        return AdamState(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)


def parameter_count(spec: ArchitectureSpec) -> int:
    """Closed-form parameter count implied by the architecture string."""
    gates = _GATES[spec.cell]

    def cell_params(n_in: int, n_h: int) -> int:
        return gates * (n_in * n_h + n_h * n_h + n_h)

    total = 5 * spec.embed_dim                                   # embedding rows
    total += 2 * cell_params(spec.embed_dim, spec.ae_hidden)     # two encoders
    in_w = 2 * spec.ae_hidden
    for w in spec.interaction_widths:
        if spec.direction == "BI":
            total += 2 * cell_params(in_w, w)
            in_w = 2 * w
        else:
            total += cell_params(in_w, w)
            in_w = w
    total += 2 * in_w                                            # output weights
    return total


def _make_table(spec: ArchitectureSpec, rng: np.random.Generator) -> EmbeddingTable:
    if spec.input_encoding == "onehot":
        return EmbeddingTable.one_hot()
    return EmbeddingTable.random(rng)


def _to_time_major(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.swapaxes(x, 0, 1))


# --- autoencoder stage -------------------------------------------------------


class AutoencoderModel:
    """Encoder/decoder pair over embedded sequences.

    The decoder is a recurrent cell running over the encoder's per-position
    representations followed by a position-wise linear map back to the
    embedding dimension, so input and reconstruction have equal lengths.
    """

    def __init__(self, spec: ArchitectureSpec, table: EmbeddingTable,
                 rng: np.random.Generator):
        self.spec = spec
        self.table = table
        self.store = ParamStore()
        cell_cls = _CELLS[spec.cell]
        self.encoder = cell_cls(spec.embed_dim, spec.ae_hidden, self.store, "enc", rng)
        self.decoder = cell_cls(spec.ae_hidden, spec.ae_hidden, self.store, "dec", rng)
        self.read_w = self.store.add(
            "read.W", glorot_uniform(spec.ae_hidden, spec.embed_dim, rng))
        self.read_b = self.store.add("read.b", np.zeros(spec.embed_dim))
        self.loss_curve: list[float] = []

    def reconstruct(self, x: np.ndarray):
        """Forward pass: x (L, B, 4) -> (xhat, encoder tape, decoder tape, dec states)."""
        enc_hs, enc_tape = self.encoder.forward(x)
        dec_hs, dec_tape = self.decoder.forward(enc_hs)
        xhat = dec_hs @ self.read_w.value + self.read_b.value
        return xhat, enc_hs, enc_tape, dec_hs, dec_tape

    def _train_step(self, idx: np.ndarray, state: AdamState, cfg: TrainConfig) -> float:
        x = _to_time_major(self.table.weights[idx])
        xhat, _, enc_tape, dec_hs, dec_tape = self.reconstruct(x)
        loss, dxhat = mse_loss(x, xhat, batch_size=idx.shape[0])
        if not np.isfinite(loss):
            raise NumericError(f"non-finite reconstruction loss ({loss})")
        self.store.zero_grads()
        flat_dec = dec_hs.reshape(-1, self.spec.ae_hidden)
        flat_dx = dxhat.reshape(-1, self.spec.embed_dim)
        self.read_w.grad += flat_dec.T @ flat_dx
        self.read_b.grad += flat_dx.sum(axis=0)
        d_dec = (flat_dx @ self.read_w.value.T).reshape(dec_hs.shape)
        d_enc, _ = self.decoder.backward(dec_tape, d_dec)
        self.encoder.backward(enc_tape, d_enc)
        if cfg.clip_norm is not None:
            clip_global_norm(self.store, cfg.clip_norm)
        adam_step(self.store, state)
        return loss


def pretrain_autoencoder(seqs: Sequence[np.ndarray] | np.ndarray,
                         spec: ArchitectureSpec, cfg: TrainConfig,
                         table: EmbeddingTable,
                         rng: np.random.Generator) -> AutoencoderModel:
    """Train a fresh autoencoder on padded index sequences (reconstruction loss).

    The embedding table stays frozen throughout this stage: the loss lives in
    embedding space, and a trainable embedding would collapse to zero.
    """
    seqs = np.asarray(seqs, dtype=np.int64)
    if seqs.ndim != 2 or seqs.shape[0] == 0:
        raise DatasetError("pretraining requires a non-empty (N, L) index array")
    if seqs.shape[1] != spec.seq_len:
        raise DatasetError(
            f"sequences padded to {seqs.shape[1]}, spec expects {spec.seq_len}")
    model = AutoencoderModel(spec, table, rng)
    state = cfg.adam_state()
    n = seqs.shape[0]
    was_trainable = table.trainable
    table.trainable = False
    try:
        for _ in range(cfg.pretrain_epochs):
            order = rng.permutation(n)
            total = 0.0
            for lo in range(0, n, cfg.batch_size):
                idx = seqs[order[lo:lo + cfg.batch_size]]
                total += model._train_step(idx, state, cfg) * idx.shape[0]
            model.loss_curve.append(total / n)
    finally:
        table.trainable = was_trainable
    return model


def encode(ae: AutoencoderModel, x: np.ndarray) -> np.ndarray:
    """Encoder-only pass: embedded sequence(s) -> per-position representations.

    Accepts (L, embed_dim) for one sequence or (L, B, embed_dim) for a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[:, None, :]
    if x.shape[0] != ae.spec.seq_len:
        raise ShapeError(f"expected {ae.spec.seq_len} positions, got {x.shape[0]}")
    hs, _ = ae.encoder.forward(x)
    return hs[:, 0, :] if single else hs


def concat_pairs(h_mi: np.ndarray, h_m: np.ndarray) -> np.ndarray:
    """Per-position concatenation (miRNA first) of two equal-shaped stacks."""
    h_mi = np.asarray(h_mi)
    h_m = np.asarray(h_m)
    if h_mi.shape != h_m.shape:
        raise ShapeError(f"representation shapes differ: {h_mi.shape} vs {h_m.shape}")
    return np.concatenate([h_mi, h_m], axis=-1)


# --- interaction stack -------------------------------------------------------


class _UniLayer:
    def __init__(self, cell):
        self.cell = cell
        self.width = cell.n_h

    def forward(self, h):
        out, tape = self.cell.forward(h)
        return out, tape

    def backward(self, tape, dout):
        dxs, _ = self.cell.backward(tape, dout)
        return dxs


class _BiLayer:
    """Forward and backward passes concatenated per position."""

    def __init__(self, fw, bw):
        self.fw = fw
        self.bw = bw
        self.width = fw.n_h + bw.n_h

    def forward(self, h):
        out_f, tape_f = self.fw.forward(h)
        out_b, tape_b = self.bw.forward(np.ascontiguousarray(h[::-1]))
        out = np.concatenate([out_f, out_b[::-1]], axis=2)
        return out, (tape_f, tape_b)

    def backward(self, tapes, dout):
        tape_f, tape_b = tapes
        w = self.fw.n_h
        dxs_f, _ = self.fw.backward(tape_f, np.ascontiguousarray(dout[:, :, :w]))
        dxs_b, _ = self.bw.backward(tape_b, np.ascontiguousarray(dout[::-1, :, w:]))
        return dxs_f + dxs_b[::-1]


@dataclass
class ForwardResult:
    probs: np.ndarray                 # (B, 2)
    h_last: np.ndarray                # (B, final width)
    mi_idx: np.ndarray
    m_idx: np.ndarray
    enc_mi_tape: object
    enc_m_tape: object
    layer_caches: list
    dropout_p: float
    activations: list[np.ndarray] = field(default_factory=list)


class DeepTargetModel:
    """Two encoders, stacked interaction RNN, and the two-unit output layer.

    Decoders are deliberately absent: after pretraining, the encoders are
    connected straight to the interaction stack.
    """

    def __init__(self, spec: ArchitectureSpec, table: EmbeddingTable,
                 rng: np.random.Generator):
        self.spec = spec
        self.table = table
        self.store = ParamStore()
        self.store.register("embed", table.weights, table.grad)
        cell_cls = _CELLS[spec.cell]
        self.enc_mi = cell_cls(spec.embed_dim, spec.ae_hidden, self.store, "enc_mi", rng)
        self.enc_m = cell_cls(spec.embed_dim, spec.ae_hidden, self.store, "enc_m", rng)
        self.layers: list = []
        in_w = 2 * spec.ae_hidden
        for j, w in enumerate(spec.interaction_widths):
            if spec.direction == "BI":
                fw = cell_cls(in_w, w, self.store, f"rnn{j}.fw", rng)
                bw = cell_cls(in_w, w, self.store, f"rnn{j}.bw", rng)
                layer = _BiLayer(fw, bw)
            else:
                layer = _UniLayer(cell_cls(in_w, w, self.store, f"rnn{j}", rng))
            self.layers.append(layer)
            in_w = layer.width
        self.final_width = in_w
        self.out_w = self.store.add(
            "out.w", glorot_uniform(in_w, 2, rng).T.copy())
        self.meta = {"epochs_pretrained": 0, "epochs_finetuned": 0, "seed": None}

    @classmethod
    def initialize(cls, spec: ArchitectureSpec, rng: np.random.Generator,
                   table: EmbeddingTable | None = None) -> "DeepTargetModel":
        """Fresh model with no pretraining."""
        if table is None:
            table = _make_table(spec, rng)
        return cls(spec, table, rng)

    @classmethod
    def from_pretrained(cls, ae_mi: AutoencoderModel, ae_m: AutoencoderModel,
                        rng: np.random.Generator) -> "DeepTargetModel":
        """Bypass both decoders: copy encoder weights into a fresh model."""
        if ae_mi.spec != ae_m.spec:
            raise ShapeError("the two autoencoders were built from different specs")
        if ae_mi.table is not ae_m.table:
            raise ShapeError("the two autoencoders must share one embedding table")
        model = cls(ae_mi.spec, ae_mi.table, rng)
        for prefix, ae in (("enc_mi", ae_mi), ("enc_m", ae_m)):
            for name in ae.store.names():
                if name.startswith("enc."):
                    suffix = name[len("enc."):]
                    model.store[f"{prefix}.{suffix}"].value[:] = ae.store[name].value
        model.meta["epochs_pretrained"] = len(ae_mi.loss_curve)
        return model

    def forward_batch(self, mi_idx: np.ndarray, m_idx: np.ndarray, mode: Mode,
                      dropout_p: float = 0.0,
                      rng: np.random.Generator | None = None,
                      capture: bool = False) -> ForwardResult:
        x_mi = _to_time_major(self.table.weights[mi_idx])
        x_m = _to_time_major(self.table.weights[m_idx])
        h_mi, tape_mi = self.enc_mi.forward(x_mi)
        h_m, tape_m = self.enc_m.forward(x_m)
        h = concat_pairs(h_mi, h_m)
        caches = []
        activations: list[np.ndarray] = []
        for layer in self.layers:
            out, tape = layer.forward(h)
            if capture:
                activations.append(out.copy())
            if mode is Mode.TRAIN and dropout_p > 0.0:
                out, mask = dropout(out, dropout_p, mode, rng)
            else:
                mask = None
            caches.append((tape, mask))
            h = out
        h_last = h[-1]
        probs = output_probability(self.out_w.value, h_last)
        return ForwardResult(probs, h_last, mi_idx, m_idx, tape_mi, tape_m,
                             caches, dropout_p, activations)

    def backward_batch(self, res: ForwardResult, dp: np.ndarray) -> None:
        """Accumulate gradients of sum(dp * probs) into the store."""
        dw, dh_last = output_probability_vjp(self.out_w.value, res.h_last, dp)
        self.out_w.grad += dw
        T = self.spec.seq_len
        d = np.zeros((T, dh_last.shape[0], self.final_width))
        d[-1] = dh_last
        for layer, (tape, mask) in zip(reversed(self.layers), reversed(res.layer_caches)):
            if mask is not None:
                d = d * mask / (1.0 - res.dropout_p)
            d = layer.backward(tape, d)
        nh = self.spec.ae_hidden
        dx_mi, _ = self.enc_mi.backward(res.enc_mi_tape,
                                        np.ascontiguousarray(d[:, :, :nh]))
        dx_m, _ = self.enc_m.backward(res.enc_m_tape,
                                      np.ascontiguousarray(d[:, :, nh:]))
        self.table.accumulate_grad(res.mi_idx, np.swapaxes(dx_mi, 0, 1))
        self.table.accumulate_grad(res.m_idx, np.swapaxes(dx_m, 0, 1))


# --- supervised stage --------------------------------------------------------


def encode_pair_arrays(dataset: Sequence[PairExample],
                       seq_len: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Padded index arrays (N, L) for miRNAs and windows, plus labels (N,)."""
    if not dataset:
        raise DatasetError("empty dataset")
    mi = np.stack([pad_to(ex.mirna, seq_len) for ex in dataset])
    m = np.stack([pad_to(ex.cts.window, seq_len) for ex in dataset])
    y = np.asarray([ex.label for ex in dataset], dtype=np.float64)
    return mi, m, y


def fine_tune(model: DeepTargetModel, dataset: Sequence[PairExample],
              cfg: TrainConfig, rng: np.random.Generator) -> list[float]:
    """Minimize the classification loss with Adam over mini-batches.

    The embedding table is trainable in this stage (dense encoding only).
    On a non-finite loss or gradient the parameters are rolled back to the
    last completed epoch and NumericError is raised.
    """
    mi, m, y = encode_pair_arrays(dataset, model.spec.seq_len)
    if len(set(int(v) for v in y)) < 2:
        raise DatasetError("one-class dataset: fine-tuning needs both labels")
    if model.spec.input_encoding == "dense":
        model.table.trainable = True
    state = cfg.adam_state()
    n = len(dataset)
    history: list[float] = []
    last_good = model.store.snapshot()
    try:
        for _ in range(cfg.finetune_epochs):
            order = rng.permutation(n)
            total = 0.0
            for lo in range(0, n, cfg.batch_size):
                sel = order[lo:lo + cfg.batch_size]
                res = model.forward_batch(mi[sel], m[sel], Mode.TRAIN,
                                          dropout_p=cfg.dropout, rng=rng)
                loss, dp1 = bce_loss(res.probs[:, 1], y[sel])
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite training loss ({loss})")
                model.store.zero_grads()
                dp = np.zeros_like(res.probs)
                dp[:, 1] = dp1
                model.backward_batch(res, dp)
                if cfg.clip_norm is not None:
                    clip_global_norm(model.store, cfg.clip_norm)
                adam_step(model.store, state)
                total += loss * len(sel)
            history.append(total / n)
            last_good = model.store.snapshot()
    except NumericError:
        model.store.restore(last_good)
        raise
    model.meta["epochs_finetuned"] += cfg.finetune_epochs
    return history


@dataclass
class TrainHistory:
    pretrain_mi: list[float]
    pretrain_m: list[float]
    finetune: list[float]


@dataclass(frozen=True)
class TrainingStreams:
    """Named deterministic rng streams derived from one seed."""

    embed: np.random.SeedSequence
    ae_mi: np.random.SeedSequence
    ae_m: np.random.SeedSequence
    interact: np.random.SeedSequence
    finetune: np.random.SeedSequence


def training_streams(seed: int) -> TrainingStreams:
    return TrainingStreams(*np.random.SeedSequence(seed).spawn(5))


def train_pipeline(dataset: Sequence[PairExample], spec: ArchitectureSpec,
                   cfg: TrainConfig) -> tuple[DeepTargetModel, TrainHistory]:
    """The full two-stage procedure over one labeled site dataset.

    Composition contract: this is exactly pretrain_autoencoder twice,
    from_pretrained, then fine_tune, with streams split from cfg.seed; no
    state flows between the stages other than their declared outputs.
    """
    streams = training_streams(cfg.seed)
    table = _make_table(spec, np.random.default_rng(streams.embed))
    mi, m, _ = encode_pair_arrays(dataset, spec.seq_len)
    ae_mi = pretrain_autoencoder(mi, spec, cfg, table,
                                 np.random.default_rng(streams.ae_mi))
    ae_m = pretrain_autoencoder(m, spec, cfg, table,
                                np.random.default_rng(streams.ae_m))
    model = DeepTargetModel.from_pretrained(ae_mi, ae_m,
                                            np.random.default_rng(streams.interact))
    model.meta["seed"] = cfg.seed
    ft = fine_tune(model, dataset, cfg, np.random.default_rng(streams.finetune))
    return model, TrainHistory(ae_mi.loss_curve, ae_m.loss_curve, ft)


# --- prediction and inspection -----------------------------------------------


def predict_batch(model: DeepTargetModel, mi_idx: np.ndarray,
                  m_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(target probabilities, argmax labels); ties resolve to label 0."""
    res = model.forward_batch(mi_idx, m_idx, Mode.EVAL)
    p1 = res.probs[:, 1]
    labels = (p1 > res.probs[:, 0]).astype(np.int64)
    return p1, labels


def predict_site(model: DeepTargetModel, mirna: RnaSequence,
                 cts: CandidateTargetSite) -> tuple[float, int]:
    L = model.spec.seq_len
    mi = pad_to(mirna, L)[None]
    m = pad_to(cts.window, L)[None]
    p1, labels = predict_batch(model, mi, m)
    return float(p1[0]), int(labels[0])


def predict_gene(model: DeepTargetModel, mirna: RnaSequence, mrna: RnaSequence,
                 k: int) -> int:
    """Gene-level call: target iff any CTS is predicted; no CTS means 0."""
    sites = scan_cts(mirna, mrna, k)
    if not sites:
        return 0
    return gene_level_label([predict_site(model, mirna, cts)[1] for cts in sites])


def capture_activations(model: DeepTargetModel,
                        pair: PairExample) -> list[np.ndarray]:
    """Per interaction layer, the (units x positions) raw hidden states."""
    L = model.spec.seq_len
    mi = pad_to(pair.mirna, L)[None]
    m = pad_to(pair.cts.window, L)[None]
    res = model.forward_batch(mi, m, Mode.EVAL, capture=True)
    return [act[:, 0, :].T.copy() for act in res.activations]
