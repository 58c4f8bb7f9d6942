"""miRNA target prediction with RNN autoencoders and stacked recurrent
interaction learning, built on a self-contained differentiable kernel."""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    DatasetError,
    DeepTargetError,
    FastaError,
    MockGenerationError,
    NumericError,
    SequenceError,
    ShapeError,
)
from .seq import (
    EmbeddingTable,
    FastaParse,
    Nucleotide,
    RnaSequence,
    embed,
    one_hot_encode,
    pad_to,
    parse_fasta,
    reverse_complement,
    wc_pair,
    write_fasta,
)
from .scan import (
    CandidateTargetSite,
    PairExample,
    SeedMatchType,
    build_site_dataset,
    gene_level_label,
    read_pairs_tsv,
    scan_cts,
    seed_match_at,
    write_pairs_tsv,
)
from .mock import (
    MockConfig,
    MockResult,
    SeedIndex,
    build_negative_pairs,
    complementarity_score,
    fisher_yates,
    generate_mock,
)
from .model import (
    ArchitectureSpec,
    AutoencoderModel,
    DeepTargetModel,
    TrainConfig,
    TrainHistory,
    capture_activations,
    concat_pairs,
    encode,
    fine_tune,
    parameter_count,
    predict_gene,
    predict_site,
    pretrain_autoencoder,
    train_pipeline,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import (
    ConfusionCounts,
    CrossValidationReport,
    FoldPlan,
    MetricsReport,
    confusion,
    cross_validate,
    metrics,
    stratified_folds,
)
