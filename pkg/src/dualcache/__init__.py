"""Training-free dual cache-model OOD detection over precomputed embeddings."""

from .errors import (
    BadMagic,
    DimensionMismatch,
    DualCacheError,
    EmptyList,
    EmptyShots,
    IndexOutOfRange,
    InsufficientShots,
    NonFiniteValue,
    NormViolation,
    OddDimension,
    SingleClass,
    TemplateCountMismatch,
    TruncatedFile,
    ZeroNormRow,
)
from .store import (
    ClassVocabulary,
    DatasetBundle,
    EmbeddingMatrix,
    LabeledEmbeddings,
    l2_normalize,
    load_embeddings,
    load_labeled,
    load_labels,
    load_vocabulary,
    sample_shots,
    save_embeddings,
    save_labels,
    save_vocabulary,
)
from .channels import (
    ChannelPartition,
    ChannelStats,
    SelectorConfig,
    avg_pool_pairs,
    compute_channel_stats,
    load_partition,
    partition_channels,
    restrict_channels,
    save_partition,
)
from .cache import (
    CacheModel,
    affinity,
    build_cache,
    fused_logits,
    load_cache,
    save_cache,
    zero_shot_logits,
)
from .textclf import (
    DEFAULT_NEGATIVE_TEMPLATES,
    DEFAULT_POSITIVE_TEMPLATES,
    TextClassifier,
    build_classifier,
)
from .adapter import (
    AdapterConfig,
    BatchScores,
    DualEngine,
    ScoreRecord,
    build_engine,
    dual_fuse,
    mcm_score,
    negative_logits,
    positive_logits,
    score_batch,
    score_sample,
    softmax,
)
from .evaluation import (
    EvalResult,
    ProtocolResult,
    SweepGrid,
    SweepResult,
    auroc,
    build_engine_for_seed,
    fpr_at_tpr,
    normalize_bundle,
    run_ablation,
    run_protocol,
    sweep,
)

__version__ = "0.1.0"
