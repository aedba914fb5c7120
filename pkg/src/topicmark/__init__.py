"""Topic-aligned green-list watermarking for language model output."""

from .attacks import (
    LexicalResources,
    ParaphrasePair,
    PerturbationPlan,
    PerturbResult,
    degradation_curve,
    ingest_paraphrases,
    perturb,
    tokenize_words,
)
from .detection import (
    DetectionReport,
    detect_max_z,
    detect_sliding,
    detect_strict,
    detokenize_for_inference,
    green_count,
    z_score,
)
from .embeddings import EmbeddingTable, Vocabulary, cosine, load_embeddings, write_embeddings
from .errors import (
    DetectionInputError,
    EmbeddingLoadError,
    FingerprintMismatchError,
    ManifestError,
    PartitionError,
    PartitionFormatError,
    ProviderError,
    ResourceError,
    TopicmarkError,
    TopicUndeterminableError,
    VocabularyError,
)
from .evaluation import (
    MetricsReport,
    ScoredCorpus,
    ScoredDoc,
    best_f1,
    compute_metrics,
    fpr_on_clean,
    roc_auc,
    run_experiment,
    scaling_study,
    tpr_at_fpr,
)
from .generation import (
    GenerationConfig,
    GenerationResult,
    GenerationTrace,
    LogitProvider,
    NGramModel,
    SamplerSpec,
    generate,
    make_rng,
    sample,
    softmax,
    train_ngram,
)
from .inference import (
    DetectedTopics,
    TopicChoice,
    choose_topic,
    extract_keywords,
    kmeans_cluster,
)
from .partition import (
    TopicPartition,
    TopicSet,
    build_partition,
    load_partition,
    partition_stats,
    save_partition,
)

__version__ = "0.1.0"
