"""Batch context enrichment via learned keyless joins.

The engine aligns records across two schemaless tabular datasets that
share no key: records become prepared sentences, a trainable encoder maps
them into a common embedding space under a triplet objective, and the
join executes as exact k-NN retrieval over an embedding index. Lexical
baselines (BM25, Jaccard, Levenshtein) and a recall/MRR harness ship
alongside for comparison.
"""

from .data import (
    DataError,
    Dataset,
    DatasetRole,
    Record,
    SupervisionPair,
    SupervisionTriple,
    load_dataset,
    load_supervision,
    write_dataset,
)
from .encoder import (
    EncoderModel,
    TrainConfig,
    TrainResult,
    embed_dataset,
    encode,
    fit_encoder,
    load_model,
    save_model,
    train,
    triplet_loss,
)
from .evalkit import (
    ComparisonTable,
    TruthSet,
    mrr_at_k,
    mse,
    recall_at_k,
    run_comparison,
)
from .joiner import (
    EmbeddingIndex,
    JoinResult,
    Match,
    aggregate_labels,
    build_index,
    chain_joins,
    execute_join,
    knn,
)
from .joinspec import (
    EngineConfig,
    JoinSpec,
    JoinType,
    parse_config,
    parse_join_spec,
    render_join_spec,
)
from .lexrank import (
    Bm25Index,
    bm25_score,
    bm25_topk,
    build_bm25_index,
    jaccard,
    levenshtein,
    lexical_join,
)
from .prepare import Sentence, pair_sentences, prepare_sentence, tokenize
from .supervise import (
    PerturbationConfig,
    SamplerConfig,
    build_pretraining_pairs,
    generate_fuzzy_join,
    sample_triples,
    split_train_test,
)

__version__ = "0.1.0"
