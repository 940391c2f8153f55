"""Retrieval metrics and the baseline-vs-learned comparison harness.

Recall is record-level: a base record scores a point only when every one
of its related records appears in the top-k, which is stricter than
counting recovered edges.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .data import Dataset, SupervisionPair
from .encoder import EncoderModel, embed_dataset, fit_encoder
from .joiner import JoinResult, execute_join
from .joinspec import EngineConfig, JoinSpec, JoinType
from .lexrank import BASELINE_KINDS, lexical_join

ENCODER_METHODS = ("untrained-encoder", "trained-encoder")
COMPARISON_METHODS = BASELINE_KINDS + ENCODER_METHODS


class EvalError(ValueError):
    """Metric preconditions violated or unknown comparison method."""


@dataclass(frozen=True)
class TruthSet:
    """Related records per base id; every set is non-empty."""

    related: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        for base_id, aux_ids in self.related.items():
            if not aux_ids:
                raise EvalError(f"truth set for base id {base_id!r} is empty")

    @classmethod
    def from_pairs(cls, pairs: list[SupervisionPair]) -> "TruthSet":
        related: dict[str, set[str]] = {}
        for pair in pairs:
            related.setdefault(pair.base_id, set()).add(pair.aux_id)
        return cls(related={k: frozenset(v) for k, v in related.items()})

    def __len__(self) -> int:
        return len(self.related)


def _topk_by_base(result: JoinResult, k: int) -> dict[str, list[str]]:
    ranked: dict[str, list[tuple[int, str]]] = {}
    for m in result.matches:
        if m.absent or m.rank > k:
            continue
        ranked.setdefault(m.base_id, []).append((m.rank, m.aux_id))  # type: ignore[arg-type]
    return {bid: [aid for _, aid in sorted(entries)] for bid, entries in ranked.items()}


def recall_at_k(result: JoinResult, truth: TruthSet, k: int) -> float:
    """Fraction of truth base records whose whole truth set is in the top-k."""
    if k < 1:
        raise EvalError("k must be >= 1")
    if not truth.related:
        raise EvalError("truth set is empty")
    retrieved = _topk_by_base(result, k)
    hits = 0
    for base_id, want in truth.related.items():
        got = set(retrieved.get(base_id, []))
        if want <= got:
            hits += 1
    return hits / len(truth.related)


def edge_recall_at_k(result: JoinResult, truth: TruthSet, k: int) -> float:
    """Edge-level companion metric: fraction of truth edges recovered."""
    if k < 1:
        raise EvalError("k must be >= 1")
    retrieved = _topk_by_base(result, k)
    total = sum(len(v) for v in truth.related.values())
    if total == 0:
        raise EvalError("truth set is empty")
    found = 0
    for base_id, want in truth.related.items():
        got = set(retrieved.get(base_id, []))
        found += len(want & got)
    return found / total


def mrr_at_k(result: JoinResult, truth: TruthSet, k: int = 10) -> float:
    """Mean reciprocal rank of the first relevant match in the top-k;
    a query with no relevant match in the top-k contributes 0."""
    if k < 1:
        raise EvalError("k must be >= 1")
    if not truth.related:
        raise EvalError("truth set is empty")
    per_base: dict[str, list[tuple[int, str]]] = {}
    for m in result.matches:
        if not m.absent and m.rank <= k:
            per_base.setdefault(m.base_id, []).append((m.rank, m.aux_id))  # type: ignore[arg-type]
    total = 0.0
    for base_id, want in truth.related.items():
        best = 0.0
        for rank, aux_id in sorted(per_base.get(base_id, [])):
            if aux_id in want:
                best = 1.0 / rank
                break
        total += best
    return total / len(truth.related)


def mse(predictions: dict[str, float], truth: dict[str, float]) -> float:
    """Mean squared error over the prediction ids."""
    if not predictions:
        raise EvalError("predictions must be non-empty")
    missing = [k for k in predictions if k not in truth]
    if missing:
        raise EvalError(f"predictions reference ids missing from truth: {missing[:5]}")
    return sum((predictions[k] - truth[k]) ** 2 for k in predictions) / len(predictions)


@dataclass
class ComparisonTable:
    rows: list[tuple[str, int, float]]  # (method, k, recall)

    def recall(self, method: str, k: int) -> float:
        for m, kk, r in self.rows:
            if m == method and kk == k:
                return r
        raise EvalError(f"no row for method {method!r} at k={k}")

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "k", "recall"])
        for method, k, r in self.rows:
            writer.writerow([method, k, repr(r)])
        return buf.getvalue()

    def format_table(self) -> str:
        ks = sorted({k for _, k, _ in self.rows})
        methods = []
        for method, _, _ in self.rows:
            if method not in methods:
                methods.append(method)
        width = max(len(m) for m in methods) if methods else 6
        header = "method".ljust(width) + "".join(f"  recall@{k:<4d}" for k in ks)
        lines = [header, "-" * len(header)]
        for method in methods:
            cells = []
            for k in ks:
                try:
                    cells.append(f"  {self.recall(method, k):<11.4f}")
                except EvalError:
                    cells.append("  " + "-".ljust(11))
            lines.append(method.ljust(width) + "".join(cells))
        return "\n".join(lines)


def retrieval_result(
    base_emb,
    aux_emb,
    k: int,
    metric: str = "l2",
) -> JoinResult:
    """Per-base top-k retrieval used for evaluation (no caps, no threshold)."""
    spec = JoinSpec(
        base_ref="base",
        aux_ref="aux",
        join_type=JoinType.LEFT,
        left_size=1,
        right_size=k,
        supervision_ref="eval",
    )
    return execute_join(spec, base_emb, aux_emb, metric=metric)  # type: ignore[arg-type]


def run_comparison(
    base: Dataset,
    aux: Dataset,
    truth: TruthSet,
    methods: list[str],
    ks: list[int],
    *,
    key_column: str | None = None,
    train_pairs: list[SupervisionPair] | None = None,
    config: EngineConfig | None = None,
    hash_dim: int = 1 << 16,
    pretrain: bool = False,
) -> ComparisonTable:
    """Record-level recall@k for each requested method.

    ``untrained-encoder`` is a randomly initialized encoder (the no-training
    reference point); ``trained-encoder`` fits the encoder on ``train_pairs``
    under ``config`` first.
    """
    if not methods:
        raise EvalError("methods must be non-empty")
    if not ks or any(k < 1 for k in ks):
        raise EvalError("ks must be positive")
    for method in methods:
        if method not in COMPARISON_METHODS:
            raise EvalError(
                f"unknown method {method!r} (expected one of {COMPARISON_METHODS})"
            )
    config = config or EngineConfig(data_dir=".")
    kmax = max(ks)

    rows: list[tuple[str, int, float]] = []
    for method in methods:
        if method in BASELINE_KINDS:
            result = lexical_join(method, base, aux, key_column=key_column, k=kmax)
        else:
            if method == "trained-encoder":
                if not train_pairs:
                    raise EvalError("trained-encoder requires train_pairs")
                fit = fit_encoder(
                    base, aux, train_pairs, config, hash_dim=hash_dim, pretrain=pretrain
                )
                model = fit.model
                aux_model = fit.models[-1]
            else:
                model = EncoderModel.create(
                    dim=config.embedding_dim,
                    hash_dim=hash_dim,
                    seed=config.seed,
                    normalize=config.normalize,
                )
                aux_model = model
            base_emb = embed_dataset(model, base, tokenizer=config.tokenizer)
            aux_emb = embed_dataset(aux_model, aux, tokenizer=config.tokenizer)
            result = retrieval_result(base_emb, aux_emb, kmax, metric=config.distance)
        for k in ks:
            rows.append((method, k, recall_at_k(result, truth, k)))
    return ComparisonTable(rows=rows)
