"""Embedding index, exact k-NN retrieval, and join-type semantics.

The index is an exact linear scan; an approximate backend may replace it
only if it passes the exactness suite at recall 1.0 or marks its output
as approximate. Queries against a built index are read-only and safe to
issue concurrently.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .joinspec import JoinSpec, JoinType

Metric = Literal["l2", "inner_product"]


class JoinError(ValueError):
    """Invalid join input (dimension mismatch, empty side, broken chain)."""


@dataclass
class EmbeddingIndex:
    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, d) float64
    metric: Metric = "l2"

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2:
            raise JoinError("index vectors must form a 2-d array")
        if len(self.ids) != self.vectors.shape[0]:
            raise JoinError("id count does not match vector count")
        if len(set(self.ids)) != len(self.ids):
            raise JoinError("index record ids must be unique")
        # Rank of each entry under ascending-id order, for tie-breaking.
        order = sorted(range(len(self.ids)), key=lambda i: self.ids[i])
        ranks = np.empty(len(self.ids), dtype=np.int64)
        for rank, pos in enumerate(order):
            ranks[pos] = rank
        self._id_rank = ranks
        self._pos = {rid: i for i, rid in enumerate(self.ids)}

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def vector(self, record_id: str) -> np.ndarray:
        pos = self._pos.get(record_id)
        if pos is None:
            raise JoinError(f"id {record_id!r} not present in index")
        return self.vectors[pos]


def build_index(
    embeddings: Sequence[tuple[str, np.ndarray]],
    metric: Metric = "l2",
) -> EmbeddingIndex:
    """Build an exact index over (record_id, vector) pairs."""
    if not embeddings:
        raise JoinError("cannot build an index over zero embeddings")
    if metric not in ("l2", "inner_product"):
        raise JoinError(f"unknown metric {metric!r}")
    dims = {np.asarray(vec).shape for _, vec in embeddings}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise JoinError(f"embedding dimension mismatch: saw shapes {sorted(dims)}")
    ids = tuple(rid for rid, _ in embeddings)
    matrix = np.asarray([np.asarray(vec, dtype=np.float64) for _, vec in embeddings])
    return EmbeddingIndex(ids=ids, vectors=matrix, metric=metric)


def _scores_against(index: EmbeddingIndex, query: np.ndarray) -> np.ndarray:
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dimension,):
        raise JoinError(
            f"query dimension {query.shape} does not match index dimension {index.dimension}"
        )
    if index.metric == "l2":
        diff = index.vectors - query
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return index.vectors @ query


def knn(
    index: EmbeddingIndex,
    query: np.ndarray,
    k: int,
    threshold: float | None = None,
) -> list[tuple[str, float]]:
    """Exact top-k under the index metric; ties break by ascending id.

    With a threshold, l2 keeps scores <= threshold and inner_product keeps
    scores >= threshold.
    """
    if k < 1:
        raise JoinError("k must be >= 1")
    scores = _scores_against(index, query)
    if index.metric == "l2":
        keep = np.ones(index.n, dtype=bool) if threshold is None else scores <= threshold
        sort_scores = scores
    else:
        keep = np.ones(index.n, dtype=bool) if threshold is None else scores >= threshold
        sort_scores = -scores
    candidates = np.nonzero(keep)[0]
    if candidates.size == 0:
        return []
    order = candidates[np.lexsort((index._id_rank[candidates], sort_scores[candidates]))]
    top = order[:k]
    return [(index.ids[i], float(scores[i])) for i in top]


@dataclass(frozen=True)
class Match:
    """One joined tuple; a None id marks an unenriched (ABSENT) side."""

    base_id: str | None
    aux_id: str | None
    rank: int
    score: float
    direction: str = "forward"  # forward: base queried aux; reverse: mirror
    path: tuple[str, ...] = ()  # intermediate record ids for chained joins

    @property
    def absent(self) -> bool:
        return self.base_id is None or self.aux_id is None


@dataclass
class JoinResult:
    matches: list[Match]
    spec: JoinSpec | None = None

    def for_base(self, base_id: str) -> list[Match]:
        return [m for m in self.matches if m.base_id == base_id and not m.absent]

    def matched_pairs(self) -> set[tuple[str, str]]:
        return {(m.base_id, m.aux_id) for m in self.matches if not m.absent}

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["base_id", "aux_id", "rank", "score"])
        for m in self.matches:
            writer.writerow(
                [
                    m.base_id if m.base_id is not None else "",
                    m.aux_id if m.aux_id is not None else "",
                    m.rank,
                    repr(m.score) if not m.absent else "",
                ]
            )
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "JoinResult":
        matches: list[Match] = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:4] != ["base_id", "aux_id", "rank", "score"]:
                raise JoinError(f"{path}: unexpected result header {header!r}")
            for row in reader:
                if not row:
                    continue
                base_id = row[0] or None
                aux_id = row[1] or None
                rank = int(row[2])
                score = float(row[3]) if row[3] else float("nan")
                matches.append(Match(base_id=base_id, aux_id=aux_id, rank=rank, score=score))
        return cls(matches=matches)


Embeddings = Sequence[tuple[str, np.ndarray]]


def _retrieve(
    query_emb: Embeddings,
    target_emb: Embeddings,
    k: int,
    metric: Metric,
    threshold: float | None,
    index_on: Literal["target", "query"],
) -> dict[str, list[tuple[str, float]]]:
    """Ranked candidates per query record.

    ``index_on`` picks the execution strategy only: indexing the query side
    computes the same distances row-by-row from the other direction and
    transposes, so results are identical either way.
    """
    if index_on == "target":
        index = build_index(target_emb, metric)
        return {qid: knn(index, vec, k, threshold) for qid, vec in query_emb}

    index = build_index(query_emb, metric)
    per_query: dict[str, list[tuple[str, float]]] = {qid: [] for qid, _ in query_emb}
    for tid, tvec in target_emb:
        for qid, score in knn(index, tvec, index.n, threshold=None):
            per_query[qid].append((tid, score))
    sign = 1.0 if metric == "l2" else -1.0
    out: dict[str, list[tuple[str, float]]] = {}
    for qid, cands in per_query.items():
        if threshold is not None:
            if metric == "l2":
                cands = [c for c in cands if c[1] <= threshold]
            else:
                cands = [c for c in cands if c[1] >= threshold]
        cands.sort(key=lambda c: (sign * c[1], c[0]))
        out[qid] = cands[:k]
    return out


def _ranked_matches(
    retrieved: dict[str, list[tuple[str, float]]],
    query_order: Iterable[str],
    orient: Literal["base_queries", "aux_queries"],
    direction: str,
) -> list[Match]:
    matches: list[Match] = []
    for qid in query_order:
        for rank, (tid, score) in enumerate(retrieved.get(qid, []), start=1):
            if orient == "base_queries":
                matches.append(Match(base_id=qid, aux_id=tid, rank=rank, score=score,
                                     direction=direction))
            else:
                matches.append(Match(base_id=tid, aux_id=qid, rank=rank, score=score,
                                     direction=direction))
    return matches


def _cap_per_target(
    retrieved: dict[str, list[tuple[str, float]]],
    cap: int,
    metric: Metric,
) -> dict[str, list[tuple[str, float]]]:
    """Keep each target record's best ``cap`` query matches by score."""
    sign = 1.0 if metric == "l2" else -1.0
    by_target: dict[str, list[tuple[float, str]]] = {}
    for qid, cands in retrieved.items():
        for tid, score in cands:
            by_target.setdefault(tid, []).append((score, qid))
    surviving: set[tuple[str, str]] = set()
    for tid, entries in by_target.items():
        entries.sort(key=lambda e: (sign * e[0], e[1]))
        for score, qid in entries[:cap]:
            surviving.add((qid, tid))
    return {
        qid: [(tid, score) for tid, score in cands if (qid, tid) in surviving]
        for qid, cands in retrieved.items()
    }


def execute_join(
    spec: JoinSpec,
    base_emb: Embeddings,
    aux_emb: Embeddings,
    metric: Metric = "l2",
    threshold: float | None = None,
    index_side: Literal["auto", "base", "aux"] = "auto",
    both_directions: bool = False,
) -> JoinResult:
    """Execute the join over precomputed embeddings.

    INNER retrieves in a single direction: the smaller dataset queries the
    larger one, with k set by the retrieved side's size bound, then the
    query side's own bound is enforced as a per-retrieved-record cap.
    ``index_side`` selects which side physically holds the index; results
    are identical because the scan is exact (indexing the larger side is
    the fast default). ``both_directions`` switches INNER to the union of
    both retrieval directions.
    """
    if not base_emb or not aux_emb:
        raise JoinError("both sides must have at least one embedding")
    base_order = [rid for rid, _ in base_emb]
    aux_order = [rid for rid, _ in aux_emb]

    def exec_strategy(query_side: str) -> Literal["target", "query"]:
        if index_side == "auto":
            return "target"
        return "target" if index_side != query_side else "query"

    jt = spec.join_type
    if jt == JoinType.LEFT:
        retrieved = _retrieve(base_emb, aux_emb, spec.right_size, metric, threshold,
                              exec_strategy("base"))
        matches = _ranked_matches(retrieved, base_order, "base_queries", "forward")
        matched_base = {m.base_id for m in matches}
        for bid in base_order:
            if bid not in matched_base:
                matches.append(Match(base_id=bid, aux_id=None, rank=0, score=float("nan")))
        base_pos = {rid: i for i, rid in enumerate(base_order)}
        matches.sort(key=lambda m: (base_pos[m.base_id], m.rank))
        return JoinResult(matches=matches, spec=spec)

    if jt == JoinType.RIGHT:
        retrieved = _retrieve(aux_emb, base_emb, spec.left_size, metric, threshold,
                              exec_strategy("aux"))
        matches = _ranked_matches(retrieved, aux_order, "aux_queries", "reverse")
        matched_aux = {m.aux_id for m in matches}
        for aid in aux_order:
            if aid not in matched_aux:
                matches.append(Match(base_id=None, aux_id=aid, rank=0, score=float("nan"),
                                     direction="reverse"))
        aux_pos = {rid: i for i, rid in enumerate(aux_order)}
        matches.sort(key=lambda m: (aux_pos[m.aux_id], m.rank))
        return JoinResult(matches=matches, spec=spec)

    if jt == JoinType.FULL or (jt == JoinType.INNER and both_directions):
        fwd = _retrieve(base_emb, aux_emb, spec.right_size, metric, threshold,
                        exec_strategy("base"))
        rev = _retrieve(aux_emb, base_emb, spec.left_size, metric, threshold,
                        exec_strategy("aux"))
        matches = _ranked_matches(fwd, base_order, "base_queries", "forward")
        seen = {(m.base_id, m.aux_id) for m in matches}
        for m in _ranked_matches(rev, aux_order, "aux_queries", "reverse"):
            if (m.base_id, m.aux_id) not in seen:
                matches.append(m)
                seen.add((m.base_id, m.aux_id))
        if jt == JoinType.FULL:
            matched_base = {b for b, _ in seen}
            matched_aux = {a for _, a in seen}
            for bid in base_order:
                if bid not in matched_base:
                    matches.append(Match(base_id=bid, aux_id=None, rank=0, score=float("nan")))
            for aid in aux_order:
                if aid not in matched_aux:
                    matches.append(Match(base_id=None, aux_id=aid, rank=0, score=float("nan"),
                                         direction="reverse"))
        return JoinResult(matches=matches, spec=spec)

    # INNER, single direction: the smaller side queries the larger one.
    base_queries = len(base_emb) <= len(aux_emb)
    if base_queries:
        k, cap = spec.right_size, spec.left_size
        retrieved = _retrieve(base_emb, aux_emb, k, metric, threshold, exec_strategy("base"))
        if cap < len(base_emb):
            retrieved = _cap_per_target(retrieved, cap, metric)
        matches = _ranked_matches(retrieved, base_order, "base_queries", "forward")
    else:
        k, cap = spec.left_size, spec.right_size
        retrieved = _retrieve(aux_emb, base_emb, k, metric, threshold, exec_strategy("aux"))
        if cap < len(aux_emb):
            retrieved = _cap_per_target(retrieved, cap, metric)
        matches = _ranked_matches(retrieved, aux_order, "aux_queries", "reverse")
    return JoinResult(matches=matches, spec=spec)


def chain_joins(
    base_emb: Embeddings,
    stages: Sequence[tuple[JoinSpec, EmbeddingIndex]],
    threshold: float | None = None,
) -> JoinResult:
    """Run a multi-hop join: each stage queries its index with the records
    retrieved by the previous stage, using the stored vectors as queries.

    The result relates stage-0 query records to last-stage matches; each
    match carries the intermediate id per hop in ``path``.
    """
    if not stages:
        raise JoinError("chain requires at least one stage")
    # Frontier entries: (origin id, hop path so far, query vector, last hop score).
    frontier: list[tuple[str, tuple[str, ...], np.ndarray, float]] = [
        (rid, (), np.asarray(vec, dtype=np.float64), float("nan")) for rid, vec in base_emb
    ]
    for stage_no, (spec, index) in enumerate(stages):
        next_frontier: list[tuple[str, tuple[str, ...], np.ndarray, float]] = []
        is_last = stage_no == len(stages) - 1
        for origin, path, vec, _ in frontier:
            for hit_id, score in knn(index, vec, spec.right_size, threshold):
                if is_last:
                    next_frontier.append((origin, path + (hit_id,), np.empty(0), score))
                else:
                    try:
                        hit_vec = index.vector(hit_id)
                    except JoinError:
                        raise JoinError(
                            f"stage {stage_no}: cannot resolve retrieved id {hit_id!r}"
                        ) from None
                    next_frontier.append((origin, path + (hit_id,), hit_vec, score))
        frontier = next_frontier

    # Re-rank final matches per origin record; path keeps one id per hop
    # before the endpoint.
    per_origin: dict[str, list[tuple[float, str, tuple[str, ...]]]] = {}
    for origin, path, _, score in frontier:
        *intermediate, hit_id = path
        per_origin.setdefault(origin, []).append((score, hit_id, tuple(intermediate)))
    sign = 1.0 if stages[-1][1].metric == "l2" else -1.0
    matches: list[Match] = []
    origin_order = [rid for rid, _ in base_emb]
    for origin in origin_order:
        entries = per_origin.get(origin, [])
        entries.sort(key=lambda e: (sign * e[0], e[1]))
        for rank, (score, hit_id, path) in enumerate(entries, start=1):
            matches.append(
                Match(base_id=origin, aux_id=hit_id, rank=rank, score=float(score), path=path)
            )
    return JoinResult(matches=matches, spec=stages[-1][0])


# ---------------------------------------------------------------------------
# Embeddings cache: versioned binary, little-endian float64 row-major.
# ---------------------------------------------------------------------------

_EMB_MAGIC = b"KJEB"
_EMB_VERSION = 1


def save_embeddings(embeddings: Embeddings, path: str | Path) -> None:
    import struct

    path = Path(path)
    with path.open("wb") as fh:
        dim = int(np.asarray(embeddings[0][1]).shape[0]) if embeddings else 0
        fh.write(struct.pack("<4sIQQ", _EMB_MAGIC, _EMB_VERSION, len(embeddings), dim))
        for rid, vec in embeddings:
            encoded = rid.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(np.ascontiguousarray(vec, dtype="<f8").tobytes())


def load_embeddings(path: str | Path) -> list[tuple[str, np.ndarray]]:
    import struct

    path = Path(path)
    raw = path.read_bytes()
    head = struct.Struct("<4sIQQ")
    if len(raw) < head.size:
        raise JoinError(f"{path}: truncated embeddings file")
    magic, version, count, dim = head.unpack_from(raw)
    if magic != _EMB_MAGIC:
        raise JoinError(f"{path}: not an embeddings file (bad magic {magic!r})")
    if version != _EMB_VERSION:
        raise JoinError(f"{path}: unsupported embeddings version {version}")
    offset = head.size
    out: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        if offset + 4 > len(raw):
            raise JoinError(f"{path}: truncated embeddings file")
        (id_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        rid = raw[offset : offset + id_len].decode("utf-8")
        offset += id_len
        if offset + 8 * dim > len(raw):
            raise JoinError(f"{path}: truncated embeddings file")
        vec = np.frombuffer(raw, dtype="<f8", count=dim, offset=offset).copy()
        offset += 8 * dim
        out.append((rid, vec))
    return out


def aggregate_labels(
    result: JoinResult,
    labels: dict[str, float],
    k: int,
) -> dict[str, float]:
    """Average the labels of each base record's top-k matches.

    Base records with no matches are absent from the output; ABSENT rows
    contribute nothing.
    """
    if k < 1:
        raise JoinError("k must be >= 1")
    per_base: dict[str, list[tuple[int, float]]] = {}
    for m in result.matches:
        if m.absent:
            continue
        if m.aux_id not in labels:
            raise JoinError(f"no label for matched aux id {m.aux_id!r}")
        per_base.setdefault(m.base_id, []).append((m.rank, labels[m.aux_id]))
    out: dict[str, float] = {}
    for base_id, entries in per_base.items():
        entries.sort()
        top = [label for _, label in entries[:k]]
        out[base_id] = sum(top) / len(top)
    return out
