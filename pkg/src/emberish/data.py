"""Record and dataset types plus CSV/JSONL ingestion.

Datasets are immutable after load; readers may share them freely across
threads. All field values are stored as strings (numeric cells keep their
decimal rendering), which is what the sentence preparer consumes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence


class DataError(ValueError):
    """Malformed input file or violated dataset invariant."""


class DatasetRole(str, Enum):
    BASE = "base"
    AUXILIARY = "auxiliary"


@dataclass(frozen=True)
class Record:
    """One row: a stable string id plus ordered (key, value) fields."""

    id: str
    fields: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        for key, _ in self.fields:
            if not key:
                raise DataError(f"record {self.id!r} has an empty field key")

    def value(self, key: str) -> str | None:
        for k, v in self.fields:
            if k == key:
                return v
        return None

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(k for k, _ in self.fields)


@dataclass(frozen=True)
class Dataset:
    name: str
    role: DatasetRole
    records: tuple[Record, ...]
    column_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate id {rec.id}")
            seen.add(rec.id)
            if self.column_names is not None:
                extra = [k for k in rec.keys if k not in self.column_names]
                if extra:
                    raise DataError(
                        f"record {rec.id!r} has keys {extra} outside declared columns"
                    )

    @property
    def n(self) -> int:
        return len(self.records)

    def record(self, record_id: str) -> Record:
        rec = self.by_id().get(record_id)
        if rec is None:
            raise DataError(f"no record with id {record_id!r} in dataset {self.name!r}")
        return rec

    def by_id(self) -> dict[str, Record]:
        cached = getattr(self, "_by_id", None)
        if cached is None:
            cached = {rec.id: rec for rec in self.records}
            object.__setattr__(self, "_by_id", cached)
        return cached

    def ids(self) -> tuple[str, ...]:
        return tuple(rec.id for rec in self.records)


@dataclass(frozen=True)
class SupervisionPair:
    """A labeled related pair: one base record, one auxiliary record."""

    base_id: str
    aux_id: str


@dataclass(frozen=True)
class SupervisionTriple:
    """An anchor with one related and one unrelated auxiliary record."""

    anchor_id: str
    positive_id: str
    negative_id: str

    def __post_init__(self) -> None:
        if self.positive_id == self.negative_id:
            raise DataError(
                f"triple for anchor {self.anchor_id!r} repeats id {self.positive_id!r} "
                "as both positive and negative"
            )


def _infer_format(path: Path, format: str | None) -> str:
    if format is not None:
        if format not in ("csv", "jsonl"):
            raise DataError(f"unknown dataset format {format!r} (expected csv or jsonl)")
        return format
    suffix = path.suffix.lower()
    if suffix == ".jsonl":
        return "jsonl"
    return "csv"


def _render_scalar(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def load_dataset(
    path: str | Path,
    format: str | None = None,
    *,
    name: str | None = None,
    role: DatasetRole | str = DatasetRole.BASE,
) -> Dataset:
    """Load a CSV (header required) or JSONL file into a Dataset.

    Ids come from an ``id`` column when present, otherwise the 0-based row
    ordinal rendered as a decimal string. Field order follows the file.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    fmt = _infer_format(path, format)
    role = DatasetRole(role)
    name = name if name is not None else path.stem

    records: list[Record] = []
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file, expected a header row") from None
            if any(not col for col in header):
                raise DataError(f"{path}: header has an empty column name")
            id_pos = header.index("id") if "id" in header else None
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: malformed row at line {line_no}: expected "
                        f"{len(header)} cells, got {len(row)}"
                    )
                rec_id = row[id_pos] if id_pos is not None else str(len(records))
                fields = tuple(
                    (col, cell)
                    for pos, (col, cell) in enumerate(zip(header, row))
                    if pos != id_pos
                )
                records.append(Record(id=rec_id, fields=fields))
        columns = tuple(header)
    else:
        with path.open(encoding="utf-8") as fh:
            column_seen: list[str] = []
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}: malformed row at line {line_no}: {exc}") from None
                if not isinstance(obj, dict):
                    raise DataError(
                        f"{path}: malformed row at line {line_no}: expected an object"
                    )
                for key, value in obj.items():
                    if isinstance(value, (dict, list)):
                        raise DataError(
                            f"{path}: malformed row at line {line_no}: "
                            f"key {key!r} is not a scalar"
                        )
                    if key not in column_seen:
                        column_seen.append(key)
                rec_id = _render_scalar(obj["id"]) if "id" in obj else str(len(records))
                fields = tuple(
                    (k, _render_scalar(v)) for k, v in obj.items() if k != "id"
                )
                records.append(Record(id=rec_id, fields=fields))
        columns = tuple(column_seen) if column_seen else None

    return Dataset(name=name, role=role, records=tuple(records), column_names=columns)


def write_dataset(dataset: Dataset, path: str | Path, format: str | None = None) -> None:
    """Serialize a Dataset back to disk, preserving field keys, values and order."""
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        if dataset.column_names is not None:
            header = list(dataset.column_names)
        else:
            header = ["id"]
            for rec in dataset.records:
                for key in rec.keys:
                    if key not in header:
                        header.append(key)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for rec in dataset.records:
                row = []
                for col in header:
                    if col == "id" and rec.value("id") is None:
                        row.append(rec.id)
                    else:
                        row.append(rec.value(col) or "")
                writer.writerow(row)
    else:
        with path.open("w", encoding="utf-8") as fh:
            for rec in dataset.records:
                obj: dict[str, str] = {"id": rec.id}
                obj.update({k: v for k, v in rec.fields})
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_supervision(
    path: str | Path,
    base: Dataset | None = None,
    aux: Dataset | None = None,
) -> list[SupervisionPair] | list[SupervisionTriple]:
    """Load supervision CSV; two columns give pairs, three give triples.

    When datasets are supplied every referenced id must resolve; all
    offending rows are reported together.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"supervision file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        width = len(header)
        if width not in (2, 3):
            raise DataError(
                f"{path}: expected 2 columns (pairs) or 3 columns (triples), got {width}"
            )
        rows: list[tuple[str, ...]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(
                    f"{path}: malformed row at line {line_no}: expected {width} cells"
                )
            rows.append(tuple(row))

    base_ids = set(base.ids()) if base is not None else None
    aux_ids = set(aux.ids()) if aux is not None else None

    bad: list[str] = []
    if width == 2:
        pairs = [SupervisionPair(base_id=r[0], aux_id=r[1]) for r in rows]
        for line_no, pair in enumerate(pairs, start=2):
            if base_ids is not None and pair.base_id not in base_ids:
                bad.append(f"line {line_no}: base id {pair.base_id!r}")
            if aux_ids is not None and pair.aux_id not in aux_ids:
                bad.append(f"line {line_no}: aux id {pair.aux_id!r}")
        if bad:
            raise DataError(f"{path}: unresolvable ids: " + "; ".join(bad))
        return pairs

    triples = [
        SupervisionTriple(anchor_id=r[0], positive_id=r[1], negative_id=r[2]) for r in rows
    ]
    for line_no, triple in enumerate(triples, start=2):
        if base_ids is not None and triple.anchor_id not in base_ids:
            bad.append(f"line {line_no}: anchor id {triple.anchor_id!r}")
        if aux_ids is not None:
            if triple.positive_id not in aux_ids:
                bad.append(f"line {line_no}: positive id {triple.positive_id!r}")
            if triple.negative_id not in aux_ids:
                bad.append(f"line {line_no}: negative id {triple.negative_id!r}")
    if bad:
        raise DataError(f"{path}: unresolvable ids: " + "; ".join(bad))
    return triples


def write_pairs(pairs: Iterable[SupervisionPair], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["base_id", "aux_id"])
        for pair in pairs:
            writer.writerow([pair.base_id, pair.aux_id])


def dataset_from_rows(
    name: str,
    role: DatasetRole | str,
    rows: Sequence[tuple[str, Sequence[tuple[str, str]]]],
    column_names: Sequence[str] | None = None,
) -> Dataset:
    """Build a Dataset in memory; rows are (id, [(key, value), ...])."""
    records = tuple(Record(id=rid, fields=tuple(fields)) for rid, fields in rows)
    return Dataset(
        name=name,
        role=DatasetRole(role),
        records=records,
        column_names=tuple(column_names) if column_names is not None else None,
    )
