"""Load, validate, serialize, and subsample annotated NER datasets.

On-disk format: one JSON object per line with fields exactly
{id, split ("train"|"test"), text, entities: [{surface, type}]}.
The schema file is a single JSON object {name, open_schema, labels:
[{label, description}]}.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateId, MalformedRecord, UnknownLabel
from .textnorm import mix_seed


@dataclass(frozen=True)
class TypedEntity:
    surface: str
    entity_type: str


@dataclass(frozen=True)
class Document:
    id: str
    text: str


@dataclass(frozen=True)
class GoldInstance:
    document: Document
    entities: tuple[TypedEntity, ...]


@dataclass(frozen=True)
class SchemaLabel:
    label: str
    description: str | None = None


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    labels: tuple[SchemaLabel, ...]
    open_schema: bool = False

    def label_names(self) -> tuple[str, ...]:
        return tuple(l.label for l in self.labels)

    @property
    def single_type(self) -> bool:
        return len(self.labels) == 1

    def has_descriptions(self) -> bool:
        return all(l.description for l in self.labels)


@dataclass(frozen=True)
class Dataset:
    schema: DatasetSchema
    train_pool: tuple[GoldInstance, ...]
    test: tuple[GoldInstance, ...]


def load_schema(schema_path: str | Path) -> DatasetSchema:
    with open(schema_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    labels = tuple(
        SchemaLabel(label=l["label"], description=l.get("description"))
        for l in raw["labels"]
    )
    if not labels:
        raise MalformedRecord(f"{schema_path}: schema has no labels")
    return DatasetSchema(
        name=raw["name"], labels=labels, open_schema=bool(raw.get("open_schema", False))
    )


def load_dataset(data_path: str | Path, schema_path: str | Path) -> Dataset:
    """Load and validate a line-delimited dataset against its schema."""
    schema = load_schema(schema_path)
    valid_labels = set(schema.label_names())
    seen_ids: set[str] = set()
    train: list[GoldInstance] = []
    test: list[GoldInstance] = []
    with open(data_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{data_path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                doc_id = rec["id"]
                split = rec["split"]
                text = rec["text"]
                raw_entities = rec["entities"]
            except (KeyError, TypeError) as exc:
                raise MalformedRecord(f"{data_path}:{lineno}: missing field {exc}") from exc
            if not isinstance(text, str) or not text:
                raise MalformedRecord(f"{data_path}:{lineno}: empty text")
            if split not in ("train", "test"):
                raise MalformedRecord(f"{data_path}:{lineno}: bad split {split!r}")
            if doc_id in seen_ids:
                raise DuplicateId(f"{data_path}:{lineno}: duplicate id {doc_id!r}")
            seen_ids.add(doc_id)
            entities = []
            for ent in raw_entities:
                surface = ent.get("surface", "")
                etype = ent.get("type", "")
                if not surface:
                    raise MalformedRecord(f"{data_path}:{lineno}: empty entity surface")
                if etype not in valid_labels:
                    raise UnknownLabel(
                        f"{data_path}:{lineno}: label {etype!r} not in schema "
                        f"{sorted(valid_labels)}"
                    )
                entities.append(TypedEntity(surface=surface, entity_type=etype))
            inst = GoldInstance(Document(id=doc_id, text=text), tuple(entities))
            (train if split == "train" else test).append(inst)
    return Dataset(schema=schema, train_pool=tuple(train), test=tuple(test))


def save_dataset(dataset: Dataset, data_path: str | Path) -> None:
    """Serialize back to the line-delimited interchange format."""
    with open(data_path, "w", encoding="utf-8") as fh:
        for split, instances in (("train", dataset.train_pool), ("test", dataset.test)):
            for inst in instances:
                rec = {
                    "id": inst.document.id,
                    "split": split,
                    "text": inst.document.text,
                    "entities": [
                        {"surface": e.surface, "type": e.entity_type}
                        for e in inst.entities
                    ],
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def subsample_test(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Replace the test split with n distinct instances drawn without replacement.

    Identity when n >= |test|. Pure function of (dataset, n, seed); the
    surviving instances keep their original split order.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= len(dataset.test):
        return dataset
    rng = random.Random(mix_seed(seed, "subsample", len(dataset.test), n))
    picked = set(rng.sample(range(len(dataset.test)), n))
    kept = tuple(inst for i, inst in enumerate(dataset.test) if i in picked)
    return Dataset(schema=dataset.schema, train_pool=dataset.train_pool, test=kept)
