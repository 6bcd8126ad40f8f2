"""File formats and the in-memory ground-truth store.

Line-delimited JSON throughout:

* ground truth: ``{"image_id", "width", "height", "objects": [{"id",
  "category", "bbox"}], "relations": [{"subject", "predicate", "object",
  "type"}]}``
* completions: ``{"sample_id", "image_id", "text"}``
* candidates:  ``{"image_id", "subject", "predicate", "object"}``

The profile is a single JSON document with the vocabulary, taxonomy, relation
type order, training predicate counts (or ready-made frequencies), and the
class-level training triplet catalog.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .augment import CandidateTriplet
from .errors import IngestionError, UnknownImageError
from .graph import (
    CLAMP_TOLERANCE_PX,
    BoundingBox,
    DatasetProfile,
    ObjectInstance,
    RelationTriplet,
    SceneGraph,
    parse_instance_key,
    validate_graph,
)


def load_profile(path) -> DatasetProfile:
    path = Path(path)
    doc = json.loads(path.read_text())
    try:
        categories = doc["categories"]
        taxonomy = doc["taxonomy"]
        rel_types = doc["rel_types"]
    except KeyError as exc:
        raise IngestionError(f"{path}: profile is missing required field {exc}")
    train = doc.get("train_triplets", [])
    if "predicate_counts" in doc:
        return DatasetProfile.from_counts(categories, doc["predicate_counts"], taxonomy,
                                          rel_types, train)
    profile = DatasetProfile(
        categories=frozenset(categories),
        predicates=frozenset(taxonomy),
        predicate_freq=doc["predicate_freq"],
        taxonomy=taxonomy,
        rel_types=tuple(rel_types),
        train_triplet_catalog=frozenset(tuple(t) for t in train),
    )
    return profile


def save_profile(profile: DatasetProfile, path) -> None:
    doc = {
        "categories": sorted(profile.categories),
        "taxonomy": dict(sorted(profile.taxonomy.items())),
        "rel_types": list(profile.rel_types),
        "predicate_freq": dict(sorted(profile.predicate_freq.items())),
        "train_triplets": sorted(list(t) for t in profile.train_triplet_catalog),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def graph_from_record(record: dict, clamp: bool = True) -> SceneGraph:
    """Build a SceneGraph from one ground-truth record.

    Boxes overshooting the image by at most the clamp tolerance are pulled
    back in; anything worse is left intact for validation to flag.
    """
    width, height = int(record["width"]), int(record["height"])
    objects = []
    for entry in record["objects"]:
        category, index = parse_instance_key(entry["id"])
        if entry.get("category", category) != category:
            raise IngestionError(
                f"object {entry['id']!r} declares category {entry['category']!r}")
        box = BoundingBox(*[float(v) for v in entry["bbox"]])
        if clamp and 0 < box.overshoot(width, height) <= CLAMP_TOLERANCE_PX:
            box = box.clamped(width, height)
        objects.append(ObjectInstance(category, index, box))
    relations = [
        RelationTriplet(r["subject"], r["predicate"], r["object"], r["type"])
        for r in record.get("relations", [])
    ]
    return SceneGraph(str(record["image_id"]), width, height, tuple(objects), tuple(relations))


def graph_to_record(graph: SceneGraph) -> dict:
    return {
        "image_id": graph.image_id,
        "width": graph.width,
        "height": graph.height,
        "objects": [
            {"id": o.key, "category": o.category,
             "bbox": [o.box.x1, o.box.y1, o.box.x2, o.box.y2]}
            for o in graph.objects
        ],
        "relations": [
            {"subject": r.subject, "predicate": r.predicate, "object": r.object,
             "type": r.rel_type}
            for r in graph.relations
        ],
    }


def _iter_jsonl(path):
    path = Path(path)
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON ({exc})")


def load_graphs(path) -> list[SceneGraph]:
    return [graph_from_record(record) for _, record in _iter_jsonl(path)]


def save_graphs(graphs, path) -> None:
    with Path(path).open("w") as fh:
        for graph in graphs:
            fh.write(json.dumps(graph_to_record(graph)) + "\n")


def load_completions(path) -> list[dict]:
    items = []
    for lineno, record in _iter_jsonl(path):
        missing = {"sample_id", "image_id", "text"} - set(record)
        if missing:
            raise IngestionError(f"{path}:{lineno}: completion missing {sorted(missing)}")
        items.append(record)
    return items


def load_candidates(path) -> list[CandidateTriplet]:
    candidates = []
    for lineno, record in _iter_jsonl(path):
        try:
            candidates.append(CandidateTriplet(
                image_id=str(record["image_id"]),
                subject=record["subject"],
                predicate=record["predicate"],
                object=record["object"],
                provenance=record.get("provenance", "augmented"),
            ))
        except KeyError as exc:
            raise IngestionError(f"{path}:{lineno}: candidate missing field {exc}")
    return candidates


@dataclass
class GroundTruthStore:
    """Read-only map image_id -> validated SceneGraph plus its profile."""

    profile: DatasetProfile
    graphs: dict[str, SceneGraph]

    @classmethod
    def load(cls, profile_path, gt_path) -> "GroundTruthStore":
        profile = load_profile(profile_path)
        graphs: dict[str, SceneGraph] = {}
        for _, record in _iter_jsonl(gt_path):
            graph = graph_from_record(record)
            violations = validate_graph(graph, profile)
            if violations:
                raise IngestionError(
                    f"ground-truth graph {graph.image_id!r} is invalid: "
                    + "; ".join(f"{v.code}: {v.message}" for v in violations[:3]))
            if graph.image_id in graphs:
                raise IngestionError(f"duplicate image_id {graph.image_id!r}")
            graphs[graph.image_id] = graph
        return cls(profile=profile, graphs=graphs)

    def get(self, image_id: str) -> SceneGraph:
        graph = self.graphs.get(image_id)
        if graph is None:
            raise UnknownImageError(f"image_id {image_id!r} not in ground-truth store",
                                    image_id=image_id)
        return graph

    def __len__(self) -> int:
        return len(self.graphs)
