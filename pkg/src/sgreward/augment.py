"""Filtering of externally generated candidate relations and CoT record building.

Candidates pass two gates: rule validity (endpoints resolve to ground-truth
instances, predicate in vocabulary, no self-relations, no duplicates of
existing annotations) and semantic anchoring (embedding similarity to at
least one same-image ground-truth triplet reaching theta). Retained triplets
merge into the annotation to form training records.
"""

from __future__ import annotations

from dataclasses import dataclass

from .embeddings import EmbeddingSource, reward_sim
from .errors import EmptyBatchError
from .graph import DatasetProfile, RelationTriplet, SceneGraph, canonical_key
from .parsing import CotRecord, serialize_cot


@dataclass(frozen=True)
class CandidateTriplet:
    image_id: str
    subject: str
    predicate: str
    object: str
    provenance: str = "augmented"

    def spo(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)

    def sort_key(self):
        return (self.image_id, self.subject, self.predicate, self.object, self.provenance)


@dataclass(frozen=True)
class FilterConfig:
    theta: float = 0.80

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError("theta must lie in [0, 1]")


@dataclass(frozen=True)
class DropRecord:
    candidate: CandidateTriplet
    reason: str
    max_similarity: float | None = None

    def to_dict(self) -> dict:
        doc = {
            "image_id": self.candidate.image_id,
            "subject": self.candidate.subject,
            "predicate": self.candidate.predicate,
            "object": self.candidate.object,
            "reason": self.reason,
        }
        if self.max_similarity is not None:
            doc["max_similarity"] = self.max_similarity
        return doc


def validate_candidate(candidate: CandidateTriplet, gt: SceneGraph,
                       profile: DatasetProfile) -> tuple[bool, str | None]:
    """Rule gate; returns (ok, reason). Reasons are stable machine codes."""
    known = {obj.key for obj in gt.objects}
    if candidate.subject not in known or candidate.object not in known:
        return False, "DANGLING_INSTANCE"
    if candidate.predicate not in profile.predicates:
        return False, "UNKNOWN_PREDICATE"
    if candidate.subject == candidate.object:
        return False, "SELF_RELATION"
    if any(candidate.spo() == rel.spo() for rel in gt.relations):
        return False, "DUPLICATE"
    return True, None


def filter_candidates(candidates, gt: SceneGraph, cfg: FilterConfig,
                      source: EmbeddingSource,
                      profile: DatasetProfile) -> tuple[list[CandidateTriplet], list[DropRecord]]:
    """Split candidates into retained and dropped, with per-candidate reasons.

    Output order is canonical (sorted by candidate fields) so results do not
    depend on input order. Without any ground-truth relation to anchor to,
    everything is dropped.
    """
    ordered = sorted(candidates, key=CandidateTriplet.sort_key)
    retained: list[CandidateTriplet] = []
    dropped: list[DropRecord] = []

    gt_vectors = [source.embed(canonical_key(*rel.spo())) for rel in gt.relations]
    for candidate in ordered:
        if not gt_vectors:
            dropped.append(DropRecord(candidate, "NO_GT_ANCHOR"))
            continue
        ok, reason = validate_candidate(candidate, gt, profile)
        if not ok:
            dropped.append(DropRecord(candidate, reason))
            continue
        vec = source.embed(canonical_key(*candidate.spo()))
        max_sim = max(reward_sim(vec, gv) for gv in gt_vectors)
        if max_sim >= cfg.theta:
            retained.append(candidate)
        else:
            dropped.append(DropRecord(candidate, "SIMILARITY_BELOW_THRESHOLD", max_sim))
    return retained, dropped


def merge_retained(gt: SceneGraph, retained, profile: DatasetProfile) -> SceneGraph:
    """Ground truth plus retained candidates, typed via the taxonomy and deduplicated."""
    existing = {rel.spo() for rel in gt.relations}
    new_relations = list(gt.relations)
    for candidate in retained:
        if candidate.spo() in existing:
            continue
        existing.add(candidate.spo())
        new_relations.append(RelationTriplet(
            candidate.subject, candidate.predicate, candidate.object,
            profile.taxonomy[candidate.predicate]))
    return SceneGraph(gt.image_id, gt.width, gt.height, gt.objects, tuple(new_relations))


def build_sft_record(gt: SceneGraph, retained, profile: DatasetProfile) -> CotRecord:
    """Serialize the merged graph into a three-stage training record."""
    return serialize_cot(merge_retained(gt, retained, profile), profile)


def corpus_stats(graphs, profile: DatasetProfile, partition) -> dict:
    """Corpus-level statistics document (counts, densities, type diversity)."""
    graphs = list(graphs)
    if not graphs:
        raise EmptyBatchError("corpus_stats needs at least one graph")

    n_objects = 0
    n_relations = 0
    group_counts = {"head": 0, "body": 0, "tail": 0}
    group_types: dict[str, set] = {"head": set(), "body": set(), "tail": set()}
    triplet_types: set[tuple[str, str, str]] = set()
    for graph in graphs:
        n_objects += len(graph.objects)
        n_relations += len(graph.relations)
        instances = graph.instance_map()
        for rel in graph.relations:
            class_triple = (instances[rel.subject].category, rel.predicate,
                            instances[rel.object].category)
            triplet_types.add(class_triple)
            group = partition.group_of(rel.predicate)
            if group is not None:
                group_counts[group] += 1
                group_types[group].add(class_triple)

    return {
        "images": len(graphs),
        "objects": n_objects,
        "relations": n_relations,
        "objects_per_image": n_objects / len(graphs),
        "relations_per_image": n_relations / len(graphs),
        "triplet_types": len(triplet_types),
        "group_counts": group_counts,
        "group_types": {g: len(ts) for g, ts in group_types.items()},
    }
