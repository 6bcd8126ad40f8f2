"""Shared fixtures: a toy dataset profile, synthetic embeddings, graph generators."""

from __future__ import annotations

import numpy as np
import pytest

from sgreward.embeddings import EmbeddingTable, synthetic_vector
from sgreward.graph import (
    BoundingBox,
    DatasetProfile,
    ObjectInstance,
    RelationTriplet,
    SceneGraph,
    canonical_form,
    canonical_key,
)

CATEGORIES = (
    "person", "dog", "cat", "tree", "car", "building",
    "shirt", "table", "chair", "window", "sign", "pole",
)

TAXONOMY = {
    "on": "spatial", "near": "spatial", "behind": "spatial",
    "has": "possessive", "wearing": "possessive", "of": "possessive",
    "riding": "interactive", "holding": "interactive", "looking at": "interactive",
}

PREDICATE_COUNTS = {
    "on": 500, "near": 200, "behind": 100,
    "has": 80, "wearing": 40, "of": 20,
    "riding": 10, "holding": 5, "looking at": 2,
}

REL_TYPES = ("spatial", "possessive", "interactive")

TRAIN_TRIPLETS = (
    ("person", "on", "chair"), ("person", "wearing", "shirt"),
    ("dog", "near", "tree"), ("car", "near", "building"),
    ("person", "riding", "dog"), ("window", "of", "building"),
    ("sign", "on", "pole"), ("cat", "on", "table"),
)

IMAGE_W, IMAGE_H = 640, 480


def make_profile() -> DatasetProfile:
    return DatasetProfile.from_counts(
        CATEGORIES, PREDICATE_COUNTS, TAXONOMY, REL_TYPES, TRAIN_TRIPLETS)


def make_table(dim: int = 48) -> EmbeddingTable:
    """Synthetic table covering every token and class-level triplet string.

    A modest dimension keeps the full cross product cheap while staying
    generic enough that random similarities are informative.
    """
    keys = set(CATEGORIES) | set(TAXONOMY)
    for s in CATEGORIES:
        for p in TAXONOMY:
            for o in CATEGORIES:
                keys.add(f"{s} {p} {o}")
    return EmbeddingTable({k: synthetic_vector(k, dim) for k in keys},
                          origin="<synthetic>")


@pytest.fixture(scope="session")
def profile() -> DatasetProfile:
    return make_profile()


@pytest.fixture(scope="session")
def table() -> EmbeddingTable:
    return make_table()


def random_box(rng: np.random.Generator) -> BoundingBox:
    x1 = rng.uniform(0, IMAGE_W - 20)
    y1 = rng.uniform(0, IMAGE_H - 20)
    w = rng.uniform(10, IMAGE_W - x1)
    h = rng.uniform(10, IMAGE_H - y1)
    return BoundingBox(x1, y1, min(x1 + w, IMAGE_W), min(y1 + h, IMAGE_H))


def random_graph(rng: np.random.Generator, profile: DatasetProfile,
                 image_id: str = "img", max_objects: int = 8,
                 max_relations: int = 12, min_objects: int = 1) -> SceneGraph:
    """A valid scene graph in canonical order."""
    n_objects = int(rng.integers(min_objects, max_objects + 1))
    cats = list(rng.choice(CATEGORIES, size=n_objects, replace=True))
    counters: dict[str, int] = {}
    objects = []
    for cat in cats:
        counters[cat] = counters.get(cat, 0) + 1
        objects.append(ObjectInstance(cat, counters[cat], random_box(rng)))

    keys = [o.key for o in objects]
    relations = []
    seen = set()
    if len(keys) >= 2:
        n_rel = int(rng.integers(0, max_relations + 1))
        predicates = sorted(profile.predicates)
        for _ in range(n_rel):
            s, o = rng.choice(len(keys), size=2, replace=False)
            p = predicates[int(rng.integers(0, len(predicates)))]
            spo = (keys[int(s)], p, keys[int(o)])
            if spo in seen:
                continue
            seen.add(spo)
            relations.append(RelationTriplet(*spo, profile.taxonomy[p]))

    graph = SceneGraph(image_id, IMAGE_W, IMAGE_H, tuple(objects), tuple(relations))
    return canonical_form(graph, profile)


def perturb_graph(rng: np.random.Generator, gt: SceneGraph,
                  profile: DatasetProfile) -> SceneGraph:
    """A plausible prediction: jittered boxes, dropped/added objects and relations."""
    objects = []
    kept_keys = {}
    counters: dict[str, int] = {}
    for obj in gt.objects:
        if rng.random() < 0.15:  # miss this object
            continue
        box = obj.box
        if rng.random() < 0.7:
            jitter = rng.uniform(-25, 25, size=4)
            x1 = min(max(0.0, box.x1 + jitter[0]), IMAGE_W - 2)
            y1 = min(max(0.0, box.y1 + jitter[1]), IMAGE_H - 2)
            x2 = max(x1 + 1.0, min(float(IMAGE_W), box.x2 + jitter[2]))
            y2 = max(y1 + 1.0, min(float(IMAGE_H), box.y2 + jitter[3]))
            box = BoundingBox(x1, y1, x2, y2)
        category = obj.category
        if rng.random() < 0.1:
            category = str(rng.choice(CATEGORIES))
        counters[category] = counters.get(category, 0) + 1
        new_obj = ObjectInstance(category, counters[category], box)
        objects.append(new_obj)
        kept_keys[obj.key] = new_obj.key

    if rng.random() < 0.2 or not objects:  # hallucinate an extra object
        category = str(rng.choice(CATEGORIES))
        counters[category] = counters.get(category, 0) + 1
        objects.append(ObjectInstance(category, counters[category], random_box(rng)))

    keys = [o.key for o in objects]
    relations = []
    seen = set()
    predicates = sorted(profile.predicates)
    for rel in gt.relations:
        if rng.random() < 0.25:
            continue
        s = kept_keys.get(rel.subject)
        o = kept_keys.get(rel.object)
        if s is None or o is None or s == o:
            continue
        p = rel.predicate
        if rng.random() < 0.15:
            p = predicates[int(rng.integers(0, len(predicates)))]
        if (s, p, o) in seen:
            continue
        seen.add((s, p, o))
        relations.append(RelationTriplet(s, p, o, profile.taxonomy[p]))
    if len(keys) >= 2 and rng.random() < 0.4:
        s, o = rng.choice(len(keys), size=2, replace=False)
        p = predicates[int(rng.integers(0, len(predicates)))]
        spo = (keys[int(s)], p, keys[int(o)])
        if spo not in seen:
            relations.append(RelationTriplet(*spo, profile.taxonomy[p]))

    graph = SceneGraph(gt.image_id, gt.width, gt.height, tuple(objects), tuple(relations))
    return canonical_form(graph, profile)


def class_key(graph: SceneGraph, rel: RelationTriplet) -> str:
    return canonical_key(rel.subject, rel.predicate, rel.object)
