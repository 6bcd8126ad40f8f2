"""Scene graph data model: boxes, instances, triplets, graphs, dataset profiles.

All types are immutable after construction and safe to share across threads.
Construction enforces only local structural sanity (finite coordinates,
positive box area, positive instance index); graph-level consistency against
a dataset vocabulary is checked by :func:`validate_graph`, which reports
violations as data instead of raising.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import KeyFormatError

# Boxes may overshoot the image by at most this many pixels before the
# overshoot stops being clampable and becomes a violation.
CLAMP_TOLERANCE_PX = 2.0

_INSTANCE_KEY_RE = re.compile(r"^(.+)\.([1-9][0-9]*)$")
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in absolute pixel coordinates, corners (x1,y1)-(x2,y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if min(coords) < 0:
            raise ValueError(f"box coordinates must be non-negative, got {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"box must have positive area, got {coords}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def clamped(self, width: float, height: float) -> "BoundingBox":
        """Clamp into [0,width] x [0,height]; caller checks the tolerance."""
        return BoundingBox(
            min(self.x1, width), min(self.y1, height),
            min(self.x2, width), min(self.y2, height),
        )

    def overshoot(self, width: float, height: float) -> float:
        """Largest distance any coordinate sticks out of the image."""
        return max(0.0, self.x1 - width, self.x2 - width, self.y1 - height, self.y2 - height)


@dataclass(frozen=True)
class ObjectInstance:
    """One grounded object: category token plus a disambiguating index."""

    category: str
    index: int
    box: BoundingBox

    def __post_init__(self):
        if not self.category:
            raise ValueError("category must be non-empty")
        if self.index < 1:
            raise ValueError(f"instance index must be >= 1, got {self.index}")

    @property
    def key(self) -> str:
        return f"{self.category}.{self.index}"


@dataclass(frozen=True)
class RelationTriplet:
    """Directed relation between two instance keys, tagged with its taxonomy type."""

    subject: str
    predicate: str
    object: str
    rel_type: str

    def spo(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


@dataclass(frozen=True)
class SceneGraph:
    image_id: str
    width: int
    height: int
    objects: tuple[ObjectInstance, ...]
    relations: tuple[RelationTriplet, ...]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "relations", tuple(self.relations))

    def instance_map(self) -> dict[str, ObjectInstance]:
        return {obj.key: obj for obj in self.objects}

    def category_set(self) -> frozenset[str]:
        return frozenset(obj.category for obj in self.objects)


@dataclass(frozen=True)
class DatasetProfile:
    """Closed-set vocabulary plus the frequency/taxonomy data rewards rely on.

    ``predicate_freq`` holds smoothed relative frequencies: every predicate in
    the vocabulary gets a strictly positive value, with unobserved predicates
    assigned the minimum observed frequency (unseen is treated as rarest).
    ``rel_types`` fixes the order relation groups appear in serialized output.
    """

    categories: frozenset[str]
    predicates: frozenset[str]
    predicate_freq: dict[str, float]
    taxonomy: dict[str, str]
    rel_types: tuple[str, ...]
    train_triplet_catalog: frozenset[tuple[str, str, str]] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "categories", frozenset(self.categories))
        object.__setattr__(self, "predicates", frozenset(self.predicates))
        object.__setattr__(self, "rel_types", tuple(self.rel_types))
        object.__setattr__(self, "train_triplet_catalog", frozenset(self.train_triplet_catalog))
        if not self.rel_types:
            raise ValueError("profile needs at least one relation type")
        if len(set(self.rel_types)) != len(self.rel_types):
            raise ValueError("rel_types must be distinct")
        if set(self.taxonomy) != set(self.predicates):
            raise ValueError("taxonomy must cover every predicate exactly once")
        bad_types = set(self.taxonomy.values()) - set(self.rel_types)
        if bad_types:
            raise ValueError(f"taxonomy uses unknown relation types: {sorted(bad_types)}")
        if set(self.predicate_freq) != set(self.predicates):
            raise ValueError("predicate_freq must cover every predicate (apply smoothing first)")
        if any(f <= 0 or not math.isfinite(f) for f in self.predicate_freq.values()):
            raise ValueError("smoothed frequencies must be finite and > 0")

    @classmethod
    def from_counts(
        cls,
        categories,
        predicate_counts: dict[str, float],
        taxonomy: dict[str, str],
        rel_types,
        train_triplets=(),
    ) -> "DatasetProfile":
        """Build a profile from raw training counts, smoothing zero counts.

        Predicates absent from ``predicate_counts`` (or counted zero) receive
        the minimum positive relative frequency; when nothing was observed at
        all, every predicate gets the uniform 1/N.
        """
        predicates = frozenset(taxonomy)
        total = float(sum(c for c in predicate_counts.values() if c > 0))
        if total > 0:
            freq = {p: c / total for p, c in predicate_counts.items() if c > 0}
            f_min = min(freq.values())
            smoothed = {p: freq.get(p, f_min) for p in predicates}
        else:
            smoothed = {p: 1.0 / len(predicates) for p in predicates}
        return cls(
            categories=frozenset(categories),
            predicates=predicates,
            predicate_freq=smoothed,
            taxonomy=dict(taxonomy),
            rel_types=tuple(rel_types),
            train_triplet_catalog=frozenset(tuple(t) for t in train_triplets),
        )

    def freq_bounds(self) -> tuple[float, float]:
        """(f_min, f_max) over the smoothed frequencies."""
        values = self.predicate_freq.values()
        return min(values), max(values)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    # Position of the offending object/relation; objects sort before relations.
    kind: str
    index: int

    def sort_key(self):
        return (0 if self.kind == "object" else 1, self.index, self.code)


def parse_instance_key(key: str) -> tuple[str, int]:
    """Split ``"category.index"``; raises KeyFormatError on malformed keys."""
    if not isinstance(key, str):
        raise KeyFormatError(f"instance key must be a string, got {type(key).__name__}")
    m = _INSTANCE_KEY_RE.match(key)
    if not m:
        raise KeyFormatError(f"malformed instance key {key!r}: expected 'category.index'")
    return m.group(1), int(m.group(2))


def canonical_token(token: str) -> str:
    """Lowercased, whitespace-collapsed form used as an embedding key."""
    return _WS_RE.sub(" ", token.strip()).lower()


def canonical_key(subject: str, predicate: str, object_: str) -> str:
    """Class-level embedding key for a triplet, e.g. ``"person wearing shirt"``.

    Instance suffixes are stripped; tokens are lowercased and joined by single
    spaces. Deterministic, and idempotent once the output is re-suffixed.
    """
    subj_cat, _ = parse_instance_key(subject)
    obj_cat, _ = parse_instance_key(object_)
    parts = (canonical_token(subj_cat), canonical_token(predicate), canonical_token(obj_cat))
    if not all(parts):
        raise KeyFormatError(f"empty token in triplet ({subject!r}, {predicate!r}, {object_!r})")
    return " ".join(parts)


def validate_graph(graph: SceneGraph, profile: DatasetProfile) -> list[Violation]:
    """Report every way ``graph`` breaks the closed-set and structural rules.

    Violations are data, not failures: an empty list means the graph is valid
    against the profile. The report order is deterministic (objects before
    relations, then by position, then by code).
    """
    violations: list[Violation] = []

    seen_keys: set[str] = set()
    per_category: dict[str, list[int]] = {}
    for pos, obj in enumerate(graph.objects):
        if obj.category not in profile.categories:
            violations.append(Violation(
                "UNKNOWN_CATEGORY", f"category {obj.category!r} not in vocabulary", "object", pos))
        if obj.key in seen_keys:
            violations.append(Violation(
                "DUPLICATE_INSTANCE", f"instance key {obj.key!r} appears more than once", "object", pos))
        seen_keys.add(obj.key)
        per_category.setdefault(obj.category, []).append(obj.index)
        if obj.box.overshoot(graph.width, graph.height) > CLAMP_TOLERANCE_PX:
            violations.append(Violation(
                "BOX_OUT_OF_BOUNDS",
                f"box of {obj.key!r} exceeds {graph.width}x{graph.height} by more than "
                f"{CLAMP_TOLERANCE_PX:g}px", "object", pos))

    for category, indices in per_category.items():
        if sorted(indices) != list(range(1, len(indices) + 1)):
            pos = next(i for i, o in enumerate(graph.objects) if o.category == category)
            violations.append(Violation(
                "NONCONTIGUOUS_INDEX",
                f"indices for {category!r} must be 1..{len(indices)}, got {sorted(indices)}",
                "object", pos))

    seen_triplets: set[tuple[str, str, str]] = set()
    for pos, rel in enumerate(graph.relations):
        for endpoint in (rel.subject, rel.object):
            if endpoint not in seen_keys:
                violations.append(Violation(
                    "DANGLING_INSTANCE", f"relation references missing instance {endpoint!r}",
                    "relation", pos))
        if rel.subject == rel.object:
            violations.append(Violation(
                "SELF_RELATION", f"relation {rel.spo()} relates an instance to itself",
                "relation", pos))
        if rel.predicate not in profile.predicates:
            violations.append(Violation(
                "UNKNOWN_PREDICATE", f"predicate {rel.predicate!r} not in vocabulary",
                "relation", pos))
        elif profile.taxonomy[rel.predicate] != rel.rel_type:
            violations.append(Violation(
                "TYPE_MISMATCH",
                f"predicate {rel.predicate!r} is {profile.taxonomy[rel.predicate]!r}, "
                f"tagged {rel.rel_type!r}", "relation", pos))
        if rel.spo() in seen_triplets:
            violations.append(Violation(
                "DUPLICATE_TRIPLET", f"duplicate triplet {rel.spo()}", "relation", pos))
        seen_triplets.add(rel.spo())

    violations.sort(key=Violation.sort_key)
    return violations


def canonical_form(graph: SceneGraph, profile: DatasetProfile) -> SceneGraph:
    """Renumber and reorder a valid graph into its serialization order.

    Categories keep first-appearance order; instances are grouped category by
    category with suffixes reassigned in annotation order; relations are
    grouped by taxonomy type (profile order) and sorted by subject position,
    then object position, then predicate.
    """
    category_order: list[str] = []
    for obj in graph.objects:
        if obj.category not in category_order:
            category_order.append(obj.category)

    counters: dict[str, int] = {}
    rename: dict[str, str] = {}
    regrouped: dict[str, list[ObjectInstance]] = {c: [] for c in category_order}
    for obj in graph.objects:
        counters[obj.category] = counters.get(obj.category, 0) + 1
        renamed = ObjectInstance(obj.category, counters[obj.category], obj.box)
        rename[obj.key] = renamed.key
        regrouped[obj.category].append(renamed)

    objects = tuple(obj for cat in category_order for obj in regrouped[cat])
    position = {obj.key: i for i, obj in enumerate(objects)}

    by_type: dict[str, list[RelationTriplet]] = {t: [] for t in profile.rel_types}
    for rel in graph.relations:
        mapped = RelationTriplet(
            rename[rel.subject], rel.predicate, rename[rel.object],
            profile.taxonomy[rel.predicate])
        by_type[mapped.rel_type].append(mapped)
    for rels in by_type.values():
        rels.sort(key=lambda r: (position[r.subject], position[r.object], r.predicate))

    relations = tuple(rel for t in profile.rel_types for rel in by_type[t])
    return SceneGraph(graph.image_id, graph.width, graph.height, objects, relations)
