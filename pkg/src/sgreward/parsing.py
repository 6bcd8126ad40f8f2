"""Parsing and serialization of three-stage tagged completions.

A completion carries three tagged blocks, in this order when well formed:

    <CATEGORY> ["person", "dog"] </CATEGORY>
    <OBJECT> [{"id": "person.1", "bbox": [x1, y1, x2, y2]}, ...] </OBJECT>
    <RELATION> {"spatial": [["person.1", "on", "bench.1"], ...], ...} </RELATION>

Prose outside the tag pairs is ignored. Each stage is judged independently
and the three validity flags cascade: a later stage that references content
of a broken earlier stage cannot itself be valid. The assembled graph is
present exactly when all three flags are true.

Stage rules (all must hold for the flag to be true):

* shared: the opening and closing tag each appear exactly once, in order,
  and the payload between them is strict JSON (no NaN/Infinity).
* CATEGORY: array of distinct strings, all in the profile vocabulary.
* OBJECT: array of ``{"id", "bbox"}`` objects (no extra keys); ids are
  well-formed ``category.index`` keys over vocabulary categories, unique,
  with per-category indices contiguous from 1; boxes are four finite
  non-negative numbers with positive area. When image dimensions are known,
  boxes overshooting by at most 2px are clamped and larger overshoots
  invalidate the stage. When the CATEGORY stage is valid, every instance
  category must be listed there.
* RELATION: object whose keys are exactly the profile's relation types, each
  an array of ``[subject, predicate, object]`` string triples; predicates in
  vocabulary and filed under their taxonomy type; endpoints well-formed, not
  self-referential, not duplicated, and resolving to OBJECT-stage ids
  (an unresolvable reference invalidates the stage; if the OBJECT payload was
  unreadable, only an all-empty RELATION stage can be valid).

Parsing never raises on malformed input; malformedness lands in the flags.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .errors import EmptyBatchError, SerializeInvalidGraphError
from .graph import (
    CLAMP_TOLERANCE_PX,
    BoundingBox,
    DatasetProfile,
    ObjectInstance,
    RelationTriplet,
    SceneGraph,
    canonical_form,
    validate_graph,
)

STAGE_TAGS = ("CATEGORY", "OBJECT", "RELATION")

_INSTANCE_ID_RE = re.compile(r"^(.+)\.([1-9][0-9]*)$")


@dataclass(frozen=True)
class ParsedCompletion:
    """Outcome of parsing one completion; malformedness is data, not an error."""

    category_stage: tuple[str, ...] | None
    object_stage: tuple[ObjectInstance, ...] | None
    relation_stage: dict[str, tuple[RelationTriplet, ...]] | None
    stage_valid: tuple[bool, bool, bool]
    graph: SceneGraph | None
    stage_errors: tuple[tuple[str, ...], ...] = ((), (), ())

    @property
    def valid_stage_count(self) -> int:
        return sum(self.stage_valid)


@dataclass(frozen=True)
class CotRecord:
    """A serialized training record: prompt reference plus three-stage response text."""

    prompt_ref: str
    response_text: str


def _reject_constant(name):
    raise ValueError(f"non-finite JSON constant {name}")


def _extract_payload(text: str, tag: str) -> tuple[str | None, str | None]:
    """Return (payload, error). Exactly one open and one close tag required."""
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    n_open, n_close = text.count(open_tag), text.count(close_tag)
    if n_open == 0 and n_close == 0:
        return None, "missing_tags"
    if n_open != 1 or n_close != 1:
        return None, "duplicate_or_unbalanced_tags"
    start = text.index(open_tag) + len(open_tag)
    end = text.index(close_tag)
    if end < start:
        return None, "tags_out_of_order"
    return text[start:end], None


def _parse_json(payload: str):
    return json.loads(payload, parse_constant=_reject_constant)


def _check_category_stage(payload, profile: DatasetProfile):
    if not isinstance(payload, list) or not all(isinstance(t, str) for t in payload):
        return None, ["not_a_string_array"]
    errors = []
    if len(set(payload)) != len(payload):
        errors.append("duplicate_category")
    unknown = [t for t in payload if t not in profile.categories]
    if unknown:
        errors.append("unknown_category")
    return tuple(payload), errors


def _number(value) -> float | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _check_object_stage(payload, profile: DatasetProfile, width, height):
    """Return (instances, declared_ids, errors).

    Schema breaks (wrong entry shape, non-numeric bbox) make the whole payload
    unreadable; content problems (unknown category, degenerate box, duplicate
    or gapped ids) are recorded per entry while the rest keeps parsing, so
    the RELATION stage can still resolve references against declared ids.
    """
    if not isinstance(payload, list):
        return None, None, ["not_an_array"]
    errors: list[str] = []
    instances: list[ObjectInstance] = []
    declared_ids: set[str] = set()
    per_category: dict[str, list[int]] = {}
    for entry in payload:
        if (not isinstance(entry, dict) or set(entry) != {"id", "bbox"}
                or not isinstance(entry["id"], str)):
            return None, None, ["bad_entry_shape"]
        bbox = entry["bbox"]
        if not (isinstance(bbox, list) and len(bbox) == 4):
            return None, None, ["bad_bbox_shape"]
        coords = [_number(v) for v in bbox]
        if any(c is None for c in coords):
            return None, None, ["bad_bbox_shape"]

        obj_id = entry["id"]
        m = _INSTANCE_ID_RE.match(obj_id)
        if not m:
            errors.append("malformed_instance_id")
            continue
        category, index = m.group(1), int(m.group(2))
        if category not in profile.categories:
            errors.append("unknown_category")
        if obj_id in declared_ids:
            errors.append("duplicate_instance_id")
        declared_ids.add(obj_id)
        per_category.setdefault(category, []).append(index)

        x1, y1, x2, y2 = coords
        if min(coords) < 0 or not (x1 < x2 and y1 < y2):
            errors.append("degenerate_box")
            continue
        box = BoundingBox(x1, y1, x2, y2)
        if width is not None and height is not None:
            if box.overshoot(width, height) > CLAMP_TOLERANCE_PX:
                errors.append("box_out_of_bounds")
                continue
            box = box.clamped(width, height)
        instances.append(ObjectInstance(category, index, box))

    for category, indices in per_category.items():
        if sorted(indices) != list(range(1, len(indices) + 1)):
            errors.append("noncontiguous_index")
            break

    return tuple(instances), declared_ids, errors


def _check_relation_stage(payload, profile: DatasetProfile, known_ids: set[str] | None):
    if not isinstance(payload, dict) or set(payload) != set(profile.rel_types):
        return None, ["bad_group_keys"]
    errors: list[str] = []
    groups: dict[str, tuple[RelationTriplet, ...]] = {}
    seen: set[tuple[str, str, str]] = set()
    for rel_type in profile.rel_types:
        entries = payload[rel_type]
        if not isinstance(entries, list):
            return None, ["bad_group_shape"]
        triplets: list[RelationTriplet] = []
        for entry in entries:
            if not (isinstance(entry, list) and len(entry) == 3
                    and all(isinstance(v, str) for v in entry)):
                return None, ["bad_triplet_shape"]
            subject, predicate, object_ = entry
            if not (_INSTANCE_ID_RE.match(subject) and _INSTANCE_ID_RE.match(object_)):
                errors.append("malformed_instance_id")
                continue
            if predicate not in profile.predicates:
                errors.append("unknown_predicate")
                continue
            if profile.taxonomy[predicate] != rel_type:
                errors.append("predicate_in_wrong_group")
            if subject == object_:
                errors.append("self_relation")
            if (subject, predicate, object_) in seen:
                errors.append("duplicate_triplet")
            seen.add((subject, predicate, object_))
            if known_ids is None or subject not in known_ids or object_ not in known_ids:
                errors.append("unresolvable_reference")
            triplets.append(RelationTriplet(subject, predicate, object_,
                                            profile.taxonomy[predicate]))
        groups[rel_type] = tuple(triplets)
    return groups, errors


def parse_completion(text: str, profile: DatasetProfile,
                     width: int | None = None, height: int | None = None) -> ParsedCompletion:
    """Parse arbitrary model output; never raises on malformed input.

    ``width``/``height`` enable the box clamping policy; scoring passes the
    ground-truth image dimensions. Without them the assembled graph gets
    dimensions just large enough to contain its boxes.
    """
    if not isinstance(text, str):
        text = str(text)

    stage_payloads = []
    stage_errors: list[list[str]] = []
    for tag in STAGE_TAGS:
        payload, err = _extract_payload(text, tag)
        if err is not None:
            stage_payloads.append(None)
            stage_errors.append([err])
            continue
        try:
            stage_payloads.append(_parse_json(payload))
            stage_errors.append([])
        except (ValueError, RecursionError):
            stage_payloads.append(None)
            stage_errors.append(["invalid_json"])

    # Stage 1: categories
    categories = None
    if not stage_errors[0]:
        categories, errs = _check_category_stage(stage_payloads[0], profile)
        stage_errors[0].extend(errs)

    # Stage 2: object instances
    instances, declared_ids = None, None
    if not stage_errors[1]:
        instances, declared_ids, errs = _check_object_stage(
            stage_payloads[1], profile, width, height)
        stage_errors[1].extend(errs)
        if not stage_errors[1] and not stage_errors[0]:
            listed = set(categories)
            if any(obj.category not in listed for obj in instances):
                stage_errors[1].append("category_not_listed")

    # Stage 3: relations, resolved against whatever instance ids were declared
    relations = None
    if not stage_errors[2]:
        relations, errs = _check_relation_stage(stage_payloads[2], profile, declared_ids)
        stage_errors[2].extend(errs)

    stage_valid = tuple(not errs for errs in stage_errors)

    graph = None
    if all(stage_valid):
        flat = tuple(rel for t in profile.rel_types for rel in relations[t])
        if width is None or height is None:
            width = max(1, math.ceil(max((o.box.x2 for o in instances), default=1)))
            height = max(1, math.ceil(max((o.box.y2 for o in instances), default=1)))
        graph = SceneGraph("", int(width), int(height), instances, flat)

    return ParsedCompletion(
        category_stage=categories,
        object_stage=instances,
        relation_stage=relations,
        stage_valid=stage_valid,
        graph=graph,
        stage_errors=tuple(tuple(e) for e in stage_errors),
    )


def format_reward(parsed: ParsedCompletion) -> float:
    """Per-stage partial credit: (valid stages) / 3."""
    return parsed.valid_stage_count / 3.0


def failure_rate(parse_results) -> float:
    """Fraction of completions whose graph could not be assembled."""
    results = list(parse_results)
    if not results:
        raise EmptyBatchError("failure_rate needs at least one parse result")
    return sum(1 for p in results if p.graph is None) / len(results)


def _dump_stage(tag: str, payload) -> str:
    return f"<{tag}>\n{json.dumps(payload)}\n</{tag}>"


def serialize_cot(graph: SceneGraph, profile: DatasetProfile) -> CotRecord:
    """Render a valid graph as a three-stage training record.

    Instances are renumbered into annotation order (see ``canonical_form``),
    so re-parsing the record reproduces the canonical form of ``graph``.
    """
    violations = validate_graph(graph, profile)
    if violations:
        raise SerializeInvalidGraphError(
            f"graph {graph.image_id!r} has {len(violations)} violation(s); first: "
            f"{violations[0].code}: {violations[0].message}",
            violations=[v.code for v in violations])

    canon = canonical_form(graph, profile)
    category_payload = []
    for obj in canon.objects:
        if obj.category not in category_payload:
            category_payload.append(obj.category)
    object_payload = [
        {"id": obj.key, "bbox": [obj.box.x1, obj.box.y1, obj.box.x2, obj.box.y2]}
        for obj in canon.objects
    ]
    relation_payload = {t: [] for t in profile.rel_types}
    for rel in canon.relations:
        relation_payload[rel.rel_type].append([rel.subject, rel.predicate, rel.object])

    text = "\n".join([
        _dump_stage("CATEGORY", category_payload),
        _dump_stage("OBJECT", object_payload),
        _dump_stage("RELATION", relation_payload),
    ])
    return CotRecord(prompt_ref=graph.image_id, response_text=text)
