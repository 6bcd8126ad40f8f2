"""SGDET-protocol evaluation: triplet correctness, recall metrics, partitions.

A predicted triplet is correct when both endpoint boxes overlap their ground
truth counterparts at IoU >= threshold and subject, object, and predicate
classes all match. Matching is greedy in prediction output order (the
model's emission order is its implicit ranking) and one-to-one on both sides,
at the triplet level and, separately, at the object-detection level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EmptyBatchError, VocabTooSmallError
from .graph import BoundingBox, DatasetProfile, SceneGraph
from .matching import iou


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    top_k: int | None = None

    def __post_init__(self):
        if not (0 < self.iou_threshold < 1):
            raise ValueError("iou_threshold must lie in (0, 1)")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be positive when set")


@dataclass(frozen=True)
class PartitionSpec:
    head: frozenset[str]
    body: frozenset[str]
    tail: frozenset[str]

    def group_of(self, predicate: str) -> str | None:
        if predicate in self.head:
            return "head"
        if predicate in self.body:
            return "body"
        if predicate in self.tail:
            return "tail"
        return None

    def to_dict(self) -> dict:
        return {"head": sorted(self.head), "body": sorted(self.body),
                "tail": sorted(self.tail)}


@dataclass(frozen=True)
class ResolvedTriplet:
    """A relation with its endpoint classes and boxes looked up."""

    subject_class: str
    subject_box: BoundingBox
    predicate: str
    object_class: str
    object_box: BoundingBox


@dataclass
class SceneTally:
    """Per-scene counts; aggregation merges these associatively."""

    gt_per_predicate: dict[str, int] = field(default_factory=dict)
    hits_per_predicate: dict[str, int] = field(default_factory=dict)
    zs_gt: int = 0
    zs_hits: int = 0
    det_gt_per_category: dict[str, int] = field(default_factory=dict)
    det_hits_per_category: dict[str, int] = field(default_factory=dict)
    parse_failed: bool = False


def triplet_correct(gt: ResolvedTriplet, pred: ResolvedTriplet, cfg: EvalConfig) -> bool:
    return (gt.subject_class == pred.subject_class
            and gt.object_class == pred.object_class
            and gt.predicate == pred.predicate
            and iou(gt.subject_box, pred.subject_box) >= cfg.iou_threshold
            and iou(gt.object_box, pred.object_box) >= cfg.iou_threshold)


def resolve_triplets(graph: SceneGraph) -> list[ResolvedTriplet]:
    instances = graph.instance_map()
    resolved = []
    for rel in graph.relations:
        subj, obj = instances[rel.subject], instances[rel.object]
        resolved.append(ResolvedTriplet(subj.category, subj.box, rel.predicate,
                                        obj.category, obj.box))
    return resolved


def evaluate_scene(gt: SceneGraph, pred: SceneGraph | None, profile: DatasetProfile,
                   cfg: EvalConfig = EvalConfig()) -> SceneTally:
    """Tally hits for one scene; ``pred=None`` marks a failed completion."""
    tally = SceneTally(parse_failed=pred is None)

    gt_triplets = resolve_triplets(gt)
    zero_shot = []
    for t in gt_triplets:
        tally.gt_per_predicate[t.predicate] = tally.gt_per_predicate.get(t.predicate, 0) + 1
        zs = (t.subject_class, t.predicate, t.object_class) not in profile.train_triplet_catalog
        zero_shot.append(zs)
        tally.zs_gt += zs
    for obj in gt.objects:
        tally.det_gt_per_category[obj.category] = \
            tally.det_gt_per_category.get(obj.category, 0) + 1

    if pred is None:
        return tally

    pred_triplets = resolve_triplets(pred)
    if cfg.top_k is not None:
        pred_triplets = pred_triplets[:cfg.top_k]

    claimed = [False] * len(gt_triplets)
    for pt in pred_triplets:
        for j, gt_t in enumerate(gt_triplets):
            if claimed[j] or not triplet_correct(gt_t, pt, cfg):
                continue
            claimed[j] = True
            tally.hits_per_predicate[gt_t.predicate] = \
                tally.hits_per_predicate.get(gt_t.predicate, 0) + 1
            tally.zs_hits += zero_shot[j]
            break

    det_claimed = [False] * len(gt.objects)
    for pobj in pred.objects:
        for j, gobj in enumerate(gt.objects):
            if det_claimed[j] or gobj.category != pobj.category:
                continue
            if iou(gobj.box, pobj.box) < cfg.iou_threshold:
                continue
            det_claimed[j] = True
            tally.det_hits_per_category[gobj.category] = \
                tally.det_hits_per_category.get(gobj.category, 0) + 1
            break

    return tally


@dataclass(frozen=True)
class EvalReport:
    recall: float
    m_recall: float
    zs_recall: float
    per_predicate_recall: dict[str, float]
    group_recall: dict[str, float]
    det_recall: float
    det_m_recall: float
    failure_rate: float

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "m_recall": self.m_recall,
            "zs_recall": self.zs_recall,
            "per_predicate_recall": dict(sorted(self.per_predicate_recall.items())),
            "group_recall": dict(self.group_recall),
            "det_recall": self.det_recall,
            "det_m_recall": self.det_m_recall,
            "failure_rate": self.failure_rate,
        }


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def aggregate(tallies, profile: DatasetProfile, partition: PartitionSpec) -> EvalReport:
    """Merge per-scene tallies into the final report.

    Recall, zsRecall, group recalls, and detection recall are micro averages;
    mRecall and detection mRecall are macro over predicates / categories with
    at least one ground-truth occurrence.
    """
    tallies = list(tallies)
    if not tallies:
        raise EmptyBatchError("aggregate needs at least one scene tally")

    gt_pred: dict[str, int] = {}
    hit_pred: dict[str, int] = {}
    gt_cat: dict[str, int] = {}
    hit_cat: dict[str, int] = {}
    zs_gt = zs_hits = failed = 0
    for t in tallies:
        for p, n in t.gt_per_predicate.items():
            gt_pred[p] = gt_pred.get(p, 0) + n
        for p, n in t.hits_per_predicate.items():
            hit_pred[p] = hit_pred.get(p, 0) + n
        for c, n in t.det_gt_per_category.items():
            gt_cat[c] = gt_cat.get(c, 0) + n
        for c, n in t.det_hits_per_category.items():
            hit_cat[c] = hit_cat.get(c, 0) + n
        zs_gt += t.zs_gt
        zs_hits += t.zs_hits
        failed += t.parse_failed

    per_predicate = {p: _ratio(hit_pred.get(p, 0), n) for p, n in gt_pred.items()}
    group_recall = {}
    for group in ("head", "body", "tail"):
        members = getattr(partition, group)
        group_recall[group] = _ratio(
            sum(hit_pred.get(p, 0) for p in members if p in gt_pred),
            sum(gt_pred.get(p, 0) for p in members))

    per_category = {c: _ratio(hit_cat.get(c, 0), n) for c, n in gt_cat.items()}
    return EvalReport(
        recall=_ratio(sum(hit_pred.values()), sum(gt_pred.values())),
        m_recall=_ratio(sum(per_predicate.values()), len(per_predicate)),
        zs_recall=_ratio(zs_hits, zs_gt),
        per_predicate_recall=per_predicate,
        group_recall=group_recall,
        det_recall=_ratio(sum(hit_cat.values()), sum(gt_cat.values())),
        det_m_recall=_ratio(sum(per_category.values()), len(per_category)),
        failure_rate=failed / len(tallies),
    )


def partition_predicates(profile: DatasetProfile) -> PartitionSpec:
    """Split the vocabulary into head/body/tail by descending frequency.

    Head and body each take floor(0.3 N); the remainder is tail. Frequency
    ties break by ascending token so the split is deterministic.
    """
    n = len(profile.predicates)
    if n < 4:
        raise VocabTooSmallError(f"need at least 4 predicates to partition, got {n}")
    ranked = sorted(profile.predicates, key=lambda p: (-profile.predicate_freq[p], p))
    head_n = (3 * n) // 10  # floor(0.3 n) without float representation slips
    body_n = (3 * n) // 10
    return PartitionSpec(
        head=frozenset(ranked[:head_n]),
        body=frozenset(ranked[head_n:head_n + body_n]),
        tail=frozenset(ranked[head_n + body_n:]),
    )
