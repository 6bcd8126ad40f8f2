"""Process rewards for parsed scene-graph completions and their composite.

Components, each in [0, 1]:

* format: per-stage partial credit from the parser (k valid stages / 3).
* category: set F1 between predicted and ground-truth category sets.
* box / recall: grounding quality over the optimal object matching. A matched
  pair earns recall 1.0 when overlap exceeds 0.5 and the class matches,
  0.5 when exactly one of the two holds, else 0; the box score blends overlap
  and coordinate proximity. Both average over all ground-truth instances.
* fine: frequency-weighted triplet similarity. Each ground-truth triplet is
  compared to predictions whose endpoints matched its endpoints; similarity
  is the product of triplet-embedding and predicate-embedding similarities,
  rare predicates weigh more via the log-frequency ramp.
* coarse: semantic-cluster coverage times within-cluster density (clamped to
  1 so over-prediction cannot pay).

The composite is a weighted sum with node = (box + recall) / 2 and
relation = (fine + coarse) / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .clustering import DbscanParams, assign_prediction, build_prototypes
from .embeddings import EmbeddingSource, reward_sim
from .errors import UnknownPredicateError
from .graph import DatasetProfile, SceneGraph, canonical_key, canonical_token
from .matching import MatchConfig, Matching, iou, l1_norm, solve_matching
from .parsing import ParsedCompletion, format_reward, parse_completion

DEFAULT_COMPOSITE_WEIGHTS = {"format": 0.1, "category": 0.2, "node": 0.3, "relation": 0.4}


@dataclass(frozen=True)
class RewardConfig:
    w_base: float = 1.0
    w_inc: float = 1.0
    tau: float = 0.75
    composite_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_COMPOSITE_WEIGHTS))
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    match: MatchConfig = field(default_factory=MatchConfig)

    def __post_init__(self):
        if self.w_base < 0 or self.w_inc < 0:
            raise ValueError("w_base and w_inc must be non-negative")
        if not (0 < self.tau < 1):
            raise ValueError("tau must lie in (0, 1)")
        if set(self.composite_weights) != set(DEFAULT_COMPOSITE_WEIGHTS):
            raise ValueError(f"composite_weights needs keys {sorted(DEFAULT_COMPOSITE_WEIGHTS)}")
        if any(w < 0 for w in self.composite_weights.values()):
            raise ValueError("composite weights must be non-negative")
        if abs(sum(self.composite_weights.values()) - 1.0) > 1e-9:
            raise ValueError("composite weights must sum to 1")

    def to_dict(self) -> dict:
        return {
            "w_base": self.w_base,
            "w_inc": self.w_inc,
            "tau": self.tau,
            "composite_weights": dict(self.composite_weights),
            "dbscan": {"eps": self.dbscan.eps, "min_pts": self.dbscan.min_pts},
            "match": {
                "lambda1": self.match.lambda1,
                "lambda2": self.match.lambda2,
                "lambda3": self.match.lambda3,
                "cost_threshold": self.match.cost_threshold,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RewardConfig":
        kwargs = {}
        for key in ("w_base", "w_inc", "tau", "composite_weights"):
            if key in doc:
                kwargs[key] = doc[key]
        if "dbscan" in doc:
            kwargs["dbscan"] = DbscanParams(**doc["dbscan"])
        if "match" in doc:
            kwargs["match"] = MatchConfig(**doc["match"])
        return cls(**kwargs)


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    category: float
    box: float
    recall: float
    fine: float
    coarse: float
    composite: float

    @property
    def node(self) -> float:
        return 0.5 * self.box + 0.5 * self.recall

    @property
    def relation(self) -> float:
        return 0.5 * self.fine + 0.5 * self.coarse

    def to_dict(self) -> dict:
        return {
            "format": self.format, "category": self.category,
            "box": self.box, "recall": self.recall,
            "fine": self.fine, "coarse": self.coarse,
            "node": self.node, "relation": self.relation,
            "composite": self.composite,
        }


def category_reward(pred_categories, gt_categories) -> float:
    """Set F1; over-predicted categories cost precision."""
    pred, gt = set(pred_categories), set(gt_categories)
    if not pred and not gt:
        return 1.0
    tp = len(pred & gt)
    precision = tp / len(pred) if pred else 0.0
    recall = tp / len(gt) if gt else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def node_reward(matching: Matching, gt_objects, pred_objects,
                width: float, height: float) -> tuple[float, float]:
    """(box, recall) averaged over ground-truth instances; unmatched score 0."""
    if not gt_objects:
        return (1.0, 1.0) if not pred_objects else (0.0, 0.0)
    box_total = 0.0
    recall_total = 0.0
    for g, p in matching.pairs:
        gt, pred = gt_objects[g], pred_objects[p]
        overlap = iou(gt.box, pred.box)
        good_box = overlap > 0.5
        good_class = gt.category == pred.category
        if good_box and good_class:
            recall_total += 1.0
        elif good_box != good_class:
            recall_total += 0.5
        box_total += 0.5 * overlap + 0.5 * max(0.0, 1.0 - l1_norm(gt.box, pred.box, width, height))
    n = len(gt_objects)
    return box_total / n, recall_total / n


def predicate_weight(predicate: str, profile: DatasetProfile, cfg: RewardConfig) -> float:
    """w_base + w_inc * ramp, where the ramp runs 0 at the most frequent
    predicate to 1 at the rarest on a log(1/f) scale."""
    if predicate not in profile.predicates:
        raise UnknownPredicateError(f"predicate {predicate!r} not in vocabulary",
                                    predicate=predicate)
    f_min, f_max = profile.freq_bounds()
    if f_max == f_min:
        alpha = 0.0
    else:
        f_p = profile.predicate_freq[predicate]
        alpha = ((math.log(1.0 / f_p) - math.log(1.0 / f_max))
                 / (math.log(1.0 / f_min) - math.log(1.0 / f_max)))
    return cfg.w_base + cfg.w_inc * alpha


def _triplet_sim(gt_rel, pred_rel, source: EmbeddingSource) -> float:
    t_sim = reward_sim(source.embed(canonical_key(*gt_rel.spo())),
                       source.embed(canonical_key(*pred_rel.spo())))
    p_sim = reward_sim(source.embed(canonical_token(gt_rel.predicate)),
                       source.embed(canonical_token(pred_rel.predicate)))
    return t_sim * p_sim


def fine_reward(gt_graph: SceneGraph, pred_graph: SceneGraph, matching: Matching,
                profile: DatasetProfile, cfg: RewardConfig,
                source: EmbeddingSource) -> float:
    """Weighted mean of per-ground-truth-triplet similarities.

    A prediction is a candidate for a ground-truth triplet only when the
    object matching paired both endpoints; each prediction is consumed by at
    most one ground-truth triplet, assigned greedily by descending similarity
    (ties toward earlier ground truth, then earlier prediction).
    """
    gt_rels = gt_graph.relations
    pred_rels = pred_graph.relations
    if not gt_rels:
        return 1.0 if not pred_rels else 0.0

    gt_keys = [obj.key for obj in gt_graph.objects]
    pred_keys = [obj.key for obj in pred_graph.objects]
    pred_of_gt = {gt_keys[g]: pred_keys[p] for g, p in matching.pairs}

    pred_by_endpoints: dict[tuple[str, str], list[int]] = {}
    for i, rel in enumerate(pred_rels):
        pred_by_endpoints.setdefault((rel.subject, rel.object), []).append(i)

    candidates: list[tuple[float, int, int]] = []
    for j, gt_rel in enumerate(gt_rels):
        subj = pred_of_gt.get(gt_rel.subject)
        obj = pred_of_gt.get(gt_rel.object)
        if subj is None or obj is None:
            continue
        for i in pred_by_endpoints.get((subj, obj), ()):
            candidates.append((_triplet_sim(gt_rel, pred_rels[i], source), j, i))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    sim_of_gt = {}
    consumed: set[int] = set()
    for sim, j, i in candidates:
        if j in sim_of_gt or i in consumed:
            continue
        sim_of_gt[j] = sim
        consumed.add(i)

    weights = [predicate_weight(rel.predicate, profile, cfg) for rel in gt_rels]
    numerator = math.fsum(sim_of_gt.get(j, 0.0) * weights[j] for j in range(len(gt_rels)))
    return numerator / math.fsum(weights)


def coarse_reward(gt_graph: SceneGraph, pred_graph: SceneGraph, cfg: RewardConfig,
                  source: EmbeddingSource) -> float:
    """Cluster coverage times density over this scene's ground-truth triplets."""
    gt_rels = gt_graph.relations
    pred_rels = pred_graph.relations
    if not gt_rels:
        return 1.0 if not pred_rels else 0.0

    gt_vectors = [source.embed(canonical_key(*rel.spo())) for rel in gt_rels]
    clusters = build_prototypes(gt_vectors, cfg.dbscan)

    pred_counts = [0] * len(clusters)
    for rel in pred_rels:
        assigned = assign_prediction(source.embed(canonical_key(*rel.spo())), clusters, cfg.tau)
        if assigned is not None:
            pred_counts[assigned] += 1

    covered = [cid for cid in range(len(clusters)) if pred_counts[cid] > 0]
    if not covered:
        return 0.0
    coverage = len(covered) / len(clusters)
    density = (sum(pred_counts[cid] for cid in covered)
               / sum(len(clusters.clusters[cid].members) for cid in covered))
    return coverage * min(1.0, density)


def composite_reward(text: str, gt_graph: SceneGraph, profile: DatasetProfile,
                     cfg: RewardConfig, source: EmbeddingSource) -> RewardBreakdown:
    """Parse and score one completion against its ground-truth graph.

    An unassemblable completion keeps its format partial credit and zeroes
    every process component.
    """
    parsed = parse_completion(text, profile, gt_graph.width, gt_graph.height)
    return score_parsed(parsed, gt_graph, profile, cfg, source)


def score_parsed(parsed: ParsedCompletion, gt_graph: SceneGraph, profile: DatasetProfile,
                 cfg: RewardConfig, source: EmbeddingSource) -> RewardBreakdown:
    fmt = format_reward(parsed)
    weights = cfg.composite_weights
    if parsed.graph is None:
        return RewardBreakdown(fmt, 0.0, 0.0, 0.0, 0.0, 0.0, weights["format"] * fmt)

    pred_graph = parsed.graph
    category = category_reward(parsed.category_stage, gt_graph.category_set())
    matching = solve_matching(gt_graph.objects, pred_graph.objects, cfg.match, source,
                              gt_graph.width, gt_graph.height)
    box, recall = node_reward(matching, gt_graph.objects, pred_graph.objects,
                              gt_graph.width, gt_graph.height)
    fine = fine_reward(gt_graph, pred_graph, matching, profile, cfg, source)
    coarse = coarse_reward(gt_graph, pred_graph, cfg, source)

    composite = (weights["format"] * fmt
                 + weights["category"] * category
                 + weights["node"] * (0.5 * box + 0.5 * recall)
                 + weights["relation"] * (0.5 * fine + 0.5 * coarse))
    return RewardBreakdown(fmt, category, box, recall, fine, coarse, composite)
