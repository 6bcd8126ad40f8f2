"""HTTP front door: scoring, advantages, evaluation, health.

The store and embedding source load once at startup and are read-only
afterwards; requests are stateless beyond the bounded embedding cache.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI
from pydantic import BaseModel, Field

from .embeddings import EmbeddingSource
from .errors import EngineError
from .evaluation import EvalConfig, aggregate, evaluate_scene, partition_predicates
from .gspo import DEFAULT_EPSILON
from .parsing import parse_completion
from .rewards import RewardConfig
from .scoring import SCHEMA_VERSION, ScoringPool, advantages_for_groups, score_batch
from .store import GroundTruthStore

DEFAULT_MAX_BATCH = 4096


class ScoreItem(BaseModel):
    sample_id: str
    image_id: str
    text: str


class ScoreRequest(BaseModel):
    items: list[ScoreItem]
    config: Optional[dict] = None


class AdvantageSample(BaseModel):
    reward: float
    logp_new: list[float]
    logp_old: list[float]


class AdvantageGroup(BaseModel):
    samples: list[AdvantageSample]


class AdvantagesRequest(BaseModel):
    groups: list[AdvantageGroup]
    epsilon: float = DEFAULT_EPSILON


class EvalRequest(BaseModel):
    items: list[ScoreItem]
    iou_threshold: float = 0.5
    top_k: Optional[int] = Field(default=None, ge=1)


def build_app(store: GroundTruthStore, source: EmbeddingSource,
              cfg: RewardConfig | None = None,
              max_batch: int = DEFAULT_MAX_BATCH,
              workers: int = 1) -> FastAPI:
    """Assemble the service; fork the scoring pool now, before any event loop."""
    cfg = cfg or RewardConfig()
    pool = ScoringPool(store, cfg, source, workers) if workers > 1 else None
    app = FastAPI(title="scene-graph reward engine", version="0.1.0")

    def batch_guard(n: int):
        if n > max_batch:
            return {"schema_version": SCHEMA_VERSION,
                    "error": {"code": "BATCH_TOO_LARGE",
                              "message": f"batch of {n} exceeds limit {max_batch}"}}
        return None

    @app.get("/v1/health")
    def health():
        return {
            "schema_version": SCHEMA_VERSION,
            "status": "ok",
            "store": {"images": len(store), "categories": len(store.profile.categories),
                      "predicates": len(store.profile.predicates)},
            "provider": source.describe(),
        }

    @app.post("/v1/score")
    def score(req: ScoreRequest):
        guard = batch_guard(len(req.items))
        if guard:
            return guard
        if req.config:
            # a per-request config cannot reuse the startup pool's bound config
            effective = RewardConfig.from_dict(req.config)
            return score_batch([item.model_dump() for item in req.items], store,
                               effective, source)
        return score_batch([item.model_dump() for item in req.items], store, cfg,
                           source, pool=pool)

    @app.post("/v1/advantages")
    def advantages(req: AdvantagesRequest):
        guard = batch_guard(len(req.groups))
        if guard:
            return guard
        results = advantages_for_groups([g.model_dump() for g in req.groups], req.epsilon)
        return {"schema_version": SCHEMA_VERSION, "epsilon": req.epsilon, "results": results}

    @app.post("/v1/eval")
    def evaluate(req: EvalRequest):
        guard = batch_guard(len(req.items))
        if guard:
            return guard
        eval_cfg = EvalConfig(iou_threshold=req.iou_threshold, top_k=req.top_k)
        tallies = []
        errors = []
        for item in req.items:
            try:
                gt = store.get(item.image_id)
            except EngineError as exc:
                errors.append({"sample_id": item.sample_id, "error": exc.to_dict()})
                continue
            parsed = parse_completion(item.text, store.profile, gt.width, gt.height)
            tallies.append(evaluate_scene(gt, parsed.graph, store.profile, eval_cfg))
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config": {"iou_threshold": req.iou_threshold, "top_k": req.top_k},
            "errors": errors,
        }
        if tallies:
            partition = partition_predicates(store.profile)
            doc["report"] = aggregate(tallies, store.profile, partition).to_dict()
        return doc

    return app
