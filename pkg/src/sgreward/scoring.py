"""Batch scoring and advantage computation with per-item error isolation.

One malformed item never disturbs its neighbors: failures become error
entries in the response, in request order. Worker pools use fork-based
multiprocessing so the ground-truth store and embedding table are shared
copy-on-write with the children.
"""

from __future__ import annotations

import multiprocessing

from .embeddings import EmbeddingSource
from .errors import EngineError
from .gspo import DEFAULT_EPSILON, PolicyGroup, PolicySample, gspo_objective
from .rewards import RewardConfig, composite_reward
from .store import GroundTruthStore

SCHEMA_VERSION = 1

# Fork-shared state for worker processes; set up once per pool.
_WORKER_CTX: dict = {}


def score_item(item: dict, store: GroundTruthStore, cfg: RewardConfig,
               source: EmbeddingSource) -> dict:
    """Score one completion; errors come back as data with a stable code."""
    out = {"sample_id": item.get("sample_id"), "image_id": item.get("image_id")}
    try:
        gt = store.get(str(item["image_id"]))
        breakdown = composite_reward(item["text"], gt, store.profile, cfg, source)
        out["reward"] = breakdown.to_dict()
    except EngineError as exc:
        out["error"] = exc.to_dict()
    except KeyError as exc:
        out["error"] = {"code": "MALFORMED_ITEM", "message": f"missing field {exc}"}
    return out


def _init_worker(store, cfg, source):
    _WORKER_CTX["store"] = store
    _WORKER_CTX["cfg"] = cfg
    _WORKER_CTX["source"] = source


def _score_in_worker(item: dict) -> dict:
    return score_item(item, _WORKER_CTX["store"], _WORKER_CTX["cfg"], _WORKER_CTX["source"])


class ScoringPool:
    """Persistent fork-based worker pool bound to one store/config/source.

    Fork the pool once (ideally at service startup, before any event loop)
    and reuse it across batches; per-batch pool creation would pay the fork
    cost on every request.
    """

    def __init__(self, store: GroundTruthStore, cfg: RewardConfig,
                 source: EmbeddingSource, workers: int):
        if workers < 2:
            raise ValueError("a scoring pool needs at least 2 workers")
        self.workers = workers
        ctx = multiprocessing.get_context("fork")
        self._pool = ctx.Pool(workers, initializer=_init_worker,
                              initargs=(store, cfg, source))

    def map(self, items: list[dict]) -> list[dict]:
        chunk = max(1, len(items) // (self.workers * 4))
        return self._pool.map(_score_in_worker, items, chunksize=chunk)

    def close(self):
        self._pool.close()
        self._pool.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def score_batch(items, store: GroundTruthStore, cfg: RewardConfig, source: EmbeddingSource,
                workers: int = 1, pool: ScoringPool | None = None) -> dict:
    """Score a batch, preserving order and echoing the resolved config.

    Pass a :class:`ScoringPool` for steady-state parallel scoring; ``workers``
    alone spins up (and tears down) an ephemeral pool for one-shot use.
    """
    items = list(items)
    if pool is not None and len(items) >= 2:
        results = pool.map(items)
    elif workers <= 1 or len(items) < 2:
        results = [score_item(item, store, cfg, source) for item in items]
    else:
        with ScoringPool(store, cfg, source, workers) as ephemeral:
            results = ephemeral.map(items)

    scored = [r for r in results if "reward" in r]
    summary = {
        "count": len(results),
        "scored": len(scored),
        "errored": len(results) - len(scored),
        "mean_composite": (sum(r["reward"]["composite"] for r in scored) / len(scored)
                           if scored else 0.0),
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "items": results,
        "summary": summary,
    }


def advantages_for_groups(groups, epsilon: float = DEFAULT_EPSILON) -> list[dict]:
    """Per-group GSPO results, order preserving, errors isolated per group."""
    results = []
    for group_doc in groups:
        try:
            samples = tuple(
                PolicySample(reward=float(s["reward"]),
                             logp_new=s["logp_new"], logp_old=s["logp_old"])
                for s in group_doc["samples"])
            result = gspo_objective(PolicyGroup(samples), epsilon)
            results.append(result.to_dict())
        except EngineError as exc:
            results.append({"error": exc.to_dict()})
        except (KeyError, TypeError, ValueError) as exc:
            results.append({"error": {"code": "MALFORMED_GROUP", "message": str(exc)}})
    return results
