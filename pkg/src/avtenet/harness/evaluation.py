"""Per-subset evaluation and report rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..ensemble import AVTENet, dm
from ..synthdata import Manifest
from ..tensor import checkpoint as ckpt
from .metrics import ConfusionCounts, Metrics, auc, confusion, metrics
from .training import component_outputs
from .data import map_clip_chunks


@dataclass
class EvalReport:
    model: str
    subset: str
    counts: ConfusionCounts
    metrics: Metrics
    config_digest: str
    strategy: str | None = None
    model_digest: str | None = None
    ids: list = field(default_factory=list, repr=False)

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy

    def to_json(self) -> dict:
        out = {
            "model": self.model,
            "subset": self.subset,
            "counts": self.counts.to_json(),
            "per_class": {"real": self.metrics.real.to_json(), "fake": self.metrics.fake.to_json()},
            "accuracy": self.metrics.accuracy,
            "config_digest": self.config_digest,
        }
        if self.strategy is not None:
            out["strategy"] = self.strategy
        if self.metrics.auc is not None:
            out["auc"] = self.metrics.auc
        if self.model_digest is not None:
            out["model_digest"] = self.model_digest
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def to_markdown(self) -> str:
        name = self.model if self.strategy is None else f"{self.model}_{self.strategy}"
        lines = [f"### {name} on {self.subset}", "",
                 "| Class | Precision | Recall | F1-Score | Accuracy |",
                 "|---|---|---|---|---|"]
        for label, row in (("Real", self.metrics.real), ("Fake", self.metrics.fake)):
            lines.append(f"| {label} | {row.precision:.4f} | {row.recall:.4f} | {row.f1:.4f} "
                         f"| {self.metrics.accuracy:.4f} |")
        if self.metrics.auc is not None:
            lines += ["", f"AUC: {self.metrics.auc:.4f}"]
        return "\n".join(lines) + "\n"


def report_from_predictions(model: str, subset: str, ids, pred, truth, scores, config_digest: str,
                            strategy=None, model_digest=None) -> EvalReport:
    """Aggregate per-sample outputs after sorting by sample id (order independence)."""
    order = np.argsort(np.asarray(ids, dtype=object).astype(str), kind="stable")
    ids = [ids[i] for i in order]
    pred, truth, scores = (np.asarray(a)[order] for a in (pred, truth, scores))
    counts = confusion(pred, truth)
    auc_value = auc(scores, truth) if 0 < truth.sum() < len(truth) else None
    return EvalReport(model, subset, counts, metrics(counts, auc_value), config_digest, strategy,
                      model_digest, ids)


def _model_digest(arrays: dict) -> str:
    return ckpt.digest(arrays)[:16]


def evaluate(model, manifest: Manifest, subset: str, dump_embeddings=None, jobs: int = 1) -> EvalReport:
    """Run ``model`` (a fitted network estimator or an ``AVTENet``) on a manifest subset.

    Ground truth is 1 (fake) for every manipulated clip regardless of which
    stream was manipulated.
    """
    records = sorted(manifest.subset(subset), key=lambda r: r.id)
    if not records:
        raise ValueError(f"subset {subset!r} is empty")
    truth = np.array([int(r.is_fake) for r in records])
    ids = [r.id for r in records]
    embeddings = {}
    if isinstance(model, AVTENet):
        comps = model._components()
        outputs = component_outputs(comps, manifest, records, jobs)
        decision = dm(outputs, model._head())
        pred, scores = np.asarray(decision.label), np.asarray(decision.fused_score)
        name, strategy = "AVTENet", model.strategy
        head_arrays = model._head().arrays()
        digest_src = dict(head_arrays)
        for c in comps:
            digest_src.update(c.state_arrays())
        if dump_embeddings:
            for i, sid in enumerate(ids):
                embeddings[f"emb.{sid}.E_v"] = outputs.E_v[i]
                embeddings[f"emb.{sid}.E_a"] = outputs.E_a[i]
                embeddings[f"emb.{sid}.E_av"] = outputs.E_av[i]
                embeddings[f"emb.{sid}.E_ff"] = outputs.features[i]
    else:
        outs = map_clip_chunks(model.forward, manifest, records, jobs)
        scores = np.concatenate([o.score_fake for o in outs])
        pred = (scores >= 0.5).astype(np.int64)
        name, strategy = model.kind, None
        digest_src = model.state_arrays()
        if dump_embeddings:
            emb = np.concatenate([o.embedding for o in outs])
            tag = {"vn": "E_v", "an": "E_a"}.get(model.kind, "E_av")
            for i, sid in enumerate(ids):
                embeddings[f"emb.{sid}.{tag}"] = emb[i]
    if dump_embeddings:
        ckpt.save(dump_embeddings, embeddings)
    return report_from_predictions(name, subset, ids, pred, truth, scores, manifest.digest, strategy,
                                   _model_digest(digest_src))
