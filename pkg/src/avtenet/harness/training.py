"""Training entry points for the component networks and the fusion heads."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..ensemble import TRAINABLE, AVTENet, ComponentOutputs
from ..nets import ESTIMATORS
from ..synthdata import Manifest, NetworkKind, build_training_set
from ..tensor import checkpoint as ckpt
from .data import featurize_records, map_clip_chunks

log = logging.getLogger(__name__)

# estimator kind -> which categories count as fake when building its training set
TRAINING_KIND = {
    "vn": NetworkKind.VN,
    "an": NetworkKind.AN,
    "avn_fused": NetworkKind.AVN,
    "avn_concat": NetworkKind.AVN,
}


class EmptyTrainingSetError(ValueError):
    pass


@dataclass
class TrainConfig:
    network: str = "an"
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 5
    global_seed: int = 42
    checkpoint: str | None = None

    def validate(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def make_estimator(kind: str, cfg: TrainConfig, on_epoch=None):
    return ESTIMATORS[kind](lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs,
                            random_state=cfg.global_seed, on_epoch=on_epoch)


def train_network(kind: str, manifest: Manifest, cfg: TrainConfig, on_epoch=None):
    """Train one component network and write its checkpoint when a path is set."""
    cfg.validate()
    if kind not in ESTIMATORS:
        raise ValueError(f"unknown network {kind!r}")
    labeled = build_training_set(manifest, TRAINING_KIND[kind])
    if not labeled:
        raise EmptyTrainingSetError(f"no training samples for {kind}")
    records = [r for r, _ in labeled]
    y = np.array([label for _, label in labeled], dtype=np.int64)
    est = make_estimator(kind, cfg, on_epoch)
    feats = featurize_records(est, manifest, records)
    est.fit_features(feats, y)
    if cfg.checkpoint:
        est.save(cfg.checkpoint)
    return est


def component_outputs(components, manifest: Manifest, records, jobs: int = 1) -> ComponentOutputs:
    def run(clips):
        return [est.forward(clips) for est in components]

    chunks = map_clip_chunks(run, manifest, records, jobs)
    parts = {}
    for i, tag in enumerate(("v", "a", "av")):
        parts["s_" + tag] = np.concatenate([c[i].score_fake for c in chunks])
        parts["E_" + tag] = np.concatenate([c[i].embedding for c in chunks])
    return ComponentOutputs(**parts)


def train_ensemble(strategy: str, components, manifest: Manifest, cfg: TrainConfig,
                   component_paths=()) -> AVTENet:
    """Train an sf/ff fusion head on the AVN training set with components frozen.

    When ``component_paths`` are given their file hashes are checked before
    and after training.
    """
    if strategy not in TRAINABLE:
        raise ValueError(f"strategy {strategy!r} has nothing to train")
    cfg.validate()
    before = [ckpt.file_digest(p) for p in component_paths]
    labeled = build_training_set(manifest, NetworkKind.AVN)
    if not labeled:
        raise EmptyTrainingSetError("no training samples for the fusion head")
    records = [r for r, _ in labeled]
    y = np.array([label for _, label in labeled], dtype=np.int64)
    model = AVTENet(*components, strategy=strategy, lr=cfg.lr, epochs=cfg.epochs,
                    batch_size=cfg.batch_size, random_state=cfg.global_seed)
    model.fit_outputs(component_outputs(components, manifest, records), y)
    after = [ckpt.file_digest(p) for p in component_paths]
    if before != after:
        raise RuntimeError("component checkpoints changed during fusion-head training")
    if cfg.checkpoint:
        ckpt.save(cfg.checkpoint, model.head_.arrays())
    return model


def load_components(paths) -> dict:
    """Load checkpoints and key the estimators by network kind."""
    from ..nets import load_estimator

    out = {}
    for p in paths:
        est = load_estimator(ckpt.load(p))
        out[est.kind] = (est, Path(p))
    return out
