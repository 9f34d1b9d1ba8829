"""scikit-learn style wrappers around the four networks.

``fit(X, y)`` trains from scratch with Adam on BCE; ``predict_proba`` returns
columns ``[P(real), P(fake)]``; ``transform`` returns the penultimate
embedding. Labels follow the detector convention 1 = fake.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..losses import logits_bce
from ..tensor import AdamState, adam_step, backward, no_grad, softmax
from ..tensor import checkpoint as ckpt
from ..validation import check_clips, check_fake_labels
from .layers import EncoderConfig, MSTCNConfig
from .models import AudioNet, AudioVisualNet, ConcatAVNet, VideoNet

log = logging.getLogger(__name__)

SCORE_THRESHOLD = 0.5


@dataclass
class ClassifierOutput:
    logits: np.ndarray  # (n, 2) ordered [real, fake]
    score_fake: np.ndarray  # (n,)
    embedding: np.ndarray  # (n, d)


class NonFiniteLossError(FloatingPointError):
    pass


class _NetworkClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    network_cls = None

    def __init__(self, d_model=64, n_heads=4, n_layers=2, ffn_dim=128, lr=1e-3, batch_size=16,
                 epochs=5, random_state=42, eval_batch_size=64, on_epoch=None):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers = n_layers
        self.ffn_dim = ffn_dim
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.eval_batch_size = eval_batch_size
        self.on_epoch = on_epoch

    @property
    def kind(self) -> str:
        return self.network_cls.kind

    def _encoder_config(self):
        return EncoderConfig(self.d_model, self.n_heads, self.n_layers, self.ffn_dim)

    def _build(self):
        return self.network_cls(np.random.default_rng(self.random_state), self._encoder_config())

    def _check_hparams(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    # -- training --------------------------------------------------------
    def featurize(self, X):
        clips = check_clips(X)
        net = getattr(self, "network_", None) or self._build()
        return net.featurize(clips.audio, clips.video, clips.lip_box)

    def fit(self, X, y):
        feats = self.featurize(X)
        y = check_fake_labels(y, len(feats[0]))
        return self.fit_features(feats, y)

    def fit_features(self, feats, y):
        """Train on already-featurized inputs (see ``featurize``)."""
        self._check_hparams()
        if len(y) == 0:
            raise ValueError("empty training set")
        self.network_ = self._build()
        self.classes_ = np.array([0, 1])
        params = self.network_.parameters()
        state = AdamState(lr=self.lr)
        shuffle_rng = np.random.default_rng([self.random_state, 1])
        self.initial_loss_ = self._dataset_loss(feats, y)
        self.loss_curve_ = []
        n = len(y)
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                params.zero_grad()
                logits, _ = self.network_.forward(*(f[idx] for f in feats))
                loss = logits_bce(logits, y[idx])
                value = loss.item()
                if not np.isfinite(value):
                    raise NonFiniteLossError(f"non-finite loss at epoch {epoch + 1}, batch {start // self.batch_size}")
                grads = backward(loss, params)
                adam_step(params, grads, state)
                total += value * len(idx)
            self.loss_curve_.append(total / n)
            log.info("%s epoch %d loss %.6f", self.kind, epoch + 1, self.loss_curve_[-1])
            if self.on_epoch is not None:
                self.on_epoch(epoch + 1, self.loss_curve_[-1])
        params.zero_grad()
        return self

    def _dataset_loss(self, feats, y) -> float:
        out = self._forward_features(feats)
        with no_grad():
            from ..tensor import Tensor

            return logits_bce(Tensor(out.logits), y).item()

    # -- inference -------------------------------------------------------
    def _forward_features(self, feats) -> ClassifierOutput:
        net = self.network_
        logits, embs = [], []
        with no_grad():
            for start in range(0, len(feats[0]), self.eval_batch_size):
                lg, emb = net.forward(*(f[start:start + self.eval_batch_size] for f in feats))
                logits.append(lg.data)
                embs.append(emb.data)
        logits = np.concatenate(logits)
        with no_grad():
            score = softmax(logits, axis=-1).data[:, 1]
        return ClassifierOutput(logits, score, np.concatenate(embs))

    def forward(self, X) -> ClassifierOutput:
        check_is_fitted(self, "network_")
        return self._forward_features(self.featurize(X))

    def predict_proba(self, X) -> np.ndarray:
        s = self.forward(X).score_fake
        return np.column_stack([1.0 - s, s])

    def predict(self, X) -> np.ndarray:
        return (self.forward(X).score_fake >= SCORE_THRESHOLD).astype(np.int64)

    def transform(self, X) -> np.ndarray:
        return self.forward(X).embedding

    # -- checkpoints -----------------------------------------------------
    def initialize(self):
        """Build untrained parameters (what ``fit`` with ``epochs=0`` leaves behind)."""
        self.network_ = self._build()
        self.classes_ = np.array([0, 1])
        return self

    def state_arrays(self) -> dict:
        check_is_fitted(self, "network_")
        arrays = dict(self.network_.parameters().arrays())
        for key, value in self.network_.meta().items():
            arrays[f"{self.network_.prefix}.meta.{key}"] = np.array(float(value))
        return arrays

    def save(self, path) -> bytes:
        return ckpt.save(path, self.state_arrays())

    @classmethod
    def from_arrays(cls, arrays: dict, **params):
        prefix = cls.network_cls.prefix
        meta = {k.split(".meta.", 1)[1]: int(v) for k, v in arrays.items()
                if k.startswith(prefix + ".meta.")}
        if not meta:
            raise ckpt.CheckpointError(f"checkpoint holds no {prefix} network")
        est = cls(d_model=meta["d_model"], n_heads=meta["heads"], n_layers=meta["layers"],
                  ffn_dim=meta["ffn_dim"], **params)
        est._apply_meta(meta)
        est.initialize()
        weights = {k: v for k, v in arrays.items() if k.startswith(prefix + ".") and ".meta." not in k}
        est.network_.parameters().load_arrays(weights)
        return est

    def _apply_meta(self, meta):
        pass


class VNClassifier(_NetworkClassifier):
    """Video-only network over raw frame stacks."""

    network_cls = VideoNet


class ANClassifier(_NetworkClassifier):
    """Audio-only network over 0.64 s waveforms."""

    network_cls = AudioNet


class AVNClassifier(_NetworkClassifier):
    """Audio-visual network over filterbank energies and lip crops."""

    network_cls = AudioVisualNet

    def __init__(self, d_model=64, n_heads=4, n_layers=2, ffn_dim=128, lr=1e-3, batch_size=16,
                 epochs=5, random_state=42, eval_batch_size=64, on_epoch=None, conv_channels=(8, 16),
                 mstcn_blocks=2, mstcn_kernels=(3, 5, 7), mstcn_channels=66):
        super().__init__(d_model, n_heads, n_layers, ffn_dim, lr, batch_size, epochs, random_state,
                         eval_batch_size, on_epoch)
        self.conv_channels = conv_channels
        self.mstcn_blocks = mstcn_blocks
        self.mstcn_kernels = mstcn_kernels
        self.mstcn_channels = mstcn_channels

    def _build(self):
        return AudioVisualNet(np.random.default_rng(self.random_state), self._encoder_config(),
                              conv_channels=tuple(self.conv_channels),
                              mstcn=MSTCNConfig(self.mstcn_blocks, tuple(self.mstcn_kernels),
                                                self.mstcn_channels))

    def _apply_meta(self, meta):
        self.conv_channels = (meta["conv1"], meta["conv2"])
        self.mstcn_blocks = meta["mstcn_blocks"]
        self.mstcn_channels = meta["mstcn_channels"]


class AVNConcatClassifier(_NetworkClassifier):
    """Audio-visual network built from separate audio and video transformer backbones."""

    network_cls = ConcatAVNet


ESTIMATORS = {
    "vn": VNClassifier,
    "an": ANClassifier,
    "avn_fused": AVNClassifier,
    "avn_concat": AVNConcatClassifier,
}


def kinds_in(arrays: dict) -> list:
    """Network kinds present in a checkpoint, by tensor-name prefix."""
    prefixes = {name.split(".", 1)[0] for name in arrays}
    return sorted(k for k in ESTIMATORS if k in prefixes)


def load_estimator(arrays: dict, kind: str | None = None):
    kinds = kinds_in(arrays)
    if kind is None:
        if len(kinds) != 1:
            raise ckpt.CheckpointError(f"expected exactly one network in checkpoint, found {kinds}")
        kind = kinds[0]
    if kind not in kinds:
        raise ckpt.CheckpointError(f"checkpoint holds {kinds or 'no networks'}, not {kind}")
    return ESTIMATORS[kind].from_arrays(arrays)
