"""Decision-making module combining VN, AN and AVN outputs.

Four fusion strategies:

* ``mv``  majority vote over binarized component scores,
* ``asf`` mean of component fake scores against a threshold,
* ``sf``  linear layer over the three fake scores,
* ``ff``  linear layer over the concatenated penultimate embeddings.

Only ``sf`` and ``ff`` have trainable weights; they are trained with the
component networks frozen. Label convention: 1 = fake. Ties in ``sf``/``ff``
logits and a mean exactly at the threshold both resolve to fake.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .losses import logits_bce
from .tensor import AdamState, Tensor, adam_step, backward, linear, softmax
from .tensor import checkpoint as ckpt
from .tensor.params import ParameterSet, glorot, zeros
from .validation import check_fake_labels

STRATEGIES = ("mv", "asf", "sf", "ff")
TRAINABLE = ("sf", "ff")
BIN_THRESHOLD = 0.5


@dataclass
class ComponentOutputs:
    s_v: np.ndarray
    s_a: np.ndarray
    s_av: np.ndarray
    E_v: np.ndarray | None = None
    E_a: np.ndarray | None = None
    E_av: np.ndarray | None = None
    threshold: float = BIN_THRESHOLD

    def __post_init__(self):
        self.s_v, self.s_a, self.s_av = (np.asarray(s, dtype=np.float64) for s in (self.s_v, self.s_a, self.s_av))

    @property
    def votes(self) -> tuple:
        return tuple((s >= self.threshold).astype(np.int64) for s in (self.s_v, self.s_a, self.s_av))

    @property
    def scores(self) -> np.ndarray:
        return np.stack([self.s_v, self.s_a, self.s_av], axis=-1)

    @property
    def features(self) -> np.ndarray:
        if self.E_v is None or self.E_a is None or self.E_av is None:
            raise ValueError("feature fusion needs all three embeddings")
        return np.concatenate([np.asarray(self.E_v), np.asarray(self.E_a), np.asarray(self.E_av)], axis=-1)


@dataclass
class FusionHead:
    strategy: str
    weight: np.ndarray | None = None  # (2, n_in), rows [real, fake]
    bias: np.ndarray | None = None  # (2,)
    threshold: float = 0.5
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy in TRAINABLE:
            if self.weight is None or self.bias is None:
                raise ValueError(f"{self.strategy} head needs weight and bias")
            self.weight = np.asarray(self.weight, dtype=np.float64)
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
                raise ValueError("fusion head weights must be finite")

    def arrays(self) -> dict:
        if self.strategy not in TRAINABLE:
            return {f"dm.{self.strategy}.threshold": np.array(self.threshold)}
        return {f"dm.{self.strategy}.weight": self.weight, f"dm.{self.strategy}.bias": self.bias}

    @classmethod
    def from_arrays(cls, arrays: dict, strategy: str | None = None) -> "FusionHead":
        found = sorted({k.split(".")[1] for k in arrays if k.startswith("dm.")})
        if strategy is None:
            if len(found) != 1:
                raise ckpt.CheckpointError(f"expected one fusion head, found {found}")
            strategy = found[0]
        if strategy not in found:
            raise ckpt.CheckpointError(f"checkpoint has no dm.{strategy} head (found {found})")
        if strategy in TRAINABLE:
            return cls(strategy, arrays[f"dm.{strategy}.weight"], arrays[f"dm.{strategy}.bias"])
        return cls(strategy, threshold=float(arrays[f"dm.{strategy}.threshold"]))


@dataclass
class EnsembleDecision:
    label: np.ndarray | int
    fused_score: np.ndarray | float
    strategy: str
    components: ComponentOutputs | None = None


def majority_vote(p_v, p_a, p_av):
    """1 (fake) when at least two of the three votes are 1."""
    votes = [np.asarray(p) for p in (p_v, p_a, p_av)]
    for v in votes:
        if not np.all((v == 0) | (v == 1)):
            raise ValueError("votes must be 0 or 1")
    count = votes[0] + votes[1] + votes[2]
    label = (count >= 2).astype(np.int64)
    return int(label) if label.ndim == 0 else label


def _check_scores(*scores):
    for s in scores:
        s = np.asarray(s)
        if np.any(s < 0) or np.any(s > 1) or not np.all(np.isfinite(s)):
            raise ValueError("scores must lie in [0, 1]")


def _scalar(x):
    x = np.asarray(x)
    return x.item() if x.ndim == 0 else x


def average_score_fuse(s_v, s_a, s_av, threshold: float = 0.5) -> EnsembleDecision:
    _check_scores(s_v, s_a, s_av)
    mean = (np.asarray(s_v, dtype=np.float64) + np.asarray(s_a) + np.asarray(s_av)) / 3.0
    return EnsembleDecision(_scalar((mean >= threshold).astype(np.int64)), _scalar(mean), "asf")


def _linear_decision(x: np.ndarray, head: FusionHead) -> tuple:
    logits = x @ head.weight.T + head.bias
    score = softmax(logits, axis=-1).data[..., 1]
    label = (logits[..., 1] >= logits[..., 0]).astype(np.int64)
    return _scalar(label), _scalar(score)


def score_fuse(s_v, s_a, s_av, head: FusionHead) -> EnsembleDecision:
    if head.strategy != "sf":
        raise ValueError(f"score fusion needs an sf head, got {head.strategy}")
    _check_scores(s_v, s_a, s_av)
    x = np.stack([np.asarray(s, dtype=np.float64) for s in (s_v, s_a, s_av)], axis=-1)
    label, score = _linear_decision(x, head)
    return EnsembleDecision(label, score, "sf")


def feature_fuse(E_v, E_a, E_av, head: FusionHead) -> EnsembleDecision:
    if head.strategy != "ff":
        raise ValueError(f"feature fusion needs an ff head, got {head.strategy}")
    x = np.concatenate([np.asarray(e, dtype=np.float64) for e in (E_v, E_a, E_av)], axis=-1)
    if x.shape[-1] != head.weight.shape[1]:
        raise ValueError(f"fused feature has {x.shape[-1]} dims, head expects {head.weight.shape[1]}")
    label, score = _linear_decision(x, head)
    return EnsembleDecision(label, score, "ff")


def dm(outputs: ComponentOutputs, head: FusionHead) -> EnsembleDecision:
    """Dispatch to the fusion rule named by ``head.strategy``."""
    if head.strategy == "mv":
        votes = outputs.votes
        label = majority_vote(*votes)
        decision = EnsembleDecision(label, _scalar(sum(votes) / 3.0), "mv")
    elif head.strategy == "asf":
        decision = average_score_fuse(outputs.s_v, outputs.s_a, outputs.s_av, head.threshold)
    elif head.strategy == "sf":
        decision = score_fuse(outputs.s_v, outputs.s_a, outputs.s_av, head)
    else:
        if outputs.E_v is None or outputs.E_a is None or outputs.E_av is None:
            raise ValueError("feature fusion needs E_v, E_a and E_av")
        decision = feature_fuse(outputs.E_v, outputs.E_a, outputs.E_av, head)
    decision.components = outputs
    return decision


def init_head(strategy: str, n_in: int, random_state: int = 0) -> FusionHead:
    rng = np.random.default_rng(random_state)
    w = glorot(rng, (2, n_in), n_in, 2).data
    return FusionHead(strategy, w, zeros((2,)).data)


def head_inputs(strategy: str, outputs: ComponentOutputs) -> np.ndarray:
    return outputs.scores if strategy == "sf" else outputs.features


def train_fusion_head(strategy: str, outputs: ComponentOutputs, y_fake, lr: float = 2e-3,
                      epochs: int = 5, batch_size: int = 16, random_state: int = 42) -> FusionHead:
    """Fit an sf/ff head on fixed component outputs with Adam on BCE.

    Component networks are never touched: the head only sees their cached
    scores or embeddings.
    """
    if strategy not in TRAINABLE:
        raise ValueError(f"strategy {strategy!r} has no trainable weights")
    x = head_inputs(strategy, outputs)
    y = check_fake_labels(y_fake, len(x))
    head = init_head(strategy, x.shape[1], random_state)
    w = Tensor(head.weight.T.copy(), requires_grad=True)  # (n_in, 2)
    b = Tensor(head.bias.copy(), requires_grad=True)
    params = ParameterSet({f"dm.{strategy}.weight": w, f"dm.{strategy}.bias": b})
    state = AdamState(lr=lr)
    rng = np.random.default_rng([random_state, 2])
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            params.zero_grad()
            loss = logits_bce(linear(Tensor(x[idx]), w, b), y[idx])
            adam_step(params, backward(loss, params), state)
            total += loss.item() * len(idx)
        history.append(total / len(x))
    return FusionHead(strategy, w.data.T.copy(), b.data.copy(), history=history)


class AVTENet(ClassifierMixin, BaseEstimator):
    """Ensemble of fitted VN, AN and AVN estimators with a fusion strategy.

    ``fit`` trains only the fusion head (``sf``/``ff``); ``mv`` and ``asf``
    need no training and ``fit`` just records the classes.
    """

    def __init__(self, vn=None, an=None, avn=None, strategy="ff", threshold=0.5, lr=2e-3,
                 epochs=5, batch_size=16, random_state=42):
        self.vn = vn
        self.an = an
        self.avn = avn
        self.strategy = strategy
        self.threshold = threshold
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _components(self):
        comps = (self.vn, self.an, self.avn)
        if any(c is None for c in comps):
            raise ValueError("AVTENet needs fitted vn, an and avn components")
        for c in comps:
            check_is_fitted(c, "network_")
        return comps

    def component_outputs(self, X) -> ComponentOutputs:
        vn, an, avn = (c.forward(X) for c in self._components())
        return ComponentOutputs(vn.score_fake, an.score_fake, avn.score_fake,
                                vn.embedding, an.embedding, avn.embedding)

    def fit(self, X, y):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.classes_ = np.array([0, 1])
        if self.strategy in TRAINABLE:
            outputs = self.component_outputs(X)
            self.head_ = train_fusion_head(self.strategy, outputs, y, self.lr, self.epochs,
                                           self.batch_size, self.random_state)
        else:
            self._components()
            self.head_ = FusionHead(self.strategy, threshold=self.threshold)
        return self

    def fit_outputs(self, outputs: ComponentOutputs, y):
        """Train the head from precomputed component outputs."""
        self.classes_ = np.array([0, 1])
        self.head_ = train_fusion_head(self.strategy, outputs, y, self.lr, self.epochs,
                                       self.batch_size, self.random_state)
        return self

    def _head(self) -> FusionHead:
        if self.strategy in TRAINABLE:
            check_is_fitted(self, "head_")
            return self.head_
        return getattr(self, "head_", None) or FusionHead(self.strategy, threshold=self.threshold)

    def decide(self, X=None, outputs: ComponentOutputs | None = None) -> EnsembleDecision:
        if outputs is None:
            outputs = self.component_outputs(X)
        return dm(outputs, self._head())

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.decide(X).label)

    def predict_proba(self, X) -> np.ndarray:
        s = np.asarray(self.decide(X).fused_score, dtype=np.float64)
        return np.column_stack([1.0 - s, s])
