"""Named parameter containers, module base class and initializers."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .autograd import Tensor


class ParameterSet(Mapping):
    """Dotted-name -> Tensor map iterated in lexicographic name order."""

    def __init__(self, items=None):
        self._items = {}
        for name, t in dict(items or {}).items():
            self.add(name, t)

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._items:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._items[name] = tensor

    def __getitem__(self, name):
        return self._items[name]

    def __iter__(self):
        return iter(sorted(self._items))

    def __len__(self):
        return len(self._items)

    def n_values(self) -> int:
        return int(sum(t.size for t in self._items.values()))

    def zero_grad(self) -> None:
        for t in self._items.values():
            t.grad = None

    def arrays(self) -> dict:
        return {name: self._items[name].data for name in self}

    def load_arrays(self, arrays: Mapping, strict: bool = True) -> None:
        missing = set(self._items) - set(arrays)
        unexpected = set(arrays) - set(self._items)
        if strict and (missing or unexpected):
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, arr in arrays.items():
            if name not in self._items:
                continue
            t = self._items[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {t.shape}")
            t.data = arr.copy()


class Module:
    """Minimal parameter-owning block.

    Attributes holding a ``Tensor`` with ``requires_grad`` become parameters;
    attributes holding a ``Module`` or a list of modules are traversed.
    """

    def named_parameters(self, prefix: str = "") -> ParameterSet:
        ps = ParameterSet()
        self._collect(prefix, ps)
        return ps

    def _collect(self, prefix: str, ps: ParameterSet) -> None:
        for key, value in vars(self).items():
            name = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Tensor) and value.requires_grad:
                ps.add(name, value)
            elif isinstance(value, Module):
                value._collect(name, ps)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        item._collect(f"{name}.{i}", ps)


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def normal(rng: np.random.Generator, shape, std: float) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)
