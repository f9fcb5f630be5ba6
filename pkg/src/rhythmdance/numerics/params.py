from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


class ParamStore:
    """Ordered name -> parameter mapping; each parameter carries its gradient slot."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.name = name
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def grad(self, name: str) -> np.ndarray:
        p = self._params[name]
        return np.zeros_like(p.data) if p.grad is None else p.grad

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def n_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, v in state.items():
            p = self._params[k]
            v = np.asarray(v, dtype=np.float64)
            if v.shape != p.shape:
                raise ValueError(f"{k}: shape {v.shape} != {p.shape}")
            p.data = v.copy()
