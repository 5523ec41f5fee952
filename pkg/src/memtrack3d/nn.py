"""Parameter management and small network building blocks."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, matmul, relu, tmean, sqrt


class ParamStore:
    """Ordered, named collection of trainable tensors.

    Creation order is deterministic, which keeps checkpoints and optimizer
    state reproducible run to run.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64).copy(), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def fill_zero(self) -> None:
        for p in self._params.values():
            p.data = np.zeros_like(p.data)

    def randomize(self, rng: np.random.Generator, scale: float = 0.2) -> None:
        for p in self._params.values():
            p.data = rng.normal(0.0, scale, size=p.data.shape)

    def num_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ValueError(
                f"parameter name mismatch (missing={sorted(missing)}, "
                f"unexpected={sorted(extra)})"
            )
        for k, p in self._params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {k}: checkpoint {arr.shape} vs "
                    f"model {p.data.shape}"
                )
            p.data = arr.copy()


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


class Linear:
    def __init__(
        self,
        store: ParamStore,
        name: str,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        bias: bool = True,
        zero_init: bool = False,
    ):
        w0 = np.zeros((d_in, d_out)) if zero_init else glorot(rng, d_in, d_out)
        self.w = store.add(f"{name}.w", w0)
        self.b = store.add(f"{name}.b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = matmul(x, self.w)
        if self.b is not None:
            out = out + self.b
        return out


class MLP:
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        widths: list[int],
        rng: np.random.Generator,
        zero_init_last: bool = False,
    ):
        self.layers = []
        for i in range(len(widths) - 1):
            last = i == len(widths) - 2
            self.layers.append(
                Linear(
                    store,
                    f"{name}.{i}",
                    widths[i],
                    widths[i + 1],
                    rng,
                    zero_init=zero_init_last and last,
                )
            )

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int, eps: float = 1e-5):
        self.gamma = store.add(f"{name}.gamma", np.ones(dim))
        self.beta = store.add(f"{name}.beta", np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = tmean(centered * centered, axis=-1, keepdims=True)
        return centered / sqrt(var + self.eps) * self.gamma + self.beta


def identity_ffn_weights(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights (w1, w2) so ReLU(x @ w1) @ w2 == x for every x.

    Uses the split ReLU(x) - ReLU(-x) == x; the hidden width is 2 * dim.
    """
    eye = np.eye(dim)
    w1 = np.concatenate([eye, -eye], axis=1)
    w2 = np.concatenate([eye, -eye], axis=0)
    return w1, w2


class Adam:
    def __init__(
        self,
        store: ParamStore,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in store.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.store.items():
            if p.grad is None:
                continue
            m = self._m[k]
            v = self._v[k]
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
