"""Shared test utilities: finite-difference gradient oracles.

The numerical gradients here are intentionally independent of the autodiff
tape: they only call the forward function and difference its output.
"""

from __future__ import annotations

import numpy as np

from memtrack3d.autodiff import Tensor


def numerical_grad(f, tensor: Tensor, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. ``tensor.data``."""
    base = tensor.data.copy()
    grad = np.zeros_like(base)
    flat = grad.reshape(-1)
    data = base.reshape(-1)
    for i in range(data.size):
        orig = data[i]
        data[i] = orig + eps
        tensor.data = data.reshape(base.shape)
        hi = float(f().data)
        data[i] = orig - eps
        tensor.data = data.reshape(base.shape)
        lo = float(f().data)
        data[i] = orig
        flat[i] = (hi - lo) / (2.0 * eps)
    tensor.data = base
    return grad


def assert_grads_match(
    f,
    tensors: dict[str, Tensor],
    eps: float = 1e-6,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
):
    """Compare tape gradients of scalar ``f()`` against central differences.

    ``sample`` limits the number of coordinates checked per tensor (all when
    None); sampling uses ``rng``.
    """
    for t in tensors.values():
        t.grad = None
    out = f()
    out.backward()
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if sample is None or t.data.size <= sample:
            numeric = numerical_grad(f, t, eps=eps)
            np.testing.assert_allclose(
                analytic, numeric, rtol=rtol, atol=atol, err_msg=f"grad of {name}"
            )
        else:
            assert rng is not None
            picks = rng.choice(t.data.size, size=sample, replace=False)
            base = t.data.copy()
            flat = base.reshape(-1)
            for i in picks:
                orig = flat[i]
                flat[i] = orig + eps
                t.data = flat.reshape(base.shape)
                hi = float(f().data)
                flat[i] = orig - eps
                t.data = flat.reshape(base.shape)
                lo = float(f().data)
                flat[i] = orig
                t.data = base
                num = (hi - lo) / (2.0 * eps)
                ana = analytic.reshape(-1)[i]
                np.testing.assert_allclose(
                    ana,
                    num,
                    rtol=rtol,
                    atol=atol,
                    err_msg=f"grad of {name}[{i}]",
                )
