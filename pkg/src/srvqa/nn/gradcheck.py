"""Central finite-difference oracle for backward rules."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(f, *inputs, eps: float = 1e-5) -> float:
    """Worst-case relative error between analytic and numeric gradients.

    ``f`` maps Tensor inputs to a scalar Tensor; every input marked
    requires_grad is perturbed componentwise with central differences.
    """
    tensors = [t if isinstance(t, Tensor) else Tensor(t, requires_grad=True) for t in inputs]
    for t in tensors:
        t.zero_grad()
    out = f(*tensors)
    out.backward()
    worst = 0.0
    for t in tensors:
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f(*tensors).data)
            flat[i] = orig - eps
            lo = float(f(*tensors).data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst
