"""Training losses: MSE plus a rank-correlation penalty.

The rank term is a differentiable surrogate: soft ranks of the
predictions (pairwise sigmoid counts at temperature T) are Pearson-
correlated against the exact ranks of the targets, and 1 - correlation is
added to the MSE. As T -> 0 the surrogate approaches the exact Spearman
coefficient on distinct-valued inputs.
"""
from __future__ import annotations

import numpy as np
from scipy import stats

from srvqa.nn import tensor as T
from srvqa.nn.tensor import Tensor

DEFAULT_TEMPERATURE = 0.05


def soft_ranks(pred: Tensor, temperature: float = DEFAULT_TEMPERATURE) -> Tensor:
    """r_i = sum_j sigmoid((p_i - p_j) / T); smooth, monotone in p_i."""
    n = pred.shape[0]
    diffs = T.mul(
        T.add(T.reshape(pred, (n, 1)), T.mul(T.reshape(pred, (1, n)), -1.0)),
        1.0 / temperature,
    )
    return T.sum_(T.sigmoid(diffs), axis=1)


def _pearson(a: Tensor, b_const: np.ndarray, eps: float = 1e-12) -> Tensor:
    b = Tensor(b_const - b_const.mean())
    a_c = T.add(a, T.mul(T.mean(a), -1.0))
    num = T.sum_(T.mul(a_c, b))
    den = T.mul(T.sqrt(T.add(T.sum_(T.power(a_c, 2.0)), eps)), float(np.sqrt((b.data**2).sum()) + eps))
    return T.div(num, den)


def loss_mse_srcc(
    pred: Tensor,
    target,
    temperature: float = DEFAULT_TEMPERATURE,
    mse_only: bool = False,
    use_l1: bool = False,
) -> Tensor:
    """L = MSE + (1 - surrogate SRCC); batches < 2 fall back to MSE only."""
    target = np.asarray(target, dtype=np.float64)
    diff = T.add(pred, Tensor(-target))
    if use_l1:
        base = T.mean(T.sqrt(T.add(T.power(diff, 2.0), 1e-12)))
    else:
        base = T.mean(T.power(diff, 2.0))
    n = pred.shape[0]
    if mse_only or n < 2:
        return base
    if np.ptp(target) == 0.0 or np.ptp(pred.data) < 1e-12:
        # degenerate batch: the rank term contributes its maximum penalty
        return T.add(base, 1.0)
    target_ranks = stats.rankdata(target)
    corr = _pearson(soft_ranks(pred, temperature), target_ranks)
    return T.add(base, T.add(T.mul(corr, -1.0), 1.0))
