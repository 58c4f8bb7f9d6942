"""Pointwise kernel operations: output probabilities, losses, dropout.

The two-class output is a normalized pair of sigmoids,

    P(Y=i | h) = sigmoid(w_i . h) / sum_k sigmoid(w_k . h),

deliberately NOT a softmax: with one logit saturated high and the other at
zero the distribution tops out at [1/3, 2/3] rather than [0, 1].
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..errors import NumericError, ShapeError

PROB_EPS = 1e-12


class Mode(Enum):
    TRAIN = "train"
    EVAL = "eval"


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic function, strictly inside (0, 1) for finite input."""
    x = np.asarray(x, dtype=np.float64)
    # exp(700) is finite in float64, so the clip prevents overflow while
    # keeping sigma(-700) ~ 1e-304 strictly positive
    return 1.0 / (1.0 + np.exp(-np.clip(x, -700.0, 700.0)))


def output_probability(w: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Class probabilities for hidden vector(s) h under 2 x d weights w.

    Accepts h of shape (d,) or (B, d); returns matching (2,) or (B, 2).
    Components are strictly positive and sum to 1.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != 2:
        raise ShapeError(f"output weights must be (2, d), got {w.shape}")
    single = np.ndim(h) == 1
    hb = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if hb.shape[1] != w.shape[1]:
        raise ShapeError(f"hidden width {hb.shape[1]} != weight width {w.shape[1]}")
    s = sigmoid(hb @ w.T)                      # (B, 2), entries in (0, 1)
    p = s / s.sum(axis=1, keepdims=True)
    return p[0] if single else p


def output_probability_vjp(w: np.ndarray, h: np.ndarray,
                           dp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients (dw, dh) of sum(dp * output_probability(w, h)).

    Batched: h (B, d), dp (B, 2) -> dw (2, d), dh (B, d).
    """
    w = np.asarray(w, dtype=np.float64)
    hb = np.atleast_2d(np.asarray(h, dtype=np.float64))
    dpb = np.atleast_2d(np.asarray(dp, dtype=np.float64))
    s = sigmoid(hb @ w.T)
    total = s.sum(axis=1, keepdims=True)
    # dL/ds_i = dp_i / S - (sum_j dp_j s_j) / S^2 ; dL/dz_i = dL/ds_i * s(1-s)
    ds = dpb / total - (dpb * s).sum(axis=1, keepdims=True) / (total * total)
    dz = ds * s * (1.0 - s)                    # (B, 2)
    dw = dz.T @ hb
    dh = dz @ w
    return dw, (dh[0] if np.ndim(h) == 1 else dh)


def bce_loss(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Label-conditioned binary cross-entropy and its gradient w.r.t. p.

    p holds target-class probabilities, clamped into [eps, 1-eps] before the
    logs; y holds {0,1} labels.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"probability shape {p.shape} != label shape {y.shape}")
    n = p.size
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).sum() / n)
    grad = (pc - y) / (n * pc * (1.0 - pc))
    return loss, grad


def mse_loss(x: np.ndarray, xhat: np.ndarray,
             batch_size: int | None = None) -> tuple[float, np.ndarray]:
    """Squared reconstruction error summed over all entries, divided by the
    batch size; gradient is w.r.t. the reconstruction xhat."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ShapeError(f"target shape {x.shape} != reconstruction shape {xhat.shape}")
    n = batch_size if batch_size is not None else (x.shape[0] if x.ndim else 1)
    diff = xhat - x
    loss = float(np.sum(diff * diff) / n)
    return loss, 2.0 * diff / n


def dropout(x: np.ndarray, p: float, mode: Mode,
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout. Returns (output, binary keep mask).

    TRAIN zeroes units independently with probability p and scales the
    survivors by 1/(1-p); EVAL is the identity with an all-ones mask.
    """
    if not 0.0 <= p < 1.0:
        raise NumericError(f"dropout probability must be in [0, 1), got {p}")
    x = np.asarray(x, dtype=np.float64)
    if mode is Mode.EVAL or p == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise NumericError("TRAIN-mode dropout requires an rng")
    mask = (rng.random(x.shape) >= p).astype(np.float64)
    return x * mask / (1.0 - p), mask
