"""Training objectives: contrastive alignment, next-token generation, and
their weighted combination, each with exact analytic gradients.

The alignment loss is the symmetric softmax contrastive objective over N
(visual token, label text feature) pairs: cosine similarities are scaled by a
learnable temperature and log-softmaxed along both the visual and the text
axis, with the matched pair on the diagonal.  Gradients flow to the visual
tokens and the log-temperature; text features are constants while the
embedding layer is frozen (a flag exposes their gradient for later stages).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyMaskError,
    MismatchedBatchError,
    NegativeLambdaError,
    NonFiniteFunctionError,
    TargetOutOfRangeError,
)
from .numerics import log_softmax_raw, _row_norms


@dataclass
class TemperatureParam:
    """Contrastive temperature, learned in log space so tau stays positive."""

    log_tau: float = 0.0

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau))


@dataclass
class LossBundle:
    """Scalar objective plus gradients keyed by parameter group."""

    value: float
    gradients: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NonFiniteFunctionError(f"loss value {self.value} is not finite")
        for name, g in self.gradients.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteFunctionError(f"gradient {name!r} is not finite")


def alignment_loss(
    visual_tokens: np.ndarray,
    text_features: np.ndarray,
    temp: TemperatureParam,
    grad_text_features: bool = False,
) -> LossBundle:
    """Symmetric contrastive loss over matched rows of the two matrices.

    Returns gradients for "visual_tokens" and "log_tau"; "text_features"
    only when requested.
    """
    x = np.asarray(visual_tokens, dtype=np.float64)
    t = np.asarray(text_features, dtype=np.float64)
    if x.ndim != 2 or t.ndim != 2 or x.shape != t.shape:
        raise MismatchedBatchError(f"shapes {x.shape} and {t.shape} must match")
    n = x.shape[0]
    tau = temp.tau

    x_norms = _row_norms(x)
    t_norms = _row_norms(t)
    xn = x / x_norms[:, None]
    tn = t / t_norms[:, None]
    phi = xn @ tn.T
    s = phi / tau

    log_p_rows = log_softmax_raw(s)
    log_p_cols = log_softmax_raw(s.T).T
    diag = np.arange(n)
    value = -0.5 / n * (log_p_rows[diag, diag].sum() + log_p_cols[diag, diag].sum())

    # dL/dS = (P_row + P_col - 2 I) / 2N, with P_col the per-column softmax.
    g_s = (np.exp(log_p_rows) + np.exp(log_p_cols)) / (2.0 * n)
    g_s[diag, diag] -= 1.0 / n
    g_log_tau = -float((g_s * s).sum())

    g_phi = g_s / tau
    # dphi_ij/dx_i = (t_hat_j - phi_ij x_hat_i) / ||x_i||
    g_x = (g_phi @ tn - xn * (g_phi * phi).sum(axis=1, keepdims=True)) / x_norms[:, None]
    gradients = {"visual_tokens": g_x, "log_tau": np.float64(g_log_tau)}
    if grad_text_features:
        g_t = (g_phi.T @ xn - tn * (g_phi * phi).sum(axis=0)[:, None]) / t_norms[:, None]
        gradients["text_features"] = g_t
    return LossBundle(value=float(value), gradients=gradients)


def generation_loss(logits: np.ndarray, target_ids: np.ndarray, mask: np.ndarray) -> LossBundle:
    """Mean next-token negative log-likelihood over supervised positions.

    `target_ids[p]` is the id expected after position p; `mask[p]` selects the
    positions that carry supervision (responses, not prompt or visual slots).
    """
    z = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(target_ids, dtype=np.int64)
    supervised = np.asarray(mask, dtype=bool)
    if z.ndim != 2 or targets.shape != (z.shape[0],) or supervised.shape != (z.shape[0],):
        raise MismatchedBatchError("logits rows, targets and mask lengths must agree")
    count = int(supervised.sum())
    if count == 0:
        raise EmptyMaskError("no supervised positions")
    masked_targets = targets[supervised]
    if masked_targets.min() < 0 or masked_targets.max() >= z.shape[1]:
        raise TargetOutOfRangeError(f"targets must lie in [0, {z.shape[1]})")

    log_probs = log_softmax_raw(z[supervised])
    value = -log_probs[np.arange(count), masked_targets].mean()

    g = np.zeros_like(z)
    probs = np.exp(log_probs)
    probs[np.arange(count), masked_targets] -= 1.0
    g[supervised] = probs / count
    return LossBundle(value=float(value), gradients={"logits": g})


def combined_loss(lg: LossBundle, la: LossBundle, lambda_weight: float) -> LossBundle:
    """L = L_g + lambda * L_a with gradients merged per parameter group."""
    if lambda_weight < 0.0:
        raise NegativeLambdaError(f"lambda must be >= 0, got {lambda_weight}")
    gradients = {k: np.array(v, dtype=np.float64, copy=True) for k, v in lg.gradients.items()}
    for key, g in la.gradients.items():
        scaled = lambda_weight * np.asarray(g, dtype=np.float64)
        if key in gradients:
            gradients[key] = gradients[key] + scaled
        else:
            gradients[key] = scaled
    return LossBundle(value=lg.value + lambda_weight * la.value, gradients=gradients)


def finite_difference_check(fn, x: np.ndarray, analytic_grad: np.ndarray, eps: float = 1e-3) -> float:
    """Worst per-coordinate mismatch between `analytic_grad` and central
    differences of `fn` at `x`, relative to max(1, |analytic|, |numeric|)."""
    x = np.array(x, dtype=np.float64)
    analytic = np.asarray(analytic_grad, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError(f"gradient shape {analytic.shape} != parameter shape {x.shape}")
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(fn(x))
        flat[i] = orig - eps
        f_minus = float(fn(x))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteFunctionError(f"function not finite near coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(numeric - a) / max(1.0, abs(numeric), abs(a))
        worst = max(worst, err)
    return worst
