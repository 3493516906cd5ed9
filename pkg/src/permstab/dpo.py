"""Direct preference optimization objective as pure math over sequence
log-probabilities, with analytic gradients for verification. No parameter
updates happen here; the reference policy is frozen by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, NonPositiveBeta

DEFAULT_BETA = 0.4


@dataclass(frozen=True)
class DpoExample:
    """Sequence log-probabilities of the preferred (w) and dispreferred (l)
    responses under the trained policy and the frozen reference."""

    logp_policy_w: float
    logp_policy_l: float
    logp_ref_w: float
    logp_ref_l: float

    def validate(self):
        vals = (self.logp_policy_w, self.logp_policy_l, self.logp_ref_w, self.logp_ref_l)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"log-probabilities must be finite, got {vals}")
        return self


@dataclass(frozen=True)
class DpoReport:
    loss: float
    margins: np.ndarray
    grad_policy_w: np.ndarray
    grad_policy_l: np.ndarray

    @property
    def mean_margin(self) -> float:
        return float(self.margins.mean())


def _softplus(x):
    # log(1 + e^x) without overflow for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dpo_loss(batch, beta=DEFAULT_BETA):
    """Mean -log sigmoid(margin) over the batch, with per-example margins

        margin = beta * [(logp_policy_w - logp_ref_w) - (logp_policy_l - logp_ref_l)]

    and analytic gradients with respect to the policy log-probabilities:
    d loss / d logp_policy_w = -beta * sigmoid(-margin) / batch_size, and
    the same with opposite sign for logp_policy_l.
    """
    if not batch:
        raise EmptyBatch("batch must contain at least one example")
    if not (beta > 0.0):
        raise NonPositiveBeta(f"beta must be > 0, got {beta}")
    for ex in batch:
        ex.validate()
    ratio_w = np.array([ex.logp_policy_w - ex.logp_ref_w for ex in batch])
    ratio_l = np.array([ex.logp_policy_l - ex.logp_ref_l for ex in batch])
    margins = beta * (ratio_w - ratio_l)
    losses = _softplus(-margins)
    sig = _sigmoid(-margins)
    scale = beta / len(batch)
    return DpoReport(
        loss=float(losses.mean()),
        margins=margins,
        grad_policy_w=-scale * sig,
        grad_policy_l=scale * sig,
    )


def sequence_logprob(token_logprobs):
    """Sum per-token log-probabilities into a sequence log-probability."""
    arr = np.asarray(token_logprobs, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("token log-probabilities must be finite")
    return float(arr.sum())
