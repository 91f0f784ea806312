"""Multi-label losses: BCE and its rebalanced focal extension.

The rebalanced focal loss modifies per-(instance, label) BCE terms in two
ways. A focusing exponent gamma downweights easy decisions based on the
predicted probability. A rebalancing weight counters label imbalance for
positive terms: with label frequencies n_k, the raw ratio for instance i
and positive label k is (1/n_k) / sum over i's positive labels k' of
(1/n_k'), squashed through r_hat = alpha + sigmoid(beta * (r - mu)).
Instances with no positive labels, and all negative terms, keep weight 1.

With rebalancing off and gamma = 0 the loss reduces exactly to mean BCE.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def label_frequencies(targets: torch.Tensor) -> torch.Tensor:
    """Positive count per label, clamped to 1 so ratios stay finite."""
    return targets.sum(dim=0).clamp(min=1.0)


def rebalance_weights(
    targets: torch.Tensor,
    frequencies: torch.Tensor,
    alpha: float = 0.1,
    beta: float = 10.0,
    mu: float = 0.3,
) -> torch.Tensor:
    """Smoothed per-(instance, label) resampling weights.

    ``targets``: (n, L) in {0,1}; ``frequencies``: (L,) positive counts.
    """
    inv = 1.0 / frequencies
    per_instance = (targets * inv).sum(dim=1, keepdim=True)  # (n, 1)
    raw = torch.where(
        per_instance > 0, inv.expand_as(targets) / per_instance.clamp(min=1e-12),
        torch.ones_like(targets),
    )
    smoothed = alpha + torch.sigmoid(beta * (raw - mu))
    return torch.where(targets > 0, smoothed, torch.ones_like(smoothed))


def rebalanced_focal_bce(
    logits: torch.Tensor,
    targets: torch.Tensor,
    gamma: float = 2.0,
    rebalance: bool = True,
    frequencies: torch.Tensor | None = None,
    alpha: float = 0.1,
    beta: float = 10.0,
    mu: float = 0.3,
) -> torch.Tensor:
    """Mean rebalanced focal BCE over all (instance, label) terms."""
    bce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    loss = bce
    if gamma != 0.0:
        p = torch.sigmoid(logits)
        p_t = torch.where(targets > 0, p, 1.0 - p)
        loss = loss * (1.0 - p_t) ** gamma
    if rebalance:
        if frequencies is None:
            frequencies = label_frequencies(targets)
        loss = loss * rebalance_weights(targets, frequencies, alpha, beta, mu)
    return loss.mean()


def bce(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logits, targets)
