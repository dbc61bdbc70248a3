"""Proximal calculus for the sparse group penalty and the dual box.

Closed forms used by the solver:

* projection onto the box [-tau, 1-tau]^n,
* weighted soft-thresholding, prox of t |.| applied elementwise,
* blockwise group soft-thresholding, prox of t ||.||_2 per group,
* their composition, which is the exact prox of the combined penalty
  (apply the elementwise shrinkage first, then the group shrinkage),
* the conjugate prox step (a - prox(a)) / varpi obtained from the
  Moreau identity prox_{s f}(a) + s prox_{f*/s}(a/s) = a.

Thresholded entries are set to literal 0.0 so that downstream support
counts can use exact-zero tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GroupPartition, PenaltySpec

__all__ = [
    "ProxPenalty",
    "box_project",
    "soft_threshold",
    "group_soft_threshold",
    "prox_h",
    "prox_h_conjugate_step",
]


@dataclass
class ProxPenalty:
    """Pre-scaled thresholds for the combined penalty prox.

    ``scaled_d[j]`` is the elementwise threshold for coordinate j and
    ``scaled_w[l]`` the radial threshold for group l (the penalty
    magnitudes already multiplied by the prox step size).
    """

    scaled_d: np.ndarray
    scaled_w: np.ndarray
    partition: GroupPartition

    def __post_init__(self):
        self.scaled_d = np.asarray(self.scaled_d, dtype=float)
        self.scaled_w = np.asarray(self.scaled_w, dtype=float)
        if self.scaled_d.shape != (self.partition.p,):
            raise ValueError("scaled_d length does not match the partition")
        if self.scaled_w.shape != (self.partition.count,):
            raise ValueError("scaled_w length does not match the group count")
        if np.any(self.scaled_d < 0) or np.any(self.scaled_w < 0):
            raise ValueError("thresholds must be non-negative")
        if not (np.all(np.isfinite(self.scaled_d)) and np.all(np.isfinite(self.scaled_w))):
            raise ValueError("thresholds must be finite")

    @classmethod
    def scale(cls, penalty: PenaltySpec, factor: float, partition: GroupPartition) -> "ProxPenalty":
        """Thresholds for prox of ``factor * h`` with h from ``penalty``."""
        return cls(factor * penalty.lam * penalty.d, factor * penalty.mu * penalty.w, partition)


def box_project(a, tau: float) -> np.ndarray:
    """Project onto the box [-tau, 1-tau] componentwise."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("input contains non-finite entries")
    return np.clip(a, -tau, 1.0 - tau)


def soft_threshold(xi, thresholds) -> np.ndarray:
    """Elementwise shrinkage sgn(xi) * max(|xi| - t, 0)."""
    xi = np.asarray(xi, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(thresholds < 0):
        raise ValueError("thresholds must be non-negative")
    return np.sign(xi) * np.maximum(np.abs(xi) - thresholds, 0.0)


def group_soft_threshold(eta, group_thresholds, partition: GroupPartition) -> np.ndarray:
    """Blockwise radial shrinkage.

    Each group block is scaled by max(||block|| - t, 0) / ||block||; a
    block with zero norm maps to zero without any division.
    """
    eta = np.asarray(eta, dtype=float)
    group_thresholds = np.asarray(group_thresholds, dtype=float)
    if np.any(group_thresholds < 0):
        raise ValueError("thresholds must be non-negative")
    norms = partition.group_norms(eta)
    factors = np.zeros(partition.count)
    alive = norms > group_thresholds
    factors[alive] = (norms[alive] - group_thresholds[alive]) / norms[alive]
    out = eta * partition.expand(factors)
    out[partition.expand(~alive)] = 0.0
    return out


def prox_h(a, pen: ProxPenalty) -> np.ndarray:
    """Prox of the combined penalty: group shrinkage of the soft-thresholded point."""
    a = np.asarray(a, dtype=float)
    if a.shape != (pen.partition.p,):
        raise ValueError(f"input has shape {a.shape}, expected ({pen.partition.p},)")
    return group_soft_threshold(soft_threshold(a, pen.scaled_d), pen.scaled_w, pen.partition)


def prox_h_conjugate_step(a, varpi: float, pen: ProxPenalty) -> np.ndarray:
    """Moreau-identity conjugate step (a - prox_{varpi h}(a)) / varpi.

    ``pen`` must carry the thresholds of ``varpi * h``; the result then
    equals the prox of the conjugate penalty h*/varpi at a/varpi, and
    prox_{varpi h}(a) + varpi * result == a holds by construction.
    """
    if varpi <= 0:
        raise ValueError(f"varpi must be positive, got {varpi}")
    a = np.asarray(a, dtype=float)
    return (a - prox_h(a, pen)) / varpi
