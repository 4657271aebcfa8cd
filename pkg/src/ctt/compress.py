"""Accuracy-budgeted model compression.

Each layer gets a Frobenius budget delta_j = eps * M / (L * ||Phi||_j * prod
of downstream Lipschitz constants); rounding every layer within its budget
keeps the end-to-end relative error below eps.  Layers are processed from the
last to the first so each budget uses the Lipschitz constants of the already
compressed later layers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .basis import feature_matrix
from .model import CTTLayer, CTTModel
from .tt import tt_add, tt_norm, tt_round, tt_svd

_EXACT_TOL = 1e-13


@dataclass
class LayerStats:
    """Monte-Carlo estimates entering the per-layer budgets."""

    output_norm: float  # M: RMS of the final state norm
    feature_norms: list  # per layer, RMS of prod_k ||phi(h_k)||_2 at its input
    lipschitz: list  # per layer, max sample spectral norm of I + D psi
    n_samples: int


def _feature_norm(layer: CTTLayer, H: np.ndarray) -> float:
    F = feature_matrix(layer.basis, H)
    per_slot = np.linalg.norm(F, axis=2)
    return float(np.sqrt(np.mean(np.prod(per_slot, axis=1) ** 2)))


def _lipschitz(layer: CTTLayer, H: np.ndarray) -> float:
    J = layer.jacobian(H)
    J = J + np.eye(J.shape[1])
    return float(np.linalg.svd(J, compute_uv=False)[:, 0].max())


def estimate_layer_stats(model: CTTModel, samples: np.ndarray) -> LayerStats:
    """Estimate output norm, per-layer feature norms, and layer Lipschitz
    constants along the pushforward trajectory of the samples."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty (samples, d) array")
    traj = model.trajectory(X)
    M = float(np.sqrt(np.mean(np.linalg.norm(traj[-1], axis=1) ** 2)))
    feats = [_feature_norm(layer, traj[j]) for j, layer in enumerate(model.layers)]
    lips = [_lipschitz(layer, traj[j]) for j, layer in enumerate(model.layers)]
    return LayerStats(M, feats, lips, X.shape[0])


def compress(model: CTTModel, eps: float, samples: np.ndarray):
    """Round every layer within its propagated error budget.

    Returns the compressed model and a report with per-layer budgets,
    achieved Frobenius errors, rank changes, and a Monte-Carlo estimate of
    the relative output error on the given samples.
    """
    if eps <= 0:
        raise ValueError("tolerance must be positive")
    X = np.asarray(samples, dtype=float)
    stats = estimate_layer_stats(model, X)
    L = model.n_layers
    traj = model.trajectory(X)

    new_layers: list[CTTLayer] = [None] * L
    lip_after: list[float] = [None] * L  # of the compressed layers
    rows = []
    for j in range(L - 1, -1, -1):
        layer = model.layers[j]
        lip_prod = float(np.prod([lip_after[k] for k in range(j + 1, L)]))
        denom = L * stats.feature_norms[j] * lip_prod
        delta = eps * stats.output_norm / denom if denom > 0 else np.inf
        if not np.isfinite(delta) or delta <= 0.0:
            if delta <= 0.0:
                warnings.warn(f"layer {j}: zero error budget, keeping the layer unchanged")
                new_layer = layer.copy()
                achieved = 0.0
            else:  # infinite budget: a zero-norm downstream chain absorbs anything
                delta = np.inf
                new_layer = layer.copy()
                achieved = 0.0
        elif layer.is_tt:
            tt = tt_round(layer.tt, abs_tol=delta)
            achieved = tt_norm(tt_add(layer.tt, tt, 1.0, -1.0))
            new_layer = CTTLayer(layer.basis, tt)
        else:
            dense = layer.dense_coeffs()
            tt = tt_svd(dense, out_dim=layer.width, abs_tol=delta)
            achieved = float(np.linalg.norm((dense - tt.to_dense()).ravel()))
            new_layer = CTTLayer(layer.basis, tt)
        new_layers[j] = new_layer
        lip_after[j] = _lipschitz(new_layer, traj[j])
        rows.append(
            {
                "layer": j,
                "budget": float(delta),
                "achieved": float(achieved),
                "old_ranks": _layer_ranks(layer),
                "new_ranks": _layer_ranks(new_layer),
                "feature_norm": stats.feature_norms[j],
                "lipschitz_after": lip_after[j],
            }
        )
    rows.reverse()

    compressed = CTTModel(model.lift, new_layers, model.retraction)
    ref = model.forward(X)
    out = compressed.forward(X)
    denom = float(np.linalg.norm(ref.ravel()))
    rel = float(np.linalg.norm((out - ref).ravel())) / denom if denom > 0 else 0.0
    report = {
        "eps": float(eps),
        "output_norm": stats.output_norm,
        "n_samples": stats.n_samples,
        "relative_error": rel,
        "layers": rows,
    }
    return compressed, report


def _layer_ranks(layer: CTTLayer):
    if layer.is_tt:
        return tuple(int(r) for r in layer.tt.ranks)
    return None
