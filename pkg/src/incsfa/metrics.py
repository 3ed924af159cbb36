"""Comparison metrics between streaming and reference outputs."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def _columns(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def rmse_sign_aligned(a, b) -> np.ndarray:
    """Per-feature RMSE after choosing the sign of each column of ``a``."""
    a, b = _columns(a), _columns(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    plus = np.sqrt(np.mean((a - b) ** 2, axis=0))
    minus = np.sqrt(np.mean((a + b) ** 2, axis=0))
    return np.minimum(plus, minus)


def direction_cosine(w, w_star) -> float:
    w = np.asarray(w, dtype=np.float64).ravel()
    w_star = np.asarray(w_star, dtype=np.float64).ravel()
    den = np.linalg.norm(w) * np.linalg.norm(w_star)
    if den == 0:
        raise InvalidInputError("direction cosine of a zero vector")
    return float(min(1.0, abs(w @ w_star) / den))


def delta_value(signal) -> np.ndarray:
    """Mean squared forward difference, per column."""
    s = np.asarray(signal, dtype=np.float64)
    if s.shape[0] < 2:
        raise InvalidInputError("need at least two samples")
    d = np.diff(s, axis=0)
    return np.mean(d * d, axis=0)


def slowness_S(signal, P: int | None = None) -> np.ndarray:
    """``(P / 2 pi) sqrt(Delta)``: sine oscillations over ``P`` samples with the same Delta."""
    s = np.asarray(signal, dtype=np.float64)
    P = s.shape[0] if P is None else P
    return P / (2 * np.pi) * np.sqrt(delta_value(s))


def abs_corr(a, b) -> np.ndarray:
    """Absolute Pearson correlation of matching columns."""
    a, b = _columns(a), _columns(b)
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    den = np.sqrt((a * a).sum(axis=0) * (b * b).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs((a * b).sum(axis=0)) / den
    return np.nan_to_num(r)


def nearest_centroid_purity(points, labels) -> float:
    """Fraction of points closer to their own class centroid than to any other."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    cents = np.stack([points[labels == c].mean(axis=0) for c in classes])
    d = ((points[:, None, :] - cents[None, :, :]) ** 2).sum(axis=-1)
    assigned = classes[np.argmin(d, axis=1)]
    return float(np.mean(assigned == labels))
