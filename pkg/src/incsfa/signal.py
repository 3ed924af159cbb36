"""Frame-level preprocessing: expansion, time embedding, running moments, clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

VARIANCE_FLOOR = 1e-8


def _as_frame(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-d frame, got shape {x.shape}")
    return x


def expanded_dim(d: int) -> int:
    return d + d * (d + 1) // 2


def _triu_indices(d: int):
    return np.triu_indices(d)


def quadratic_expand(x) -> np.ndarray:
    """Return ``[x_1..x_d, x_1^2, x_1 x_2, ..., x_1 x_d, x_2^2, ..., x_d^2]``.

    Monomials are listed row-major over the upper triangle, so the order is
    fixed and portable between saved models.
    """
    x = _as_frame(x)
    if x.size == 0:
        raise InvalidInputError("cannot expand an empty frame")
    i, j = _triu_indices(x.size)
    return np.concatenate([x, x[i] * x[j]])


def quadratic_expand_rows(X) -> np.ndarray:
    """Row-wise :func:`quadratic_expand` for a ``(n, d)`` array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise InvalidInputError(f"expected a non-empty (n, d) array, got {X.shape}")
    i, j = _triu_indices(X.shape[1])
    return np.hstack([X, X[:, i] * X[:, j]])


def time_embed(stream, window: int) -> np.ndarray:
    """Sliding-window embedding: row ``k`` is ``stream[k:k + window]``."""
    s = np.asarray(stream, dtype=np.float64).ravel()
    if window < 1:
        raise InvalidInputError("window must be a positive integer")
    if window > s.size:
        raise InvalidInputError(
            f"window {window} is longer than the stream ({s.size} samples)"
        )
    return np.lib.stride_tricks.sliding_window_view(s, window).copy()


@dataclass
class RunningMoments:
    """Running per-component mean and variance of a frame stream."""

    mean: np.ndarray | None = None
    variance: np.ndarray | None = None
    count: int = 0

    @property
    def dim(self) -> int | None:
        return None if self.mean is None else self.mean.size

    def copy(self) -> "RunningMoments":
        return RunningMoments(
            None if self.mean is None else self.mean.copy(),
            None if self.variance is None else self.variance.copy(),
            self.count,
        )


def update_mean(m: RunningMoments, x, eta: float) -> RunningMoments:
    """Exponential running mean; the very first frame sets the mean outright."""
    x = _as_frame(x)
    if m.mean is None:
        m.mean = x.copy()
        m.variance = np.zeros_like(x)
        m.count = 1
        return m
    if x.size != m.mean.size:
        raise InvalidInputError(
            f"frame has dim {x.size}, running mean has dim {m.mean.size}"
        )
    m.mean *= 1.0 - eta
    m.mean += eta * x
    m.count += 1
    return m


def update_variance(m: RunningMoments, x, eta: float) -> RunningMoments:
    """Update per-component variance around the (already updated) mean."""
    x = _as_frame(x)
    if m.mean is None:
        raise InvalidInputError("update_mean must run before update_variance")
    if x.size != m.mean.size:
        raise InvalidInputError(
            f"frame has dim {x.size}, running variance has dim {m.mean.size}"
        )
    d = x - m.mean
    m.variance *= 1.0 - eta
    m.variance += eta * d * d
    return m


def normalize(m: RunningMoments, x) -> np.ndarray:
    """Center ``x`` and divide each component by its standard deviation.

    Components whose variance is below ``VARIANCE_FLOOR`` are centered but
    left unscaled.
    """
    u = _as_frame(x) - m.mean
    sd = np.sqrt(m.variance)
    ok = m.variance >= VARIANCE_FLOOR
    u[ok] /= sd[ok]
    return u


def clip(z, lo: float, hi: float) -> np.ndarray:
    if not lo < hi:
        raise InvalidInputError(f"clip bounds must satisfy lo < hi, got [{lo}, {hi}]")
    return np.clip(np.asarray(z, dtype=np.float64), lo, hi)
