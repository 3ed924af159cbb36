"""Batch PCA and batch SFA, used as reference solutions."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .signal import quadratic_expand_rows

log = logging.getLogger(__name__)


def _samples(X, minimum: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidInputError(f"expected an (n, d) sample matrix, got shape {X.shape}")
    if X.shape[0] < minimum:
        raise InvalidInputError(f"need at least {minimum} samples, got {X.shape[0]}")
    return X


def batch_pca(X):
    """Eigendecomposition of the sample covariance (normalized by ``n``).

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues descending and
    eigenvectors as columns.
    """
    X = _samples(X, 2)
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / X.shape[0]
    lam, vec = np.linalg.eigh(cov)
    lam = np.clip(lam[::-1], 0.0, None)
    return lam, vec[:, ::-1]


@dataclass
class BatchSFAModel:
    mean: np.ndarray
    whitening: np.ndarray  # (K, I): z = whitening @ (x - mean)
    features: np.ndarray  # (J, K) unit rows
    delta: np.ndarray  # derivative eigenvalue of each feature
    expand: bool = False

    @property
    def j(self) -> int:
        return self.features.shape[0]

    @property
    def filters(self) -> np.ndarray:
        """Slow features as linear maps on the (expanded, centered) input."""
        return self.features @ self.whitening

    def prepare(self, X) -> np.ndarray:
        X = _samples(X, 1)
        return quadratic_expand_rows(X) if self.expand else X

    def whiten(self, X) -> np.ndarray:
        return (self.prepare(X) - self.mean) @ self.whitening.T

    def transform(self, X) -> np.ndarray:
        return self.whiten(X) @ self.features.T


def batch_sfa(X, J: int, expand: bool = False, rank_tol: float = 1e-10) -> BatchSFAModel:
    """Slow features of a sample sequence by two batch eigendecompositions.

    The input is (optionally) expanded, centered and whitened; directions
    whose variance is below ``rank_tol`` times the largest are dropped. The
    whitened signal is differenced forward in time and the ``J`` eigenvectors
    of the derivative second-moment matrix with the smallest eigenvalues are
    the features, slowest first.
    """
    X = _samples(X, 3)
    if expand:
        X = quadratic_expand_rows(X)
    lam, vec = batch_pca(X)
    keep = lam > rank_tol * max(lam[0], np.finfo(float).tiny)
    if not keep.all():
        log.warning("dropping %d null direction(s) before whitening", int((~keep).sum()))
    lam, vec = lam[keep], vec[:, keep]
    if J > lam.size:
        raise InvalidInputError(f"asked for {J} features but data has rank {lam.size}")
    mean = X.mean(axis=0)
    whitening = vec.T / np.sqrt(lam)[:, None]
    Z = (X - mean) @ whitening.T
    dZ = np.diff(Z, axis=0)
    dcov = dZ.T @ dZ / dZ.shape[0]
    d, e = np.linalg.eigh(dcov)
    return BatchSFAModel(mean, whitening, e[:, :J].T.copy(), d[:J].copy(), expand)
