"""Incremental minor-component analysis in whitened-derivative space.

Slow features are the minor components of the derivative of the whitened
signal. They are extracted with an anti-Hebbian update. Each lower-order
feature also sees a lateral term that pushes it away from the features above
it (sequential addition), so all ``J`` features learn in parallel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ccipca import ZERO_NORM
from .errors import ConfigError, InvalidInputError

log = logging.getLogger(__name__)

GAMMA_EPS_REL = 0.1
GAMMA_EPS_ABS = 1e-3
SLOWNESS_FLOOR = 1e-12


@dataclass(frozen=True)
class McaRateSchedule:
    """Quadratically rising MCA rate from ``eta_l`` (t=0) to ``eta_h`` (t>=T)."""

    eta_l: float = 0.01
    eta_h: float = 0.01
    T: int = 0

    def __post_init__(self):
        if not 0 < self.eta_l <= self.eta_h <= 0.5:
            raise ConfigError(
                f"need 0 < eta_l <= eta_h <= 0.5, got eta_l={self.eta_l}, eta_h={self.eta_h}"
            )
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}")

    @classmethod
    def constant(cls, eta: float) -> "McaRateSchedule":
        return cls(eta, eta, 0)


def mca_rate(t: int, s: McaRateSchedule) -> float:
    if t >= s.T:
        return s.eta_h
    frac = t / s.T
    return s.eta_l + (s.eta_h - s.eta_l) * frac * frac


def eta_bound(lambda1: float) -> float:
    """Largest stable MCA rate for a derivative signal whose top eigenvalue is ``lambda1``."""
    if not lambda1 > 0:
        raise InvalidInputError(f"lambda1 must be positive, got {lambda1}")
    return 1.0 / (2.0 * lambda1)


def adapt_eta_from_slowness(eta_old: float, S_old: float, S_new: float) -> float:
    """Rescale a working MCA rate as ``eta * (S_old / S_new)**2``.

    The stable rate is inversely proportional to the squared slowness of the
    fastest whitened-derivative component, so tracking that slowness lets a
    known-good rate follow changing input statistics.
    """
    if S_new < SLOWNESS_FLOOR or S_old < SLOWNESS_FLOOR:
        log.debug("slowness %g/%g below floor; keeping eta", S_old, S_new)
        return eta_old
    return eta_old * (S_old / S_new) ** 2


@dataclass
class GammaEstimator:
    """Single-component CCIPCA on the derivative signal.

    ``gamma`` exceeds the top derivative eigenvalue by a small margin and is
    used as the sequential-addition coefficient.
    """

    v1: np.ndarray
    initialized: bool = False
    t: int = 0
    eps_rel: float = GAMMA_EPS_REL
    eps_abs: float = GAMMA_EPS_ABS

    @classmethod
    def empty(cls, dim: int) -> "GammaEstimator":
        return cls(np.zeros(dim))

    @property
    def lambda1(self) -> float:
        return float(np.sqrt(self.v1 @ self.v1))

    @property
    def epsilon(self) -> float:
        return max(self.eps_rel * self.lambda1, self.eps_abs)

    @property
    def gamma(self) -> float:
        return self.lambda1 + self.epsilon

    def copy(self) -> "GammaEstimator":
        return GammaEstimator(self.v1.copy(), self.initialized, self.t, self.eps_rel, self.eps_abs)


def update_gamma(g: GammaEstimator, zdot, eta: float) -> GammaEstimator:
    zdot = np.asarray(zdot, dtype=np.float64)
    if zdot.shape != g.v1.shape:
        raise InvalidInputError(f"derivative has shape {zdot.shape}, expected {g.v1.shape}")
    g.t += 1
    if not g.initialized:
        if zdot @ zdot > ZERO_NORM**2:
            g.v1 = zdot.copy()
            g.initialized = True
        return g
    nv = g.lambda1
    if nv < ZERO_NORM:
        g.v1 = zdot.copy()
        return g
    resp = (zdot @ g.v1) / nv
    g.v1 *= 1.0 - eta
    g.v1 += (eta * resp) * zdot
    return g


@dataclass
class SlowFeatureSet:
    """``J`` slow-feature estimates (rows of ``w``) over ``K`` whitened dims."""

    w: np.ndarray
    n_init: int = 0
    t: int = 0

    @classmethod
    def random(cls, j: int, k: int, rng: np.random.Generator) -> "SlowFeatureSet":
        if not 1 <= j <= k:
            raise ConfigError(f"need 1 <= J <= K, got J={j}, K={k}")
        w = rng.standard_normal((j, k))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        return cls(w)

    @property
    def j(self) -> int:
        return self.w.shape[0]

    @property
    def k(self) -> int:
        return self.w.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.w, axis=1)

    def unit(self) -> np.ndarray:
        n = self.norms()
        n[n < ZERO_NORM] = 1.0
        return self.w / n[:, None]

    def copy(self) -> "SlowFeatureSet":
        return SlowFeatureSet(self.w.copy(), self.n_init, self.t)


def _fallback_direction(zdot, k, rng, active):
    n = np.sqrt(zdot @ zdot)
    if n > ZERO_NORM:
        return zdot / n
    rng = rng if rng is not None else np.random.default_rng(0)
    d = rng.standard_normal(k)
    if active is not None:
        d[~active] = 0.0
    return d / np.linalg.norm(d)


def mca_update(
    sfs: SlowFeatureSet,
    zdot,
    gamma: float,
    eta: float,
    normalize: bool = True,
    *,
    active: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> SlowFeatureSet:
    """One anti-Hebbian step on every feature (in place).

    Normalized form::

        w_1 <- (1 - eta) w_1 - eta (zdot . w_1) zdot
        w_i <- (1 - eta) w_i - eta [(zdot . w_i) zdot + gamma sum_{j<i} (w_j . w_i) w_j]
        w_i <- w_i / |w_i|

    With ``normalize=False`` the raw rule
    ``w_i <- 1.5 w_i - eta C_i w_i - eta |w_i|^2 w_i`` is applied instead, with
    ``C_i = zdot zdot^T + gamma sum_{j<i} w_j w_j^T / |w_j|^2``.

    Features not yet initialized take the current (unit) derivative direction.
    ``active`` optionally masks whitened coordinates that carry no signal;
    features are kept out of them.
    """
    zdot = np.asarray(zdot, dtype=np.float64)
    if zdot.shape != (sfs.k,):
        raise InvalidInputError(f"derivative has shape {zdot.shape}, expected ({sfs.k},)")
    W = sfs.w
    nz = np.sqrt(zdot @ zdot)
    for i in range(sfs.n_init):
        w = W[i]
        lateral = np.zeros(sfs.k)
        for j in range(i):
            wj = W[j]
            if normalize:
                lateral += (wj @ w) * wj
            else:
                lateral += ((wj @ w) / (wj @ wj)) * wj
        if normalize:
            new = (1.0 - eta) * w - eta * ((zdot @ w) * zdot + gamma * lateral)
        else:
            new = (1.5 - eta * (w @ w)) * w - eta * ((zdot @ w) * zdot + gamma * lateral)
        if active is not None:
            new[~active] = 0.0
        n = np.sqrt(new @ new)
        if n < ZERO_NORM:
            log.warning("slow feature %d collapsed to zero; reinitializing", i)
            new = _fallback_direction(zdot, sfs.k, rng, active)
        elif normalize:
            new /= n
        W[i] = new
    if sfs.n_init < sfs.j and nz > ZERO_NORM:
        d = zdot / nz
        if active is not None:
            d = d.copy()
            d[~active] = 0.0
            nd = np.sqrt(d @ d)
            d = d / nd if nd > ZERO_NORM else None
        if d is not None:
            W[sfs.n_init] = d
            sfs.n_init += 1
    sfs.t += 1
    return sfs


def peng_step(w, C, eta: float) -> np.ndarray:
    """Raw expected-value MCA step ``1.5 w - eta C w - eta |w|^2 w`` for a fixed matrix ``C``."""
    w = np.asarray(w, dtype=np.float64)
    return 1.5 * w - eta * (C @ w) - eta * (w @ w) * w
