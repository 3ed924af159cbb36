"""Candid covariance-free incremental PCA (CCIPCA).

Each component is stored unnormalized: its direction estimates an eigenvector
of the input covariance and its norm estimates the matching eigenvalue.
Lower-order components learn on residuals, i.e. the input with the energy
along every higher-order estimate projected out.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import math

import numpy as np

from .errors import ConfigError, InvalidInputError

log = logging.getLogger(__name__)

ZERO_NORM = 1e-12
EIGENVALUE_FLOOR = 1e-10


@dataclass(frozen=True)
class AmnesicSchedule:
    """Three-stage amnesic averaging parameters (see :func:`amnesic_mu`)."""

    t1: int = 20
    t2: int = 200
    c: float = 4.0
    r: float = 5000.0

    def __post_init__(self):
        if not 0 < self.t1 < self.t2:
            raise ConfigError(f"need 0 < t1 < t2, got t1={self.t1}, t2={self.t2}")
        if self.c < 0:
            raise ConfigError(f"c must be >= 0, got {self.c}")
        if self.r <= 0:
            raise ConfigError(f"r must be > 0, got {self.r}")

    @classmethod
    def plain(cls) -> "AmnesicSchedule":
        """No amnesia: the rate is exactly ``1/t``."""
        return cls(c=0.0, r=math.inf)


def amnesic_mu(t: int, s: AmnesicSchedule) -> float:
    if t <= s.t1:
        return 0.0
    if t <= s.t2:
        return s.c * (t - s.t1) / (s.t2 - s.t1)
    return s.c + (t - s.t2) / s.r


def amnesic_rate(t: int, s: AmnesicSchedule) -> float:
    """Learning rate ``(1 + mu(t)) / t``, capped at 1.

    Plain ``1/t`` averaging up to ``t1``; tends to ``1/r`` as ``t`` grows.
    """
    if t < 1:
        raise InvalidInputError(f"amnesic rate is defined for t >= 1, got {t}")
    return min(1.0, (1.0 + amnesic_mu(t, s)) / t)


def amnesic_weights(T: int, s: AmnesicSchedule) -> np.ndarray:
    """Weight each of samples ``1..T`` carries in the amnesic average at ``T``."""
    rates = np.array([amnesic_rate(t, s) for t in range(1, T + 1)])
    keep = np.ones(T)
    # weight of sample tau = rate(tau) * prod_{k > tau} (1 - rate(k))
    keep[:-1] = np.cumprod((1.0 - rates[:0:-1]))[::-1]
    return rates * keep


def expected_error_bound(weights, trace_estimate: float) -> float:
    """Expected squared estimation error of a weighted sample average.

    ``weights`` are the per-sample weights (summing to one) and
    ``trace_estimate`` the trace of the input second-moment matrix.
    """
    w = np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * w) * trace_estimate)


@dataclass
class PrincipalComponentSet:
    """State of ``K`` CCIPCA components over ``I``-dimensional input."""

    vectors: np.ndarray
    n_init: int = 0
    t: int = 0
    last_residuals: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def empty(cls, k: int, dim: int) -> "PrincipalComponentSet":
        if k < 1 or dim < 1:
            raise ConfigError(f"need K >= 1 and dim >= 1, got K={k}, dim={dim}")
        if k > dim:
            raise ConfigError(f"cannot estimate {k} components in {dim} dimensions")
        return cls(np.zeros((k, dim)))

    @property
    def k(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalue estimates in stored order."""
        return np.linalg.norm(self.vectors, axis=1)

    def directions(self) -> np.ndarray:
        """Unit-norm eigenvector estimates in stored order (zero rows stay zero)."""
        n = self.eigenvalues()
        out = np.zeros_like(self.vectors)
        ok = n > ZERO_NORM
        out[ok] = self.vectors[ok] / n[ok, None]
        return out

    def order(self) -> np.ndarray:
        """Indices sorting components by descending eigenvalue, ties by index."""
        return np.argsort(-self.eigenvalues(), kind="stable")

    def truncate(self, k: int) -> None:
        """Drop trailing components of the residual chain, keeping ``k``."""
        if not 1 <= k <= self.k:
            raise InvalidInputError(f"cannot truncate {self.k} components to {k}")
        self.vectors = self.vectors[:k].copy()
        self.n_init = min(self.n_init, k)
        self.last_residuals = None

    def copy(self) -> "PrincipalComponentSet":
        return PrincipalComponentSet(self.vectors.copy(), self.n_init, self.t)


def ccipca_update(pcs: PrincipalComponentSet, u, eta: float) -> PrincipalComponentSet:
    """Update every component with one centered sample ``u`` (in place).

    While fewer than ``K`` components exist, the already initialized ones are
    updated and the next one is initialized to the remaining residual.
    All-zero residuals never initialize a component.

    The residual fed to each component is kept in ``pcs.last_residuals``.
    """
    u = np.array(u, dtype=np.float64)
    if u.shape != (pcs.dim,):
        raise InvalidInputError(f"sample has shape {u.shape}, expected ({pcs.dim},)")
    V = pcs.vectors
    scale = np.sqrt(u @ u)
    active = pcs.n_init
    res = np.empty((min(active + 1, pcs.k), pcs.dim))
    for i in range(active):
        res[i] = u
        v = V[i]
        nv = np.sqrt(v @ v)
        if nv < ZERO_NORM:
            continue
        # v <- (1 - eta) v + eta (u . v / |v|) u
        resp = (u @ v) / nv
        v *= 1.0 - eta
        v += (eta * resp) * u
        nv = np.sqrt(v @ v)
        if nv < ZERO_NORM:
            continue
        # deflate: remove the energy this component is responsible for
        u = u - ((u @ v) / (nv * nv)) * v
    if active < pcs.k:
        res[active] = u
        if np.sqrt(u @ u) > max(ZERO_NORM, 1e-9 * scale):
            V[active] = u
            pcs.n_init += 1
    pcs.last_residuals = res
    pcs.t += 1
    return pcs


def sorted_eigenvalues(pcs: PrincipalComponentSet) -> np.ndarray:
    return pcs.eigenvalues()[pcs.order()]


def whitening_transform(
    pcs: PrincipalComponentSet,
    *,
    floor: float = EIGENVALUE_FLOOR,
    on_small: str = "drop",
    sort: bool = True,
) -> np.ndarray:
    """Linear map ``u -> D V^T u`` built from the current estimates.

    Rows are the unit eigenvector estimates scaled by ``1/sqrt(lambda)``, by
    default ordered by descending eigenvalue. Components whose eigenvalue is
    below ``floor`` are dropped with a warning (``on_small="drop"``), kept as
    zero rows (``"zero"``) or rejected (``"raise"``).
    """
    if on_small not in ("drop", "zero", "raise"):
        raise ConfigError(f"unknown on_small policy {on_small!r}")
    lam = pcs.eigenvalues()
    idx = pcs.order() if sort else np.arange(pcs.k)
    small = lam[idx] < floor
    if small.any():
        if on_small == "raise":
            raise InvalidInputError(
                f"{int(small.sum())} eigenvalue estimate(s) below floor {floor:g}"
            )
        if on_small == "drop":
            log.warning("dropping %d component(s) below eigenvalue floor", small.sum())
    out = np.zeros((idx.size, pcs.dim))
    good = ~small
    rows = idx[good]
    out[good] = pcs.vectors[rows] / (lam[rows] ** 1.5)[:, None]
    if on_small == "drop":
        out = out[good]
    return out


def deflated_basis(pcs: PrincipalComponentSet) -> np.ndarray:
    """Rows ``b_i`` with ``b_i . u == u_i . v_i / |v_i|`` for the residual chain.

    ``u_i`` is the residual of ``u`` after deflating by components ``1..i-1``
    with their current estimates. With orthonormal estimates ``B`` equals the
    unit eigenvector matrix; otherwise it also removes the leakage of higher
    components into lower ones. Uninitialized components give zero rows.
    """
    V = pcs.directions()
    G = np.tril(V @ V.T, k=-1)
    # b_i = v_i - sum_{j<i} (v_j . v_i) b_j, i.e. (I + G) B = V
    return np.linalg.solve(np.eye(pcs.k) + G, V)


def orthonormal_whitening(pcs: PrincipalComponentSet, floor: float = EIGENVALUE_FLOOR):
    """Whitening rows ``q_i / sqrt(lambda_i)`` with ``q`` the Gram-Schmidt basis of the estimates.

    Orthonormalization runs in stored order and keeps each ``q_i`` on the
    side of its estimate. The map stays well conditioned however far the
    estimates are from orthogonal. Components below ``floor`` give zero rows.
    """
    lam = pcs.eigenvalues()
    live = lam >= floor
    M = np.zeros((pcs.k, pcs.dim))
    if live.any():
        V = pcs.directions()[live]
        Q, R = np.linalg.qr(V.T)
        sign = np.where(np.diag(R) < 0, -1.0, 1.0)
        M[live] = (Q * sign).T / np.sqrt(lam[live])[:, None]
    return M, live


def chain_whitening(pcs: PrincipalComponentSet, floor: float = EIGENVALUE_FLOOR):
    """Whitening rows ``b_i / sqrt(lambda_i)`` in stored order, plus the live mask.

    Each output is a deflated residual's projection divided by the spread
    that CCIPCA estimated for exactly that projection, so it stays close to
    unit variance even while the eigenvector estimates are not yet orthogonal.
    Components below ``floor`` give zero rows.
    """
    lam = pcs.eigenvalues()
    live = lam >= floor
    M = np.zeros((pcs.k, pcs.dim))
    if live.any():
        B = deflated_basis(pcs)
        M[live] = B[live] / np.sqrt(lam[live])[:, None]
    return M, live


def reduce_dim(eigenvalues_now, eigenvalues_prev_total: float, beta: float) -> int:
    """Smallest ``K`` whose leading eigenvalues keep more than ``beta`` of the
    previously estimated total variance."""
    lam = np.asarray(eigenvalues_now, dtype=np.float64)
    if not 0.0 < beta < 1.0:
        raise InvalidInputError(f"beta must lie in (0, 1), got {beta}")
    if lam.size == 0 or not np.any(lam > 0):
        return 1
    total = eigenvalues_prev_total if eigenvalues_prev_total > 0 else lam.sum()
    kept = np.cumsum(lam) / total
    hit = np.nonzero(kept > beta)[0]
    return int(hit[0]) + 1 if hit.size else int(lam.size)
