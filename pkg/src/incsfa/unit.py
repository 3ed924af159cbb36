"""A single incremental SFA unit: expansion, centering, whitening, slow features."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ccipca as cc
from . import mca as mc
from .errors import ConfigError, InvalidInputError, NotTrainedError
from .signal import (
    RunningMoments,
    expanded_dim,
    normalize,
    quadratic_expand,
    update_mean,
    update_variance,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnitConfig:
    """Static configuration of an :class:`IncSFAUnit`.

    ``K=None`` keeps every (expanded) input dimension. ``moments`` is the
    rate schedule of the running mean and variance; ``None`` reuses ``ccipca``. ``normalize_until``
    stops slow-feature normalization after that many samples. ``beta``
    enables periodic dimensionality re-selection every ``reduce_every``
    samples. ``slowness_period`` is the window length ``P`` used when
    converting Delta-values to slowness ``S``.
    """

    input_dim: int
    J: int
    K: int | None = None
    expand: bool = False
    normalize_variance: bool = False
    ccipca: cc.AmnesicSchedule = field(default_factory=cc.AmnesicSchedule)
    moments: cc.AmnesicSchedule | None = None
    mca: mc.McaRateSchedule = field(default_factory=mc.McaRateSchedule)
    normalize_features: bool = True
    normalize_until: int | None = None
    clip: tuple[float, float] | None = None
    beta: float | None = None
    reduce_every: int = 1000
    adapt_eta: bool = False
    slowness_period: int = 1000
    derivative: str = "current-map"
    whitening: str = "orthonormal"
    feature_init: str = "random"
    gamma_eps_rel: float = mc.GAMMA_EPS_REL
    gamma_eps_abs: float = mc.GAMMA_EPS_ABS
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        k = self.k
        if not 1 <= self.J <= k:
            raise ConfigError(f"need 1 <= J <= K, got J={self.J}, K={k}")
        if k > self.expanded_dim:
            raise ConfigError(f"K={k} exceeds the input dimension {self.expanded_dim}")
        if self.clip is not None and not self.clip[0] < self.clip[1]:
            raise ConfigError(f"clip bounds must satisfy lo < hi, got {self.clip}")
        if self.beta is not None and not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        if self.feature_init not in ("random", "derivative"):
            raise ConfigError(f"unknown feature_init {self.feature_init!r}")
        if self.whitening not in ("chain", "orthonormal"):
            raise ConfigError(f"unknown whitening {self.whitening!r}")
        if self.derivative not in ("current-map", "difference"):
            raise ConfigError(f"unknown derivative mode {self.derivative!r}")
        if self.reduce_every < 1 or self.slowness_period < 1:
            raise ConfigError("reduce_every and slowness_period must be positive")

    @property
    def expanded_dim(self) -> int:
        return expanded_dim(self.input_dim) if self.expand else self.input_dim

    @property
    def k(self) -> int:
        return self.expanded_dim if self.K is None else self.K

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clip"] = list(self.clip) if self.clip is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UnitConfig":
        d = dict(d)
        try:
            for key in ("ccipca", "moments"):
                if isinstance(d.get(key), dict):
                    d[key] = cc.AmnesicSchedule(**d[key])
            if isinstance(d.get("mca"), dict):
                d["mca"] = mc.McaRateSchedule(**d["mca"])
            if d.get("clip") is not None:
                d["clip"] = tuple(float(b) for b in d["clip"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid unit configuration: {exc}") from exc


@dataclass
class SlownessReport:
    delta: np.ndarray
    S: np.ndarray
    delta_zdot: np.ndarray


class IncSFAUnit:
    """Learns ``J`` slow features from a stream, one frame per :meth:`update`.

    Whitened coordinates follow the stored order of the CCIPCA components.
    ``config.whitening`` picks how the (not yet orthogonal) estimates become
    a whitening map; see :func:`ccipca.orthonormal_whitening` and
    :func:`ccipca.chain_whitening`.

    ``provenance`` is free-form JSON metadata (config hash, seed) carried
    through serialization untouched.
    """

    def __init__(self, config: UnitConfig):
        self.config = config
        k = config.k
        self.rng = np.random.default_rng(config.seed)
        self.moments = RunningMoments()
        self.pcs = cc.PrincipalComponentSet.empty(k, config.expanded_dim)
        self.gamma_est = mc.GammaEstimator(
            np.zeros(k), eps_rel=config.gamma_eps_rel, eps_abs=config.gamma_eps_abs
        )
        self.sfs = mc.SlowFeatureSet.random(config.J, k, self.rng)
        if config.feature_init == "random":
            self.sfs.n_init = config.J
        self.prev_z: np.ndarray | None = None
        self.prev_x: np.ndarray | None = None
        self.t = 0
        self.n_deriv = 0
        self.n_episodes = 0
        self.dz_sq = np.zeros(k)
        self.dy_sq = np.zeros(config.J)
        self.eta_ref: float | None = None
        self.s_ref: float | None = None
        self.prev_total = 0.0
        self.provenance: dict = {}
        self._wcache = None

    @property
    def k(self) -> int:
        return self.pcs.k

    @property
    def J(self) -> int:
        return self.sfs.j

    # -- preprocessing -----------------------------------------------------

    def _check(self, x_raw) -> np.ndarray:
        x = np.asarray(x_raw, dtype=np.float64)
        if x.shape != (self.config.input_dim,):
            raise InvalidInputError(
                f"frame has shape {x.shape}, expected ({self.config.input_dim},)"
            )
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("frame contains non-finite values")
        return x

    def _expand(self, x: np.ndarray) -> np.ndarray:
        return quadratic_expand(x) if self.config.expand else x

    def _center(self, x: np.ndarray) -> np.ndarray:
        if self.config.normalize_variance:
            return normalize(self.moments, x)
        return x - self.moments.mean

    def _whitening(self) -> tuple[np.ndarray, np.ndarray]:
        key = (self.t, self.k)
        if self._wcache is None or self._wcache[0] != key:
            fn = cc.chain_whitening if self.config.whitening == "chain" else cc.orthonormal_whitening
            self._wcache = (key, *fn(self.pcs))
        return self._wcache[1], self._wcache[2]

    def _whiten(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        M, live = self._whitening()
        z = M @ u
        if self.config.clip is not None:
            np.clip(z, *self.config.clip, out=z)
        return z, live

    # -- learning ----------------------------------------------------------

    def mca_eta(self) -> float:
        eta = mc.mca_rate(self.t, self.config.mca)
        if self.config.adapt_eta and self.eta_ref is not None:
            s_now = self._fastest_slowness()
            eta = min(0.5, mc.adapt_eta_from_slowness(self.eta_ref, self.s_ref, s_now))
        return eta

    def _fastest_slowness(self) -> float:
        P = self.config.slowness_period
        return P / (2 * math.pi) * math.sqrt(float(self.dz_sq.max(initial=0.0)))

    def _normalizing(self) -> bool:
        cfg = self.config
        if not cfg.normalize_features:
            return False
        return cfg.normalize_until is None or self.t <= cfg.normalize_until

    def update(self, x_raw) -> np.ndarray:
        """Consume one raw frame and return the current slow-feature outputs."""
        x = self._expand(self._check(x_raw))
        cfg = self.config
        self.t += 1
        eta = cc.amnesic_rate(self.t, cfg.ccipca)
        eta_m = eta if cfg.moments is None else cc.amnesic_rate(self.t, cfg.moments)
        update_mean(self.moments, x, eta_m)
        if cfg.normalize_variance:
            update_variance(self.moments, x, eta_m)
        u = self._center(x)
        cc.ccipca_update(self.pcs, u, eta)
        z, live = self._whiten(u)

        if self.prev_z is None:
            self.n_episodes += 1
        else:
            if cfg.derivative == "current-map":
                zdot = z - self._whiten(self._center(self.prev_x))[0]
            else:
                zdot = z - self.prev_z
            self.n_deriv += 1
            mc.update_gamma(
                self.gamma_est, zdot, cc.amnesic_rate(self.n_deriv, cfg.ccipca)
            )
            eta_w = self.mca_eta()
            rate = max(1.0 / self.n_deriv, eta_w)
            self.dz_sq += rate * (zdot * zdot - self.dz_sq)
            if cfg.adapt_eta and self.eta_ref is None and self.t >= cfg.mca.T:
                self.eta_ref, self.s_ref = eta_w, self._fastest_slowness()
            mc.mca_update(
                self.sfs,
                zdot,
                self.gamma_est.gamma,
                eta_w,
                self._normalizing(),
                active=live if self.pcs.n_init == self.k else None,
                rng=self.rng,
            )
            ydot = self.sfs.w @ zdot
            self.dy_sq += rate * (ydot * ydot - self.dy_sq)
        self.prev_z = z
        self.prev_x = x

        if cfg.beta is not None and self.t % cfg.reduce_every == 0:
            self._reselect_dim()
        # truncation keeps the leading stored components
        return self.sfs.w @ z[: self.k]

    def begin_episode(self) -> "IncSFAUnit":
        """Mark a stream discontinuity: the next sample yields no derivative."""
        self.prev_z = None
        self.prev_x = None
        return self

    def _reselect_dim(self) -> None:
        lam = cc.sorted_eigenvalues(self.pcs)
        total = float(lam.sum())
        if self.prev_total > 0:
            k_new = max(cc.reduce_dim(lam, self.prev_total, self.config.beta), self.J)
            if k_new < self.k:
                log.info("reducing whitened dimension %d -> %d", self.k, k_new)
                self.pcs.truncate(k_new)
                self.gamma_est.v1 = self.gamma_est.v1[:k_new].copy()
                w = self.sfs.w[:, :k_new].copy()
                n = np.linalg.norm(w, axis=1, keepdims=True)
                n[n < cc.ZERO_NORM] = 1.0
                self.sfs.w = w / n if self._normalizing() else w
                self.dz_sq = self.dz_sq[:k_new].copy()
                if self.prev_z is not None:
                    self.prev_z = self.prev_z[:k_new].copy()
        self.prev_total = total

    # -- read-only views ---------------------------------------------------

    def whiten(self, x_raw) -> np.ndarray:
        """Whitened (and clipped) signal for a raw frame, without learning."""
        if self.t == 0:
            raise NotTrainedError("unit has not seen any data")
        x = self._expand(self._check(x_raw))
        return self._whiten(self._center(x))[0]

    def infer(self, x_raw) -> np.ndarray:
        return self.sfs.w @ self.whiten(x_raw)

    def infer_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.infer(x) for x in X]).reshape(len(X), self.J)

    def whiten_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.array([self.whiten(x) for x in X]).reshape(len(X), self.k)

    def input_filters(self) -> np.ndarray:
        """Slow features as linear maps on the centered (expanded) input.

        Only meaningful without clipping and variance normalization.
        """
        return self.sfs.w @ self._whitening()[0]

    def slowness_report(self) -> SlownessReport:
        if self.t < 2:
            raise NotTrainedError("slowness needs at least two samples")
        P = self.config.slowness_period
        scale = P / (2 * math.pi)
        return SlownessReport(
            self.dy_sq.copy(), scale * np.sqrt(self.dy_sq), self.dz_sq.copy()
        )
