"""Deterministic signal and video generators for the experiments.

Every random generator takes an explicit ``seed`` and draws from numpy's
PCG64 bit generator (``np.random.default_rng``), so a (config, seed) pair
always reproduces the same stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


def gen_simple(n: int) -> np.ndarray:
    """``x1 = sin t + cos^2 11t``, ``x2 = cos 11t`` on ``n`` points of ``[0, 2 pi]``."""
    if n < 2:
        raise InvalidInputError("need at least 2 points")
    t = np.linspace(0.0, 2 * np.pi, n)
    return np.column_stack([np.sin(t) + np.cos(11 * t) ** 2, np.cos(11 * t)])


def gen_switched(n_per_epoch: int, switch_epoch: int, total_epochs: int) -> np.ndarray:
    """Repeated simple signal whose two channels swap from ``switch_epoch`` on."""
    if not 0 <= switch_epoch <= total_epochs:
        raise InvalidInputError("switch_epoch must lie within [0, total_epochs]")
    base = gen_simple(n_per_epoch)
    epochs = [base if e < switch_epoch else base[:, ::-1] for e in range(total_epochs)]
    return np.concatenate(epochs) if epochs else np.empty((0, 2))


def logistic_force(n: int) -> np.ndarray:
    t = np.arange(n) / n
    return np.sin(10 * np.pi * t) + np.sin(22 * np.pi * t)


def gen_logistic(n: int, x0: float = 0.6, force=None) -> tuple[np.ndarray, np.ndarray]:
    """Logistic map ``x <- (3.6 + 0.13 g) x (1 - x)`` driven by ``g``.

    ``g`` defaults to ``sin(10 pi t) + sin(22 pi t)`` with ``t`` spanning one
    second in ``n`` steps. Returns ``(x, g)``.
    """
    g = logistic_force(n) if force is None else np.asarray(force, dtype=np.float64)
    if g.shape != (n,):
        raise InvalidInputError(f"force must have shape ({n},)")
    x = np.empty(n)
    x[0] = x0
    for i in range(n - 1):
        x[i + 1] = (3.6 + 0.13 * g[i]) * x[i] * (1.0 - x[i])
        if not 0.0 <= x[i + 1] <= 1.0:
            raise InvalidInputError(f"logistic trajectory left [0, 1] at step {i + 1}")
    return x, g


@dataclass
class WalkState:
    position: np.ndarray
    velocity: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    v_r: np.ndarray
    m: float

    def inside(self, p) -> bool:
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


def gen_random_walk(
    n: int,
    v_r=(3.0, 2.5),
    m: float = 0.75,
    bounds=((-10.0, 10.0), (-5.0, 5.0)),
    seed: int = 0,
    start=None,
    max_tries: int = 10_000,
) -> np.ndarray:
    """Momentum random walk in an axis-aligned box.

    ``v_r`` scales the Gaussian noise per axis (a standard deviation). When a
    step would leave the box the current velocity is halved and the noise is
    redrawn until the new position is valid.
    """
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    if np.any(b[:, 1] <= b[:, 0]):
        raise InvalidInputError(f"degenerate bounds {bounds}")
    v_r = np.broadcast_to(np.asarray(v_r, dtype=np.float64), b.shape[:1])
    if not 0.0 <= m <= 1.0:
        raise InvalidInputError(f"momentum must lie in [0, 1], got {m}")
    rng = np.random.default_rng(seed)
    p = b.mean(axis=1) if start is None else np.asarray(start, dtype=np.float64)
    st = WalkState(p.copy(), np.zeros_like(p), b[:, 0], b[:, 1], v_r, m)
    if not st.inside(p):
        raise InvalidInputError("start position lies outside the bounds")
    out = np.empty((n, p.size))
    for i in range(n):
        out[i] = st.position
        vel = st.velocity
        for _ in range(max_tries):
            noise = rng.standard_normal(p.size) * st.v_r
            cand = st.position + m * vel + (1.0 - m) * noise
            if st.inside(cand):
                break
            vel = vel / 2.0
        else:
            raise InvalidInputError("random walk could not find a valid step")
        st.velocity = cand - st.position
        st.position = cand
    return out


def gen_ar_mixture(n: int, coefs=(0.95, 0.9, 0.7, 0.0, 0.0), seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stationary mixture of unit-variance AR(1) sources.

    Source ``k`` follows ``s <- a_k s + sqrt(1 - a_k^2) e`` so its Delta-value
    is ``2 (1 - a_k)``. Sources are mixed by a random rotation with gains
    spread over ``[1, 3]``. Returns ``(X, S)``.
    """
    a = np.asarray(coefs, dtype=np.float64)
    if a.ndim != 1 or a.size < 1 or np.any(np.abs(a) >= 1):
        raise InvalidInputError("coefs must be a non-empty vector with |a| < 1")
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((n, a.size))
    S = np.empty((n, a.size))
    S[0] = e[0]
    g = np.sqrt(1.0 - a * a)
    for i in range(1, n):
        S[i] = a * S[i - 1] + g * e[i]
    Q, _ = np.linalg.qr(rng.standard_normal((a.size, a.size)))
    A = Q * np.linspace(1.0, 3.0, a.size)
    return S @ A.T, S


def grid_positions(bounds, shape=(21, 21)) -> np.ndarray:
    """Regular evaluation grid over a box; rows are ``(x, y)`` positions."""
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    axes = [np.linspace(lo, hi, k) for (lo, hi), k in zip(b, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def inject_outlier(stream, t_index: int, value: float) -> np.ndarray:
    s = np.array(stream, dtype=np.float64)
    if not 0 <= t_index < len(s):
        raise InvalidInputError(f"index {t_index} outside stream of length {len(s)}")
    s[t_index] = value
    return s


@dataclass
class Episode:
    frames: np.ndarray  # (n, dim)
    latent: np.ndarray  # (n, 2) binary object states
    distractor: np.ndarray  # (n,) fast nuisance variable


def gen_episodic(
    n_episodes: int,
    episode_len: int = 100,
    seed: int = 0,
    dim: int = 40,
    noise: float = 0.05,
) -> list[Episode]:
    """Episodes with two slow binary latents and a fast-moving distractor.

    Each episode starts with both latents at 0; each flips to 1 exactly once,
    at a random time, in random order. The frame is a fixed pattern per latent
    plus a Gaussian bump at an independent random position in every frame, plus
    pixel noise. Patterns are drawn once per seed and shared by all episodes.
    """
    if n_episodes < 1 or episode_len < 4:
        raise InvalidInputError("need at least one episode of length >= 4")
    rng = np.random.default_rng(seed)
    pix = np.arange(dim)
    patterns = rng.uniform(0.5, 1.5, size=(2, dim)) * (rng.random((2, dim)) < 0.5)
    out = []
    for _ in range(n_episodes):
        a, b = np.sort(rng.choice(np.arange(1, episode_len), size=2, replace=False))
        if rng.random() < 0.5:
            a, b = b, a
        latent = np.zeros((episode_len, 2))
        latent[a:, 0] = 1.0
        latent[b:, 1] = 1.0
        # distractor position is redrawn every frame, so it carries no slow signal
        pos = rng.uniform(0.0, dim - 1, size=episode_len)
        bump = np.exp(-0.5 * ((pix[None, :] - pos[:, None]) / 2.0) ** 2)
        frames = latent @ patterns + 2.0 * bump
        frames += rng.normal(0.0, noise, size=frames.shape)
        out.append(Episode(frames, latent, pos))
    return out


def render_board(depth: float, img_w: int, img_h: int, board=(0.9, 0.7)) -> np.ndarray:
    """Anti-aliased image of a centered rectangle whose size is ``1 / depth``."""
    half_w = 0.5 * board[0] * img_w / depth
    half_h = 0.5 * board[1] * img_h / depth
    cx, cy = img_w / 2.0, img_h / 2.0
    xs = np.arange(img_w)
    ys = np.arange(img_h)
    cover_x = np.clip(np.minimum(xs + 1, cx + half_w) - np.maximum(xs, cx - half_w), 0, 1)
    cover_y = np.clip(np.minimum(ys + 1, cy + half_h) - np.maximum(ys, cy - half_h), 0, 1)
    return np.outer(cover_y, cover_x)


def gen_moving_board(
    n: int,
    img_w: int = 16,
    img_h: int = 16,
    depth_range=(1.0, 3.0),
    m: float = 0.9,
    seed: int = 0,
    v_r: float = 0.1,
    noise: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Video of a board moving in depth; returns ``(images, depth)``.

    Depth follows the momentum walk of :func:`gen_random_walk` in one
    dimension. Images have shape ``(n, img_h, img_w)``.
    """
    lo, hi = depth_range
    if hi < lo:
        raise InvalidInputError(f"invalid depth range {depth_range}")
    if hi == lo:
        depth = np.full(n, float(lo))
    else:
        depth = gen_random_walk(n, v_r=v_r, m=m, bounds=((lo, hi),), seed=seed)[:, 0]
    images = np.stack([render_board(d, img_w, img_h) for d in depth])
    if noise > 0:
        images = images + np.random.default_rng(seed + 1).normal(0.0, noise, images.shape)
    return images, depth
