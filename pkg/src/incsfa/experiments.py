"""Named, reproducible experiment runs.

Each run takes an :class:`ExperimentConfig`. It returns metrics (a nested
dict ready for JSON), plot-ready time series (header plus rows), and
serialized models. Nothing here touches the filesystem; see :mod:`incsfa.cli`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import generators as gen
from . import metrics as met
from . import serialize
from .errors import ConfigError
from .hierarchy import HierarchySpec, LayerSpec, build, plan_layer
from .oracle import batch_sfa
from .signal import time_embed
from .unit import IncSFAUnit, UnitConfig

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run."""

    name: str
    generator: dict = field(default_factory=dict)
    unit: dict = field(default_factory=dict)
    hierarchy: dict | None = None
    epochs: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "generator": copy.deepcopy(self.generator),
            "unit": copy.deepcopy(self.unit),
            "hierarchy": copy.deepcopy(self.hierarchy),
            "epochs": self.epochs,
            "seed": self.seed,
            "params": copy.deepcopy(self.params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict) or "name" not in d:
            raise ConfigError("experiment config must be an object with a 'name'")
        unknown = set(d) - {"name", "generator", "unit", "hierarchy", "epochs", "seed", "params"}
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        cfg = cls(
            name=str(d["name"]),
            generator=dict(d.get("generator") or {}),
            unit=dict(d.get("unit") or {}),
            hierarchy=d.get("hierarchy"),
            epochs=int(d.get("epochs", 1)),
            seed=int(d.get("seed", 0)),
            params=dict(d.get("params") or {}),
        )
        if cfg.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {cfg.epochs}")
        return cfg

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


@dataclass
class ExperimentResult:
    metrics: dict
    runtime_s: float = 0.0
    series: dict[str, tuple[list[str], np.ndarray]] = field(default_factory=dict)
    models: dict[str, bytes] = field(default_factory=dict)


def _unit_config(d: dict, **fixed) -> UnitConfig:
    d = {**d, **fixed}
    return UnitConfig.from_dict(d)


def _schedule(t1=20, t2=200, c=4.0, r=5000.0) -> dict:
    return {"t1": t1, "t2": t2, "c": c, "r": r}


def _mca(eta) -> dict:
    return {"eta_l": eta, "eta_h": eta, "T": 0}


def _train_epochs(unit: IncSFAUnit, X, epochs: int, on_epoch: Callable[[int], None]) -> None:
    for ep in range(1, epochs + 1):
        for x in X:
            unit.update(x)
        on_epoch(ep)


def _recorded(params: dict, epochs: int) -> set[int]:
    return set(params.get("record_epochs", [epochs]))


def _output_rows(records: dict[int, np.ndarray]) -> np.ndarray:
    rows = []
    for ep in sorted(records):
        Y = records[ep]
        idx = np.arange(len(Y))[:, None]
        rows.append(np.hstack([np.full_like(idx, ep), idx, Y]))
    return np.vstack(rows)


# -- simple signal ---------------------------------------------------------


def _default_simple() -> ExperimentConfig:
    return ExperimentConfig(
        name="simple-signal",
        generator={"kind": "simple", "n": 2000},
        unit={
            "J": 3,
            "expand": True,
            "ccipca": _schedule(c=2.0, r=math.inf),
            "moments": _schedule(c=0.0, r=math.inf),
            "mca": _mca(0.08),
        },
        epochs=10,
        params={"record_epochs": [2, 5, 10]},
    )


def run_simple(cfg: ExperimentConfig) -> ExperimentResult:
    X = gen.gen_simple(int(cfg.generator.get("n", 2000)))
    oracle = batch_sfa(X, int(cfg.unit.get("J", 3)), expand=cfg.unit.get("expand", True))
    yb = oracle.transform(X)
    unit = IncSFAUnit(_unit_config(cfg.unit, input_dim=2, seed=cfg.seed))
    rmse, records = [], {}
    keep = _recorded(cfg.params, cfg.epochs)

    def on_epoch(ep):
        Y = unit.infer_batch(X)
        rmse.append(met.rmse_sign_aligned(Y, yb).tolist())
        if ep in keep:
            records[ep] = Y

    _train_epochs(unit, X, cfg.epochs, on_epoch)
    J = unit.J
    return ExperimentResult(
        metrics={
            "rmse_per_epoch": rmse,
            "final_rmse": rmse[-1],
            "oracle_delta": oracle.delta.tolist(),
            "reference_rmse": [0.0360, 0.1078, 0.0377],
        },
        series={
            "rmse": (["epoch"] + [f"rmse{j + 1}" for j in range(J)],
                     np.column_stack([np.arange(1, cfg.epochs + 1), np.array(rmse)])),
            "outputs": (["epoch", "t"] + [f"y{j + 1}" for j in range(J)], _output_rows(records)),
            "oracle": ([f"y{j + 1}" for j in range(J)], yb),
        },
        models={"unit": serialize.dumps(unit)},
    )


# -- driving force ---------------------------------------------------------


def _default_logistic() -> ExperimentConfig:
    return ExperimentConfig(
        name="driving-force",
        generator={"kind": "logistic", "n": 1000, "x0": 0.6, "window": 10},
        unit={
            "J": 1,
            "K": 45,
            "expand": True,
            "ccipca": _schedule(c=2.0, r=math.inf),
            "moments": _schedule(c=0.0, r=math.inf),
            "mca": _mca(0.004),
        },
        epochs=60,
        params={"record_epochs": [15, 30, 60]},
    )


def run_logistic(cfg: ExperimentConfig) -> ExperimentResult:
    g = cfg.generator
    x, force = gen.gen_logistic(int(g.get("n", 1000)), float(g.get("x0", 0.6)))
    window = int(g.get("window", 10))
    X = time_embed(x, window)
    force_aligned = force[window - 1 :]
    oracle = batch_sfa(X, int(cfg.unit.get("J", 1)), expand=cfg.unit.get("expand", True))
    yb = oracle.transform(X)
    unit = IncSFAUnit(_unit_config(cfg.unit, input_dim=window, seed=cfg.seed))
    rmse, corr, records = [], [], {}
    keep = _recorded(cfg.params, cfg.epochs)

    def on_epoch(ep):
        Y = unit.infer_batch(X)
        rmse.append(met.rmse_sign_aligned(Y, yb).tolist())
        corr.append(float(met.abs_corr(Y[:, 0], force_aligned)[0]))
        if ep in keep:
            records[ep] = Y

    _train_epochs(unit, X, cfg.epochs, on_epoch)
    return ExperimentResult(
        metrics={
            "rmse_per_epoch": rmse,
            "final_rmse": rmse[-1],
            "force_corr_per_epoch": corr,
            "oracle_force_corr": float(met.abs_corr(yb[:, 0], force_aligned)[0]),
            "input_dim": unit.config.expanded_dim,
            "reference_rmse": [0.0984],
        },
        series={
            "rmse": (["epoch", "rmse1"], np.column_stack([np.arange(1, cfg.epochs + 1), np.array(rmse)[:, 0]])),
            "outputs": (["epoch", "t", "y1"], _output_rows(records)),
            "signals": (["x", "force", "oracle_y1"], np.column_stack([x[window - 1 :], force_aligned, yb[:, 0]])),
        },
        models={"unit": serialize.dumps(unit)},
    )


# -- spatial coding --------------------------------------------------------


def _default_spatial() -> ExperimentConfig:
    return ExperimentConfig(
        name="spatial",
        generator={
            "kind": "random-walk",
            "n": 50000,
            "v_r": [3.0, 2.5],
            "m": 0.75,
            "bounds": [[-10.0, 10.0], [-5.0, 5.0]],
            "grid": [21, 21],
        },
        unit={
            "J": 2,
            "expand": True,
            "ccipca": _schedule(c=2.0, r=math.inf),
            "moments": _schedule(c=0.0, r=math.inf),
            "mca": _mca(0.003),
        },
        epochs=1,
    )


def run_spatial(cfg: ExperimentConfig) -> ExperimentResult:
    g = cfg.generator
    bounds = g.get("bounds", [[-10.0, 10.0], [-5.0, 5.0]])
    walk = gen.gen_random_walk(
        int(g.get("n", 50000)), v_r=g.get("v_r", [3.0, 2.5]), m=float(g.get("m", 0.75)),
        bounds=bounds, seed=cfg.seed,
    )
    grid = gen.grid_positions(bounds, tuple(g.get("grid", [21, 21])))
    J = int(cfg.unit.get("J", 2))
    oracle = batch_sfa(walk, J, expand=cfg.unit.get("expand", True))
    yb = oracle.transform(grid)
    unit = IncSFAUnit(_unit_config(cfg.unit, input_dim=2, seed=cfg.seed))
    for _ in range(cfg.epochs):
        for p in walk:
            unit.update(p)
    Y = unit.infer_batch(grid)
    corr_x = met.abs_corr(Y, np.repeat(grid[:, :1], J, axis=1)).tolist()
    corr_y = met.abs_corr(Y, np.repeat(grid[:, 1:], J, axis=1)).tolist()
    return ExperimentResult(
        metrics={
            "grid_rmse": met.rmse_sign_aligned(Y, yb).tolist(),
            "corr_x": corr_x,
            "corr_y": corr_y,
            "oracle_corr_x": met.abs_corr(yb, np.repeat(grid[:, :1], J, axis=1)).tolist(),
            "oracle_corr_y": met.abs_corr(yb, np.repeat(grid[:, 1:], J, axis=1)).tolist(),
            "reference_rmse": [0.0536, 0.0914],
        },
        series={
            "grid": (["x", "y"] + [f"y{j + 1}" for j in range(J)] + [f"oracle{j + 1}" for j in range(J)],
                     np.hstack([grid, Y, yb])),
            "walk": (["x", "y"], walk[:: max(1, len(walk) // 5000)]),
        },
        models={"unit": serialize.dumps(unit)},
    )


# -- adaptation and outliers (both on the 500-sample simple signal) -------


def _amnesic_unit(J: int) -> dict:
    return {"J": J, "expand": True, "ccipca": _schedule(20, 200, 4.0, 5000.0), "mca": _mca(0.01)}


def _default_adaptation() -> ExperimentConfig:
    return ExperimentConfig(
        name="adaptation",
        generator={"kind": "switched", "n_per_epoch": 500, "switch_epoch": 60},
        unit=_amnesic_unit(2),
        epochs=120,
    )


def run_adaptation(cfg: ExperimentConfig) -> ExperimentResult:
    n = int(cfg.generator.get("n_per_epoch", 500))
    switch = int(cfg.generator.get("switch_epoch", 60))
    base = gen.gen_simple(n)
    J = int(cfg.unit.get("J", 2))
    filters = {
        "pre": batch_sfa(base, J, expand=True).filters,
        "post": batch_sfa(base[:, ::-1], J, expand=True).filters,
    }
    unit = IncSFAUnit(_unit_config(cfg.unit, input_dim=2, seed=cfg.seed))
    cos = {"pre": [], "post": []}
    for ep in range(1, cfg.epochs + 1):
        X = base if ep <= switch else base[:, ::-1]
        for x in X:
            unit.update(x)
        F = unit.input_filters()
        for key, Fs in filters.items():
            cos[key].append([met.direction_cosine(F[j], Fs[j]) for j in range(J)])
    pre, post = np.array(cos["pre"]), np.array(cos["post"])
    before = pre[:switch, 0]
    after = post[switch:, 0]
    hit = np.flatnonzero(after > 0.9)
    return ExperimentResult(
        metrics={
            "switch_epoch": switch,
            "cos_pre": pre.tolist(),
            "cos_post": post.tolist(),
            "max_cos_pre_before_switch": float(before.max()),
            "epochs_to_recover": int(hit[0]) + 1 if hit.size else None,
        },
        series={
            "direction_cosine": (
                ["epoch"] + [f"pre{j + 1}" for j in range(J)] + [f"post{j + 1}" for j in range(J)],
                np.column_stack([np.arange(1, cfg.epochs + 1), pre, post]),
            )
        },
        models={"unit": serialize.dumps(unit)},
    )


def _default_outlier() -> ExperimentConfig:
    return ExperimentConfig(
        name="outlier",
        generator={"kind": "outlier", "n_per_epoch": 500, "index": 100, "value": 2000.0},
        unit=_amnesic_unit(2),
        epochs=150,
    )


def run_outlier(cfg: ExperimentConfig) -> ExperimentResult:
    g = cfg.generator
    n = int(g.get("n_per_epoch", 500))
    base = gen.gen_simple(n)
    stream = np.tile(base, (cfg.epochs, 1))
    stream = gen.inject_outlier(stream, int(g.get("index", 100)), float(g.get("value", 2000.0)))
    J = int(cfg.unit.get("J", 2))
    clean_model = batch_sfa(base, J, expand=True)
    corrupt_model = batch_sfa(stream, J, expand=True)
    clean = clean_model.transform(base)[:, 0]
    corrupt = corrupt_model.transform(base)[:, 0]
    unit = IncSFAUnit(_unit_config(cfg.unit, input_dim=2, seed=cfg.seed))
    trace = []
    for ep in range(cfg.epochs):
        for x in stream[ep * n : (ep + 1) * n]:
            unit.update(x)
        trace.append(float(met.abs_corr(unit.infer_batch(base)[:, 0], clean)[0]))
    y_inc = unit.infer_batch(base)[:, 0]
    return ExperimentResult(
        metrics={
            "oracle_corrupted_corr": float(met.abs_corr(corrupt, clean)[0]),
            "oracle_clean_delta": float(clean_model.delta[0]),
            "oracle_corrupted_delta": float(corrupt_model.delta[0]),
            "incsfa_corr_per_epoch": trace,
            "incsfa_final_corr": trace[-1],
        },
        series={
            "first_output": (["t", "clean_oracle", "corrupted_oracle", "incsfa"],
                             np.column_stack([np.arange(n), clean, corrupt, y_inc])),
            "trace": (["epoch", "corr"], np.column_stack([np.arange(1, cfg.epochs + 1), trace])),
        },
        models={"unit": serialize.dumps(unit)},
    )


# -- episodic --------------------------------------------------------------


def _default_episodic() -> ExperimentConfig:
    return ExperimentConfig(
        name="episodic",
        generator={"kind": "episodic", "n_episodes": 50, "episode_len": 100, "dim": 40,
                   "noise": 0.05, "n_test": 10},
        unit={
            "J": 5,
            "K": 20,
            "ccipca": _schedule(20, 200, 2.0, 10000.0),
            "mca": _mca(0.001),
            "normalize_until": 10 * 100,
        },
        epochs=10,
    )


def _episode_delta(unit: IncSFAUnit, episodes) -> np.ndarray:
    """Per-feature Delta on unit-variance outputs, averaged over episodes."""
    Ys = [unit.infer_batch(e.frames) for e in episodes]
    sd = np.concatenate(Ys).std(axis=0)
    sd[sd == 0] = 1.0
    return np.mean([met.delta_value(Y / sd) for Y in Ys], axis=0)


def run_episodic(cfg: ExperimentConfig) -> ExperimentResult:
    g = cfg.generator
    kw = dict(episode_len=int(g.get("episode_len", 100)), dim=int(g.get("dim", 40)),
              noise=float(g.get("noise", 0.05)))
    train = gen.gen_episodic(int(g.get("n_episodes", 50)), seed=cfg.seed, **kw)
    # held-out episodes share the scene (patterns) but not the trajectories
    test = gen.gen_episodic(int(g.get("n_episodes", 50)) + int(g.get("n_test", 10)), seed=cfg.seed, **kw)
    test = test[len(train):]
    unit = IncSFAUnit(_unit_config(cfg.unit, input_dim=kw["dim"], seed=cfg.seed))
    order_rng = np.random.default_rng(cfg.seed + 1)
    deltas, cosines = [], []
    for _ in range(cfg.epochs):
        for i in order_rng.permutation(len(train)):
            unit.begin_episode()
            for x in train[i].frames:
                unit.update(x)
        deltas.append(float(_episode_delta(unit, test).mean()))
        U = unit.sfs.unit()
        C = np.abs(U @ U.T)
        cosines.append(float(C[~np.eye(len(C), dtype=bool)].mean()))
    frames = np.concatenate([e.frames for e in test])
    labels = np.concatenate([e.latent[:, 0] * 2 + e.latent[:, 1] for e in test]).astype(int)
    emb = unit.infer_batch(frames)[:, :2]
    ups = np.diff(deltas) > 0
    return ExperimentResult(
        metrics={
            "heldout_delta_per_epoch": deltas,
            "nonmonotone_fraction": float(ups.mean()) if ups.size else 0.0,
            "mean_pairwise_cosine_per_epoch": cosines,
            "purity": met.nearest_centroid_purity(emb, labels),
            "derivative_updates": unit.n_deriv,
            "episodes_seen": unit.n_episodes,
        },
        series={
            "embedding": (["f1", "f2", "state"], np.column_stack([emb, labels])),
            "training": (["epoch", "delta", "mean_cosine"],
                         np.column_stack([np.arange(1, cfg.epochs + 1), deltas, cosines])),
        },
        models={"unit": serialize.dumps(unit)},
    )


# -- hierarchy -------------------------------------------------------------


def _default_hierarchy() -> ExperimentConfig:
    opts = {"mca": _mca(0.1)}
    return ExperimentConfig(
        name="hierarchy",
        generator={"kind": "moving-board", "n": 2000, "img_w": 16, "img_h": 16,
                   "depth_range": [1.0, 3.0], "m": 0.9, "v_r": 0.1, "noise": 0.02},
        hierarchy={
            "image_shape": [16, 16],
            "layers": [
                {"field": [8, 8], "overlap": [4, 4], "J": 3, "K": 6, "epochs": 5, "options": opts},
                {"field": [3, 3], "overlap": [0, 0], "J": 1, "K": 5, "epochs": 5, "options": opts},
            ],
        },
    )


def _network_blobs(net) -> list[list[bytes]]:
    return [[serialize.dumps(u) for u in layer.units] for layer in net.layers]


def run_hierarchy(cfg: ExperimentConfig) -> ExperimentResult:
    g = cfg.generator
    images, depth = gen.gen_moving_board(
        int(g.get("n", 2000)), int(g.get("img_w", 16)), int(g.get("img_h", 16)),
        tuple(g.get("depth_range", [1.0, 3.0])), float(g.get("m", 0.9)), cfg.seed,
        float(g.get("v_r", 0.1)), float(g.get("noise", 0.0)),
    )
    spec_d = copy.deepcopy(cfg.hierarchy or {})
    spec_d.setdefault("seed", cfg.seed)
    spec = HierarchySpec.from_dict(spec_d)
    net = build(spec)
    frozen_ok = True
    for i in range(len(net.layers)):
        lower = _network_blobs(net)[:i]
        net.train_layer(i, images)
        frozen_ok &= _network_blobs(net)[:i] == lower
    top = net.transform(images)
    large_grid, _ = plan_layer(LayerSpec((10, 10), (5, 5), edge="drop"), (83, 100, 1))
    return ExperimentResult(
        metrics={
            "top_depth_corr": float(met.abs_corr(top[:, 0], depth)[0]),
            "lower_layers_unchanged": bool(frozen_ok),
            "grids": [list(layer.grid) for layer in net.layers],
            "large_image_layer1_grid": list(large_grid),
        },
        series={"top": (["depth"] + [f"y{j + 1}" for j in range(top.shape[1])], np.column_stack([depth, top]))},
        models={
            f"layer{li}_node{ni}": blob
            for li, blobs in enumerate(_network_blobs(net))
            for ni, blob in enumerate(blobs)
        },
    )


EXPERIMENTS: dict[str, tuple[Callable[[], ExperimentConfig], Callable[[ExperimentConfig], ExperimentResult]]] = {
    "simple-signal": (_default_simple, run_simple),
    "driving-force": (_default_logistic, run_logistic),
    "spatial": (_default_spatial, run_spatial),
    "adaptation": (_default_adaptation, run_adaptation),
    "outlier": (_default_outlier, run_outlier),
    "episodic": (_default_episodic, run_episodic),
    "hierarchy": (_default_hierarchy, run_hierarchy),
}


def default_config(name: str, seed: int = 0) -> ExperimentConfig:
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    cfg = EXPERIMENTS[name][0]()
    cfg.seed = seed
    return cfg


def run(cfg: ExperimentConfig) -> ExperimentResult:
    """Run an experiment and stamp its metrics with the config hash and seed."""
    if cfg.name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.name!r}; choose from {sorted(EXPERIMENTS)}")
    start = time.perf_counter()
    try:
        result = EXPERIMENTS[cfg.name][1](cfg)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration for {cfg.name}: {exc}") from exc
    result.runtime_s = time.perf_counter() - start
    result.metrics = {
        "experiment": cfg.name,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        **result.metrics,
    }
    return result
