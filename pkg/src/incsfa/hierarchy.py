"""Converging networks of IncSFA units over rectangular receptive fields.

Layer 1 reads image patches. Every later layer reads patches of the grid of
node outputs below it, where each node contributes ``J`` channels. Layers are
trained bottom-up and frozen once the next layer starts training.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError, NotTrainedError
from .unit import IncSFAUnit, UnitConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReceptiveField:
    x0: int
    y0: int
    width: int
    height: int
    channels: int = 1

    @property
    def dim(self) -> int:
        return self.width * self.height * self.channels

    def check(self, src_h: int, src_w: int) -> None:
        if self.x0 < 0 or self.y0 < 0 or self.width < 1 or self.height < 1:
            raise ConfigError(f"invalid receptive field {self}")
        if self.x0 + self.width > src_w or self.y0 + self.height > src_h:
            raise ConfigError(f"receptive field {self} exceeds source of {src_h}x{src_w}")

    def take(self, src: np.ndarray) -> np.ndarray:
        """Flattened patch of an ``(h, w, c)`` source."""
        return src[self.y0 : self.y0 + self.height, self.x0 : self.x0 + self.width].ravel()


def tile(extent: int, size: int, overlap: int, edge: str = "clamp") -> list[int]:
    """Start offsets of fields of ``size`` at stride ``size - overlap``.

    With ``edge="clamp"`` a last field flush with the far edge is added when
    pixels would otherwise stay uncovered; ``"drop"`` leaves them out.
    """
    if edge not in ("clamp", "drop"):
        raise ConfigError(f"unknown edge policy {edge!r}")
    stride = size - overlap
    if size < 1 or overlap < 0 or stride < 1:
        raise ConfigError(f"need size >= 1 and 0 <= overlap < size, got {size}, {overlap}")
    if size > extent:
        raise ConfigError(f"field size {size} exceeds extent {extent}")
    starts = list(range(0, extent - size + 1, stride))
    if edge == "clamp" and starts[-1] + size < extent:
        starts.append(extent - size)
    return starts


@dataclass(frozen=True)
class LayerSpec:
    """One layer: a grid of identical-shape fields, one unit per field.

    ``field`` and ``overlap`` are ``(rows, cols)`` in units of the source grid
    (pixels for layer 1, nodes of the layer below otherwise). ``options`` are
    extra :class:`UnitConfig` fields (plain JSON values) shared by every node.
    """

    field: tuple[int, int]
    overlap: tuple[int, int] = (0, 0)
    J: int = 1
    K: int | None = None
    expand: bool = False
    clip: tuple[float, float] | None = (-5.0, 5.0)
    edge: str = "clamp"
    epochs: int = 1
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["field"] = list(self.field)
        d["overlap"] = list(self.overlap)
        d["clip"] = None if self.clip is None else list(self.clip)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        d["field"] = tuple(d["field"])
        d["overlap"] = tuple(d.get("overlap", (0, 0)))
        if d.get("clip") is not None:
            d["clip"] = tuple(float(b) for b in d["clip"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid layer spec: {exc}") from exc


@dataclass(frozen=True)
class HierarchySpec:
    image_shape: tuple[int, int]
    layers: tuple[LayerSpec, ...]
    channels: int = 1
    converging: bool = True
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "image_shape": list(self.image_shape),
            "channels": self.channels,
            "converging": self.converging,
            "seed": self.seed,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HierarchySpec":
        try:
            return cls(
                image_shape=tuple(d["image_shape"]),
                layers=tuple(LayerSpec.from_dict(x) for x in d["layers"]),
                channels=int(d.get("channels", 1)),
                converging=bool(d.get("converging", True)),
                seed=int(d.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"hierarchy spec is missing {exc}") from exc


@dataclass
class Layer:
    spec: LayerSpec
    grid: tuple[int, int]
    fields: list[ReceptiveField]
    units: list[IncSFAUnit]
    trained: bool = False

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (*self.grid, self.spec.J)


def plan_layer(spec: LayerSpec, src_shape: tuple[int, int, int]) -> tuple[tuple[int, int], list[ReceptiveField]]:
    """Grid size and row-major field list of one layer over a source grid."""
    h, w, c = src_shape
    fh, fw = spec.field
    ys = tile(h, fh, spec.overlap[0], spec.edge)
    xs = tile(w, fw, spec.overlap[1], spec.edge)
    fields = [ReceptiveField(x, y, fw, fh, c) for y in ys for x in xs]
    for f in fields:
        f.check(h, w)
    return (len(ys), len(xs)), fields


class Network:
    """A layered IncSFA network built from a :class:`HierarchySpec`."""

    def __init__(self, spec: HierarchySpec):
        if not spec.layers:
            raise ConfigError("a hierarchy needs at least one layer")
        self.spec = spec
        self.layers: list[Layer] = []
        src = (*spec.image_shape, spec.channels)
        for li, ls in enumerate(spec.layers):
            grid, fields = plan_layer(ls, src)
            units = []
            for ni, f in enumerate(fields):
                cfg = UnitConfig.from_dict(
                    {
                        **ls.options,
                        "input_dim": f.dim,
                        "J": ls.J,
                        "K": ls.K,
                        "expand": ls.expand,
                        "clip": ls.clip,
                        "seed": spec.seed + 100_003 * li + ni,
                    }
                )
                units.append(IncSFAUnit(cfg))
            self.layers.append(Layer(ls, grid, fields, units))
            src = self.layers[-1].output_shape
        if spec.converging and self.layers[-1].grid != (1, 1):
            raise ConfigError(
                f"converging network must end in a single node, got grid {self.layers[-1].grid}"
            )

    @property
    def output_dim(self) -> int:
        top = self.layers[-1]
        return top.grid[0] * top.grid[1] * top.spec.J

    def _source(self, image) -> np.ndarray:
        img = np.asarray(image, dtype=np.float64)
        h, w = self.spec.image_shape
        if img.shape == (h, w) and self.spec.channels == 1:
            img = img[:, :, None]
        if img.shape != (h, w, self.spec.channels):
            raise InvalidInputError(
                f"image has shape {np.shape(image)}, expected {(h, w, self.spec.channels)}"
            )
        return img

    def _apply(self, layer: Layer, src: np.ndarray) -> np.ndarray:
        out = np.empty((len(layer.units), layer.spec.J))
        for i, (f, u) in enumerate(zip(layer.fields, layer.units)):
            out[i] = u.infer(f.take(src))
        return out.reshape(layer.output_shape)

    def forward(self, image, upto: int | None = None) -> np.ndarray:
        """Feed an image through the first ``upto`` layers (all by default).

        Returns the flattened output grid of the last applied layer, or the
        image itself (as an ``(h, w, c)`` array) when ``upto == 0``.
        """
        n = len(self.layers) if upto is None else upto
        if not 0 <= n <= len(self.layers):
            raise InvalidInputError(f"upto must lie in [0, {len(self.layers)}], got {upto}")
        src = self._source(image)
        for layer in self.layers[:n]:
            if not layer.trained and layer.units[0].t == 0:
                raise NotTrainedError("forward through an untrained layer")
            src = self._apply(layer, src)
        return src if n == 0 else src.ravel()

    def _grid_below(self, image, index: int) -> np.ndarray:
        src = self._source(image)
        for layer in self.layers[:index]:
            src = self._apply(layer, src)
        return src

    def train_layer(self, index: int, frames, epochs: int | None = None, episode_starts=()) -> "Network":
        """Train layer ``index`` on a frame sequence with all lower layers frozen."""
        if not 0 <= index < len(self.layers):
            raise InvalidInputError(f"no layer {index}")
        for i in range(index):
            if not self.layers[i].trained:
                raise NotTrainedError(f"layer {i} must be trained before layer {index}")
        layer = self.layers[index]
        epochs = layer.spec.epochs if epochs is None else epochs
        starts = set(int(s) for s in episode_starts)
        frames = np.asarray(frames, dtype=np.float64)
        # lower layers are frozen, so their outputs can be computed once
        below = [self._grid_below(f, index) for f in frames]
        for ep in range(epochs):
            log.debug("layer %d epoch %d", index, ep)
            for t, src in enumerate(below):
                for f, u in zip(layer.fields, layer.units):
                    if t in starts:
                        u.begin_episode()
                    u.update(f.take(src))
        layer.trained = True
        return self

    def train(self, frames, episode_starts=()) -> "Network":
        for i in range(len(self.layers)):
            self.train_layer(i, frames, episode_starts=episode_starts)
        return self

    def transform(self, frames) -> np.ndarray:
        return np.array([self.forward(f) for f in frames])


def build(spec: HierarchySpec) -> Network:
    return Network(spec)
