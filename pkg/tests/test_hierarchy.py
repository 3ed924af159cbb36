import numpy as np
import pytest

from incsfa import generators as gen
from incsfa import serialize
from incsfa.errors import ConfigError, InvalidInputError, NotTrainedError
from incsfa.hierarchy import HierarchySpec, LayerSpec, Network, ReceptiveField, build, plan_layer, tile
from incsfa.unit import IncSFAUnit, UnitConfig

OPTS = {"mca": {"eta_l": 0.1, "eta_h": 0.1, "T": 0}}


def _desk_spec(seed=0, epochs=2):
    return HierarchySpec(
        image_shape=(16, 16),
        layers=(
            LayerSpec((8, 8), (4, 4), J=3, K=6, epochs=epochs, options=OPTS),
            LayerSpec((3, 3), J=1, K=5, epochs=epochs, options=OPTS),
        ),
        seed=seed,
    )


@pytest.fixture(scope="module")
def video():
    return gen.gen_moving_board(300, seed=0, noise=0.02)


@pytest.fixture(scope="module")
def trained(video):
    return build(_desk_spec()).train(video[0])


class TestTile:
    def test_exact_cover(self):
        assert tile(16, 8, 4) == [0, 4, 8]

    def test_clamp_adds_flush_field(self):
        assert tile(83, 10, 5, "clamp")[-1] == 73
        assert len(tile(83, 10, 5, "clamp")) == 16

    def test_drop(self):
        assert len(tile(83, 10, 5, "drop")) == 15

    @pytest.mark.parametrize("args", [(10, 11, 0), (10, 4, 4), (10, 0, 0)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            tile(*args)

    def test_unknown_edge(self):
        with pytest.raises(ConfigError):
            tile(10, 5, 0, "wrap")


class TestPlan:
    def test_large_image_layout(self):
        grid, fields = plan_layer(LayerSpec((10, 10), (5, 5), J=10, edge="drop"), (83, 100, 1))
        assert grid == (15, 19)
        assert len(fields) == 285
        assert fields[0].dim == 100

    def test_desk_layout(self):
        net = build(_desk_spec())
        assert [layer.grid for layer in net.layers] == [(3, 3), (1, 1)]
        assert net.layers[1].fields[0].dim == 3 * 3 * 3
        assert net.output_dim == 1

    def test_non_converging_rejected(self):
        with pytest.raises(ConfigError):
            build(HierarchySpec((16, 16), (LayerSpec((8, 8), J=1),)))

    def test_field_outside_source(self):
        with pytest.raises(ConfigError):
            ReceptiveField(10, 0, 8, 8).check(16, 16)

    def test_spec_round_trip(self):
        spec = _desk_spec()
        assert HierarchySpec.from_dict(spec.to_dict()) == spec


class TestTraining:
    def test_order_enforced(self, video):
        with pytest.raises(NotTrainedError):
            build(_desk_spec()).train_layer(1, video[0])

    def test_forward_untrained(self, video):
        with pytest.raises(NotTrainedError):
            build(_desk_spec()).forward(video[0][0])

    def test_lower_layer_frozen(self, video):
        net = build(_desk_spec()).train_layer(0, video[0])
        before = [serialize.dumps(u) for u in net.layers[0].units]
        net.train_layer(1, video[0])
        assert [serialize.dumps(u) for u in net.layers[0].units] == before

    def test_node_order_independent(self, video, trained):
        net = build(_desk_spec())
        layer = net.layers[0]
        frames = video[0]
        for f, u in reversed(list(zip(layer.fields, layer.units))):
            for _ in range(layer.spec.epochs):
                for img in frames:
                    u.update(f.take(img[:, :, None]))
        for a, b in zip(layer.units, trained.layers[0].units):
            assert serialize.dumps(a) == serialize.dumps(b)

    def test_top_tracks_depth(self, video, trained):
        y = trained.transform(video[0])[:, 0]
        assert abs(np.corrcoef(y, video[1])[0, 1]) > 0.8


class TestForward:
    def test_pure(self, video, trained):
        img = video[0][5]
        np.testing.assert_array_equal(trained.forward(img), trained.forward(img))

    def test_composition(self, video, trained):
        img = video[0][7][:, :, None]
        l1, l2 = trained.layers
        mid = np.array([u.infer(f.take(img)) for f, u in zip(l1.fields, l1.units)]).reshape(l1.output_shape)
        top = np.array([u.infer(f.take(mid)) for f, u in zip(l2.fields, l2.units)]).ravel()
        np.testing.assert_array_equal(trained.forward(img[:, :, 0]), top)
        np.testing.assert_array_equal(trained.forward(img[:, :, 0], upto=1), mid.ravel())

    def test_upto_zero_returns_image(self, video, trained):
        np.testing.assert_array_equal(trained.forward(video[0][0], upto=0)[:, :, 0], video[0][0])

    def test_wrong_shape(self, trained):
        with pytest.raises(InvalidInputError):
            trained.forward(np.zeros((8, 8)))

    def test_top_dim(self, video, trained):
        assert trained.forward(video[0][0]).shape == (1,)


class TestSingleNode:
    def test_equals_unit(self, video):
        frames = video[0][:200, :4, :4]
        spec = HierarchySpec((4, 4), (LayerSpec((4, 4), J=2, K=6, clip=None, options=OPTS),), seed=5)
        net = Network(spec).train(frames)
        unit = IncSFAUnit(UnitConfig.from_dict({**OPTS, "input_dim": 16, "J": 2, "K": 6, "seed": 5}))
        for img in frames:
            unit.update(img.ravel())
        assert serialize.dumps(net.layers[0].units[0]) == serialize.dumps(unit)
        np.testing.assert_array_equal(net.forward(frames[3]), unit.infer(frames[3].ravel()))
