import numpy as np
import pytest

from elvis.model import VOTE_HIDDEN, WARP_HIDDEN, Ablation, ModelParams


@pytest.mark.parametrize("name", ["none", "no-dustbin", "scalar-gain", "no-f", "no-g", "no-fg", "no-projection"])
def test_tensor_roundtrip_preserves_structure(rng, name):
    model = ModelParams.init(12, 6, rng, Ablation.from_name(name))
    back = ModelParams.from_tensors(model.named_tensors())
    assert back.ablation == model.ablation == Ablation.from_name(name)
    for k, v in model.named_tensors().items():
        np.testing.assert_array_equal(back.named_tensors()[k], v)


def test_unknown_ablation():
    with pytest.raises(ValueError):
        Ablation.from_name("bogus")


def test_init_defaults(rng):
    model = ModelParams.init(20, 8, rng)
    assert float(model.omega) == 1.0
    assert float(model.dustbin.b2) == 0.0
    assert model.f.hidden == VOTE_HIDDEN and model.g.hidden == WARP_HIDDEN
    assert ModelParams.init(20, 8, rng, Ablation(projection=False)).dustbin.dim == 20


def test_from_tensors_rejects_bad_groups(rng):
    t = ModelParams.init(4, 4, rng).named_tensors()
    with pytest.raises(KeyError):
        ModelParams.from_tensors({**t, "extra": np.zeros(1)})
    del t["f.w2"]
    with pytest.raises(KeyError, match="incomplete"):
        ModelParams.from_tensors(t)


def test_copy_is_deep_and_zeros_like(rng):
    model = ModelParams.init(4, 4, rng)
    c = model.copy()
    c.omega += 1
    assert float(model.omega) == 1.0
    assert all((v == 0).all() for v in model.zeros_like().named_tensors().values())


def test_parameter_counts():
    model = ModelParams.init(768, 128, np.random.default_rng(0))
    head = 128 * 128 + 128 + 128 + 1
    f = 3 * VOTE_HIDDEN + 1
    g = 3 * WARP_HIDDEN + 1
    proj = 768 * 128 + 128 + 2 * 128
    assert model.parameter_count(include_projection=False) == head + 1 + f + g
    assert model.parameter_count() == proj + head + 1 + f + g
    assert model.parameter_count(include_warp=False) == proj + head + 1 + f


def test_gains_shapes(rng):
    x = rng.standard_normal((3, 8, 5))
    assert ModelParams.init(8, 8, rng).gains(x[0]).shape == (5,)
    assert ModelParams.init(8, 8, rng, Ablation(descriptor_gain=False)).gains(x).shape == (3, 5)
    assert ModelParams.init(8, 8, rng, Ablation(dustbin=False)).gains(x) is None


def test_vote_and_warp_start_increasing(rng):
    for seed in range(5):
        model = ModelParams.init(16, 8, np.random.default_rng(seed), score_scale=100.0)
        assert np.all(np.diff(model.f(np.linspace(0, 1, 11))) > 0)
        assert np.all(np.diff(model.g(np.linspace(0, 200, 11))) > 0)
