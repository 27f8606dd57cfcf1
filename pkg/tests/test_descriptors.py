import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elvis.descriptors import (
    DatasetFormatError,
    DescriptorDataset,
    ProjectionParams,
    RawDescriptorSet,
    project,
    select_top_m,
    write_dataset,
)
from elvis.linalg import ShapeError

from oracles import naive_layer_norm


def _raw(rng, image_id="a", dim=4, m=5):
    return RawDescriptorSet(image_id, rng.random(m).astype(np.float32),
                            rng.standard_normal((dim, m)).astype(np.float32))


def test_raw_set_validates_shapes():
    with pytest.raises(ShapeError):
        RawDescriptorSet("x", np.ones(3), np.ones((2, 4)))
    with pytest.raises(ShapeError):
        RawDescriptorSet("x", np.ones(0), np.ones((2, 0)))


def test_select_top_m_order():
    raw = RawDescriptorSet("a", np.array([0.1, 0.9, 0.5]), np.arange(6.0).reshape(2, 3))
    out = select_top_m(raw, 2)
    np.testing.assert_array_equal(out.descriptors, raw.descriptors[:, [1, 2]])
    np.testing.assert_array_equal(out.strengths, [0.9, 0.5])


def test_select_top_m_all_keeps_content(rng):
    raw = _raw(rng, m=7)
    out = select_top_m(raw, 10)
    order = np.argsort(-raw.strengths, kind="stable")
    np.testing.assert_array_equal(out.descriptors, raw.descriptors[:, order])
    assert out.count == 7


def test_select_top_m_matches_sort_oracle(rng):
    strengths = rng.random(1000)
    raw = RawDescriptorSet("a", strengths, np.arange(1000.0)[None, :])
    picked = set(select_top_m(raw, 600).descriptors[0].astype(int))
    assert picked == set(sorted(range(1000), key=lambda i: -strengths[i])[:600])


def test_select_top_m_ties_go_to_lower_index():
    raw = RawDescriptorSet("a", np.array([0.5, 0.7, 0.5, 0.5]), np.arange(4.0)[None, :])
    np.testing.assert_array_equal(select_top_m(raw, 3).descriptors[0], [1, 0, 2])
    with pytest.raises(ValueError):
        select_top_m(raw, 0)


def test_project_identity_gives_unit_columns(rng):
    d = 4
    params = ProjectionParams(np.eye(d), np.zeros(d), np.ones(d), np.zeros(d))
    out = project(_raw(rng, dim=d), params)
    np.testing.assert_allclose(np.linalg.norm(out.descriptors, axis=0), 1.0, atol=1e-12)
    assert not out.degenerate.any()


def test_project_zero_weights_flags_everything(rng):
    d = 4
    params = ProjectionParams(np.zeros((3, d)), np.zeros(3), np.ones(3), np.zeros(3))
    out = project(_raw(rng, dim=d), params)
    assert out.degenerate.all()
    np.testing.assert_array_equal(out.descriptors, 0.0)


def test_project_matches_scalar_composition(rng):
    params = ProjectionParams.init(6, 3, rng)
    params.bias = rng.standard_normal(3)
    params.ln_gain = rng.uniform(0.5, 2, 3)
    params.ln_bias = rng.standard_normal(3)
    raw = _raw(rng, dim=6, m=4)
    out = project(raw, params)
    for j in range(4):
        col = raw.descriptors[:, j].astype(float)
        lin = [sum(params.weight[e, k] * col[k] for k in range(6)) + params.bias[e] for e in range(3)]
        ln = naive_layer_norm(lin, params.ln_gain, params.ln_bias, params.eps)
        norm = sum(t * t for t in ln) ** 0.5
        np.testing.assert_allclose(out.descriptors[:, j], [t / norm for t in ln], atol=1e-10)


def test_project_dim_mismatch(rng):
    with pytest.raises(ShapeError):
        project(_raw(rng, dim=5), ProjectionParams.init(4, 3, rng))


def test_roundtrip_bit_identical(tmp_path, rng):
    sets = [_raw(rng, f"img{i}", dim=8, m=3 + i) for i in range(3)]
    ds = write_dataset(sets, tmp_path / "d.elvd")
    assert ds.image_ids == ["img0", "img1", "img2"] and ds.dim == 8 and len(ds) == 3
    for s in sets:
        back = ds.read(s.image_id)
        assert back.descriptors.tobytes() == s.descriptors.tobytes()
        assert back.strengths.tobytes() == s.strengths.tobytes()
        assert back.descriptors.dtype == np.float32
    assert "img1" in ds and ds["img1"].count == 4
    assert set(ds.read_all()) == {"img0", "img1", "img2"}


@given(st.lists(st.text(min_size=1, max_size=12), min_size=1, max_size=4, unique=True),
       st.integers(1, 6), st.integers(1, 5))
def test_roundtrip_property(tmp_path_factory, ids, dim, m):
    rng = np.random.default_rng(len(ids))
    sets = [_raw(rng, i, dim=dim, m=m) for i in ids]
    ds = write_dataset(sets, tmp_path_factory.mktemp("rt") / "d.elvd")
    for s in sets:
        np.testing.assert_array_equal(ds.read(s.image_id).descriptors, s.descriptors)


def test_unknown_id(tmp_path, rng):
    ds = write_dataset([_raw(rng)], tmp_path / "d.elvd")
    with pytest.raises(KeyError, match="nope"):
        ds.read("nope")


def test_bad_magic_names_expected(tmp_path, rng):
    path = tmp_path / "d.elvd"
    write_dataset([_raw(rng)], path)
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(DatasetFormatError, match="ELVD"):
        DescriptorDataset.open(path)


def test_truncated_and_duplicate(tmp_path, rng):
    path = tmp_path / "d.elvd"
    write_dataset([_raw(rng, "a"), _raw(rng, "b")], path)
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(DatasetFormatError, match="truncated"):
        DescriptorDataset.open(path)
    path.write_bytes(data[:10])
    with pytest.raises(DatasetFormatError):
        DescriptorDataset.open(path)
    # two records with the same id
    rec = struct.pack("<H", 1) + b"a" + struct.pack("<I", 1) + np.zeros(5, "<f4").tobytes()
    path.write_bytes(struct.pack("<4sIII", b"ELVD", 1, 2, 4) + rec + rec)
    with pytest.raises(DatasetFormatError, match="duplicate"):
        DescriptorDataset.open(path)


def test_write_rejects_mixed_dims(tmp_path, rng):
    with pytest.raises(ShapeError):
        write_dataset([_raw(rng, "a", dim=3), _raw(rng, "b", dim=4)], tmp_path / "d.elvd")
    with pytest.raises(ValueError):
        write_dataset([], tmp_path / "e.elvd")
