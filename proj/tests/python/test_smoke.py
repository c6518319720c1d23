import warnings

import numpy as np
import pytest

import cleftkit

VS = (40.0, 4.0, 4.0)


def test_sedt_line():
    labels = np.zeros((1, 1, 5), np.uint8)
    labels[0, 0, 2] = 1
    assert cleftkit.sedt(labels, VS)[0, 0].tolist() == [-8.0, -4.0, 4.0, -4.0, -8.0]


def test_sedt_matches_scipy():
    ndimage = pytest.importorskip("scipy.ndimage")
    rng = np.random.default_rng(3)
    for _ in range(20):
        shape = tuple(rng.integers(2, 10, 3))
        labels = (rng.random(shape) < 0.2).astype(np.uint8)
        if labels.all() or not labels.any():
            continue
        vs = tuple(float(x) for x in rng.uniform(1, 50, 3))
        inside = ndimage.distance_transform_edt(labels, sampling=vs)
        outside = ndimage.distance_transform_edt(1 - labels, sampling=vs)
        want = np.where(labels > 0, inside, -outside)
        np.testing.assert_allclose(cleftkit.signed_distance(labels, vs), want, atol=1e-6)


def test_stdt_round_trip():
    rng = np.random.default_rng(4)
    labels = (rng.random((6, 12, 12)) < 0.3).astype(np.uint8)
    d = cleftkit.sedt(labels, VS)
    for s in (1.0, 50.0, 500.0):
        np.testing.assert_array_equal(cleftkit.threshold_to_labels(cleftkit.stdt(d, s), 0.0), labels)


def test_cleft_score_identity_and_shift():
    t = np.zeros((4, 8, 8), np.uint8)
    t[1, 3, 3] = 1
    assert cleftkit.cleft_score(t, t, VS)["cremi_score"] == 0.0
    p = np.zeros_like(t)
    p[1, 3, 5] = 1
    s = cleftkit.cleft_score(p, t, VS)
    assert (s["fpd"], s["fnd"], s["cremi_score"]) == (8.0, 8.0, 8.0)


def test_presets():
    assert cleftkit.context_per_side("dtu2-like", (71, 650, 650)) == (10, 106, 106)
    assert cleftkit.context_per_side("dtu1-like", (56, 56, 56)) == (16, 106, 106)
    arch = cleftkit.arch_preset("dtu2-like")
    out = cleftkit.valid_output_shape(arch, cleftkit.required_input_shape(arch, (23, 218, 218)))
    assert out == (23, 218, 218)
    a = cleftkit.physical_fov("dtu1-like")
    b = cleftkit.physical_fov("dtu2-like")
    assert all(y["isotropy"] <= x["isotropy"] for x, y in zip(a, b))


def test_plan():
    assert len(cleftkit.plan_blocks((100, 100, 100), (50, 50, 50))) == 8
    mask = np.zeros((2, 2, 2), np.uint8)
    mask[0, 0, 0] = 1
    plans = cleftkit.plan_blocks((100, 100, 100), (50, 50, 50), (0, 0, 0), mask, (50, 50, 50))
    assert sum(p["masked_in"] for p in plans) == 1


def test_weights_and_loss():
    labels = np.zeros((2, 4, 4), np.uint8)
    labels[0, :2, :2] = 1
    w = cleftkit.class_balance_weights(labels)
    assert w[labels == 1].sum() == pytest.approx(16.0)
    assert w[labels == 0].sum() == pytest.approx(16.0)
    p = np.random.default_rng(5).random(labels.shape).astype(np.float32)
    assert cleftkit.balanced_l2_loss(p, p, w) == 0.0


def test_downscale_and_mask():
    v = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    assert cleftkit.downscale(v, (2, 2, 2))[0, 0, 0] == 3.5
    assert cleftkit.build_mask(v, 0.0, 7.0).all()


def test_phantom_is_seeded():
    a = cleftkit.make_phantom((16, 32, 32), 7)
    b = cleftkit.make_phantom((16, 32, 32), 7)
    np.testing.assert_array_equal(a["raw"], b["raw"])
    assert a["clefts"].any()


def test_errors_carry_code_and_context():
    with pytest.raises(cleftkit.CleftkitError) as e:
        cleftkit.valid_output_shape("dtu1-like", (5, 5, 5))
    assert e.value.code == "shape"
    assert ":" in e.value.context
    with pytest.raises(cleftkit.CleftkitError) as e:
        cleftkit.sedt(np.zeros((2, 2, 2), np.uint8))
    assert e.value.code == "empty_class"


@pytest.mark.parametrize("compression", ["raw", "gzip"])
@pytest.mark.parametrize("dtype", [np.uint8, np.uint16, np.uint64, np.float32, np.float64])
def test_n5_interop_with_zarr(tmp_path, compression, dtype):
    zarr = pytest.importorskip("zarr")
    from zarr.n5 import N5Store

    rng = np.random.default_rng(6)
    data = (rng.random((7, 13, 10)) * 200).astype(dtype)
    root = tmp_path / "c.n5"
    cleftkit.ensure_container(root)
    cleftkit.write_dataset(root / "ours", data, (3, 5, 4), compression)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FutureWarning)
        store = N5Store(str(root))
        group = zarr.open_group(store, mode="a")
        np.testing.assert_array_equal(group["ours"][:], data)

        codec = None
        if compression == "gzip":
            from numcodecs import GZip

            codec = GZip(level=5)
        theirs = group.create_dataset("theirs", shape=data.shape, chunks=(3, 5, 4), dtype=dtype, compressor=codec)
        theirs[:] = data
    back = cleftkit.read_dataset(root / "theirs")
    assert back.dtype == data.dtype
    np.testing.assert_array_equal(back, data)
