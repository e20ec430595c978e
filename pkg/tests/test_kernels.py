import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crashbench import _kernels_py, kernels
from conftest import _ckernels
from oracles import bilinear_pixel, brute_force_ap, brute_force_auc

ALL_BACKENDS = [_kernels_py] + ([_ckernels] if _ckernels is not None else [])


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


def test_constant_image_stays_constant(backend):
    src = np.full((37, 53, 3), 0.3)
    out = backend.resize_bilinear(src, 256, 256)
    assert out.shape == (256, 256, 3)
    assert np.all(out == 0.3)


def test_checkerboard_center_value(backend):
    # 2x2 checkerboard upsampled: the central pixels mix all four corners.
    src = np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None]
    out = np.asarray(backend.resize_bilinear(src, 256, 256))[:, :, 0]
    f = 129 / 256
    assert out[128, 128] == pytest.approx(2 * f * (1 - f), abs=1e-12)
    assert out[0, 0] == 0.0 and out[0, 255] == 1.0


def test_identity_size_is_exact(backend, rng):
    src = rng.random((16, 16, 1))
    assert np.array_equal(backend.resize_bilinear(src, 16, 16), src)


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 9), w=st.integers(1, 9), oh=st.integers(1, 12), ow=st.integers(1, 12),
       seed=st.integers(0, 2**32 - 1))
def test_resize_matches_scalar_oracle(h, w, oh, ow, seed):
    img = np.random.default_rng(seed).random((h, w))
    ref = [[bilinear_pixel(img.tolist(), oh, ow, i, j) for j in range(ow)] for i in range(oh)]
    for impl in [kernels, *ALL_BACKENDS]:
        out = np.asarray(impl.resize_bilinear(img[:, :, None], oh, ow))[:, :, 0]
        np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(h=st.integers(1, 40), w=st.integers(1, 40), c=st.integers(1, 4), oh=st.integers(1, 70),
       ow=st.integers(1, 70), seed=st.integers(0, 2**32 - 1))
def test_backends_bit_identical_on_random_shapes(h, w, c, oh, ow, seed):
    if len(ALL_BACKENDS) < 2:
        pytest.skip("extension not built")
    src = np.random.default_rng(seed).random((h, w, c)) * 255
    a, b = (np.asarray(impl.resize_bilinear(src, oh, ow)) for impl in ALL_BACKENDS)
    assert a.shape == b.shape == (oh, ow, c)
    assert a.tobytes() == b.tobytes()


def test_backends_bit_identical_on_frames(rng):
    from crashbench import _kernels_py
    try:
        from crashbench import _ckernels
    except ImportError:
        pytest.skip("extension not built")
    for shape in [(360, 640, 3), (64, 64, 3), (1, 1, 3), (255, 257, 3)]:
        src = rng.integers(0, 256, shape).astype(np.float64)
        a = _kernels_py.resize_bilinear(src, 256, 256)
        b = np.asarray(_ckernels.resize_bilinear(src, 256, 256))
        assert np.array_equal(a, b)


@settings(max_examples=60, deadline=None)
@given(data=st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=30))
def test_ranked_ap_auc_match_oracles(data):
    scores = [s / 5 for s, _ in data]
    labels = [y for _, y in data]
    if all(labels) or not any(labels):
        return
    assert kernels.ranked_ap(scores, labels) == pytest.approx(brute_force_ap(scores, labels), abs=1e-12)
    assert kernels.ranked_auc(scores, labels) == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)


def test_backends_agree_on_ranking(backend, rng):
    s = np.round(rng.random(500), 2)
    y = (rng.random(500) < 0.4).astype(np.int64)
    assert backend.ranked_ap(s, y) == pytest.approx(brute_force_ap(s.tolist(), y.tolist()), abs=1e-12)
    assert backend.ranked_auc(s, y) == pytest.approx(brute_force_auc(s.tolist(), y.tolist()), abs=1e-12)
