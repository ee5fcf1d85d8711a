from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastconv3d.blocks import FsbWeights, fsb_forward
from fastconv3d.direct import ConvGeometry, conv1d_temporal, conv2d_depthwise, conv3d_direct
from fastconv3d.errors import ShapeError, UnsupportedError
from fastconv3d.instrument import count_multiplications, unwrap, wrap
from fastconv3d.tensor5 import max_rel_error, tensor_random
from fastconv3d.winograd import (cook_toom_plan, hfa_fsb_forward, hybrid_plan, wino1d_tile, wino2d_tile,
                                 wino3d_tile, wino_conv1d_temporal, wino_conv2d_depthwise, wino_conv3d)

F = Fraction
SUPPORTED = [(m, r) for m in (2, 3, 4) for r in (3, 5) if m + r - 1 <= 8]


def corr1d(g, d):
    r = len(g)
    return np.array([sum(g[j] * d[i + j] for j in range(r)) for i in range(len(d) - r + 1)])


def corr_nd(g, d):
    """Valid cross-correlation of equal-rank arrays by explicit window sums."""
    out_shape = tuple(a - b + 1 for a, b in zip(d.shape, g.shape))
    out = np.zeros(out_shape)
    for idx in np.ndindex(*out_shape):
        window = d[tuple(slice(i, i + k) for i, k in zip(idx, g.shape))]
        out[idx] = np.sum(window * g)
    return out


# -- plan construction ------------------------------------------------------

def test_f23_golden_matrices():
    p = cook_toom_plan(2, 3)
    assert p.B.T.tolist() == [[1, 0, -1, 0], [0, 1, 1, 0], [0, -1, 1, 0], [0, 1, 0, -1]]
    assert p.G.tolist() == [[1, 0, 0], [F(1, 2), F(1, 2), F(1, 2)], [F(1, 2), F(-1, 2), F(1, 2)], [0, 0, 1]]
    assert p.A.T.tolist() == [[1, 1, 1, 0], [0, 1, -1, -1]]
    assert p.n == 4 and p.mults_per_tile == 4


def test_f23_entries_are_small_powers_of_two():
    p = cook_toom_plan(2, 3)
    allowed = {F(0), F(1), F(-1), F(1, 2), F(-1, 2)}
    for mat in (p.A, p.G, p.B):
        assert set(mat.ravel().tolist()) <= allowed


@pytest.mark.parametrize("m,r", SUPPORTED)
def test_one_hot_basis_exact(m, r):
    """Rational arithmetic on every one-hot kernel x one-hot input pair."""
    p = cook_toom_plan(m, r)
    n = m + r - 1
    eye_r = np.eye(r, dtype=int)
    eye_n = np.eye(n, dtype=int)
    for gi in range(r):
        for di in range(n):
            g, d = eye_r[gi].tolist(), eye_n[di].tolist()
            got = p.A.T.dot(p.G.dot(g) * p.B.T.dot(d))
            assert [F(v) for v in got] == [F(v) for v in corr1d(g, d)]


@pytest.mark.parametrize("m,r", SUPPORTED)
def test_one_hot_basis_float(m, r):
    p = cook_toom_plan(m, r)
    n = m + r - 1
    for gi in range(r):
        for di in range(n):
            g, d = np.eye(r)[gi], np.eye(n)[di]
            assert np.max(np.abs(wino1d_tile(p, g, d) - corr1d(g, d))) <= 1e-12


def test_f1r_is_dot_product():
    for r in (2, 3, 5):
        p = cook_toom_plan(1, r)
        g, d = np.arange(1.0, r + 1), np.arange(2.0, r + 2)
        assert np.allclose(wino1d_tile(p, g, d), [g @ d])


def test_plan_limits():
    for m, r in [(0, 3), (2, 1), (4, 6), (7, 3)]:
        with pytest.raises(UnsupportedError):
            cook_toom_plan(m, r)
    assert cook_toom_plan(6, 3).n == 8


def test_plan_is_cached_and_frozen():
    assert cook_toom_plan(2, 3) is cook_toom_plan(2, 3)
    with pytest.raises(AttributeError):
        cook_toom_plan(2, 3).m = 5


# -- tiles ---------------------------------------------------------------------

def test_wino1d_tile_examples():
    p = cook_toom_plan(2, 3)
    d = np.array([1.0, 2, 3, 4])
    assert np.allclose(wino1d_tile(p, np.array([1.0, 2, 1]), d), [8, 12])
    assert np.allclose(wino1d_tile(p, np.array([1.0, 0, 0]), d), d[:2])
    assert np.all(wino1d_tile(p, np.zeros(3), d) == 0)
    with pytest.raises(ShapeError):
        wino1d_tile(p, np.ones(3), np.ones(5))


@pytest.mark.parametrize("m,r", SUPPORTED)
def test_wino2d_tile_random(m, r):
    p = cook_toom_plan(m, r)
    rng = np.random.default_rng(m * 10 + r)
    g, d = rng.uniform(-1, 1, (r, r)), rng.uniform(-1, 1, (p.n, p.n))
    assert np.max(np.abs(wino2d_tile(p, g, d) - corr_nd(g, d))) <= 1e-10


def test_wino2d_tile_center_delta():
    p = cook_toom_plan(2, 3)
    g = np.zeros((3, 3))
    g[1, 1] = 1
    d = np.arange(16.0).reshape(4, 4)
    assert np.allclose(wino2d_tile(p, g, d), d[1:3, 1:3])
    with pytest.raises(ShapeError):
        wino2d_tile(p, np.ones((3, 3)), np.ones((5, 5)))


@pytest.mark.parametrize("m,r", [(2, 3), (4, 3), (2, 5)])
def test_wino3d_tile_random(m, r):
    p = cook_toom_plan(m, r)
    rng = np.random.default_rng(m + r)
    g, d = rng.uniform(-1, 1, (r,) * 3), rng.uniform(-1, 1, (p.n,) * 3)
    assert np.max(np.abs(wino3d_tile(p, g, d) - corr_nd(g, d))) <= 1e-10


def test_wino3d_tile_center_delta_and_errors():
    p = cook_toom_plan(2, 3)
    g = np.zeros((3, 3, 3))
    g[1, 1, 1] = 1
    d = np.arange(64.0).reshape(4, 4, 4)
    assert np.allclose(wino3d_tile(p, g, d), d[1:3, 1:3, 1:3])
    with pytest.raises(UnsupportedError):
        wino3d_tile(p, np.ones((1, 3, 3)), d)
    with pytest.raises(ShapeError):
        wino3d_tile(p, np.ones((3, 3, 3)), np.ones((5, 5, 5)))


def test_nesting_identity_2d():
    """2D tile equals 1D transforms applied per row then per column."""
    p = cook_toom_plan(2, 3)
    at, gm, bt = p.matrices()
    rng = np.random.default_rng(5)
    g, d = rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (4, 4))
    u = np.stack([gm @ row for row in g])              # rows first
    u = np.stack([gm @ col for col in u.T], axis=1)     # then columns
    v = np.stack([bt @ row for row in d])
    v = np.stack([bt @ col for col in v.T], axis=1)
    y = np.stack([at @ row for row in (u * v)])
    y = np.stack([at @ col for col in y.T], axis=1)
    assert np.allclose(y, wino2d_tile(p, g, d), atol=1e-13)


def test_nesting_identity_3d_kron():
    """3D transforms equal the Kronecker product of the 1D transforms."""
    p = cook_toom_plan(2, 3)
    at, gm, bt = p.matrices()
    rng = np.random.default_rng(6)
    g, d = rng.uniform(-1, 1, (3, 3, 3)), rng.uniform(-1, 1, (4, 4, 4))
    k3 = lambda mat: np.kron(np.kron(mat, mat), mat)
    y = k3(at) @ ((k3(gm) @ g.ravel()) * (k3(bt) @ d.ravel()))
    assert np.allclose(y.reshape(2, 2, 2), wino3d_tile(p, g, d), atol=1e-13)


@pytest.mark.parametrize("dims,direct", [(1, 6), (2, 36), (3, 216)])
def test_tile_mult_counts(dims, direct):
    p = cook_toom_plan(2, 3)
    tile = [wino1d_tile, wino2d_tile, wino3d_tile][dims - 1]
    rng = np.random.default_rng(dims)
    g = rng.uniform(-1, 1, (3,) * dims)
    d = rng.uniform(-1, 1, (4,) * dims)
    with count_multiplications() as fast:
        y = tile(p, wrap(g), wrap(d))
    lift = (1, 1) + (1,) * (3 - dims)
    with count_multiplications() as slow:
        ref = conv3d_direct(wrap(d.reshape(lift + d.shape)), wrap(g.reshape(lift + g.shape)))
    assert (fast[0], slow[0]) == (4**dims, direct)
    assert np.allclose(unwrap(y).ravel(), unwrap(ref).ravel(), atol=1e-13)


# -- full maps ---------------------------------------------------------------

def test_wino1d_full_example_f32():
    x = tensor_random((1, 4, 16, 6, 6), np.float32, 1)
    g = tensor_random((8, 4, 3, 1, 1), np.float32, 2)
    got = wino_conv1d_temporal(x, g, cook_toom_plan(2, 3), pad_t=1)
    assert got.dtype == np.float32
    assert max_rel_error(got, conv1d_temporal(x, g, ConvGeometry(pad=(1, 0, 0)))) <= 1e-4


@pytest.mark.parametrize("t", [3, 4, 5, 7, 9])
def test_wino1d_ragged_extent(t):
    x = tensor_random((2, 3, t, 2, 3), np.float64, t)
    g = tensor_random((5, 3, 3, 1, 1), np.float64, t + 1)
    got = wino_conv1d_temporal(x, g, cook_toom_plan(2, 3))
    assert max_rel_error(got, conv1d_temporal(x, g)) <= 1e-12


def test_wino1d_delta_identity():
    x = tensor_random((1, 3, 6, 2, 2), np.float64, 3)
    g = np.zeros((3, 3, 3, 1, 1))
    for c in range(3):
        g[c, c, 1] = 1
    assert np.allclose(wino_conv1d_temporal(x, g, cook_toom_plan(2, 3), pad_t=1), x, atol=1e-14)


def test_wino2d_full_example_f32():
    x = tensor_random((1, 16, 4, 14, 14), np.float32, 4)
    g = tensor_random((16, 1, 1, 3, 3), np.float32, 5)
    got = wino_conv2d_depthwise(x, g, cook_toom_plan(2, 3), pad_hw=(1, 1))
    want = conv2d_depthwise(x, g, ConvGeometry(pad=(0, 1, 1), groups=16))
    assert max_rel_error(got, want) <= 1e-4


def test_wino2d_delta_and_edge_tile():
    x = tensor_random((1, 3, 2, 5, 5), np.float64, 6)
    delta = np.zeros((3, 1, 1, 3, 3))
    delta[:, 0, 0, 1, 1] = 1
    assert np.allclose(wino_conv2d_depthwise(x, delta, cook_toom_plan(2, 3), pad_hw=(1, 1)), x, atol=1e-14)
    g = tensor_random((3, 1, 1, 3, 3), np.float64, 7)
    got = wino_conv2d_depthwise(x, g, cook_toom_plan(4, 3), pad_hw=(1, 1))
    want = conv2d_depthwise(x, g, ConvGeometry(pad=(0, 1, 1), groups=3))
    assert max_rel_error(got, want) <= 1e-12


def test_wino2d_rejects_rectangular_kernel():
    x = tensor_random((1, 2, 2, 6, 6), np.float64, 0)
    with pytest.raises(UnsupportedError):
        wino_conv2d_depthwise(x, np.ones((2, 1, 1, 3, 1)), cook_toom_plan(2, 3))


def test_wino3d_full_example_f32():
    x = tensor_random((1, 4, 8, 8, 8), np.float32, 8)
    g = tensor_random((4, 4, 3, 3, 3), np.float32, 9)
    got = wino_conv3d(x, g, cook_toom_plan(2, 3), pad=(1, 1, 1))
    assert max_rel_error(got, conv3d_direct(x, g, ConvGeometry(pad=1))) <= 1e-4


def test_wino3d_zero_and_single_tile():
    p = cook_toom_plan(2, 3)
    x = tensor_random((1, 3, 4, 4, 4), np.float64, 10)
    assert np.all(wino_conv3d(x, np.zeros((2, 3, 3, 3, 3)), p) == 0)
    g = tensor_random((2, 3, 3, 3, 3), np.float64, 11)
    got = wino_conv3d(x, g, p)
    want = np.array([sum(wino3d_tile(p, g[o, c], x[0, c]) for c in range(3)) for o in range(2)])
    assert np.allclose(got[0], want, atol=1e-13)


def test_stride_and_cubic_guards():
    p = cook_toom_plan(2, 3)
    x = tensor_random((1, 2, 6, 6, 6), np.float64, 0)
    with pytest.raises(UnsupportedError):
        wino_conv3d(x, np.ones((1, 2, 3, 3, 3)), p, stride=2)
    with pytest.raises(UnsupportedError):
        wino_conv1d_temporal(x, np.ones((1, 2, 3, 1, 1)), p, stride=2)
    with pytest.raises(UnsupportedError):
        wino_conv3d(x, np.ones((1, 2, 3, 3, 1)), p)


@pytest.mark.parametrize("op", ["1d", "2d", "3d"])
def test_tiling_transparency(op):
    x = tensor_random((1, 3, 7, 9, 10), np.float64, 12)
    small, big = cook_toom_plan(2, 3), cook_toom_plan(4, 3)
    if op == "1d":
        g = tensor_random((4, 3, 3, 1, 1), np.float64, 13)
        run = lambda p: wino_conv1d_temporal(x, g, p, pad_t=1)
    elif op == "2d":
        g = tensor_random((3, 1, 1, 3, 3), np.float64, 13)
        run = lambda p: wino_conv2d_depthwise(x, g, p, pad_hw=(1, 1))
    else:
        g = tensor_random((2, 3, 3, 3, 3), np.float64, 13)
        run = lambda p: wino_conv3d(x, g, p, pad=(1, 1, 1))
    assert max_rel_error(run(small), run(big)) <= 1e-12


@given(seed=st.integers(0, 10**6), c=st.integers(1, 4), n=st.integers(1, 4),
       t=st.integers(3, 9), h=st.integers(3, 9), w=st.integers(3, 9), m=st.sampled_from([2, 3, 4]),
       pad=st.integers(0, 1))
@settings(max_examples=40, deadline=None)
def test_wino3d_property(seed, c, n, t, h, w, m, pad):
    x = tensor_random((1, c, t, h, w), np.float64, seed)
    g = tensor_random((n, c, 3, 3, 3), np.float64, seed + 1)
    got = wino_conv3d(x, g, cook_toom_plan(m, 3), pad=(pad,) * 3)
    assert max_rel_error(got, conv3d_direct(x, g, ConvGeometry(pad=pad))) <= 1e-9


def test_hfa_matches_direct_fsb():
    for dtype, tol in [(np.float32, 1e-4), (np.float64, 1e-10)]:
        x = tensor_random((1, 8, 8, 12, 12), dtype, 14)
        w = FsbWeights.random(8, 16, (3, 3, 3), m=8, dtype=dtype, seed=15)
        got = hfa_fsb_forward(x, w, hybrid_plan(2, 3, 2, 3))
        assert max_rel_error(got, fsb_forward(x, w)) <= tol


def test_hfa_zero_stage3_and_plan_mismatch():
    x = tensor_random((1, 2, 4, 6, 6), np.float64, 16)
    w = FsbWeights.random(2, 3, (3, 3, 3), dtype=np.float64, seed=17)
    w0 = FsbWeights(w.stage1, w.stage2, np.zeros_like(w.stage3))
    assert np.all(hfa_fsb_forward(x, w0, hybrid_plan(2, 3, 2, 3)) == 0)
    with pytest.raises(ShapeError):
        hfa_fsb_forward(x, w, hybrid_plan(2, 5, 2, 3))
    with pytest.raises(ShapeError):
        hfa_fsb_forward(x, w, hybrid_plan(2, 3, 2, 5))


def test_hfa_per_output_stage_costs():
    """Stage-1 cost per output 2 vs 3 with F(2,3); stage-2 cost 4 vs 9 with F(2x2,3x3)."""
    x = wrap(tensor_random((1, 1, 4, 1, 1), np.float64, 18))
    g = wrap(tensor_random((1, 1, 3, 1, 1), np.float64, 19))
    with count_multiplications() as fast:
        wino_conv1d_temporal(x, g, cook_toom_plan(2, 3), pad_t=0)
    with count_multiplications() as slow:
        conv1d_temporal(x, g)
    assert (fast[0], slow[0]) == (4, 6)  # two outputs
    x = wrap(tensor_random((1, 1, 1, 4, 4), np.float64, 20))
    g = wrap(tensor_random((1, 1, 1, 3, 3), np.float64, 21))
    with count_multiplications() as fast:
        wino_conv2d_depthwise(x, g, cook_toom_plan(2, 3))
    with count_multiplications() as slow:
        conv2d_depthwise(x, g, ConvGeometry(groups=1))
    assert (fast[0], slow[0]) == (16, 36)  # four outputs
