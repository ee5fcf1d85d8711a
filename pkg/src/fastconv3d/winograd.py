"""Winograd minimal filtering: plan construction, tile kernels and full-map paths.

A plan for F(m, r) computes m outputs of an r-tap cross-correlation from a
tile of m+r-1 inputs as ``A.T @ ((G @ g) * (B.T @ d))``. All multiplications
between data values happen in the element-wise product; the transforms only
scale by plan constants.

Full-map paths tile the zero-padded input with stride m, pad the far edge up
to a whole number of tiles, sum the element-wise products over input
channels in the transform domain, apply one output transform per tile and
crop. Only stride 1 is supported; strided layers belong to
:mod:`fastconv3d.direct`.
"""

import functools
from math import gcd
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .direct import conv_pointwise, pad_zeros
from .errors import ShapeError, UnsupportedError
from .tensor5 import check_tensor

# Interpolation points in the order they are consumed; infinity is implicit.
POINTS = (Fraction(0), Fraction(1), Fraction(-1), Fraction(2), Fraction(-2),
          Fraction(1, 2), Fraction(-1, 2), Fraction(4))
MAX_TILE = 8


def _eval_rows(points, cols):
    rows = [[p**j for j in range(cols)] for p in points]
    rows.append([Fraction(0)] * (cols - 1) + [Fraction(1)])
    return rows


def _inverse(mat):
    """Exact Gauss-Jordan inverse over Fractions."""
    n = len(mat)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(mat)]
    for col in range(n):
        pivot = next(i for i in range(col, n) if aug[i][col] != 0)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for i in range(n):
            if i != col and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[col])]
    return [row[n:] for row in aug]


def _lcm(a, b):
    return a * b // gcd(a, b)


def _primitive_scale(row):
    """Positive factor that turns ``row`` into coprime integers."""
    den = 1
    for v in row:
        den = _lcm(den, v.denominator)
    num = 0
    for v in row:
        num = gcd(num, abs(v.numerator * (den // v.denominator)))
    return Fraction(den, num or 1)


def _as_object(rows):
    out = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            out[i, j] = v
    return out


@dataclass(frozen=True, eq=False)
class WinogradPlan:
    """Transform matrices for F(m, r); ``A``, ``G``, ``B`` hold exact Fractions."""

    m: int
    r: int
    points: tuple
    A: np.ndarray
    G: np.ndarray
    B: np.ndarray

    @property
    def n(self):
        return self.m + self.r - 1

    @property
    def mults_per_tile(self):
        return self.n

    @functools.lru_cache(maxsize=None)
    def matrices(self, dtype=np.float64):
        """(A.T, G, B.T) materialized in ``dtype``."""
        dtype = np.dtype(dtype)
        if dtype == object:
            dtype = np.dtype(np.float64)
        cast = np.vectorize(float, otypes=[np.float64])
        return tuple(np.ascontiguousarray(cast(mat).astype(dtype)) for mat in (self.A.T, self.G, self.B.T))


def _build_plan(m, r):
    n = m + r - 1
    points = POINTS[:n - 1]
    a_rows = _eval_rows(points, m)
    g_rows = _eval_rows(points, r)
    v_inv = _inverse(_eval_rows(points, n))
    bt_rows = [list(col) for col in zip(*v_inv)]

    for i in range(n):
        s = _primitive_scale(bt_rows[i])
        if i == n - 1:
            # infinity row: sign-flip B and A, the usual published convention
            bt_rows[i] = [-v * s for v in bt_rows[i]]
            a_rows[i] = [-v for v in a_rows[i]]
        else:
            bt_rows[i] = [v * s for v in bt_rows[i]]
        g_rows[i] = [v / s for v in g_rows[i]]

    # Exact basis check: for every (output k, tap j) the combined transform
    # must pick exactly input k + j.
    for k in range(m):
        for j in range(r):
            picked = [sum(a_rows[i][k] * g_rows[i][j] * bt_rows[i][q] for i in range(n)) for q in range(n)]
            want = [Fraction(int(q == k + j)) for q in range(n)]
            if picked != want:
                raise AssertionError(f"F({m},{r}) basis check failed at output {k}, tap {j}")

    b_rows = [list(col) for col in zip(*bt_rows)]
    return WinogradPlan(m, r, tuple(points), _as_object(a_rows), _as_object(g_rows), _as_object(b_rows))


@functools.lru_cache(maxsize=None)
def cook_toom_plan(m, r):
    """Generate the F(m, r) plan by Cook-Toom interpolation.

    Points are 0, 1, -1, 2, -2, 1/2, -1/2, 4 (first m+r-2 of them) plus
    infinity. Each B.T row is scaled to coprime integers and the factor is
    pushed into G, which reproduces the familiar F(2,3) matrices exactly.
    """
    m, r = int(m), int(r)
    if m < 1 or r < 2:
        raise UnsupportedError(f"F({m},{r}) needs m >= 1 and r >= 2")
    if m + r - 1 > MAX_TILE:
        raise UnsupportedError(f"F({m},{r}) has tile {m + r - 1} > {MAX_TILE}; transforms are ill-conditioned")
    return _build_plan(m, r)


@dataclass(frozen=True)
class HybridPlan:
    temporal: WinogradPlan
    spatial: WinogradPlan

    @property
    def m1(self):
        return self.temporal.m

    @property
    def m2(self):
        return self.spatial.m


def hybrid_plan(m1, k, m2, r):
    return HybridPlan(cook_toom_plan(m1, k), cook_toom_plan(m2, r))


def _work_dtype(*arrays):
    dtypes = {a.dtype for a in arrays}
    if np.dtype(object) in dtypes:
        return np.dtype(object)
    return np.result_type(*arrays)


def _mode(mat, x, axis):
    """Apply ``mat`` along ``axis`` of ``x`` (mode-wise matrix product)."""
    return np.moveaxis(np.tensordot(mat, x, axes=(1, axis)), 0, axis)


# -- single tiles ----------------------------------------------------------

def wino1d_tile(plan, g, d):
    g = np.asarray(g)
    d = np.asarray(d)
    if g.shape != (plan.r,) or d.shape != (plan.n,):
        raise ShapeError(f"F({plan.m},{plan.r}) needs g of {plan.r} and d of {plan.n}, got {g.shape}, {d.shape}")
    at, gm, bt = plan.matrices(_work_dtype(g, d))
    return at @ ((gm @ g) * (bt @ d))


def wino2d_tile(plan, g, d):
    g = np.asarray(g)
    d = np.asarray(d)
    if g.shape != (plan.r, plan.r) or d.shape != (plan.n, plan.n):
        raise ShapeError(f"F({plan.m}x{plan.m},{plan.r}x{plan.r}) got kernel {g.shape}, tile {d.shape}")
    at, gm, bt = plan.matrices(_work_dtype(g, d))
    u = gm @ g @ gm.T
    v = bt @ d @ bt.T
    return at @ (u * v) @ at.T


def wino3d_tile(plan, g, d):
    g = np.asarray(g)
    d = np.asarray(d)
    if g.shape != (plan.r,) * 3:
        raise UnsupportedError(f"3D tiles need a cubic {plan.r}^3 kernel, got {g.shape}")
    if d.shape != (plan.n,) * 3:
        raise ShapeError(f"3D tile must be {plan.n}^3, got {d.shape}")
    at, gm, bt = plan.matrices(_work_dtype(g, d))
    u, v = g, d
    for axis in range(3):
        u = _mode(gm, u, axis)
        v = _mode(bt, v, axis)
    y = u * v
    for axis in range(3):
        y = _mode(at, y, axis)
    return y


# -- full feature maps -----------------------------------------------------

def _tile_grid(extent, plan):
    """(number of tiles, padded input length) for ``extent`` outputs."""
    tiles = -(-extent // plan.m)
    return tiles, tiles * plan.m + plan.r - 1


def _gather_tiles(x, axis, plan, tiles):
    idx = np.arange(tiles)[:, None] * plan.m + np.arange(plan.n)[None, :]
    return np.take(x, idx, axis=axis)


def _check_stride(stride):
    if stride is None:
        return
    stride = (stride,) * 3 if np.isscalar(stride) else tuple(stride)
    if any(int(s) != 1 for s in stride):
        raise UnsupportedError(f"Winograd paths are stride-1 only, got stride {stride}")


def _prepare_axis(x, axis, plan, pad):
    """Pad one axis symmetrically by ``pad``, then on the far side to whole tiles."""
    out_extent = x.shape[axis] + 2 * pad - plan.r + 1
    if out_extent < 0:
        raise ShapeError(f"kernel extent {plan.r} exceeds padded input {x.shape[axis] + 2 * pad}")
    tiles, need = _tile_grid(out_extent, plan)
    widths = [(0, 0)] * x.ndim
    widths[axis] = (pad, need - x.shape[axis] - pad)
    return pad_zeros(x, widths), out_extent, tiles


def wino_conv1d_temporal(x, g, plan, pad_t=0, stride=1):
    """F(m1, K) along time for kernels (M, C, K, 1, 1)."""
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_stride(stride)
    nb, c, t, h, w = x.shape
    m_out, cg, k = g.shape[:3]
    if g.shape[3:] != (1, 1) or cg != c:
        raise ShapeError(f"temporal kernels must be (M, {c}, K, 1, 1), got {g.shape}")
    if k != plan.r:
        raise ShapeError(f"plan is for r={plan.r}, kernel has K={k}")
    at, gm, bt = plan.matrices(_work_dtype(x, g))
    xp, t_out, tiles = _prepare_axis(x, 2, plan, pad_t)
    d = _gather_tiles(xp, 2, plan, tiles)                  # b c nt n h w
    v = _mode(bt, d, 3)
    u = _mode(gm, g[:, :, :, 0, 0], 2)                     # M C n
    # EWMM with channel sum: (n, P, C) @ (n, C, M)
    vp = np.moveaxis(v, (3, 1), (0, 5)).reshape(plan.n, -1, c)
    acc = np.matmul(vp, np.transpose(u, (2, 1, 0)))        # n P M
    acc = acc.reshape(plan.n, nb, tiles, h, w, m_out)
    y = _mode(at, acc, 0)                                  # m b nt h w M
    y = np.moveaxis(y, (5, 2, 0), (1, 2, 3)).reshape(nb, m_out, tiles * plan.m, h, w)
    return np.ascontiguousarray(y[:, :, :t_out])


def wino_conv2d_depthwise(x, g, plan, pad_hw=(0, 0), stride=1):
    """F(m2 x m2, R x R) on every frame of every channel, kernels (M, 1, 1, R, R)."""
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_stride(stride)
    nb, m_ch, t, h, w = x.shape
    if g.shape[0] != m_ch or g.shape[1:3] != (1, 1):
        raise ShapeError(f"depthwise kernels must be ({m_ch}, 1, 1, R, S), got {g.shape}")
    kh, kw = g.shape[3:]
    if kh != kw:
        raise UnsupportedError(f"2D Winograd needs square kernels, got {kh}x{kw}")
    if kh != plan.r:
        raise ShapeError(f"plan is for r={plan.r}, kernel has R={kh}")
    ph, pw = (pad_hw, pad_hw) if np.isscalar(pad_hw) else pad_hw
    at, gm, bt = plan.matrices(_work_dtype(x, g))
    xp, h_out, th = _prepare_axis(x, 3, plan, ph)
    xp, w_out, tw = _prepare_axis(xp, 4, plan, pw)
    d = _gather_tiles(xp, 3, plan, th)                     # b M t th n W
    d = _gather_tiles(d, 5, plan, tw)                      # b M t th n tw n
    v = _mode(bt, _mode(bt, d, 4), 6)
    u = _mode(gm, _mode(gm, g[:, 0, 0], 1), 2)             # M n n
    prod = v * u[None, :, None, None, :, None, :]
    y = _mode(at, _mode(at, prod, 4), 6)                   # b M t th m tw m
    y = y.reshape(nb, m_ch, t, th * plan.m, tw * plan.m)
    return np.ascontiguousarray(y[:, :, :, :h_out, :w_out])


def wino_conv3d(x, g, plan, pad=(0, 0, 0), stride=1):
    """F(m^3, r^3) over all three axes for cubic kernels (N, C, r, r, r)."""
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_stride(stride)
    nb, c, t, h, w = x.shape
    n_out, cg = g.shape[:2]
    if cg != c:
        raise ShapeError(f"kernels expect {cg} input channels, input has {c}")
    if len(set(g.shape[2:])) != 1:
        raise UnsupportedError(f"3D Winograd needs cubic kernels, got {g.shape[2:]}")
    if g.shape[2] != plan.r:
        raise ShapeError(f"plan is for r={plan.r}, kernel extent is {g.shape[2]}")
    pad = (pad,) * 3 if np.isscalar(pad) else tuple(pad)
    at, gm, bt = plan.matrices(_work_dtype(x, g))
    xp, extents, grid = x, [], []
    for axis, p in zip((2, 3, 4), pad):
        xp, out_extent, tiles = _prepare_axis(xp, axis, plan, p)
        extents.append(out_extent)
        grid.append(tiles)
    d = _gather_tiles(xp, 2, plan, grid[0])                # b c nt n H W
    d = _gather_tiles(d, 4, plan, grid[1])                 # b c nt n nh n W
    d = _gather_tiles(d, 6, plan, grid[2])                 # b c nt n nh n nw n
    v = _mode(bt, _mode(bt, _mode(bt, d, 3), 5), 7)
    u = _mode(gm, _mode(gm, _mode(gm, g, 2), 3), 4)        # N C n n n
    n3 = plan.n**3
    vp = np.transpose(v, (3, 5, 7, 0, 2, 4, 6, 1)).reshape(n3, -1, c)
    up = np.transpose(u, (2, 3, 4, 1, 0)).reshape(n3, c, n_out)
    acc = np.matmul(vp, up).reshape(plan.n, plan.n, plan.n, nb, *grid, n_out)
    y = _mode(at, _mode(at, _mode(at, acc, 0), 1), 2)      # m m m b nt nh nw N
    y = np.transpose(y, (3, 7, 4, 0, 5, 1, 6, 2))
    y = y.reshape(nb, n_out, *(gsz * plan.m for gsz in grid))
    return np.ascontiguousarray(y[:, :, :extents[0], :extents[1], :extents[2]])


def hfa_fsb_forward(x, weights, hybrid, pad=None, stride=1):
    """FSB forward with F(m1, K) on the temporal stage and F(m2^2, R^2) on the depthwise stage.

    The pointwise stage stays direct; a 1x1x1 kernel has nothing to save.
    ``pad`` defaults to "same" for each stage.
    """
    _check_stride(stride)
    k = weights.stage1.shape[2]
    r, s = weights.stage2.shape[3:]
    if hybrid.temporal.r != k:
        raise ShapeError(f"temporal plan is for K={hybrid.temporal.r}, stage-1 kernel has K={k}")
    if hybrid.spatial.r != r or r != s:
        raise ShapeError(f"spatial plan is for {hybrid.spatial.r}x{hybrid.spatial.r}, stage-2 kernel is {r}x{s}")
    if pad is None:
        pad = ((k - 1) // 2, (r - 1) // 2, (s - 1) // 2)
    y = wino_conv1d_temporal(x, weights.stage1, hybrid.temporal, pad_t=pad[0])
    y = wino_conv2d_depthwise(y, weights.stage2, hybrid.spatial, pad_hw=(pad[1], pad[2]))
    return conv_pointwise(y, weights.stage3)
