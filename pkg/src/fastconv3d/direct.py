"""Reference (direct) convolutions.

Everything here is cross-correlation: output ``(t, y, x)`` of kernel ``n`` is
the sum over input channel ``c`` and kernel offsets ``(k, r, s)`` of
``d[c, t*st + k, y*sy + r, x*sx + s] * g[n, c, k, r, s]`` on the zero-padded
input. No kernel flip, no bias, no dilation.

These are the oracles for the fast paths in :mod:`fastconv3d.winograd`, so
they favour the obvious summation over speed: one channel contraction per
kernel offset.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor5 import check_tensor


def _triple(v, name):
    if np.isscalar(v):
        v = (v, v, v)
    v = tuple(int(x) for x in v)
    if len(v) != 3:
        raise ShapeError(f"{name} needs three extents, got {v}")
    return v


@dataclass(frozen=True)
class ConvGeometry:
    pad: tuple = (0, 0, 0)
    stride: tuple = (1, 1, 1)
    groups: int = 1

    def __post_init__(self):
        object.__setattr__(self, "pad", _triple(self.pad, "pad"))
        object.__setattr__(self, "stride", _triple(self.stride, "stride"))
        if any(p < 0 for p in self.pad):
            raise ShapeError(f"pad must be non-negative, got {self.pad}")
        if any(s < 1 for s in self.stride):
            raise ShapeError(f"stride must be positive, got {self.stride}")
        if int(self.groups) < 1:
            raise ShapeError(f"groups must be positive, got {self.groups}")

    @classmethod
    def same(cls, kernel, groups=1):
        """Stride-1 geometry that keeps (T, H, W) for odd kernel extents."""
        return cls(pad=tuple((k - 1) // 2 for k in kernel), groups=groups)

    def output_extents(self, in_extents, kernel):
        out = []
        for n, k, p, s in zip(in_extents, kernel, self.pad, self.stride):
            span = n + 2 * p - k
            if span < 0:
                raise ShapeError(
                    f"kernel extent {k} exceeds padded input {n + 2 * p}")
            out.append(span // s + 1)
        return tuple(out)


def pad_zeros(x, widths):
    """Zero-pad ``x`` by ``widths`` ((before, after) per axis).

    Object arrays of instrumented scalars are padded with a zero of the same
    scalar type so that padded taps are still counted.
    """
    widths = tuple(tuple(int(v) for v in w) for w in widths)
    if not any(a or b for a, b in widths):
        return x
    if x.dtype != object:
        return np.pad(x, widths)
    out = np.empty([n + a + b for n, (a, b) in zip(x.shape, widths)], dtype=object)
    out.fill(x.flat[0] * 0 if x.size else 0)
    out[tuple(slice(a, a + n) for n, (a, _) in zip(x.shape, widths))] = x
    return out


def _pad_input(x, pad):
    pt, ph, pw = pad
    return pad_zeros(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))


def _check_dtypes(x, g):
    if x.dtype != g.dtype:
        raise ShapeError(f"dtype mismatch: input {x.dtype}, kernels {g.dtype}")


def conv3d_direct(x, g, geom=None):
    """Grouped, strided, zero-padded 3D cross-correlation.

    x: (Nb, C, T, H, W); g: (N, C/groups, K, R, S). Returns (Nb, N, T', H', W').
    """
    geom = geom or ConvGeometry()
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_dtypes(x, g)
    nb, c, t, h, w = x.shape
    n, cg, kt, kh, kw = g.shape
    groups = int(geom.groups)
    if c % groups or n % groups:
        raise ShapeError(f"groups={groups} must divide channels in={c} and out={n}")
    if cg != c // groups:
        raise ShapeError(f"kernels expect {cg} input channels per group, input gives {c // groups}")
    to, ho, wo = geom.output_extents((t, h, w), (kt, kh, kw))
    st, sh, sw = geom.stride
    xp = _pad_input(x, geom.pad)
    ng = n // groups
    xg = xp.reshape(nb, groups, cg, *xp.shape[2:])
    gg = g.reshape(groups, ng, cg, kt, kh, kw)
    out = np.zeros((nb, groups, ng, to, ho, wo), dtype=x.dtype)
    for k in range(kt):
        for r in range(kh):
            for s in range(kw):
                window = xg[:, :, :,
                            k:k + st * (to - 1) + 1:st,
                            r:r + sh * (ho - 1) + 1:sh,
                            s:s + sw * (wo - 1) + 1:sw]
                out += np.einsum("gnc,bgcthw->bgnthw", gg[:, :, :, k, r, s], window)
    return out.reshape(nb, n, to, ho, wo)


def conv1d_temporal(x, g, geom=None):
    """Temporal-only convolution, kernels (M, C, K, 1, 1)."""
    geom = geom or ConvGeometry()
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_dtypes(x, g)
    if g.shape[3:] != (1, 1):
        raise ShapeError(f"temporal kernels must be (M, C, K, 1, 1), got {g.shape}")
    if geom.groups != 1:
        raise ShapeError("temporal convolution is dense over channels (groups=1)")
    nb, c, t, h, w = x.shape
    m, cg, kt = g.shape[:3]
    if cg != c:
        raise ShapeError(f"kernels expect {cg} input channels, input has {c}")
    to, ho, wo = geom.output_extents((t, h, w), (kt, 1, 1))
    st, sh, sw = geom.stride
    xp = _pad_input(x, geom.pad)
    out = np.zeros((nb, m, to, ho, wo), dtype=x.dtype)
    for k in range(kt):
        window = xp[:, :, k:k + st * (to - 1) + 1:st, :sh * (ho - 1) + 1:sh, :sw * (wo - 1) + 1:sw]
        out += np.einsum("mc,bcthw->bmthw", g[:, :, k, 0, 0], window)
    return out


def conv2d_depthwise(x, g, geom=None):
    """Per-channel spatial convolution applied frame by frame, kernels (M, 1, 1, R, S)."""
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_dtypes(x, g)
    nb, m, t, h, w = x.shape
    if geom is None:
        geom = ConvGeometry(groups=m)
    if geom.groups != m:
        raise ShapeError(f"depthwise convolution needs groups == channels ({m}), got {geom.groups}")
    if g.shape[0] != m or g.shape[1:3] != (1, 1):
        raise ShapeError(f"depthwise kernels must be ({m}, 1, 1, R, S), got {g.shape}")
    kh, kw = g.shape[3:]
    to, ho, wo = geom.output_extents((t, h, w), (1, kh, kw))
    st, sh, sw = geom.stride
    xp = _pad_input(x, geom.pad)
    out = np.zeros((nb, m, to, ho, wo), dtype=x.dtype)
    for r in range(kh):
        for s in range(kw):
            window = xp[:, :, :st * (to - 1) + 1:st, r:r + sh * (ho - 1) + 1:sh, s:s + sw * (wo - 1) + 1:sw]
            out += g[None, :, 0, 0, r, s, None, None, None] * window
    return out


def conv_pointwise(x, g):
    """1x1x1 channel mix: out[n] = sum_m g[n, m] * x[m] at every voxel."""
    check_tensor(x, "input")
    check_tensor(g, "kernels")
    _check_dtypes(x, g)
    if g.shape[2:] != (1, 1, 1):
        raise ShapeError(f"pointwise kernels must be (N, M, 1, 1, 1), got {g.shape}")
    if g.shape[1] != x.shape[1]:
        raise ShapeError(f"kernels expect {g.shape[1]} channels, input has {x.shape[1]}")
    return np.einsum("nm,bmthw->bnthw", g[:, :, 0, 0, 0], x)
