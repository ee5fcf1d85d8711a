"""Composite video blocks and the declarative model graph.

* ``trg_forward``: temporal residual gradient. T-1 adjacent-frame
  differences followed by the temporal mean, so the clip keeps T frames.
* ``fsb_forward``: fully separable block. Temporal bottleneck (M, C, K, 1, 1),
  depthwise spatial (M, 1, 1, R, S) with M groups, pointwise (N, M, 1, 1, 1).
* ``ModelSpec`` / ``model_parse`` / ``model_forward``: sequential layer stacks
  read from JSON ``.cfg`` files.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .direct import ConvGeometry, conv1d_temporal, conv2d_depthwise, conv3d_direct, conv_pointwise
from .errors import ConfigError, ShapeError
from .tensor5 import check_tensor, tensor_random

CONFIG_DIR = Path(__file__).parent / "configs"

LAYER_KINDS = ("conv3d", "fsb", "trg", "pool", "relu")
LAYER_KEYS = {"kind", "name", "in", "out", "k", "pad", "stride", "groups", "m", "alpha", "pool", "repeat"}
MODEL_KEYS = {"name", "input", "layers", "reference"}


def trg_forward(x):
    """Residual frames d[t+1] - d[t] for t < T-1, then the mean frame last."""
    check_tensor(x, "input")
    t = x.shape[2]
    if t < 2:
        raise ShapeError(f"TRG needs at least two frames, got T={t}")
    out = np.empty_like(x)
    out[:, :, :t - 1] = x[:, :, 1:] - x[:, :, :-1]
    out[:, :, t - 1] = x.sum(axis=2) / t
    return out


@dataclass(frozen=True)
class FsbWeights:
    stage1: np.ndarray  # (M, C, K, 1, 1)
    stage2: np.ndarray  # (M, 1, 1, R, S)
    stage3: np.ndarray  # (N, M, 1, 1, 1)
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("stage1", "stage2", "stage3"):
            check_tensor(getattr(self, name), name)
        m, _, _, h1, w1 = self.stage1.shape
        if (h1, w1) != (1, 1):
            raise ShapeError(f"stage1 must be (M, C, K, 1, 1), got {self.stage1.shape}")
        if self.stage2.shape[0] != m or self.stage2.shape[1:3] != (1, 1):
            raise ShapeError(f"stage2 must be ({m}, 1, 1, R, S), got {self.stage2.shape}")
        if self.stage3.shape[1] != m or self.stage3.shape[2:] != (1, 1, 1):
            raise ShapeError(f"stage3 must be (N, {m}, 1, 1, 1), got {self.stage3.shape}")

    @property
    def width(self):
        return self.stage1.shape[0]

    @property
    def in_channels(self):
        return self.stage1.shape[1]

    @property
    def out_channels(self):
        return self.stage3.shape[0]

    @property
    def kernel(self):
        return (self.stage1.shape[2], *self.stage2.shape[3:])

    def parameter_count(self):
        return self.stage1.size + self.stage2.size + self.stage3.size

    @classmethod
    def random(cls, c, n, kernel=(3, 3, 3), m=None, alpha=1.0, dtype=np.float32, seed=0):
        k, r, s = kernel
        m = fsb_width(c, m, alpha)
        return cls(
            tensor_random((m, c, k, 1, 1), dtype, seed),
            tensor_random((m, 1, 1, r, s), dtype, seed + 1),
            tensor_random((n, m, 1, 1, 1), dtype, seed + 2),
            alpha,
        )


def fsb_width(in_channels, m=None, alpha=1.0):
    """Intermediate width: explicit ``m`` wins, otherwise round(alpha * C)."""
    if m is not None:
        return int(m)
    return max(1, int(round(alpha * in_channels)))


def _same_pad(kernel):
    return tuple((k - 1) // 2 for k in kernel)


def fsb_forward(x, w, pad=None):
    """Direct FSB: temporal -> depthwise spatial -> pointwise, no nonlinearity in between."""
    check_tensor(x, "input")
    if x.shape[1] != w.in_channels:
        raise ShapeError(f"FSB expects {w.in_channels} input channels, got {x.shape[1]}")
    pt, ph, pw = pad if pad is not None else _same_pad(w.kernel)
    y = conv1d_temporal(x, w.stage1, ConvGeometry(pad=(pt, 0, 0)))
    y = conv2d_depthwise(y, w.stage2, ConvGeometry(pad=(0, ph, pw), groups=w.width))
    return conv_pointwise(y, w.stage3)


def max_pool3d(x, window, stride=None):
    check_tensor(x, "input")
    window = tuple(window)
    stride = tuple(stride) if stride is not None else window
    _, _, *extents = x.shape
    out = []
    for n, k, s in zip(extents, window, stride):
        if n < k:
            raise ShapeError(f"pool window {window} larger than input {tuple(extents)}")
        out.append((n - k) // s + 1)
    to, ho, wo = out
    st, sh, sw = stride
    y = None
    for a in range(window[0]):
        for b in range(window[1]):
            for c in range(window[2]):
                v = x[:, :, a:a + st * (to - 1) + 1:st, b:b + sh * (ho - 1) + 1:sh, c:c + sw * (wo - 1) + 1:sw]
                y = v.copy() if y is None else np.maximum(y, v)
    return y


# -- model graph -----------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    in_ch: int = 0
    out_ch: int = 0
    kernel: tuple = (1, 1, 1)
    pad: tuple = (0, 0, 0)
    stride: tuple = (1, 1, 1)
    groups: int = 1
    m: int = None
    alpha: float = 1.0
    pool_window: tuple = (1, 1, 1)
    pool_stride: tuple = (1, 1, 1)
    repeat: int = 1

    @property
    def width(self):
        """FSB intermediate width (also the FSB-equivalent width of a conv3d layer)."""
        return fsb_width(self.in_ch, self.m, self.alpha)

    @property
    def geometry(self):
        return ConvGeometry(pad=self.pad, stride=self.stride, groups=self.groups)

    def output_shape(self, in_shape):
        """(C, T, H, W) after one application of this layer."""
        c, t, h, w = in_shape
        if self.kind in ("conv3d", "fsb"):
            if c != self.in_ch:
                raise ShapeError(f"{self.name}: expects {self.in_ch} channels, got {c}")
            return (self.out_ch, *self.geometry.output_extents((t, h, w), self.kernel))
        if self.kind == "pool":
            out = []
            for n, k, s in zip((t, h, w), self.pool_window, self.pool_stride):
                if n < k:
                    raise ShapeError(f"{self.name}: pool window {self.pool_window} larger than {(t, h, w)}")
                out.append((n - k) // s + 1)
            return (c, *out)
        if self.kind == "trg" and t < 2:
            raise ShapeError(f"{self.name}: TRG needs T >= 2, got {t}")
        return in_shape


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple
    layers: tuple = ()
    reference: dict = field(default_factory=dict)

    def expanded(self):
        """Layers with ``repeat`` unrolled."""
        out = []
        for layer in self.layers:
            for i in range(layer.repeat):
                name = layer.name if layer.repeat == 1 else f"{layer.name}.{i + 1}"
                out.append(replace(layer, name=name, repeat=1))
        return out

    def propagate(self, input_shape=None):
        """[(layer, in_shape, out_shape)] over the expanded layers."""
        shape = tuple(input_shape or self.input_shape)
        rows = []
        for idx, layer in enumerate(self.expanded()):
            try:
                out = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {idx} ({layer.name}): {exc}") from None
            if min(out) <= 0:
                raise ShapeError(f"layer {idx} ({layer.name}): non-positive output {out}")
            rows.append((layer, shape, out))
            shape = out
        return rows


def _triple(value, field_name, layer_idx):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value] * 3
    if not isinstance(value, list) or len(value) != 3 or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"layer {layer_idx}: expected an int or three ints", field=field_name)
    return tuple(value)


def _positive_int(obj, key, layer_idx, required=True, default=None):
    if key not in obj:
        if required:
            raise ConfigError(f"layer {layer_idx}: missing {key!r}", field=key)
        return default
    v = obj[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise ConfigError(f"layer {layer_idx}: {key!r} must be a positive integer, got {v!r}", field=key)
    return v


def _parse_layer(obj, idx, channels):
    if not isinstance(obj, dict):
        raise ConfigError(f"layer {idx} is not an object", field="layers")
    unknown = set(obj) - LAYER_KEYS
    if unknown:
        raise ConfigError(f"layer {idx}: unknown keys {sorted(unknown)}", field=sorted(unknown)[0])
    kind = obj.get("kind")
    if kind not in LAYER_KINDS:
        raise ConfigError(f"layer {idx}: unknown layer kind {kind!r}", field="kind")
    name = obj.get("name", f"{kind}{idx}")
    repeat = _positive_int(obj, "repeat", idx, required=False, default=1)

    if kind in ("conv3d", "fsb"):
        in_ch = _positive_int(obj, "in", idx)
        out_ch = _positive_int(obj, "out", idx)
        if in_ch != channels:
            raise ConfigError(f"layer {idx}: 'in' is {in_ch} but the previous layer gives {channels} channels", field="in")
        if "k" not in obj:
            raise ConfigError(f"layer {idx}: {kind} needs kernel extents", field="k")
        kernel = _triple(obj["k"], "k", idx)
        if min(kernel) < 1:
            raise ConfigError(f"layer {idx}: kernel extents must be positive", field="k")
        pad = obj.get("pad", "same")
        pad = _same_pad(kernel) if pad == "same" else _triple(pad, "pad", idx)
        stride = _triple(obj.get("stride", 1), "stride", idx)
        if min(stride) < 1 or min(pad) < 0:
            raise ConfigError(f"layer {idx}: stride must be positive and pad non-negative", field="stride")
        groups = _positive_int(obj, "groups", idx, required=False, default=1)
        if kind == "conv3d" and (in_ch % groups or out_ch % groups):
            raise ConfigError(f"layer {idx}: groups={groups} must divide in/out channels", field="groups")
        if kind == "fsb" and (groups != 1 or stride != (1, 1, 1)):
            raise ConfigError(f"layer {idx}: fsb stages are stride 1 and dense", field="stride")
        m = _positive_int(obj, "m", idx, required=False)
        alpha = obj.get("alpha", 1.0)
        if not isinstance(alpha, (int, float)) or isinstance(alpha, bool) or alpha <= 0:
            raise ConfigError(f"layer {idx}: alpha must be positive", field="alpha")
        if repeat > 1 and in_ch != out_ch:
            raise ConfigError(f"layer {idx}: repeated layers need in == out", field="repeat")
        layer = LayerSpec(kind, name, in_ch, out_ch, kernel, pad, stride, groups, m, float(alpha), repeat=repeat)
        return layer, out_ch

    if kind == "pool":
        spec = obj.get("pool")
        if not isinstance(spec, list) or len(spec) != 2:
            raise ConfigError(f"layer {idx}: pool needs [window, stride]", field="pool")
        window = _triple(spec[0], "pool", idx)
        stride = _triple(spec[1], "pool", idx)
        if min(window) < 1 or min(stride) < 1:
            raise ConfigError(f"layer {idx}: pool window/stride must be positive", field="pool")
        return LayerSpec(kind, name, channels, channels, pool_window=window, pool_stride=stride, repeat=repeat), channels

    for key in ("in", "out"):
        if key in obj and obj[key] != channels:
            raise ConfigError(f"layer {idx}: {kind} keeps {channels} channels", field=key)
    return LayerSpec(kind, name, channels, channels, repeat=repeat), channels


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("model config must be an object")
    unknown = set(doc) - MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=sorted(unknown)[0])
    shape = doc.get("input")
    if not isinstance(shape, list) or len(shape) != 4 or not all(isinstance(v, int) and v > 0 for v in shape):
        raise ConfigError("'input' must be [C, T, H, W] positive integers", field="input")
    layers_doc = doc.get("layers", [])
    if not isinstance(layers_doc, list):
        raise ConfigError("'layers' must be an array", field="layers")
    channels = shape[0]
    layers = []
    for idx, obj in enumerate(layers_doc):
        layer, channels = _parse_layer(obj, idx, channels)
        layers.append(layer)
    reference = doc.get("reference", {})
    if not isinstance(reference, dict):
        raise ConfigError("'reference' must be an object", field="reference")
    spec = ModelSpec(str(doc.get("name", "model")), tuple(shape), tuple(layers), dict(reference))
    try:
        spec.propagate()
    except ShapeError as exc:
        raise ConfigError(str(exc), field="layers") from None
    return spec


def resolve_config(path):
    """``path`` as given, or the shipped config of that name."""
    p = Path(path)
    if p.exists():
        return p
    shipped = CONFIG_DIR / p.name
    if shipped.exists():
        return shipped
    raise ConfigError(f"no such model config: {path}")


def model_parse(path):
    text = resolve_config(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config: {exc.msg}", line=exc.lineno) from None
    return model_from_dict(doc)


def random_weights(spec, dtype=np.float32, seed=0):
    """One weight entry per expanded layer (None for parameter-free kinds)."""
    weights = []
    for i, layer in enumerate(spec.expanded()):
        s = seed + 1000 * i
        if layer.kind == "conv3d":
            shape = (layer.out_ch, layer.in_ch // layer.groups, *layer.kernel)
            weights.append(tensor_random(shape, dtype, s))
        elif layer.kind == "fsb":
            weights.append(FsbWeights.random(layer.in_ch, layer.out_ch, layer.kernel, layer.m, layer.alpha, dtype, s))
        else:
            weights.append(None)
    return weights


def apply_layer(layer, weight, x):
    if layer.kind == "conv3d":
        return conv3d_direct(x, weight, layer.geometry)
    if layer.kind == "fsb":
        return fsb_forward(x, weight, layer.pad)
    if layer.kind == "trg":
        return trg_forward(x)
    if layer.kind == "pool":
        return max_pool3d(x, layer.pool_window, layer.pool_stride)
    if layer.kind == "relu":
        return np.maximum(x, 0)
    raise ShapeError(f"unknown layer kind {layer.kind!r}")


def model_forward(spec, weights, x):
    """Apply the expanded layers of ``spec`` in order."""
    check_tensor(x, "input")
    layers = spec.expanded()
    if len(weights) != len(layers):
        raise ShapeError(f"{len(layers)} layers but {len(weights)} weight entries")
    if x.shape[1] != spec.input_shape[0]:
        raise ShapeError(f"input has {x.shape[1]} channels, model expects {spec.input_shape[0]}")
    for idx, (layer, w) in enumerate(zip(layers, weights)):
        try:
            x = apply_layer(layer, w, x)
        except ShapeError as exc:
            raise ShapeError(f"layer {idx} ({layer.name}): {exc}") from None
    return x
