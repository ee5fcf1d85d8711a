"""Parameter and multiplication accounting for model specs.

All counts are exact Python integers. Winograd counts use the real tile
grid (ceil division per axis, as the pad-and-crop kernels do), so they match
what :mod:`fastconv3d.winograd` actually multiplies. Only multiplications
are counted.

Algorithm variants for :func:`mult_count`:

``direct``      dense K x R x S convolution
``wino3d``      F(m^3, r^3) on the dense convolution (cubic, stride 1)
``fsb_direct``  the three FSB stages computed directly
``fsb_hfa``     F(m1, K) on stage 1, F(m2^2, R^2) on stage 2, stage 3 direct
"""

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import ShapeError, UnsupportedError

ALGOS = ("direct", "wino3d", "fsb_direct", "fsb_hfa")
# CLI / report names for the variants
VARIANTS = {"direct": "direct", "wino3d": "wino3d", "fsb": "fsb_direct", "hfa": "fsb_hfa"}
CSV_COLUMNS = ("layer", "kind", "in_shape", "out_shape", "params_base", "params_fsb", "rate",
               "mults_direct", "mults_wino3d", "mults_fsb", "mults_hfa")


def _ceil_div(a, b):
    return -(-a // b)


def dense_params(layer):
    k, r, s = layer.kernel
    groups = layer.groups if layer.kind == "conv3d" else 1
    return layer.out_ch * (layer.in_ch // groups) * k * r * s


def fsb_params(layer):
    k, r, s = layer.kernel
    m = layer.width
    return m * layer.in_ch * k + m * r * s + layer.out_ch * m


def param_count(layer):
    """Parameters actually stored by one application of ``layer``."""
    if layer.kind == "conv3d":
        return dense_params(layer)
    if layer.kind == "fsb":
        return fsb_params(layer)
    return 0


def mult_count(layer, in_shape, algo, m=2, m1=2, m2=2):
    """Multiplications for one batch item through one application of ``layer``.

    ``in_shape`` is (C, T, H, W). conv3d and fsb layers are both
    counted under every variant: a conv3d layer under ``fsb_*`` is counted as
    its FSB replacement (width ``layer.width``), an fsb layer under
    ``direct``/``wino3d`` as the dense convolution it replaces.
    """
    if algo not in ALGOS:
        raise UnsupportedError(f"unknown algorithm {algo!r}; choose from {ALGOS}")
    if layer.kind not in ("conv3d", "fsb"):
        return 0
    c, t, h, w = in_shape
    if c != layer.in_ch:
        raise ShapeError(f"{layer.name}: expects {layer.in_ch} channels, got {c}")
    k, r, s = layer.kernel
    n = layer.out_ch
    groups = layer.groups if layer.kind == "conv3d" else 1
    pt, ph, pw = layer.pad
    unit_stride = tuple(layer.stride) == (1, 1, 1)

    if algo == "direct":
        to, ho, wo = layer.geometry.output_extents((t, h, w), layer.kernel)
        return n * (c // groups) * k * r * s * to * ho * wo

    if algo == "wino3d":
        if not unit_stride:
            raise UnsupportedError(f"{layer.name}: Winograd needs stride 1, got {layer.stride}")
        if not k == r == s:
            raise UnsupportedError(f"{layer.name}: 3D Winograd needs a cubic kernel, got {layer.kernel}")
        if groups != 1:
            raise UnsupportedError(f"{layer.name}: 3D Winograd path is dense (groups=1)")
        to, ho, wo = layer.geometry.output_extents((t, h, w), layer.kernel)
        tiles = _ceil_div(to, m) * _ceil_div(ho, m) * _ceil_div(wo, m)
        return n * c * tiles * (m + k - 1) ** 3

    if not unit_stride or groups != 1:
        raise UnsupportedError(f"{layer.name}: an FSB replacement needs stride 1 and groups 1")
    width = layer.width
    t1 = t + 2 * pt - k + 1
    h2 = h + 2 * ph - r + 1
    w2 = w + 2 * pw - s + 1
    if min(t1, h2, w2) < 1:
        raise ShapeError(f"{layer.name}: kernel {layer.kernel} larger than padded input")
    pointwise = n * width * t1 * h2 * w2

    if algo == "fsb_direct":
        return width * c * k * t1 * h * w + width * r * s * t1 * h2 * w2 + pointwise

    if r != s:
        raise UnsupportedError(f"{layer.name}: 2D Winograd stage needs a square kernel, got {r}x{s}")
    temporal = width * c * _ceil_div(t1, m1) * (m1 + k - 1) * h * w
    spatial = width * t1 * _ceil_div(h2, m2) * _ceil_div(w2, m2) * (m2 + r - 1) ** 2
    return temporal + spatial + pointwise


def asymptotic_mults(layer, in_shape, algo, m=2, m1=2, m2=2):
    """Winograd counts with fractional tiles, (m+r-1)^d / m^d per output; exact Fraction."""
    if layer.kind not in ("conv3d", "fsb"):
        return Fraction(0)
    c, t, h, w = in_shape
    k, r, s = layer.kernel
    if algo == "wino3d":
        to, ho, wo = layer.geometry.output_extents((t, h, w), layer.kernel)
        return Fraction(layer.out_ch * c * to * ho * wo * (m + k - 1) ** 3, m**3)
    if algo == "fsb_hfa":
        pt, ph, pw = layer.pad
        t1, h2, w2 = t + 2 * pt - k + 1, h + 2 * ph - r + 1, w + 2 * pw - s + 1
        width = layer.width
        return (Fraction(width * c * t1 * h * w * (m1 + k - 1), m1)
                + Fraction(width * t1 * h2 * w2 * (m2 + r - 1) ** 2, m2**2)
                + layer.out_ch * width * t1 * h2 * w2)
    return Fraction(mult_count(layer, in_shape, algo, m, m1, m2))


@dataclass
class LayerRow:
    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    repeat: int
    params_baseline: int
    params_actual: int
    params_fsb: int
    mults: dict = field(default_factory=dict)

    @property
    def compression_rate(self):
        if self.params_actual == 0:
            return None
        return self.params_baseline / self.params_actual


@dataclass
class ComplexityReport:
    model: str
    input_shape: tuple
    variants: tuple
    plans: dict
    rows: list
    reference: dict = field(default_factory=dict)
    asymptotic: dict = field(default_factory=dict)
    fallbacks: list = field(default_factory=list)

    @property
    def totals(self):
        out = {"params_base": 0, "params_actual": 0, "params_fsb": 0}
        for row in self.rows:
            out["params_base"] += row.params_baseline
            out["params_actual"] += row.params_actual
            out["params_fsb"] += row.params_fsb
        for algo in self.variants:
            out[algo] = sum(row.mults[algo] for row in self.rows if row.mults.get(algo) is not None)
        return out

    @property
    def compression_rate(self):
        t = self.totals
        return t["params_base"] / t["params_actual"] if t["params_actual"] else None

    def conv_rows(self):
        return [row for row in self.rows if row.kind in ("conv3d", "fsb")]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)

        def mult(row_mults, algo):
            v = row_mults.get(algo)
            return "" if v is None else v

        for row in self.rows:
            rate = row.compression_rate
            writer.writerow([
                row.name, row.kind, "x".join(map(str, row.in_shape)), "x".join(map(str, row.out_shape)),
                row.params_baseline, row.params_fsb, "" if rate is None else f"{rate:.1f}",
                *(mult(row.mults, a) for a in ALGOS),
            ])
        t = self.totals
        rate = self.compression_rate
        writer.writerow([
            "total", "", "x".join(map(str, self.input_shape)), "", t["params_base"], t["params_fsb"],
            "" if rate is None else f"{rate:.1f}", *(t.get(a, "") for a in ALGOS),
        ])
        return buf.getvalue()

    def to_text(self):
        headers = ["layer", "kind", "in -> out", "params", "baseline", "rate"]
        headers += [f"mults_{a}" for a in self.variants]
        lines = []
        table = []
        for row in self.rows:
            rate = row.compression_rate
            cells = [
                row.name + (f" x{row.repeat}" if row.repeat > 1 else ""), row.kind,
                f"{_shape(row.in_shape)} -> {_shape(row.out_shape)}",
                f"{row.params_actual:,}", f"{row.params_baseline:,}",
                "-" if rate is None else f"{rate:.1f}x",
            ]
            cells += ["-" if row.mults.get(a) is None else _giga(row.mults[a]) for a in self.variants]
            table.append(cells)
        t = self.totals
        rate = self.compression_rate
        table.append(["total", "", _shape(self.input_shape), f"{t['params_actual']:,}", f"{t['params_base']:,}",
                      "-" if rate is None else f"{rate:.1f}x"] + [_giga(t[a]) for a in self.variants])
        widths = [max(len(str(r[i])) for r in [headers] + table) for i in range(len(headers))]
        plan_text = ", ".join(f"{k}={v}" for k, v in self.plans.items())
        lines.append(f"model {self.model}  input {_shape(self.input_shape)}  plans {plan_text}")
        lines.append("  ".join(h.ljust(wd) for h, wd in zip(headers, widths)).rstrip())
        lines.append("  ".join("-" * wd for wd in widths))
        for i, cells in enumerate(table):
            if i == len(table) - 1:
                lines.append("  ".join("-" * wd for wd in widths))
            lines.append("  ".join(str(c).ljust(wd) for c, wd in zip(cells, widths)).rstrip())
        lines.append(f"params total {t['params_actual']:,} ({_mega(t['params_actual'])}), "
                     f"baseline {t['params_base']:,} ({_mega(t['params_base'])})")
        for algo in self.variants:
            exact = t[algo]
            line = f"mults_{algo} total {exact:,} ({_giga(exact)})"
            if algo in self.asymptotic:
                line += f", asymptotic {float(self.asymptotic[algo]):,.0f}"
            lines.append(line)
        for name, why in self.fallbacks:
            lines.append(f"note: {name} counted with its direct fallback ({why})")
        if self.reference:
            ref = ", ".join(f"{k} {v}" for k, v in self.reference.items())
            lines.append(f"reference figures: {ref}")
        return "\n".join(lines) + "\n"


def _shape(shape):
    return "x".join(str(v) for v in shape)


def _giga(v):
    return f"{v / 1e9:.2f}G"


def _mega(v):
    return f"{v / 1e6:.2f}M"


def analyze_model(spec, variants=("direct", "wino3d", "fsb", "hfa"), input_shape=None, m=2, m1=2, m2=2):
    """Per-layer rows (repeats folded into one row) and totals for ``spec``.

    Winograd variants on layers they cannot handle (stride > 1, non-cubic or
    non-square kernels) are counted with the direct fallback and noted.
    """
    algos = []
    for v in variants:
        if v in VARIANTS:
            algos.append(VARIANTS[v])
        elif v in ALGOS:
            algos.append(v)
        else:
            raise UnsupportedError(f"unknown variant {v!r}; choose from {sorted(VARIANTS)}")
    shape = tuple(input_shape or spec.input_shape)
    if shape[0] != spec.input_shape[0]:
        raise ShapeError(f"input has {shape[0]} channels, model expects {spec.input_shape[0]}")
    rows, fallbacks = [], []
    asym = {a: Fraction(0) for a in algos if a in ("wino3d", "fsb_hfa")}
    idx = 0
    for layer in spec.layers:
        row = LayerRow(layer.name, layer.kind, shape, shape, layer.repeat, 0, 0, 0,
                       {a: 0 for a in algos})
        for _ in range(layer.repeat):
            try:
                out = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {idx} ({layer.name}): {exc}") from None
            if min(out) <= 0:
                raise ShapeError(f"layer {idx} ({layer.name}): non-positive output {out}")
            if layer.kind in ("conv3d", "fsb"):
                row.params_baseline += dense_params(layer)
                row.params_actual += param_count(layer)
                row.params_fsb += fsb_params(layer)
            for algo in algos:
                if row.mults[algo] is None:
                    continue
                try:
                    count = mult_count(layer, shape, algo, m, m1, m2)
                    if algo in asym:
                        asym[algo] += asymptotic_mults(layer, shape, algo, m, m1, m2)
                except UnsupportedError as exc:
                    fallback = {"wino3d": "direct", "fsb_hfa": "fsb_direct"}.get(algo)
                    try:
                        count = None if fallback is None else mult_count(layer, shape, fallback, m, m1, m2)
                    except UnsupportedError:
                        count = None
                    if count is not None:
                        if algo in asym:
                            asym[algo] += count
                        if (layer.name, str(exc)) not in fallbacks:
                            fallbacks.append((layer.name, str(exc)))
                row.mults[algo] = None if count is None else row.mults[algo] + count
            shape = out
            idx += 1
        row.out_shape = shape
        rows.append(row)
    plans = {"m": m, "m1": m1, "m2": m2}
    return ComplexityReport(spec.name, tuple(input_shape or spec.input_shape), tuple(algos), plans, rows,
                            dict(spec.reference), asym, fallbacks)
