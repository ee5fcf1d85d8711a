"""Command-line entry point: verify, analyze, bench, trg.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
"""

import argparse
import random
import statistics
import sys
import time

import numpy as np

from . import blocks, complexity, direct, winograd
from .errors import ConfigError, FormatError, ShapeError, UnsupportedError
from .instrument import count_multiplications, wrap
from .tensor5 import max_rel_error, tensor_random, tensor_read, tensor_write

SUITES = ("wino1d", "wino2d", "wino3d", "fsb", "hfa", "trg")
DTYPES = {"f32": np.float32, "f64": np.float64}
TOLERANCES = {
    "f64": {"wino1d": 1e-9, "wino2d": 1e-9, "wino3d": 1e-9, "fsb": 1e-9, "hfa": 1e-9, "trg": 1e-12},
    "f32": {"wino1d": 1e-3, "wino2d": 1e-3, "wino3d": 1e-3, "fsb": 1e-3, "hfa": 1e-3, "trg": 1e-5},
}
# (m, r) pairs drawn by the randomized suites
PLAN_CHOICES = ((2, 3), (3, 3), (4, 3), (2, 5), (3, 5), (4, 5))
MAX_C, MAX_N, MAX_T, MAX_HW = 8, 16, 16, 16


# -- randomized equivalence cases ------------------------------------------

def _case_wino1d(rng, dtype, seed):
    m, k = rng.choice(PLAN_CHOICES)
    pad = rng.randint(0, k - 1)
    c, mo = rng.randint(1, MAX_C), rng.randint(1, MAX_N)
    t = rng.randint(max(1, k - 2 * pad), MAX_T)
    h, w = rng.randint(1, 8), rng.randint(1, 8)
    x = tensor_random((rng.randint(1, 2), c, t, h, w), dtype, seed)
    g = tensor_random((mo, c, k, 1, 1), dtype, seed + 1)
    got = winograd.wino_conv1d_temporal(x, g, winograd.cook_toom_plan(m, k), pad_t=pad)
    want = direct.conv1d_temporal(x, g, direct.ConvGeometry(pad=(pad, 0, 0)))
    return max_rel_error(got, want)


def _case_wino2d(rng, dtype, seed):
    m, r = rng.choice(PLAN_CHOICES)
    ph, pw = rng.randint(0, r - 1), rng.randint(0, r - 1)
    ch = rng.randint(1, MAX_N)
    h = rng.randint(max(1, r - 2 * ph), MAX_HW)
    w = rng.randint(max(1, r - 2 * pw), MAX_HW)
    x = tensor_random((1, ch, rng.randint(1, 4), h, w), dtype, seed)
    g = tensor_random((ch, 1, 1, r, r), dtype, seed + 1)
    got = winograd.wino_conv2d_depthwise(x, g, winograd.cook_toom_plan(m, r), pad_hw=(ph, pw))
    want = direct.conv2d_depthwise(x, g, direct.ConvGeometry(pad=(0, ph, pw), groups=ch))
    return max_rel_error(got, want)


def _case_wino3d(rng, dtype, seed):
    m, r = rng.choice(PLAN_CHOICES[:3])
    pad = tuple(rng.randint(0, r - 1) for _ in range(3))
    c, n = rng.randint(1, MAX_C), rng.randint(1, MAX_N)
    ext = [rng.randint(max(1, r - 2 * p), MAX_HW) for p in pad]
    x = tensor_random((1, c, *ext), dtype, seed)
    g = tensor_random((n, c, r, r, r), dtype, seed + 1)
    got = winograd.wino_conv3d(x, g, winograd.cook_toom_plan(m, r), pad=pad)
    want = direct.conv3d_direct(x, g, direct.ConvGeometry(pad=pad))
    return max_rel_error(got, want)


def _random_fsb(rng, dtype, seed):
    k = rng.choice((3, 5))
    r = rng.choice((3, 5))
    c, n = rng.randint(1, MAX_C), rng.randint(1, MAX_N)
    mid = rng.randint(1, MAX_C)
    x = tensor_random((1, c, rng.randint(2, MAX_T), rng.randint(2, MAX_HW), rng.randint(2, MAX_HW)), dtype, seed)
    w = blocks.FsbWeights.random(c, n, (k, r, r), m=mid, dtype=dtype, seed=seed + 1)
    return x, w


def _case_fsb(rng, dtype, seed):
    x, w = _random_fsb(rng, dtype, seed)
    k, r, s = w.kernel
    got = blocks.fsb_forward(x, w)
    # the same three stages written as plain conv3d_direct calls
    y = direct.conv3d_direct(x, w.stage1, direct.ConvGeometry(pad=((k - 1) // 2, 0, 0)))
    y = direct.conv3d_direct(y, w.stage2, direct.ConvGeometry(pad=(0, (r - 1) // 2, (s - 1) // 2), groups=w.width))
    want = direct.conv3d_direct(y, w.stage3)
    return max_rel_error(got, want)


def _case_hfa(rng, dtype, seed):
    x, w = _random_fsb(rng, dtype, seed)
    k, r, _ = w.kernel
    m1 = rng.choice([m for m in (2, 3, 4) if m + k - 1 <= winograd.MAX_TILE])
    m2 = rng.choice([m for m in (2, 3, 4) if m + r - 1 <= winograd.MAX_TILE])
    got = winograd.hfa_fsb_forward(x, w, winograd.hybrid_plan(m1, k, m2, r))
    return max_rel_error(got, blocks.fsb_forward(x, w))


def _case_trg(rng, dtype, seed):
    dims = (rng.randint(1, 2), rng.randint(1, 4), rng.randint(2, MAX_T), rng.randint(1, 6), rng.randint(1, 6))
    x = tensor_random(dims, dtype, seed)
    y = blocks.trg_forward(x)
    if y.shape != x.shape:
        return float("inf")
    t = dims[2]
    telescoped = y[:, :, :t - 1].astype(np.float64).sum(axis=2)
    err = max_rel_error(telescoped, x[:, :, -1].astype(np.float64) - x[:, :, 0])
    const = np.broadcast_to(x[:, :, :1], x.shape).copy()
    yc = blocks.trg_forward(const)
    err = max(err, float(np.max(np.abs(yc[:, :, :t - 1]))),
              max_rel_error(yc[:, :, t - 1], const[:, :, 0]))
    with count_multiplications() as counted:
        blocks.trg_forward(wrap(x[:1, :1, :, :2, :2]))
    if counted[0]:
        return float("inf")
    return err


CASES = {"wino1d": _case_wino1d, "wino2d": _case_wino2d, "wino3d": _case_wino3d,
         "fsb": _case_fsb, "hfa": _case_hfa, "trg": _case_trg}


def run_suite(suite, cases, seed, dtype_name):
    """Max relative error over ``cases`` randomized cases of ``suite``."""
    rng = random.Random(f"{suite}:{seed}")
    dtype = DTYPES[dtype_name]
    worst = 0.0
    for i in range(cases):
        worst = max(worst, CASES[suite](rng, dtype, seed * 100003 + 17 * i))
    return worst


def cmd_verify(args, out):
    suites = SUITES if args.suite == "all" else (args.suite,)
    out.write(f"verify seed={args.seed} cases={args.cases} dtype={args.dtype}\n")
    out.write(f"{'suite':<8}  {'cases':>5}  {'max_rel_err':>11}  {'tol':>7}  status\n")
    ok = True
    for suite in suites:
        err = run_suite(suite, args.cases, args.seed, args.dtype)
        tol = TOLERANCES[args.dtype][suite]
        passed = err <= tol
        ok &= passed
        out.write(f"{suite:<8}  {args.cases:>5}  {err:>11.3e}  {tol:>7.0e}  {'pass' if passed else 'FAIL'}\n")
    out.write("all suites passed\n" if ok else "verification FAILED\n")
    return 0 if ok else 1


# -- analyze ---------------------------------------------------------------

def _int_list(text, count, what):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise ShapeError(f"{what} must be {count} comma-separated integers, got {text!r}") from None
    if len(values) != count or min(values) < 1:
        raise ShapeError(f"{what} must be {count} positive integers, got {text!r}")
    return tuple(values)


def cmd_analyze(args, out):
    spec = blocks.model_parse(args.model)
    shape = _int_list(args.input, 4, "--input") if args.input else None
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    report = complexity.analyze_model(spec, variants, shape, m=args.m, m1=args.m1, m2=args.m2)
    out.write(report.to_csv() if args.format == "csv" else report.to_text())
    return 0


# -- bench -----------------------------------------------------------------

def _parse_bench_shape(text):
    parts = text.split(",")
    if len(parts) != 6 or not parts[5].startswith("k"):
        raise ShapeError(f"--shape must be Nb,C,T,H,W,kK (e.g. 1,16,8,32,32,k3), got {text!r}")
    dims = _int_list(",".join(parts[:5]), 5, "--shape")
    k = _int_list(parts[5][1:], 1, "kernel extent")[0]
    return dims, k


def _median_time(fn, repeat):
    times = []
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times), result


def cmd_bench(args, out):
    (nb, c, t, h, w), k = _parse_bench_shape(args.shape)
    n = args.out_channels or c
    dtype = DTYPES[args.dtype]
    x = tensor_random((nb, c, t, h, w), dtype, args.seed)
    pad = (k - 1) // 2
    kind = "conv3d" if args.op in ("conv3d", "wino3d") else "fsb"
    layer = blocks.LayerSpec(kind, args.op, c, n, (k, k, k), (pad, pad, pad), m=args.width)
    algo = {"conv3d": "direct", "wino3d": "wino3d", "fsb": "fsb_direct", "hfa": "fsb_hfa"}[args.op]
    mults = nb * complexity.mult_count(layer, (c, t, h, w), algo, args.m, args.m1, args.m2)
    rows = []
    if args.op == "conv3d":
        g = tensor_random((n, c, k, k, k), dtype, args.seed + 1)
        rows.append(("total", _median_time(lambda: direct.conv3d_direct(x, g, direct.ConvGeometry(pad=pad)), args.repeat)[0]))
    elif args.op == "wino3d":
        g = tensor_random((n, c, k, k, k), dtype, args.seed + 1)
        plan = winograd.cook_toom_plan(args.m, k)
        rows.append(("total", _median_time(lambda: winograd.wino_conv3d(x, g, plan, pad=pad), args.repeat)[0]))
    else:
        wts = blocks.FsbWeights.random(c, n, (k, k, k), m=args.width, dtype=dtype, seed=args.seed + 1)
        if args.op == "fsb":
            stage1 = lambda v: direct.conv1d_temporal(v, wts.stage1, direct.ConvGeometry(pad=(pad, 0, 0)))
            stage2 = lambda v: direct.conv2d_depthwise(v, wts.stage2, direct.ConvGeometry(pad=(0, pad, pad), groups=wts.width))
        else:
            hp = winograd.hybrid_plan(args.m1, k, args.m2, k)
            stage1 = lambda v: winograd.wino_conv1d_temporal(v, wts.stage1, hp.temporal, pad_t=pad)
            stage2 = lambda v: winograd.wino_conv2d_depthwise(v, wts.stage2, hp.spatial, pad_hw=(pad, pad))
        t1, y1 = _median_time(lambda: stage1(x), args.repeat)
        t2, y2 = _median_time(lambda: stage2(y1), args.repeat)
        t3, _ = _median_time(lambda: direct.conv_pointwise(y2, wts.stage3), args.repeat)
        rows += [("stage1", t1), ("stage2", t2), ("stage3", t3), ("total", t1 + t2 + t3)]
    out.write(f"bench op={args.op} shape={args.shape} out_channels={n} dtype={args.dtype} repeat={args.repeat}\n")
    out.write(f"{'part':<8}  {'median_s':>10}\n")
    for name, secs in rows:
        out.write(f"{name:<8}  {secs:>10.6f}\n")
    out.write(f"mults {mults:,} ({algo})\n")
    return 0


# -- trg -------------------------------------------------------------------

def cmd_trg(args, out):
    x = tensor_read(args.input)
    tensor_write(blocks.trg_forward(x), args.output)
    out.write(f"wrote {args.output} {'x'.join(map(str, x.shape))}\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="fastconv3d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="randomized fast-path vs direct-oracle checks")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--cases", type=_positive, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=tuple(DTYPES), default="f64")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="parameter and multiplication counts for a model config")
    p.add_argument("--model", required=True)
    p.add_argument("--input", help="C,T,H,W (defaults to the config's input)")
    p.add_argument("--variants", default="direct,wino3d,fsb,hfa")
    p.add_argument("--m", type=_positive, default=2, help="tile extent of the 3D Winograd variant")
    p.add_argument("--m1", type=_positive, default=2)
    p.add_argument("--m2", type=_positive, default=2)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="median wall time of one kernel")
    p.add_argument("--op", choices=("conv3d", "wino3d", "fsb", "hfa"), required=True)
    p.add_argument("--shape", required=True, help="Nb,C,T,H,W,kK")
    p.add_argument("--out-channels", type=_positive)
    p.add_argument("--width", type=_positive, help="FSB intermediate width (default C)")
    p.add_argument("--repeat", type=_positive, default=5)
    p.add_argument("--m", type=_positive, default=2)
    p.add_argument("--m1", type=_positive, default=2)
    p.add_argument("--m2", type=_positive, default=2)
    p.add_argument("--dtype", choices=tuple(DTYPES), default="f32")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("trg", help="apply the temporal residual gradient to a T5DF clip")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_trg)
    return parser


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigError, FormatError, ShapeError, UnsupportedError, OSError) as exc:
        print(f"fastconv3d {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
