"""Compare the compiled convolution backend against the numpy fallback.

Times the three kernel entry points (forward, input gradient, weight
gradient) on the layer shapes the network actually runs, checks that both
backends agree numerically, and prints per-op timings with speedups.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--batch N]
"""

import argparse
import time

import numpy as np

from sdanet.kernels import _numpy

try:
    from sdanet.kernels import _native
except ImportError:
    _native = None


# (label, in_channels, out_channels, groups, ksize, padding, spatial)
CASES = [
    ("shallow 3x3 8->16", 8, 16, 1, 3, 1, 16),
    ("dense 3x3 16->16", 16, 16, 1, 3, 1, 16),
    ("depthwise 3x3 C=16", 16, 16, 16, 3, 1, 16),
    ("pointwise 1x1 16->16", 16, 16, 1, 1, 0, 16),
    ("expand 1x1 16->32", 16, 32, 1, 1, 0, 16),
    ("upsample 3x3 16->64", 16, 64, 1, 3, 1, 16),
    ("dense 3x3 16->16 @32", 16, 16, 1, 3, 1, 32),
]


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_case(label, cin, cout, groups, k, pad, s, batch, repeats):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.normal(size=(batch, cin, s, s)))
    w = np.ascontiguousarray(rng.normal(size=(cout, cin // groups, k, k)))
    bias = np.ascontiguousarray(rng.normal(size=cout))
    out_s = s + 2 * pad - k + 1
    gout = np.ascontiguousarray(rng.normal(size=(batch, cout, out_s, out_s)))

    ops = [
        ("forward", lambda impl: impl.conv2d_forward(x, w, bias, groups, pad)),
        ("grad in", lambda impl: impl.conv2d_backward_input(
            gout, w, groups, pad, s, s)),
        ("grad w", lambda impl: impl.conv2d_backward_weight(
            x, gout, groups, pad, k)),
    ]
    rows = []
    for op_name, op in ops:
        ref = op(_numpy)
        t_np = _time(lambda: op(_numpy), repeats)
        if _native is not None:
            got = op(_native)
            gap = float(np.max(np.abs(got - ref)))
            t_nat = _time(lambda: op(_native), repeats)
            rows.append((label, op_name, t_nat, t_np, gap))
        else:
            rows.append((label, op_name, None, t_np, 0.0))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--batch", type=int, default=8)
    args = ap.parse_args()

    if _native is None:
        print("compiled backend not built; timing the numpy fallback only")
    header = (f"{'case':24s} {'op':8s} {'native ms':>10s} {'numpy ms':>10s} "
              f"{'speedup':>8s} {'max gap':>9s}")
    print(header)
    print("-" * len(header))
    worst_gap = 0.0
    for case in CASES:
        for label, op_name, t_nat, t_np, gap in run_case(*case,
                                                         batch=args.batch,
                                                         repeats=args.repeats):
            worst_gap = max(worst_gap, gap)
            if t_nat is None:
                print(f"{label:24s} {op_name:8s} {'-':>10s} "
                      f"{t_np * 1e3:10.3f} {'-':>8s} {'-':>9s}")
            else:
                print(f"{label:24s} {op_name:8s} {t_nat * 1e3:10.3f} "
                      f"{t_np * 1e3:10.3f} {t_np / t_nat:7.1f}x {gap:9.2e}")
    if _native is not None:
        print(f"\nworst backend disagreement: {worst_gap:.2e}")


if __name__ == "__main__":
    main()
