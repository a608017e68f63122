"""Compare the compiled and pure-numpy kernel backends on training-size
workloads.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]

Both backends are imported directly, so the timings are independent of the
SODKIT_NO_NUMBA dispatch flag.  Outputs are also cross-checked for bitwise
equality while we are at it; a mismatch aborts the run.
"""

import argparse
import time

import numpy as np

from sodkit import _kernels_numpy as knp
from sodkit import kernels

try:
    from sodkit import _kernels_numba as knb
except ImportError:
    knb = None


def timeit(fn, repeats):
    fn()    # warm up (JIT compile, cache touch)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def check_equal(name, a, b):
    if not np.array_equal(a, b, equal_nan=True):
        raise SystemExit(f"backend mismatch in {name}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if knb is None:
        raise SystemExit("compiled backend unavailable (numba not importable)")

    rng = np.random.default_rng(0)
    cases = []

    # conv workloads shaped like the encoder at each scale
    for (b, c_in, c_out, hw, k, s, p, d) in [
        (8, 3, 16, 64, 3, 1, 1, 1),
        (8, 16, 32, 32, 3, 1, 1, 1),
        (8, 64, 64, 16, 3, 1, 1, 1),
        (8, 64, 64, 16, 3, 1, 2, 2),
    ]:
        x = rng.standard_normal((b, c_in, hw, hw))
        w = rng.standard_normal((c_out, c_in, k, k))
        span = d * (k - 1) + 1
        ho = kernels.conv_out_size(hw, k, s, p, d)
        xp = kernels.pad_zeros(x, p)
        gout = rng.standard_normal((b, c_out, ho, ho))

        def run(mod, xp=xp, k=k, s=s, d=d, ho=ho, w=w, gout=gout):
            cols = mod.im2col(xp, k, s, d, ho, ho)
            g2 = np.ascontiguousarray(gout.transpose(1, 0, 2, 3)).reshape(w.shape[0], -1)
            gcols_t = w.reshape(w.shape[0], -1).T @ g2
            bb, cc, hp, wp = xp.shape
            return cols, mod.col2im(gcols_t, bb, cc, hp, wp, k, s, d, ho, ho)

        label = f"conv B{b} {c_in}->{c_out} {hw}x{hw} k{k}s{s}p{p}d{d}"
        cases.append((label, lambda m=knp: run(m), lambda m=knb: run(m)))

    # pooling and resize workloads
    x = rng.standard_normal((8, 64, 32, 32))
    gout = rng.standard_normal((8, 64, 16, 16))
    cases.append((
        "maxpool B8 64ch 32x32 k2s2",
        lambda: knp.maxpool_forward(x, 2, 2, 0),
        lambda: knb.maxpool_forward(x, 2, 2, 0),
    ))
    _, idx = kernels.maxpool_forward(x, 2, 2, 0)
    cases.append((
        "maxpool bwd B8 64ch 32x32",
        lambda: knp.maxpool_backward(gout, idx, x.shape[2], x.shape[3]),
        lambda: knb.maxpool_backward(gout, idx, x.shape[2], x.shape[3]),
    ))
    small = rng.standard_normal((8, 1, 16, 16))
    i0, i1, fi = kernels.bilinear_coeffs(16, 64)
    cases.append((
        "bilinear up 16->64 B8",
        lambda: knp.bilinear_forward(small, i0, i1, fi, i0, i1, fi),
        lambda: knb.bilinear_forward(small, i0, i1, fi, i0, i1, fi),
    ))

    print(f"{'case':<36} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for label, f_np, f_nb in cases:
        out_np, out_nb = f_np(), f_nb()
        if isinstance(out_np, tuple):
            for i, (a, b_) in enumerate(zip(out_np, out_nb)):
                check_equal(f"{label}[{i}]", a, b_)
        else:
            check_equal(label, out_np, out_nb)
        t_np = timeit(f_np, args.repeats)
        t_nb = timeit(f_nb, args.repeats)
        print(f"{label:<36} {t_np:>10.2f} {t_nb:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
