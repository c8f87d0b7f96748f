"""Compiled kernels vs the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Times conv2d, the uniform quantizer, the mid-rise quantizer and one full
quantized forward pass of the default residual net under each backend.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

CASES = {
    "conv2d 64x8x8, 3x3": (
        "k.conv2d(x, w, 1, 1)",
        "x = rng.standard_normal((64, 8, 8)); w = rng.standard_normal((64, 64, 3, 3))"),
    "conv2d 16x32x32, 3x3": (
        "k.conv2d(x, w, 1, 1)",
        "x = rng.standard_normal((16, 32, 32)); w = rng.standard_normal((16, 16, 3, 3))"),
    "quantize_uniform 1e5": (
        "k.quantize_uniform(x, 0.0, 1.0, 3.0)",
        "x = rng.uniform(-0.5, 1.5, 100_000)"),
    "quantize_midrise 1e5": (
        "k.quantize_midrise(x, 0.77, 2.0)",
        "x = rng.standard_normal(100_000)"),
    "forward 16 blocks": (
        "rb.forward(net, xin, quantized=True)",
        "cfg = rb.ResidualNetConfig(activation_bits=2, weight_bits=2); "
        "net = rb.build_random_net(cfg); xin = rb.random_input(cfg)"),
}

SETUP = (
    "import numpy as np\n"
    "from precision_highway import _backend, resblocks as rb\n"
    "k = _backend.kernels\n"
    "rng = np.random.default_rng(0)\n"
)


def run_here(repeat):
    """Time every case in this process's backend; prints ``name<TAB>seconds``."""
    for name, (stmt, setup) in CASES.items():
        t = timeit.Timer(stmt, SETUP + setup)
        n, _ = t.autorange()
        best = min(t.repeat(repeat, n)) / n
        print(f"{name}\t{best:.6e}")


def run_backend(backend, repeat):
    env = dict(os.environ)
    env.pop("PRECISION_HIGHWAY_BACKEND", None)
    if backend == "python":
        env["PRECISION_HIGHWAY_BACKEND"] = "python"
    out = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True).stdout
    return {name: float(t) for name, t in (line.split("\t") for line in out.splitlines())}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.worker:
        run_here(args.repeat)
        return
    from precision_highway import _backend
    if not _backend.compiled_available():
        sys.exit("compiled kernels are not built; run `pip install --no-build-isolation -e .` first")
    fast = run_backend("cython", args.repeat)
    slow = run_backend("python", args.repeat)
    width = max(map(len, CASES))
    print(f"{'case':<{width}}  {'cython':>11}  {'python':>11}  {'speedup':>7}")
    for name in CASES:
        print(f"{name:<{width}}  {fast[name] * 1e3:>9.3f}ms  {slow[name] * 1e3:>9.3f}ms  "
              f"{slow[name] / fast[name]:>6.2f}x")
    print(f"numpy {np.__version__}, python {sys.version.split()[0]}")


if __name__ == "__main__":
    main()
