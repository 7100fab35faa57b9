"""Compare the compiled kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20] [--end-to-end]

Kernel inputs have the sizes used at run time: 28 microphone pairs,
1024-lag correlations, the 2562-point grid, 1000 particles and four
observations.  ``--end-to-end`` also times localisation and tracking of
the three-static fixture under each backend in a fresh interpreter.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from sonarray._kernels import _pykernels
from sonarray.geometry import CUBE_ARRAY
from sonarray.localization.grid import load_or_build

try:
    from sonarray._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

L = 1024


def kernel_inputs(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    grid, _ = load_or_build(CUBE_ARRAY, 48000, 343.0, 4)
    corr = np.ascontiguousarray(np.abs(rng.standard_normal((28, L))))
    low, width = grid.wrapped_region(L)
    particles = rng.standard_normal((1000, 3))
    particles /= np.linalg.norm(particles, axis=1, keepdims=True)
    obs = rng.standard_normal((4, 3))
    obs /= np.linalg.norm(obs, axis=1, keepdims=True)
    return {
        "corr": corr,
        "lookup": np.ascontiguousarray(grid.wrapped_table(L)),
        "low": np.ascontiguousarray(low),
        "width": np.ascontiguousarray(width),
        "particles": np.ascontiguousarray(particles),
        "obs": np.ascontiguousarray(obs),
    }


def cases(mod, d):
    return {
        "grid_energies": lambda: mod.grid_energies(d["corr"], d["lookup"]),
        "region_energies": lambda: mod.region_energies(d["corr"], d["low"], d["width"]),
        "multi_source_search": lambda: mod.multi_source_search(d["corr"].copy(), d["low"], d["width"], 4, 1),
        "observation_likelihoods": lambda: mod.observation_likelihoods(d["particles"], d["obs"], 0.05, 63.66),
    }


def best_time(fn, repeat: int) -> float:
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def end_to_end(backend: str) -> float:
    code = (
        "import time\n"
        "from sonarray.simulator import get_fixture, synthesize_scene\n"
        "from sonarray.geometry import CUBE_ARRAY\n"
        "from sonarray.pipeline import localize_and_track\n"
        "from sonarray.localization.grid import load_or_build\n"
        "load_or_build(CUBE_ARRAY, 48000, 343.0, 4)\n"
        "mix, _ = synthesize_scene(get_fixture('three-static'), 0)\n"
        "t = time.perf_counter(); localize_and_track(mix, CUBE_ARRAY); print(time.perf_counter() - t)\n"
    )
    env = dict(os.environ, SONARRAY_PURE_PYTHON="1" if backend == "python" else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)

    d = kernel_inputs()
    py = cases(_pykernels, d)
    cy = cases(_ckernels, d) if _ckernels is not None else {}
    print(f"{'kernel':<26}{'numpy (us)':>12}{'cython (us)':>13}{'speed-up':>10}")
    for name, fn in py.items():
        t_py = best_time(fn, args.repeat) * 1e6
        if name in cy:
            np.testing.assert_allclose(np.asarray(cy[name]()[0] if name == "multi_source_search" else cy[name]()),
                                       np.asarray(fn()[0] if name == "multi_source_search" else fn()), rtol=1e-12)
            t_cy = best_time(cy[name], args.repeat) * 1e6
            print(f"{name:<26}{t_py:>12.1f}{t_cy:>13.1f}{t_py / t_cy:>9.1f}x")
        else:
            print(f"{name:<26}{t_py:>12.1f}{'n/a':>13}{'':>10}")
    if args.end_to_end:
        print("\nlocalisation + tracking, three-static fixture (8 s of audio)")
        for backend in ("python", "cython"):
            if backend == "cython" and _ckernels is None:
                continue
            print(f"  {backend:<8}{end_to_end(backend):7.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
