"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on identical inputs under both backends; the table reports
the best wall time per backend, the speedup, and the largest output
difference so a fast but wrong build is visible.
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from anosov_lab import _kernels


def _cases(rng: np.random.Generator):
    pts = rng.random((128 * 128, 2))
    ks = rng.integers(-3, 4, size=(4, 2)).astype(float)
    c = 0.002 * rng.normal(size=(4, 2))
    s = 0.002 * rng.normal(size=(4, 2))
    lin = np.array([[2.0, 1.0], [1.0, 1.0]])
    grid = rng.normal(size=(128, 128, 2))
    return {
        "trig_eval order 2, 16k points": ("trig_eval", (pts, ks, c, s, 2)),
        "invert_newton, 16k points": ("invert_newton", (pts, lin, ks, c, s, 1e-13, 50)),
        "bilinear_periodic 128^2 grid, 16k points": ("bilinear_periodic", (grid, pts)),
    }


def _max_diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b) if isinstance(x, np.ndarray))
    return float(np.max(np.abs(a - b)))


def run(repeat: int, number: int) -> list[dict]:
    if _kernels.compiled_backend is None:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    rng = np.random.default_rng(0)
    rows = []
    for label, (name, args) in _cases(rng).items():
        py_fn = getattr(_kernels.python_backend, name)
        cy_fn = getattr(_kernels.compiled_backend, name)
        t_py = min(timeit.repeat(lambda: py_fn(*args), repeat=repeat, number=number)) / number
        t_cy = min(timeit.repeat(lambda: cy_fn(*args), repeat=repeat, number=number)) / number
        diff = _max_diff(py_fn(*args), cy_fn(*args))
        rows.append({"kernel": label, "python_s": t_py, "compiled_s": t_cy, "speedup": t_py / t_cy, "max_diff": diff})
    return rows


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=3)
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args(argv)
    rows = run(args.repeat, args.number)
    w = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{w}}  {'python ms':>10}  {'compiled ms':>11}  {'speedup':>7}  {'max diff':>9}")
    for r in rows:
        print(f"{r['kernel']:<{w}}  {1e3 * r['python_s']:>10.2f}  {1e3 * r['compiled_s']:>11.2f}  "
              f"{r['speedup']:>6.1f}x  {r['max_diff']:>9.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
