"""Benchmark the compiled kernels against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_backends.py

This is the measurement behind the default "mixed" binding: the sequential
recurrences (plant stepping, play operator) win big when compiled, while the
batched conv kernels lower to BLAS through numpy and are fastest there at
this project's tensor shapes.
"""

import time

import numpy as np

from melforce import plant
from melforce.kernels import pure

try:
    from melforce.kernels import _native as native
except ImportError:
    native = None


def timeit(fn, reps):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def bench_conv(rows):
    rng = np.random.default_rng(0)
    shapes = [
        ("conv fwd  (75,17,45)x(20,45,3)", (75, 17, 45), (20, 45, 3), 100),
        ("conv fwd  (75,256,1)x(20,1,3)", (75, 256, 1), (20, 1, 3), 50),
        ("conv fwd  (75,127,20)x(10,20,2)", (75, 127, 20), (10, 20, 2), 50),
    ]
    for name, sx, sw, reps in shapes:
        x = rng.standard_normal(sx)
        w = rng.standard_normal(sw)
        b = rng.standard_normal(sw[0])
        t_pure = timeit(lambda: pure.conv1d_forward(x, w, b), reps)
        t_nat = (
            timeit(lambda: native.conv1d_forward(x, w, b), reps) if native else None
        )
        rows.append((name, t_pure, t_nat))
        y = pure.conv1d_forward(x, w, b)
        gy = rng.standard_normal(y.shape)
        t_pure = timeit(lambda: pure.conv1d_grad_params(x, gy), reps)
        t_nat = (
            timeit(lambda: native.conv1d_grad_params(x, gy), reps) if native else None
        )
        rows.append((name.replace("fwd ", "gradp"), t_pure, t_nat))


def bench_plant(rows):
    cfg = plant.GRIND_SURFACE
    params = plant.make_params_vec(cfg, kp=150, kd=120, kf=0.1, inertia=0.8)
    rng = np.random.default_rng(1)
    n = 20000
    pz = np.full(n, 0.0025)
    vz = np.zeros(n)
    noises = [rng.standard_normal(n) for _ in range(4)]

    def run(impl):
        state = plant.make_state_vec(plant.PlantState())
        outs = [np.empty(n) for _ in range(4)]
        impl.plant_chunk(state, params, 0, 0.0, 2.0, pz, vz, *noises, *outs)

    rows.append(
        (
            f"plant_chunk ({n} steps)",
            timeit(lambda: run(pure), 3),
            timeit(lambda: run(native), 20) if native else None,
        )
    )


def bench_play(rows):
    rng = np.random.default_rng(2)
    u = np.cumsum(rng.standard_normal(20000))
    widths = np.asarray(plant.PLAY_WIDTHS_N)
    weights = np.asarray(plant.PLAY_WEIGHTS)

    def run(impl):
        impl.play_apply(u, widths, weights, np.zeros(4))

    rows.append(
        (
            "play_apply (20000 steps)",
            timeit(lambda: run(pure), 3),
            timeit(lambda: run(native), 20) if native else None,
        )
    )


def main():
    rows = []
    bench_conv(rows)
    bench_plant(rows)
    bench_play(rows)
    name_w = max(len(r[0]) for r in rows) + 2
    print(f"{'kernel'.ljust(name_w)}{'numpy':>12}{'native':>12}{'speedup':>9}")
    for name, t_pure, t_nat in rows:
        if t_nat is None:
            print(f"{name.ljust(name_w)}{t_pure * 1e3:>10.3f}ms{'n/a':>12}")
        else:
            print(
                f"{name.ljust(name_w)}{t_pure * 1e3:>10.3f}ms{t_nat * 1e3:>10.3f}ms"
                f"{t_pure / t_nat:>8.1f}x"
            )
    if native is None:
        print("\ncompiled kernels not built; numpy fallback only")


if __name__ == "__main__":
    main()
