"""Time every hot kernel in its numpy and numba form.

    python benchmarks/bench_kernels.py [--repeat 200]

Both variants are imported directly, so the PAQMIX_DISABLE_NUMBA flag does not
matter here. Numba variants are called once before timing to exclude compilation.
"""
import argparse
import time

import numpy as np

from paqmix import kernels


def _inputs(rng, n_vehicles=64, rows=256, width=32):
    x = rng.uniform(0, 400, n_vehicles)
    lane = rng.integers(0, 3, n_vehicles)
    active = rng.random(n_vehicles) < 0.9
    v = rng.uniform(0, 15, n_vehicles)
    a = rng.uniform(-6, 6, n_vehicles)
    m = rng.normal(size=(rows, width))
    gain, bias = rng.uniform(0.5, 1.5, width), rng.normal(size=width)
    y, xhat, inv_std = kernels.layer_norm_forward_np(m, gain, bias, 1e-5)
    sm = kernels.softmax_forward_np(m)
    return {
        "layer_norm_forward": ((m, gain, bias, 1e-5),),
        "layer_norm_backward": ((m, xhat, inv_std, gain),),
        "softmax_forward": ((m,),),
        "softmax_backward": ((m, sm),),
        "integrate": ((x, v, a, active, 0.1, 15.0),),
        "collision_pairs": ((x, np.full(n_vehicles, 5.0), lane, active, 190.0, 210.0),),
        "neighbors": ((x, lane, active, 200.0),),
        "idm": ((v, np.full(n_vehicles, 12.0), rng.uniform(0.5, 50, n_vehicles), rng.normal(size=n_vehicles),
                 rng.random(n_vehicles) < 0.7, 2.0, 3.0, 4.0, 2.0, 1.5, 6.0),),
    }


def _time(fn, args, repeat):
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    cases = _inputs(np.random.default_rng(args.seed))
    print(f"{'kernel':22s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, (call_args,) in cases.items():
        f_np = getattr(kernels, f"{name}_np")
        f_nb = getattr(kernels, f"{name}_nb")
        f_nb(*call_args)
        t_np = _time(f_np, call_args, args.repeat)
        t_nb = _time(f_nb, call_args, args.repeat)
        print(f"{name:22s} {t_np * 1e6:12.2f} {t_nb * 1e6:12.2f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
