"""Time the numba kernels against their numpy counterparts.

Both implementations are importable in one process regardless of
SEMIADAPT_BACKEND, so a single run compares them directly. The identifier
gradient step is timed as well for reference.

    python benchmarks/bench_kernels.py --hidden 40 --outputs 9 --repeat 2000
"""
import argparse
import json
import time

import numpy as np

from semiadapt import kernels
from semiadapt._jit import HAVE_NUMBA
from semiadapt.baseline import IdentifierConfig, identifier_update
from semiadapt.mlp import MlpConfig, init_mlp


def _time(fn, repeat):
    fn(0)  # compile / warm up
    best = np.inf
    times = []
    for block in range(5):
        t0 = time.perf_counter()
        for i in range(repeat):
            fn(i)
        dt = (time.perf_counter() - t0) / repeat
        times.append(dt)
        best = min(best, dt)
    return best, float(np.median(times))


def make_case(D, h, seed=0):
    rng = np.random.default_rng(seed)
    phis = np.concatenate([rng.uniform(-1, 1, (256, h - 1)), np.ones((256, 1))], axis=1)
    ys = rng.normal(size=(256, D))
    return rng, phis, ys


def bench(D=9, h=41, repeat=2000, seed=0):
    rng, phis, ys = make_case(D, h, seed)
    rows = []

    for name, impl in (("numba", kernels.rls_update_numba), ("numpy", kernels.rls_update_numpy)):
        if name == "numba" and not HAVE_NUMBA:
            continue
        theta = rng.normal(size=(D, h))
        gain = np.broadcast_to(1000.0 * np.eye(h), (D, h, h)).copy()
        err = np.empty(D)

        def step(i, theta=theta, gain=gain, err=err, impl=impl):
            j = i % 256
            impl(theta, gain, phis[j], ys[j], 0.998, 1.0, err)
            if j == 255:  # keep the gain from winding up over long runs
                gain[:] = 1000.0 * np.eye(h)

        rows.append(("rls_update", name) + _time(step, repeat))

    X0 = np.stack([np.eye(h) * 1e-3] * D)
    for name, impl in (("numba", kernels.param_msee_numba), ("numpy", kernels.param_msee_numpy)):
        if name == "numba" and not HAVE_NUMBA:
            continue
        xtt = X0.copy()
        eth = np.zeros((D, h))
        gain = np.stack([np.eye(h) * 0.05] * D)
        xd = np.full(D, 0.01)
        dth = np.zeros((D, h))

        def step(i, xtt=xtt, eth=eth, impl=impl):
            impl(xtt, eth, gain, phis[i % 256], xd, dth, 1e-10)

        rows.append(("param_msee", name) + _time(step, repeat))

    for name, impl in (("numba", kernels.quad_forms_numba), ("numpy", kernels.quad_forms_numpy)):
        if name == "numba" and not HAVE_NUMBA:
            continue
        out = np.empty(D)
        rows.append(("quad_forms", name)
                    + _time(lambda i, impl=impl: impl(X0, phis[i % 256], out), repeat))

    model = init_mlp(MlpConfig(input_dim=9, hidden_dims=(h - 1,), output_dim=D, seed=seed))
    xs = rng.normal(size=(256, 9))
    cfg = IdentifierConfig(1e-6, 1)
    rows.append(("identifier_update", "numpy")
                + _time(lambda i: identifier_update(model, xs[i % 256], ys[i % 256], cfg), repeat))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outputs", type=int, default=9, help="number of output blocks D")
    ap.add_argument("--hidden", type=int, default=40, help="hidden width (features = hidden+1)")
    ap.add_argument("--repeat", type=int, default=2000, help="calls per timing block")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args(argv)
    rows = bench(args.outputs, args.hidden + 1, args.repeat, args.seed)
    if args.json:
        print(json.dumps([dict(zip(("kernel", "backend", "best_s", "median_s"), r))
                          for r in rows], indent=1))
        return
    print(f"{'kernel':<18} {'backend':<7} {'best us':>10} {'median us':>10}")
    for kernel, backend, best, med in rows:
        print(f"{kernel:<18} {backend:<7} {best * 1e6:10.2f} {med * 1e6:10.2f}")


if __name__ == "__main__":
    main()
