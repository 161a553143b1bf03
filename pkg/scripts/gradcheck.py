"""Finite-difference check of the analytic gradient on a small configuration."""

import argparse
import time

import numpy as np

from partae.model import MaskVector, init_params
from partae.objective import TrainItem, finite_diff_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--lam", type=float, default=0.75)
    ap.add_argument("--fg-fraction", type=float, default=0.75)
    ap.add_argument("--step", type=float, default=1e-5)
    args = ap.parse_args()

    M, H, K, P, N = 5, 8, 8, 4, 64
    mask = MaskVector.leading(K, args.fg_fraction)
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        rng = np.random.default_rng(100 + seed)
        X = rng.uniform(0.0, 2.0, (4, H, N))
        params = init_params(seed, M=M, H=H, K=K, P=P).with_normalization(X.mean(axis=(0, 2)), X.std(axis=(0, 2)))
        batch = [TrainItem(x, y) for x, y in zip(X, (0, 0, 1, 1))]
        r = finite_diff_report(params, batch, mask, args.lam, step=args.step)
        print(f"seed {seed}: max rel error {r.max_rel_error:.2e} ({r.checked} checked, {r.skipped} at kinks)")
    print(f"{time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
