"""Run the desk-scale foreground-fraction sweep and write a timed CSV.

Defaults reproduce the sweep used by acceptance criteria 4 to 6:

    python scripts/run_sweep.py --out results/acceptance_sweep.csv
    PARTAE_SWEEP_CSV=results/acceptance_sweep.csv pytest tests/test_acceptance.py
"""

import argparse
import os

import numpy as np

from partae.harness import TrainConfig, sweep_fg_fraction, write_timed_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fractions", default="0.75,1.0")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--kind", choices=("matched", "unmatched"), default="matched")
    ap.add_argument("--iters", type=int, default=20_000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/acceptance_sweep.csv")
    args = ap.parse_args()

    fractions = [float(f) for f in args.fractions.split(",")]
    rows = sweep_fg_fraction(TrainConfig(iterations=args.iters), fractions, range(args.seeds), args.kind,
                             workers=args.workers)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    write_timed_csv(args.out, rows)

    for mode, frac in [("partitioned", f) for f in fractions] + [("dae", "")]:
        cell = [r for r in rows if r["mode"] == mode and r["fraction"] == frac]
        clean = np.median([r["snr_vs_clean"] for r in cell])
        ratio = np.median([r["fg_latent_energy_ratio"] for r in cell])
        print(f"{mode:12s} {str(frac):5s} median snr_vs_clean {clean:7.2f} dB  fg ratio {ratio:.3f}")
    print(f"total {sum(r['seconds'] for r in rows) / 60:.1f} min; wrote {args.out}")


if __name__ == "__main__":
    main()
