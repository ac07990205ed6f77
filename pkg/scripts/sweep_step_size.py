#!/usr/bin/env python3
"""Step-size ablation: one run per epsilon, merged into sweep.csv.

The default grid spans the regime from barely-moving chains to chains that
overshoot: small steps give low-diversity batches, large ones push samples
to high OOD-ness fast.
"""

import argparse

from oodsynth.bench import BenchConfig, ablation_sweep


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/sweep_eps")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--values", default="0.01,0.05,0.1,0.3,0.5", help="comma-separated step sizes"
    )
    args = parser.parse_args()

    cfg = BenchConfig(seed=args.seed, iterations=5)
    values = [float(v) for v in args.values.split(",")]
    rows = ablation_sweep(cfg, "eps", values, out_dir=args.out_dir)
    for r in rows:
        print(
            f"eps={r.value}: fpr95={r.fpr95:.4f} auroc={r.auroc:.4f} "
            f"batch={r.batch_size} mh={r.mh_acceptance:.3f} synth={r.synth_time_ms:.1f}ms"
        )


if __name__ == "__main__":
    main()
