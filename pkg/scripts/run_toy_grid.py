#!/usr/bin/env python3
"""Generate a toy language suite and run the full experiment grid on it.

Example:
    python3 scripts/run_toy_grid.py --out-dir runs/toy --scale 0.05 --seed 7
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import torch

from lowmt.experiments import ExperimentSpec, ModelParams, run
from lowmt.toy import generate_toy_suite, scaled_spec
from lowmt.trainer import TrainConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.add_argument("--scale", type=float, default=0.05,
                        help="fraction of the default suite sizes")
    parser.add_argument("--seed", type=int, default=7,
                        help="seed for the toy world")
    parser.add_argument("--exp-seed", type=int, default=1,
                        help="seed for model init / batching / shares")
    parser.add_argument("--d-model", type=int, default=64)
    parser.add_argument("--max-updates", type=int, default=6000)
    parser.add_argument("--no-resume", dest="resume", action="store_false")
    args = parser.parse_args()

    torch.set_num_threads(1)
    data_dir = args.out_dir / "data"
    if not (data_dir / "manifest.json").exists():
        generate_toy_suite(scaled_spec(args.scale), seed=args.seed,
                           out_dir=data_dir)
    spec = ExperimentSpec(
        name=f"toy-grid-{args.scale}",
        manifest_path=str(data_dir / "manifest.json"),
        model=ModelParams(d_model=args.d_model, d_ff=4 * args.d_model),
        train=TrainConfig(batch_words=500, checkpoint_interval=100,
                          patience=7, peak_lr=2e-3, warmup_steps=200,
                          max_updates=args.max_updates),
        seed=args.exp_seed,
    )
    start = time.monotonic()
    report = run(spec, args.out_dir / "grid", resume=args.resume)
    print(f"\ngrid finished in {time.monotonic() - start:.1f}s")
    print((args.out_dir / "grid" / "report.bleu.tsv").read_text(), end="")
    for row in report.rows:
        if row.bleu_low is not None:
            print(f"{row.label}: BLEU_low={row.bleu_low}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
