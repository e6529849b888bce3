"""Baseline transformer on the copy task; reports the first step reaching the BLEU target."""

import argparse

from admix_nmt.experiments import copy_task_run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target", type=float, default=95.0)
    ap.add_argument("--max-steps", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    run = copy_task_run(args.target, args.max_steps, seed=args.seed)
    for line in run.result.log_lines:
        print(line)
    print(f"best={run.result.best_bleu:.2f} first_at_target={run.first_step_at_target} seconds={run.seconds:.0f}")


if __name__ == "__main__":
    main()
