"""Write a toy parallel corpus (copy or token-mapping task) plus its vocabulary.

    python3 scripts/make_toy_corpus.py --task mapping --pairs 5000 --valid 500 --out data/mapping
"""

import argparse
from pathlib import Path

from admix_nmt.corpus import build_vocab
from admix_nmt.toydata import copy_task, mapping_task, write_splits


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", choices=("copy", "mapping"), default="mapping")
    ap.add_argument("--pairs", type=int, default=5000)
    ap.add_argument("--valid", type=int, default=500)
    ap.add_argument("--test", type=int, default=0)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    if args.task == "copy":
        pairs = copy_task(args.pairs, seed=args.seed)
    else:
        pairs = mapping_task(args.pairs, seed=args.seed)
    paths = write_splits(args.out, pairs, args.valid, args.test)
    vocab = build_vocab([paths["train"] + ".src", paths["train"] + ".tgt"])
    vocab.save(Path(args.out) / "vocab.txt")
    print(f"{args.task}: {len(pairs)} pairs, vocab {len(vocab)} -> {args.out}")


if __name__ == "__main__":
    main()
