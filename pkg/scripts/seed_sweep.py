"""Robustness of the synthetic end-to-end result across data/training seeds.

    python3 scripts/seed_sweep.py --seeds 0-11 [--geo | --no-geo]
"""

import argparse

import numpy as np

from spatialrank import dataset, evaluation, mlp, synthgen


def seed_range(text):
    lo, _, hi = text.partition("-")
    return range(int(lo), int(hi or lo) + 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=seed_range, default=seed_range("0-11"))
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--geo", action=argparse.BooleanOptionalAction, default=True)
    ap.add_argument("--init-gain", type=float, default=mlp.TrainConfig.init_gain)
    args = ap.parse_args()

    top1s, top3s = [], []
    for seed in args.seeds:
        split = dataset.stratified_split(synthgen.generate(synthgen.SynthConfig(n=args.n, seed=seed)), 0.8, seed)
        config = mlp.TrainConfig(seed=seed, use_geo=args.geo, init_gain=args.init_gain)
        model, history = mlp.train(split.train, config)
        rep = evaluation.evaluate(model, split.test, None, args.geo)
        top1s.append(rep.top1)
        top3s.append(rep.top3)
        print(f"seed {seed:3d}  epoch-1 loss {history[0]:.4f}  top-1 {rep.top1:.4f}  top-3 {rep.top3:.4f}")
    print(f"top-1 mean {np.mean(top1s):.4f} min {np.min(top1s):.4f}; top-3 mean {np.mean(top3s):.4f} min {np.min(top3s):.4f}")


if __name__ == "__main__":
    main()
