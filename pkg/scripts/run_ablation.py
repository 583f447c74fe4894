"""Ablation grid on synthetic data: geometry features x augmentation x re-ranking.

    python3 scripts/run_ablation.py --n 100 --seed 7 --name-skew 0.5 --out ablation.json
"""

import argparse
import json
import time

from spatialrank import dataset, evaluation, mlp, ranking, synthgen


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100, help="instances per class")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--name-skew", type=float, default=0.5)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--out", default=None, help="optional JSON with every report")
    args = ap.parse_args()

    data = synthgen.generate(synthgen.SynthConfig(n=args.n, seed=args.seed, name_skew=args.name_skew))
    split = dataset.stratified_split(data, 0.8, args.seed)
    priors = ranking.build_priors(split.train, args.alpha)

    reports = []
    for geo in (False, True):
        for aug in (False, True):
            train = dataset.augment(split.train) if aug else split.train
            t0 = time.perf_counter()
            model, _ = mlp.train(train, mlp.TrainConfig(epochs=args.epochs, seed=args.seed, use_geo=geo))
            for rerank in (False, True):
                reports.append(evaluation.evaluate(model, split.test, priors if rerank else None, geo, aug))
            print(f"trained geo={geo} aug={aug} in {time.perf_counter() - t0:.1f}s")

    print()
    print(evaluation.format_table(reports), end="")
    if args.out:
        dataset.write_json(args.out, {"args": vars(args), "reports": [r.to_dict() for r in reports]})


if __name__ == "__main__":
    main()
