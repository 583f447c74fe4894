"""Command-line entry point: ``spatialrank <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import dataset, evaluation, mlp, ranking, synthgen
from .core import feature_dim

GRADCHECK_TOL = 1e-4
KINK_MARGIN = 1e-3


def _echo(args: argparse.Namespace, default_path: str, extra: dict | None = None) -> None:
    settings = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        settings.update(extra)
    dataset.write_json(args.config_echo or default_path, settings)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _load_model(path: str) -> tuple[mlp.MlpModel, bytes]:
    with open(path, "rb") as fh:
        data = fh.read()
    return mlp.load_checkpoint(data), data


def _resolve_geo(model: mlp.MlpModel, geo: bool | None) -> bool:
    if geo is None:
        return model.in_dim == feature_dim(True)
    if feature_dim(geo) != model.in_dim:
        raise mlp.DimensionError(
            f"checkpoint expects in_dim={model.in_dim} but --{'geo' if geo else 'no-geo'} gives {feature_dim(geo)}"
        )
    return geo


def _load_priors(path: str | None) -> ranking.PriorTable | None:
    if path is None:
        return None
    return ranking.PriorTable.from_json(_read_text(path))


def cmd_prep(args) -> int:
    with open(args.input) as fh:
        records = dataset.parse_records(fh)
    instances, summary = dataset.prepare(records, min_confidence=args.min_confidence)
    split = dataset.stratified_split(instances, args.ratio, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    dataset.write_instances(os.path.join(args.out_dir, "train.jsonl"), split.train)
    dataset.write_instances(os.path.join(args.out_dir, "test.jsonl"), split.test)
    doc = summary.to_dict()
    doc.update(train=len(split.train), test=len(split.test), seed=args.seed, ratio=args.ratio)
    dataset.write_json(os.path.join(args.out_dir, "summary.json"), doc)
    _echo(args, os.path.join(args.out_dir, "config.json"))
    print(f"kept {summary.kept} of {summary.total} records; train {len(split.train)}, test {len(split.test)}")
    return 0


def cmd_augment(args) -> int:
    train = dataset.read_instances(args.train)
    out = dataset.augment(train, outside_symmetric=not args.outside_asymmetric)
    dataset.write_instances(args.out, out)
    _echo(args, args.out + ".config.json")
    print(f"augmented {len(train)} -> {len(out)} instances")
    return 0


def cmd_train(args) -> int:
    config = mlp.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        use_geo=args.geo,
        shuffle=not args.no_shuffle,
        init_gain=args.init_gain,
    )
    train = dataset.read_instances(args.train)

    def log(epoch, loss):
        print(f"epoch {epoch:4d}  loss {loss:.6f}")

    model, _ = mlp.train(train, config, log=None if args.quiet else log)
    dataset.atomic_write(args.checkpoint_out, mlp.save_checkpoint(model, config).decode())
    _echo(args, args.checkpoint_out + ".config.json", {"train_config": asdict(config)})
    return 0


def cmd_priors(args) -> int:
    train = dataset.read_instances(args.train)
    table = ranking.build_priors(train, args.alpha)
    dataset.atomic_write(args.priors_out, table.to_json() + "\n")
    _echo(args, args.priors_out + ".config.json")
    print(f"{len(table.priors)} (subject, object) pairs, alpha={args.alpha}")
    return 0


def cmd_rank(args) -> int:
    model, _ = _load_model(args.checkpoint)
    geo = _resolve_geo(model, args.geo)
    obj = json.loads(_read_text(args.instance))
    obj.setdefault("label", 1)
    inst = dataset.instance_from_dict(obj)
    ranked = ranking.rank_clause(model, inst, _load_priors(args.priors), geo)
    for s in ranked:
        print(f"{s.relation.label:<10} {s.score:.6f}")
    _echo(args, args.config_echo or "rank.config.json", {"geo": geo})
    return 0


def cmd_eval(args) -> int:
    model, _ = _load_model(args.checkpoint)
    geo = _resolve_geo(model, args.geo)
    test = dataset.read_instances(args.test)
    report = evaluation.evaluate(model, test, _load_priors(args.priors), geo, aug=args.aug)
    dataset.atomic_write(args.report_out, report.to_json())
    text = report.to_text()
    dataset.atomic_write(os.path.splitext(args.report_out)[0] + ".txt", text)
    print(text, end="")
    _echo(args, args.report_out + ".config.json", {"geo": geo})
    return 0


def cmd_synth(args) -> int:
    config = synthgen.SynthConfig(
        n=args.n,
        seed=args.seed,
        near_threshold=args.near_threshold,
        far_threshold=args.far_threshold,
        directional_gap=args.directional_gap,
        containment_margin=args.containment_margin,
        name_skew=args.name_skew,
    )
    data = synthgen.generate(config)
    dataset.write_instances(args.out, data)
    _echo(args, args.out + ".config.json")
    print(f"wrote {len(data)} instances")
    return 0


def random_check_case(seed: int, batch: int = 8) -> tuple[mlp.MlpModel, np.ndarray, np.ndarray]:
    """A random model (non-trivial BatchNorm affine) and a random labelled batch
    whose hidden pre-activations all keep at least KINK_MARGIN from zero."""
    rng = np.random.default_rng(seed)
    in_dim = 11 if seed % 2 else 8
    model = mlp.init_model(in_dim, seed=int(rng.integers(2**32)))
    for i in (1, 2):
        n = model.params[f"gamma{i}"].shape[0]
        model.params[f"gamma{i}"] = rng.uniform(0.5, 1.5, n)
        model.params[f"beta{i}"] = rng.uniform(-0.5, 0.5, n)
    # redraw batches that put a hidden pre-activation near the ReLU kink, where
    # a central difference straddles the non-differentiable point
    for _ in range(100):
        x = rng.uniform(0.0, 1.0, size=(batch, in_dim))
        _, cache = mlp.forward(model, x, "train", update_stats=False)
        if min(np.abs(cache[i]["y"]).min() for i in (1, 2)) >= KINK_MARGIN:
            break
    y = rng.integers(0, 9, size=batch)
    return model, x, y


def cmd_gradcheck(args) -> int:
    worst = 0.0
    for k in range(args.pairs):
        model, x, y = random_check_case(args.seed * 1000 + k, args.batch)
        err = mlp.gradient_check(model, x, y, step=args.step)
        worst = max(worst, err)
        if args.verbose:
            print(f"pair {k:3d}  in_dim {model.in_dim:2d}  max rel err {err:.3e}")
    ok = worst < GRADCHECK_TOL
    print(f"max relative error over {args.pairs} pairs: {worst:.3e} ({'PASS' if ok else 'FAIL'}, tol {GRADCHECK_TOL:g})")
    _echo(args, args.config_echo or "gradcheck.config.json", {"max_relative_error": worst})
    return 0 if ok else 1


def cmd_binary(args) -> int:
    preds, labels = [], []
    with open(args.predictions) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                preds.append(int(obj["prediction"]))
                labels.append(int(obj["label"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise dataset.RecordError(line_no, f"bad prediction record: {exc!r}") from None
    acc, delta = evaluation.binary_accuracy(preds, labels)
    print(f"accuracy {100 * acc:.2f}  delta over chance {100 * delta:.2f}")
    if args.out:
        dataset.write_json(args.out, {"n": len(labels), "accuracy": acc, "delta_over_chance": delta})
    _echo(args, args.config_echo or (args.out + ".config.json" if args.out else "binary.config.json"))
    return 0


def cmd_coverage(args) -> int:
    lexicon = json.loads(_read_text(args.lexicon))
    cases = []
    with open(args.cases) as fh:
        for line in fh:
            if line.strip():
                cases.append(json.loads(line))
    breakdown = evaluation.detector_coverage_analysis(cases, lexicon)
    print(breakdown.to_text(), end="")
    if args.out:
        dataset.write_json(args.out, breakdown.to_dict())
    _echo(args, args.config_echo or (args.out + ".config.json" if args.out else "coverage.config.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config-echo", default=None, help="where to write the effective settings")
        return p

    def geo_flag(p, default):
        p.add_argument("--geo", dest="geo", action="store_true", default=default, help="use the 3 geometry features")
        p.add_argument("--no-geo", dest="geo", action="store_false")

    p = add("prep", cmd_prep, "parse, filter, merge and split a grounding JSONL file")
    p.add_argument("input")
    p.add_argument("out_dir")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-confidence", type=float, default=0.0)

    p = add("augment", cmd_augment, "add subject/object-swapped copies")
    p.add_argument("train")
    p.add_argument("out")
    p.add_argument("--outside-asymmetric", action="store_true", help="do not swap 'outside' instances")

    p = add("train", cmd_train, "train the relation classifier")
    p.add_argument("train")
    p.add_argument("checkpoint_out")
    geo_flag(p, False)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=12)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-gain", type=float, default=mlp.TrainConfig.init_gain)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--quiet", action="store_true", help="do not print per-epoch loss")

    p = add("priors", cmd_priors, "build smoothed co-occurrence priors")
    p.add_argument("train")
    p.add_argument("priors_out")
    p.add_argument("--alpha", type=float, default=1.0)

    p = add("rank", cmd_rank, "rank the 9 relations for one instance")
    p.add_argument("checkpoint")
    p.add_argument("instance", help="JSON file with one grounded instance, or - for stdin")
    p.add_argument("--priors", default=None)
    geo_flag(p, None)

    p = add("eval", cmd_eval, "top-1/top-3 report on a test file")
    p.add_argument("checkpoint")
    p.add_argument("test")
    p.add_argument("report_out")
    p.add_argument("--priors", default=None)
    p.add_argument("--aug", action="store_true", help="label the report as trained on augmented data")
    geo_flag(p, None)

    p = add("synth", cmd_synth, "generate the synthetic oracle dataset")
    p.add_argument("out")
    p.add_argument("--n", type=int, default=100, help="instances per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name-skew", type=float, default=0.0)
    p.add_argument("--near-threshold", type=float, default=0.25)
    p.add_argument("--far-threshold", type=float, default=0.6)
    p.add_argument("--directional-gap", type=float, default=0.05)
    p.add_argument("--containment-margin", type=float, default=0.02)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of backprop on random models")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--verbose", action="store_true")

    p = add("binary", cmd_binary, "accuracy and delta over chance of binary predictions")
    p.add_argument("predictions", help="JSONL with 'prediction' and 'label' keys")
    p.add_argument("--out", default=None)

    p = add("coverage", cmd_coverage, "detector coverage breakdown (correct x both/one/none)")
    p.add_argument("cases", help="JSONL with correct, subject, object, detected_labels")
    p.add_argument("lexicon", help="JSON map phrase -> list of synonyms")
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, synthgen.RejectionBudgetExceeded) as exc:
        print(f"spatialrank {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
