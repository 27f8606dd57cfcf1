"""Command-line entry point: ``elvis {generate,train,rerank,eval,bench,inspect}``.

Exit codes: 0 success, 2 usage, 3 data or format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ConfigError, RunConfig, parse_file
from .descriptors import DatasetFormatError, DescriptorDataset, select_top_m, write_dataset
from .learning.checkpoint import CheckpointFormatError, load_model, save_model
from .learning.train import TrainConfig, train
from .model import Ablation, ModelParams
from .retrieval import (
    RankingFormatError,
    mean_average_precision,
    parse_metric,
    read_ground_truth,
    read_rankings,
    rerank,
    write_ground_truth,
    write_metric_report,
    write_rankings,
)
from .scoring import ChamferOTScorer, ChamferScorer, ElvisScorer, pair_similarity
from .synthetic import SyntheticSpec, generate_synthetic
from .transport import NumericError

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("elvis")


class UsageError(Exception):
    pass


# --- helpers -----------------------------------------------------------


def _config(args, **forced) -> RunConfig:
    values = parse_file(args.config) if args.config else {}
    for key in RunConfig.keys():
        val = getattr(args, key, None)
        if val is not None:
            values[key] = val
    values.update(forced)
    return RunConfig.from_mapping(values)


def _require(cfg: RunConfig, *keys):
    missing = [k for k in keys if not getattr(cfg, k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _labels_from_ground_truth(gt: dict[str, set[str]]) -> dict[str, int]:
    """Instance labels as connected components of the query -> positive relation."""
    parent: dict[str, str] = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for q, pos in gt.items():
        for p in pos:
            ra, rb = find(q), find(p)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        find(q)
    roots = {}
    return {i: roots.setdefault(find(i), len(roots)) for i in sorted(parent)}


def _echo_config(cfg: RunConfig, target: Path):
    cfg.write(target)


# --- subcommands ---------------------------------------------------------


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        instance_count=args.instances,
        images_per_instance=args.images_per_instance,
        descriptor_dim=args.descriptor_dim,
        descriptors_per_image=args.descriptors_per_image,
        shared_fraction=args.shared_fraction,
        noise_sigma=args.noise_sigma,
        distractor_descriptor_count=args.distractors,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_synthetic(spec)
    write_dataset(data.sets, out / "descriptors.elvd")
    for part in ("train", "test"):
        lists = data.rankings_for(part)
        write_rankings(out / f"rankings_{part}.jsonl", lists)
        write_ground_truth(out / f"gt_{part}.jsonl", {l.query_id: data.ground_truth[l.query_id] for l in lists})
    (out / "synthetic_spec.json").write_text(json.dumps(asdict(spec), indent=1) + "\n")
    print(f"wrote {len(data.sets)} images to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    _require(cfg, "descriptors", "ground_truth", "rankings", "out")
    ds = DescriptorDataset.open(cfg.descriptors)
    gt = read_ground_truth(cfg.ground_truth)
    labels = _labels_from_ground_truth(gt)
    missing = [i for i in labels if i not in ds]
    if missing:
        raise KeyError(f"{len(missing)} labelled images missing from {cfg.descriptors}, e.g. {missing[0]!r}")
    images = {i: ds.read(i) for i in labels}
    rankings = {l.query_id: l.ids for l in read_rankings(cfg.rankings)}
    tcfg = TrainConfig(
        dim=cfg.dim, lam=cfg.lam, iterations=cfg.iterations, batch_size=cfg.batch_size,
        m_range=(cfg.m_min, cfg.m_max), lr=cfg.lr, epochs=cfg.epochs,
        warmup_fraction=cfg.warmup_fraction, weight_decay=cfg.weight_decay, tau=cfg.tau,
        hard_pool=cfg.hard_pool, ln_eps=cfg.ln_eps, seed=cfg.seed,
        ablation=Ablation.from_name(cfg.ablation),
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out / "config.txt")
    result = train(images, labels, rankings, tcfg, out_dir=out)
    print(f"trained {len(result.losses)} steps; final epoch loss {result.epoch_losses[-1]:.6f}; model at {out / 'model.elvc'}")
    return 0


def _scorer(cfg: RunConfig, images):
    if cfg.method == "chamfer":
        return ChamferScorer(images, m=cfg.m)
    if cfg.method == "chamfer-ot":
        return ChamferOTScorer(cfg.ot, images, m=cfg.m)
    _require(cfg, "checkpoint")
    model = load_model(cfg.checkpoint, ln_eps=cfg.ln_eps)
    return ElvisScorer(model, cfg.ot, images, m=cfg.m)


def cmd_rerank(args) -> int:
    cfg = _config(args)
    _require(cfg, "rankings", "out")
    lists = read_rankings(cfg.rankings)
    if cfg.method != "none":
        _require(cfg, "descriptors")
        scorer = _scorer(cfg, DescriptorDataset.open(cfg.descriptors))
        lists = [rerank(l, cfg.k, scorer) for l in lists]
    write_rankings(cfg.out, lists)
    _echo_config(cfg, Path(cfg.out + ".config"))
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    _require(cfg, "rankings", "ground_truth")
    k = parse_metric(cfg.metric)
    lists = read_rankings(cfg.rankings)
    gt = read_ground_truth(cfg.ground_truth)
    value = mean_average_precision(lists, gt, k)
    metric = "map" if k is None else f"map@{k}"
    row = (args.dataset or Path(cfg.ground_truth).stem, args.label or Path(cfg.rankings).stem, metric, value)
    if cfg.out:
        write_metric_report(cfg.out, [row])
    print("dataset,method,metric,value")
    print(f"{row[0]},{row[1]},{row[2]},{value:.6f}")
    return 0


def cmd_bench(args) -> int:
    from .bench import run_benchmark

    cfg = _config(args)
    if cfg.checkpoint:
        model = load_model(cfg.checkpoint, ln_eps=cfg.ln_eps)
    elif args.random_model:
        model = ModelParams.init(args.in_dim, cfg.dim, np.random.default_rng(cfg.seed))
    else:
        raise UsageError("bench needs --checkpoint or --random-model")
    report = run_benchmark(
        model, cfg.ot, m=cfg.m, batch_size=args.pairs_per_batch, batches=args.batches,
        warmup=args.warmup, seed=cfg.seed,
    )
    text = json.dumps(report, indent=1)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_inspect(args) -> int:
    cfg = _config(args)
    _require(cfg, "descriptors", "checkpoint")
    ds = DescriptorDataset.open(cfg.descriptors)
    model = load_model(cfg.checkpoint, ln_eps=cfg.ln_eps)
    q = model.project(select_top_m(ds.read(args.query), cfg.m))
    x = model.project(select_top_m(ds.read(args.candidate), cfg.m))
    res = pair_similarity(q, x, model, cfg.ot, breakdown=True)
    records = inspect_records(res, args.top)
    header = {
        "type": "pair",
        "query": args.query,
        "candidate": args.candidate,
        "score": res.score,
        "query_gains": None if res.query_gains is None else res.query_gains.tolist(),
        "candidate_gains": None if res.candidate_gains is None else res.candidate_gains.tolist(),
    }
    lines = [json.dumps(header)] + [json.dumps(r) for r in records]
    text = "\n".join(lines) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def inspect_records(res, top: int = 25) -> list[dict]:
    """The ``top`` strongest votes (by f-transformed strength) of a scored pair."""
    v = res.votes
    cands = []
    for i, j in enumerate(v.row_argmax):
        cands.append(("query", i, int(j), float(res.row_strengths[i])))
    for j, i in enumerate(v.col_argmax):
        cands.append(("candidate", int(i), j, float(res.col_strengths[j])))
    order = sorted(range(len(cands)), key=lambda t: (-cands[t][3], t))[:top]
    out = []
    for rank, t in enumerate(order, start=1):
        side, i, j, strength = cands[t]
        out.append({
            "type": "vote",
            "rank": rank,
            "side": side,
            "query_index": i,
            "candidate_index": j,
            "raw_similarity": float(res.similarity[i, j]),
            "refined_similarity": float(res.refined[i, j]),
            "strength": strength,
        })
    return out


# --- argument parsing ------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, keys):
    p.add_argument("--config", help="key = value file; explicit flags override it")
    for key in keys:
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elvis", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = ["seed", "threads", "out"]
    model_keys = ["dim", "lam", "iterations", "ln_eps", "m", "log_domain", "checkpoint"]

    p = sub.add_parser("generate", help="write a synthetic toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    spec = SyntheticSpec()
    p.add_argument("--instances", type=int, default=spec.instance_count)
    p.add_argument("--images-per-instance", type=int, default=spec.images_per_instance)
    p.add_argument("--descriptor-dim", type=int, default=spec.descriptor_dim)
    p.add_argument("--descriptors-per-image", type=int, default=spec.descriptors_per_image)
    p.add_argument("--shared-fraction", type=float, default=spec.shared_fraction)
    p.add_argument("--noise-sigma", type=float, default=spec.noise_sigma)
    p.add_argument("--distractors", type=int, default=spec.distractor_descriptor_count)
    p.set_defaults(func=cmd_generate, config=None)

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p, common + model_keys[:-1] + [
        "descriptors", "ground_truth", "rankings", "batch_size", "m_min", "m_max", "lr", "epochs",
        "warmup_fraction", "weight_decay", "tau", "hard_pool", "ablation",
    ])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="re-rank shortlists")
    _add_config_flags(p, common + model_keys + ["descriptors", "rankings", "method", "k"])
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="compute mAP / mAP@K")
    _add_config_flags(p, common + ["rankings", "ground_truth", "metric"])
    p.add_argument("--dataset", help="dataset name for the report")
    p.add_argument("--label", help="method name for the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="per-pair similarity latency")
    _add_config_flags(p, common + model_keys)
    p.add_argument("--random-model", action="store_true", help="benchmark a randomly initialized model")
    p.add_argument("--in-dim", type=int, default=768, help="raw descriptor dim for --random-model")
    p.add_argument("--pairs-per-batch", type=int, default=500)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--warmup", type=int, default=2)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="strongest votes and dustbin gains of one pair")
    _add_config_flags(p, common + model_keys + ["descriptors"])
    p.add_argument("--query", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--top", type=int, default=25)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = getattr(args, "threads", None)
    try:
        threads = int(threads) if threads is not None else 1
        with threadpool_limits(limits=threads):
            return args.func(args)
    # format errors subclass ValueError, so they are matched first
    except (DatasetFormatError, RankingFormatError, CheckpointFormatError, KeyError, FileNotFoundError) as e:
        print(f"elvis: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, UsageError, ValueError) as e:
        print(f"elvis: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as e:
        print(f"elvis: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
