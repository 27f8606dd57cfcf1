"""Toy-scale re-ranking experiments shared by the acceptance suite and scripts/."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .learning.train import TrainConfig, train
from .model import Ablation
from .retrieval import mean_average_precision, rerank
from .scoring import ChamferOTScorer, ChamferScorer, ElvisScorer
from .synthetic import SyntheticSpec, generate_synthetic
from .transport import OtConfig


@dataclass
class ToyConfig:
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)
    # desk-scale training: small batches and a larger step size than the full setup
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        dim=32, batch_size=16, m_range=(60, 80), lr=5e-3, epochs=10))
    k: int = 400  # re-ranking depth
    metric_k: int = 100
    query_stride: int = 5  # evaluate every n-th test query
    lam: float = 0.1
    iterations: int = 10


METHODS = ("initial", "chamfer", "chamfer-ot", "elvis", "elvis-no-dustbin")


def run_toy(seed: int, cfg: ToyConfig | None = None, methods=METHODS) -> dict[str, float]:
    """mAP@K of each method on one synthetic draw; also records wall time per method."""
    cfg = cfg or ToyConfig()
    data = generate_synthetic(replace(cfg.spec, seed=seed))
    images = data.images
    labels = data.labels_for("train")
    rankings = {r.query_id: r.ids for r in data.rankings_for("train")}
    queries = data.rankings_for("test")[:: cfg.query_stride]
    ot = OtConfig(cfg.lam, cfg.iterations, log_domain=False)

    def evaluate(scorer):
        lists = queries if scorer is None else [rerank(l, cfg.k, scorer) for l in queries]
        return mean_average_precision(lists, data.ground_truth, cfg.metric_k)

    out: dict[str, float] = {}
    for method in methods:
        t0 = time.perf_counter()
        if method == "initial":
            value = evaluate(None)
        elif method == "chamfer":
            value = evaluate(ChamferScorer(images))
        elif method == "chamfer-ot":
            value = evaluate(ChamferOTScorer(ot, images))
        elif method.startswith("elvis"):
            ablation = Ablation(dustbin=False) if method == "elvis-no-dustbin" else Ablation()
            tcfg = replace(cfg.train, seed=seed, ablation=ablation, lam=cfg.lam, iterations=cfg.iterations)
            model = train(images, labels, rankings, tcfg).params
            value = evaluate(ElvisScorer(model, ot, images))
        else:
            raise ValueError(f"unknown method {method!r}")
        out[method] = value
        out[f"{method}.seconds"] = time.perf_counter() - t0
    return out


def summarize(results: list[dict[str, float]], methods=METHODS) -> dict[str, tuple[float, float]]:
    return {m: (float(np.mean([r[m] for r in results])), float(np.std([r[m] for r in results])))
            for m in methods if all(m in r for r in results)}
