import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from elvis.bench import run_benchmark
from elvis.model import Ablation, ModelParams
from elvis.transport import OtConfig


@pytest.mark.parametrize("ablation", ["none", "no-dustbin", "no-f"])
def test_report_schema(ablation):
    model = ModelParams.init(32, 16, np.random.default_rng(0), Ablation.from_name(ablation))
    r = run_benchmark(model, OtConfig(0.1, 10, log_domain=False), m=40, batch_size=10, batches=3, warmup=1)
    assert r["pairs"] == 30 and r["batch_size"] == 10 and r["m"] == 40 and r["dim"] == 16
    assert r["mean_us_per_pair"] > 0 and r["median_us_per_pair"] > 0
    assert r["parameters_inference"] <= r["parameters_total"]


def test_log_domain_path_runs():
    model = ModelParams.init(32, 16, np.random.default_rng(0))
    r = run_benchmark(model, OtConfig(0.1, 10, log_domain=True), m=30, batch_size=8, batches=2, warmup=0)
    assert r["log_domain"] is True


@pytest.mark.slow
def test_repeat_runs_stable():
    model = ModelParams.init(768, 128, np.random.default_rng(0))
    cfg = OtConfig(0.1, 10, log_domain=False)
    with threadpool_limits(1):
        a = run_benchmark(model, cfg, m=300, batch_size=200, batches=10)["median_us_per_pair"]
        b = run_benchmark(model, cfg, m=300, batch_size=200, batches=10)["median_us_per_pair"]
    assert abs(a - b) / min(a, b) < 0.2
