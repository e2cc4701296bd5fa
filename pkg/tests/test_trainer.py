import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from widen import graph, model, numeric as nx, sampler, synth
from widen.downsample import DownsampleConfig
from widen.model import ModelParams
from widen.numeric import Tensor
from widen.trainer import OptimizerState, TrainConfig, batch_gradients, loss, step, train


def small_config(**kw):
    base = dict(d=4, n_wide=3, n_deep=3, phi=2, batch_size=4, lr=1e-2, epochs=5)
    base.update(kw)
    return TrainConfig(**base)


def test_loss_examples():
    P = {"classifier": Tensor(np.eye(2) * 50.0)}
    assert loss(Tensor([[1.0, 0.0]]), [0], P, l2=0.0).value.item() < 1e-20
    P = {"classifier": Tensor(np.zeros((2, 3)))}
    assert math.isclose(loss(Tensor([[1.0, 0.0]]), [2], P, l2=0.0).value.item(), math.log(3), rel_tol=1e-12)
    # regulariser alone: 0.01 * (1 + 4)
    P = {"classifier": Tensor(np.zeros((2, 2))), "w": Tensor([[1.0, 2.0]])}
    total = loss(Tensor([[0.0, 0.0]]), [0], P, l2=0.01).value.item()
    assert math.isclose(total - math.log(2), 0.05, rel_tol=1e-12)


def test_loss_rejects_unlabeled():
    with pytest.raises(nx.ContractError):
        loss(Tensor([[1.0, 0.0]]), [-1], {"classifier": Tensor(np.eye(2))}, l2=0.0)


def test_sgd_step_example():
    params = ModelParams({"w": np.array([[1.0]])})
    step(params, {"w": np.array([[2.0]])}, small_config(optimizer="sgd", lr=0.1), OptimizerState())
    assert math.isclose(params.tensors["w"].item(), 0.8)


def test_adam_first_step_moves_by_learning_rate():
    params = ModelParams({"w": np.array([[1.0, -1.0]])})
    step(params, {"w": np.array([[3.0, -0.01]])}, small_config(lr=0.01), OptimizerState())
    assert np.allclose(params.tensors["w"], [[0.99, -0.99]], atol=1e-6)


def test_step_rejects_non_finite_gradient():
    params = ModelParams({"w": np.array([[1.0]])})
    with pytest.raises(FloatingPointError, match="w"):
        step(params, {"w": np.array([[np.nan]])}, small_config(), OptimizerState())


def test_threaded_gradients_match_single_thread(ten_node_graph, ten_node_cache):
    g = ten_node_graph
    params = model.init_params(g, 4, seed=0)
    targets = [0, 1, 2, 3, 4, 5]
    one = batch_gradients(targets, g, ten_node_cache, params, small_config(threads=1))
    with ThreadPoolExecutor(3) as pool:
        three = batch_gradients(targets, g, ten_node_cache, params, small_config(threads=3), pool)
    assert abs(one[0] - three[0]) < 1e-12
    for k in one[1]:
        assert np.allclose(one[1][k], three[1][k], atol=1e-12)


def _block(tmp_path, **kw):
    n, e = tmp_path / "b_nodes.tsv", tmp_path / "b_edges.tsv"
    synth.block_graph(n, e, **kw)
    return graph.ingest(n, e)


def test_loss_decreases_over_first_epochs(tmp_path):
    g = _block(tmp_path, n_nodes=120, seed=1)
    tags = graph.split(g, seed=0)
    cache = sampler.sample_all(g, 5, 5, 2, seed=0)
    _, report = train(g, cache, small_config(d=8, lr=1e-2, epochs=5, batch_size=16), tags)
    losses = [r.loss for r in report.epochs]
    assert losses[-1] < losses[0]


def test_training_is_deterministic(tmp_path):
    g = _block(tmp_path, n_nodes=80, seed=2)
    tags = graph.split(g, seed=0)
    runs = []
    for _ in range(2):
        cache = sampler.sample_all(g, 4, 4, 2, seed=0)
        params, report = train(g, cache, small_config(epochs=3), tags)
        runs.append((params, [r.loss for r in report.epochs], cache.fingerprint()))
    assert runs[0][1] == runs[1][1]
    assert runs[0][2] == runs[1][2]
    for k in model.PARAM_NAMES:
        assert np.array_equal(runs[0][0].tensors[k], runs[1][0].tensors[k])


def test_single_epoch_never_downsamples(ten_node_graph, ten_node_cache):
    tags = graph.split(ten_node_graph, 0.8, 0.2, 0.0, seed=0)
    before = ten_node_cache.fingerprint()
    cfg = small_config(epochs=1, downsample=DownsampleConfig(math.inf, math.inf, 1, 1))
    _, report = train(ten_node_graph, ten_node_cache, cfg, tags)
    assert report.epochs[0].wide_prunes == report.epochs[0].deep_prunes == 0
    assert ten_node_cache.fingerprint() == before


def test_downsampling_off_keeps_sets(ten_node_graph, ten_node_cache):
    tags = graph.split(ten_node_graph, 0.8, 0.2, 0.0, seed=0)
    before = ten_node_cache.fingerprint()
    cfg = small_config(epochs=4, downsample=DownsampleConfig(math.inf, math.inf, 1, 1, mode="off"))
    _, report = train(ten_node_graph, ten_node_cache, cfg, tags)
    assert ten_node_cache.fingerprint() == before
    assert len({(r.wide_members, r.deep_members) for r in report.epochs}) == 1


def test_aggressive_downsampling_reaches_lower_bound(ten_node_graph):
    g = ten_node_graph
    tags = graph.split(g, 1.0, 0.0, 0.0, seed=0)
    train_nodes = [i for i, t in enumerate(tags) if t == graph.TRAIN]
    cache = sampler.sample_all(g, 3, 3, 2, seed=1)
    cfg = small_config(epochs=12, downsample=DownsampleConfig(math.inf, math.inf, 1, 1))
    train(g, cache, cfg, tags)
    for t in train_nodes:
        assert len(cache.wide[t]) == min(1, len(cache.wide[t]))
        assert all(len(w) == 1 for w in cache.deep[t])
    # nodes outside the training batches are untouched
    fresh = sampler.sample_all(g, 3, 3, 2, seed=1)
    for t in set(range(g.num_nodes)) - set(train_nodes):
        assert cache.wide[t].nodes == fresh.wide[t].nodes


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)


def test_report_tsv_timing_column(ten_node_graph, ten_node_cache):
    tags = graph.split(ten_node_graph, 0.8, 0.2, 0.0, seed=0)
    _, report = train(ten_node_graph, ten_node_cache, small_config(epochs=2), tags)
    with_time = report.to_tsv({"seed": 0}).splitlines()
    without = report.to_tsv({"seed": 0}, timing=False).splitlines()
    assert with_time[0] == "# seed = 0"
    assert "seconds" in with_time[1] and "seconds" not in without[1]
    assert len(with_time) == len(without) == 4
