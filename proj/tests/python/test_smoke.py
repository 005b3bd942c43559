import json
import math

import numpy as np
import pytest

import mfdal


def tiny_config():
    cfg = mfdal.SurrogateConfig()
    cfg.latent_dim = 4
    cfg.hidden_width = 16
    cfg.epochs = 30
    return cfg


def test_gaussian_calculus():
    rng = np.random.default_rng(0)
    p = mfdal.DiagGaussian(rng.normal(size=5), rng.uniform(0.1, 2.0, size=5))
    q = mfdal.DiagGaussian(rng.normal(size=5), rng.uniform(0.1, 2.0, size=5))
    assert mfdal.kl(p, p) == 0.0
    assert mfdal.kl(p, q) > 0.0
    assert mfdal.symmetrized_divergence(p, q) == mfdal.symmetrized_divergence(q, p)
    # Closed form against a direct numpy evaluation.
    expected = 0.5 * np.sum(
        np.log(q.var / p.var) + (p.var + (p.mean - q.mean) ** 2) / q.var - 1.0
    )
    assert mfdal.kl(p, q) == pytest.approx(expected, rel=1e-12)

    prior = mfdal.DiagGaussian.standard(5)
    fused = mfdal.fuse(prior, [p, q])
    prec = 1.0 + 1.0 / p.var + 1.0 / q.var
    assert np.allclose(fused.var, 1.0 / prec, rtol=1e-12)
    assert np.allclose(fused.mean, (p.mean / p.var + q.mean / q.var) / prec, rtol=1e-12)


def test_simulator_and_dataset(tmp_path):
    task = mfdal.TaskSpec.heat(2)
    assert task.num_levels == 2
    assert task.costs[0] == 1.0
    x = 0.5 * (np.asarray(task.lower) + np.asarray(task.upper))
    y = mfdal.simulate(task, x, 1)
    assert y.shape == (task.output_dim(1),)
    assert np.all(np.isfinite(y))
    with pytest.raises(mfdal.DomainError):
        mfdal.simulate(task, x, 5)

    data = mfdal.generate_dataset(task, [6, 3], 2, 7)
    data.validate()
    assert [len(l) for l in data.levels] == [6, 3]
    mfdal.write_dataset(tmp_path / "d", data)
    back = mfdal.read_dataset(tmp_path / "d")
    for a, b in zip(data.levels, back.levels):
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.outputs, b.outputs)


def test_train_predict_and_checkpoint(tmp_path):
    task = mfdal.TaskSpec.heat(2)
    data = mfdal.passive_dataset(task, "full", [8, 8], 2, 0)
    model = mfdal.SurrogateModel.for_task(task, tiny_config())
    losses = mfdal.train(model, data)
    assert len(losses) == 30 and all(math.isfinite(v) for v in losses)
    assert model.trained

    xs = np.vstack([l for l in data.levels[1].inputs[:3]])
    pred = mfdal.predict(model, data, 1, xs)
    assert pred.mean.shape == (3, task.output_dim(1))
    assert np.all(pred.var > 0)

    mfdal.save_checkpoint(model, tmp_path / "ck")
    again = mfdal.load_checkpoint(tmp_path / "ck")
    assert np.array_equal(mfdal.predict(again, data, 1, xs).mean, pred.mean)

    posts = mfdal.latent_posteriors(model, data)
    assert len(posts) == 2 and posts[0].dim == 4

    err = mfdal.nrmse(pred.mean, data.levels[1].outputs[:3])
    assert math.isfinite(err) and err > 0


def test_greedy_batch_invariants():
    task = mfdal.TaskSpec.heat(2)
    data = mfdal.generate_dataset(task, [4, 4], 4, 1)
    model = mfdal.SurrogateModel.for_task(task, tiny_config())
    mfdal.train(model, data, 10)
    rng = np.random.default_rng(3)
    lo, hi = np.asarray(task.lower), np.asarray(task.upper)
    pool = [
        mfdal.QueryCandidate(lo + rng.uniform(size=lo.size) * (hi - lo), k, task.costs[k])
        for k in (0, 1)
        for _ in range(4)
    ]
    batch = mfdal.greedy_batch(model, data, pool, 5.0, "mf_lig", 0, 2)
    idx = [e["pool_index"] for e in batch]
    assert len(set(idx)) == len(idx)
    assert sum(e["cost"] for e in batch) <= 5.0 + max(task.costs)
    assert len(mfdal.greedy_batch(model, data, pool, 0.0, "random")) == 1
    assert mfdal.mf_lig_score(model, data, pool[0], 2) >= 0.0


def test_experiment_config_and_runs(tmp_path):
    cfg = mfdal.default_config()
    assert cfg["model"]["epochs"] == 2000
    cfg.update(
        output_dir=str(tmp_path / "out"),
        mode="active",
        seeds=[0],
        model=dict(cfg["model"], latent_dim=4, hidden_width=16, epochs=10),
    )
    cfg["active"].update(
        iterations=1, pool_size=3, retrain_epochs=3, n_reference=2, test_size=8,
        n_y_samples=2, acquisitions=["random"],
    )
    summary = mfdal.run_experiment(cfg)
    assert summary["status"] == "ok"
    metrics = tmp_path / "out" / "dmfdal-random" / "seed_0" / "metrics.csv"
    assert len(metrics.read_text().splitlines()) == 3
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["status"] == "ok"

    records = mfdal.run_active("heat", 2, cfg, 0)
    assert [r["iteration"] for r in records] == [0, 1]

    mfdal.plot_curves([("random", metrics)], tmp_path / "c.svg")
    assert (tmp_path / "c.svg").read_text().startswith("<svg")

    with pytest.raises(mfdal.ParseError):
        mfdal.run_experiment({"not_a_key": 1})
