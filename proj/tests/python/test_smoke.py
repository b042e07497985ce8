import json
import math

import numpy as np
import pytest

import dsrefine as dr


@pytest.fixture(scope="module")
def noisy():
    d = dr.generate_synthetic(n_subjects=3, trials_per_subject=16, n_channels=2, n_timepoints=8, seed=3)
    return dr.inject_label_noise(d, 0.2, 4)


def test_dataset_roundtrip(tmp_path, noisy):
    assert len(noisy) == 48
    assert noisy.x.shape == (48, 2, 8)
    assert sum(noisy.noise_mask) == round(0.2 * 48)
    dr.save_dataset(noisy, tmp_path / "d.eegd")
    assert dr.load_dataset(tmp_path / "d.eegd") == noisy

    rebuilt = dr.Dataset(noisy.x, noisy.labels, noisy.subject_ids, noisy.n_classes)
    assert np.array_equal(rebuilt.x, noisy.x)
    train, test = dr.split_loso(noisy, 0)
    assert len(train) + len(test) == 48


def test_errors_map_to_python_exceptions(tmp_path, noisy):
    with pytest.raises(ValueError):
        dr.inject_label_noise(noisy, 1.5, 0)
    with pytest.raises(KeyError):
        dr.split_loso(noisy, 99)
    (tmp_path / "bad.eegd").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError, match="offset 0"):
        dr.load_dataset(tmp_path / "bad.eegd")


def test_ems_example():
    out = dr.ems_standardize_channel([1.0, 2.0], alpha=0.5)
    assert out[0] == 0.0
    assert abs(out[1] - 0.8165) <= 1e-4


def test_train_score_refine(noisy):
    d = dr.ems_standardize(noisy)
    spec = dr.ModelSpec(input_dim=16, n_classes=2, weight_decay=1e-2)
    cfg = dr.TrainConfig()
    cfg.epochs, cfg.warmup_epochs, cfg.lr_peak, cfg.batch_size = 20, 2, 1e-2, 16
    rep = dr.train(spec, d, cfg)
    assert rep.theta.shape == (spec.param_count,)
    assert len(rep.loss_curve) == 20
    assert 0.0 <= dr.evaluate(spec, rep.theta, d) <= 1.0
    assert np.allclose(dr.predict_proba(spec, rep.theta, d).sum(axis=1), 1.0)

    scores = dr.influence_scores(spec, rep.theta, d, mode="self")
    assert len(scores) == 48 and min(scores) > 0
    kept, plan = dr.refine_dataset(d, scores, 0.25)
    assert len(kept) == 36 and len(plan["removed_indices"]) == 12
    assert plan["threshold"] == sorted(scores)[-12]

    mlp = dr.ModelSpec(arch=dr.Arch.MLP_DROPOUT, input_dim=16, n_classes=2, hidden_dim=6)
    theta = dr.train(mlp, d, cfg).theta
    u = dr.mc_dropout_scores(mlp, theta, d, T=20, seed=1)
    assert all(0.0 <= v <= 0.25 for v in u)
    with pytest.raises(ValueError):
        dr.mc_dropout_scores(spec, rep.theta, d)


def test_hvp_matches_finite_difference_of_grad(noisy):
    d = dr.ems_standardize(noisy)
    spec = dr.ModelSpec(input_dim=16, n_classes=2, weight_decay=1e-2)
    theta = dr.init_params(spec, 1)
    v = np.random.default_rng(0).standard_normal(theta.shape)
    h = 1e-5
    fd = len(d) * (dr.grad(spec, theta + h * v, d) - dr.grad(spec, theta - h * v, d)) / (2 * h)
    assert np.allclose(dr.hvp(spec, theta, d, v), fd, rtol=1e-5, atol=1e-6)


def test_grid_search_and_cli(tmp_path, noisy):
    config = {
        "model": {"arch": "linear-softmax", "weight_decay": 0.01},
        "train": {"epochs": 8, "warmup_epochs": 1, "lr_peak": 0.01, "batch_size": 16},
        "metric": {"kind": "influence"},
        "ratios": [0.0, 0.25],
        "seeds": [0],
    }
    r = dr.grid_search(json.dumps(config), noisy)
    assert len(r["cells"]) == 3 * 2
    assert [s["ratio"] for s in r["summary"]] == [0.0, 0.25]
    means = [s["mean"] for s in r["summary"]]
    assert r["best_ratio"] == r["summary"][means.index(max(means))]["ratio"]
    assert all(math.isfinite(c["accuracy"]) for c in r["cells"])

    dr.save_dataset(noisy, tmp_path / "d.eegd")
    (tmp_path / "c.json").write_text(json.dumps(config))
    code, out, err = dr.run_cli(["sweep", "-c", str(tmp_path / "c.json"), "-d", str(tmp_path / "d.eegd"),
                                 "-o", str(tmp_path / "sweep")])
    assert code == 0, err
    assert (tmp_path / "sweep" / "summary.csv").exists()
    assert dr.run_cli(["bogus"])[0] == 2
