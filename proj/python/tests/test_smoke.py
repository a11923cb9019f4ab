import numpy as np
import pytest

import samcnn


def small(n=8, d=60, mu=2.0, p=0.0, P=2, seed=1):
    return samcnn.gen_dataset(samcnn.DataParams(d=d, P=P, p=p, mu_norm=mu), n, seed)


def test_dataset_shapes():
    ds = small(P=3)
    assert len(ds) == 8
    assert ds.xi.shape == (8, 60)
    assert ds.mu[0] == 2.0
    x = ds.patches(0)
    assert x.shape == (3, 60)
    pos = ds.signal_pos[0]
    np.testing.assert_array_equal(x[pos], ds.y_hat[0] * ds.mu)


def test_gradient_matches_finite_differences():
    ds = small()
    w = samcnn.init_weights(samcnn.NetConfig(m=2, d=60, init=samcnn.InitScheme.gaussian, sigma_0=0.3), 4)
    batch = [0, 2, 5]
    g = samcnn.batch_gradient(w, ds, batch)
    h = 1e-6
    for r, c in [(0, 0), (1, 7), (3, 59)]:
        up, down = w.copy(), w.copy()
        up[r, c] += h
        down[r, c] -= h
        fd = (samcnn.batch_loss(up, ds, batch) - samcnn.batch_loss(down, ds, batch)) / (2 * h)
        assert abs(fd - g[r, c]) < 1e-7


def test_sam_with_zero_radius_is_sgd():
    ds = small()
    net = samcnn.NetConfig(m=3, d=60)
    a = samcnn.train(ds, net, samcnn.TrainConfig(B=4, epochs=5, seed=2))
    b = samcnn.train(ds, net, samcnn.TrainConfig(B=4, epochs=5, seed=2, algo=samcnn.Algorithm.sam, tau=0.0))
    np.testing.assert_array_equal(a["final"], b["final"])


def test_tracked_coefficients_match_oracle():
    ds = small(d=200, p=0.2)
    r = samcnn.train(ds, samcnn.NetConfig(m=2, d=200),
                     samcnn.TrainConfig(eta=0.5, B=4, epochs=10, algo=samcnn.Algorithm.sam, tau=0.1),
                     track_coefficients=True)
    sol = samcnn.decompose(r["final"], r["initial"], ds)
    np.testing.assert_allclose(sol["gamma"], r["gamma"], atol=1e-9)
    np.testing.assert_allclose(sol["rho"], r["zeta"] + r["omega"], atol=1e-9)
    assert (r["zeta"] >= 0).all() and (r["omega"] <= 0).all()


def test_training_reduces_loss_and_test_error():
    ds = small(n=20, d=1000, mu=10.0)
    r = samcnn.train(ds, samcnn.NetConfig(m=10, d=1000), samcnn.TrainConfig())
    assert r["train_loss"][-1] < r["train_loss"][0]
    err, se = samcnn.test_error(r["final"], ds, 1000, 3)
    assert err <= 0.05
    assert 0.0 <= se <= 0.01


def test_zero_weights_count_as_errors():
    ds = small()
    err, _ = samcnn.test_error(np.zeros((4, 60)), ds, 200, 0)
    assert err == 1.0


def test_config_errors_name_the_field():
    with pytest.raises(samcnn.ConfigError, match="sigma_p"):
        samcnn.DataParams(sigma_p=-1.0)
    with pytest.raises(samcnn.ConfigError, match="train.etta"):
        samcnn.parse_config("train.etta = 1\n")


def test_tiny_grid():
    cfg = """
data.n = 8
train.B = 8
train.epochs = 5
eval.n_test = 100
grid.d = 100
grid.mu = 0,4
grid.seeds = 0,1
variant.sgd.algo = sgd
variant.sam.algo = sam
variant.sam.tau = 0.03
"""
    rows = samcnn.run_grid(cfg)
    assert len(rows) == 8
    assert all(r["ok"] for r in rows)
    assert rows == samcnn.run_grid(cfg, jobs=2)


def test_regime():
    assert samcnn.classify_regime(20, 0.0, 1000, 2, 1.0) == "harmful"
    assert samcnn.regime_ratio(20, 2.0, 10, 2, 1.0) == pytest.approx(2.0)
