import numpy as np
import pytest

from soctriage.aad import (BenignStandardizer, ReconstructionAutoencoder, aad_score, fit_standardizer,
                           load_explicit_weights, reconstruction_loss, reconstruction_loss_grads,
                           score_windows, standardize, train_autoencoder)
from soctriage.exceptions import DimMismatch, EmptyTrainingSet, TooFewRows
from soctriage.nn import MLP
from soctriage.oracle import EXAMPLE_MU, EXAMPLE_SIGMA, EXAMPLE_WEIGHTS
from soctriage.synth import FloodConfig, ScenarioConfig, gen_benign, gen_udp_flood
from soctriage.windows import aggregate_numeric, partition_windows

X_STD = [0.325, 0.43, 1.7275, 1.735, 1.4375, 2.0]


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def numeric_grads(f, params, h=1e-5):
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def test_two_point_population_std():
    s = fit_standardizer(np.array([[1.0], [3.0]]))
    assert s.mean_.tolist() == [2.0] and s.sigma_.tolist() == [1.0]


def test_constant_column_maps_to_zero():
    s = fit_standardizer(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
    assert s.sigma_[0] == 0.0
    assert np.all(s.transform(np.array([[5.0, 2.0]]))[:, 0] == 0.0)


def test_too_few_rows():
    with pytest.raises(TooFewRows):
        fit_standardizer(np.zeros((1, 6)))


def test_standardize_worked_example():
    s = BenignStandardizer.from_params(EXAMPLE_MU, EXAMPLE_SIGMA)
    out = standardize(s, np.array([232.5, 443, 52345.5, 52347, 4875, 11000]))
    assert np.max(np.abs(out - X_STD)) <= 1e-9


def test_standardize_mean_and_round_trip(rng):
    X = rng.normal(size=(50, 6)) * 10 + 3
    s = fit_standardizer(X)
    assert np.allclose(s.transform(s.mean_), 0.0)
    assert np.allclose(s.inverse_transform(s.transform(X)), X, atol=1e-9)


def test_standardizer_dim_mismatch():
    s = fit_standardizer(np.random.default_rng(0).normal(size=(5, 6)))
    with pytest.raises(DimMismatch):
        s.transform(np.zeros(5))


def test_bottleneck_and_score_worked_example():
    m = load_explicit_weights(EXAMPLE_WEIGHTS)
    assert np.max(np.abs(m.encode(X_STD) - [0.9482, 1.2297])) <= 1e-3
    assert abs(aad_score(m, X_STD) - 1.1558) <= 1e-3


def test_identity_chain():
    spec = {"weights": [np.eye(6), np.eye(6)], "activations": ["identity", "identity"]}
    x = np.arange(6.0) - 2.5
    m = load_explicit_weights(spec)
    assert np.array_equal(m.reconstruct(x), x)
    assert aad_score(m, x) == 0.0


def test_mismatched_weights():
    bad = {"weights": [np.ones((4, 6)), np.ones((2, 3)), np.ones((6, 2))],
           "activations": ["relu", "relu", "identity"]}
    with pytest.raises(DimMismatch):
        load_explicit_weights(bad)


def test_unit_residual_scores_one():
    spec = {"weights": [np.eye(6)], "biases": [-np.ones(6)], "activations": ["identity"]}
    m = load_explicit_weights(spec)
    assert aad_score(m, np.zeros(6)) == pytest.approx(1.0)


def test_memorizes_constant_rows():
    X = np.tile(np.array([0.5, -1.0, 2.0, 0.0, 1.5, -0.5]), (500, 1))
    m = train_autoencoder(X, epochs=200, seed=0)
    assert np.mean(m.score_samples(X)) < 1e-3


def test_zero_epochs_is_initialization():
    X = np.random.default_rng(0).normal(size=(20, 6))
    m = train_autoencoder(X, epochs=0, seed=5)
    init = ReconstructionAutoencoder(random_state=5)._init_network(6)
    for a, b in zip(m.network_.params(), init.params()):
        assert np.array_equal(a, b)


def test_same_seed_bitwise_identical():
    X = np.random.default_rng(1).normal(size=(64, 6))
    a = train_autoencoder(X, epochs=5, seed=3)
    b = train_autoencoder(X, epochs=5, seed=3)
    for p, q in zip(a.network_.params(), b.network_.params()):
        assert np.array_equal(p, q)


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        ReconstructionAutoencoder().fit(np.empty((0, 6)))


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    net = MLP.initialize([6, 8, 2, 8, 6], ["relu", "relu", "relu", "identity"], rng)
    for b in net.biases:
        b += rng.normal(scale=0.3, size=b.shape)
    X = rng.normal(size=(16, 6))
    _, grads = reconstruction_loss_grads(net, X)
    numeric = numeric_grads(lambda: reconstruction_loss(net, X), net.params())
    for g, n in zip(grads, numeric):
        assert rel_err(g, n) < 1e-4


def test_scores_nonnegative_and_order_preserving(rng):
    m = train_autoencoder(rng.normal(size=(40, 6)), epochs=5, seed=0)
    X = rng.normal(size=(3, 6)) * 5
    s = m.score_samples(X)
    assert s.shape == (3,) and np.all(s >= 0)
    assert [m.score_samples(x) for x in X] == pytest.approx(list(s))


@pytest.fixture(scope="module")
def benign_model():
    cfg = ScenarioConfig(duration_min=600, seed=0)
    d = gen_benign(cfg, np.random.default_rng(0))
    ws = partition_windows(d)
    X = np.vstack([aggregate_numeric(w) for w in ws])
    s = fit_standardizer(X)
    m = train_autoencoder(s.transform(X), seed=0)
    return cfg, ws, s, m, m.score_samples(s.transform(X))


def test_score_windows_cardinality(benign_model):
    _, ws, s, m, _ = benign_model
    scored = score_windows(m, s, ws[:3])
    assert [x.t for x in scored] == [w.index for w in ws[:3]]


def test_training_row_below_p95(benign_model):
    _, ws, s, m, train_scores = benign_model
    p95 = np.percentile(train_scores, 95)
    typical = int(np.argmin(np.abs(train_scores - np.median(train_scores))))
    assert score_windows(m, s, [ws[typical]])[0].aad_score < p95


def test_flood_scores_above_all_benign(benign_model):
    cfg, _, s, m, train_scores = benign_model
    flood = gen_udp_flood(FloodConfig(start_min=0, duration_min=5, rate_per_min=200, bytes_factor=(100, 100)),
                          np.random.default_rng(1), cfg.benign_mean_bytes)
    w = partition_windows(flood)[0]
    assert score_windows(m, s, [w])[0].aad_score > train_scores.max()
