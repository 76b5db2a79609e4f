"""Benign-only standardization and reconstruction-autoencoder anomaly scoring."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimMismatch, EmptyTrainingSet, TooFewRows
from .nn import MLP, SGD
from .windows import NUMERIC_FEATURES, Window, WindowMetadata, aggregate_numeric, build_metadata

N_FEATURES = len(NUMERIC_FEATURES)


class BenignStandardizer(TransformerMixin, BaseEstimator):
    """Column-wise ``(x - mu) / (sigma + epsilon)`` with population std.

    Fit it on benign rows only; constant columns get ``sigma = 0`` and are
    guarded by ``epsilon``.
    """

    def __init__(self, epsilon: float = 1e-8):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] < 2:
            raise TooFewRows(f"need at least 2 benign rows, got {X.shape[0]}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.mean_ = X.mean(axis=0)
        self.sigma_ = X.std(axis=0, ddof=0)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_params(cls, mu, sigma, epsilon: float = 1e-8) -> "BenignStandardizer":
        s = cls(epsilon=epsilon)
        s.mean_ = np.asarray(mu, dtype=np.float64)
        s.sigma_ = np.asarray(sigma, dtype=np.float64)
        if s.mean_.shape != s.sigma_.shape:
            raise DimMismatch("mu and sigma must have the same length")
        if np.any(s.sigma_ < 0):
            raise ValueError("sigma entries must be non-negative")
        s.n_features_in_ = s.mean_.size
        return s

    def _check(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features_in_:
            raise DimMismatch(f"expected {self.n_features_in_} columns, got {X.shape[-1]}")
        return X

    def transform(self, X):
        X = self._check(X)
        return (X - self.mean_) / (self.sigma_ + self.epsilon)

    def inverse_transform(self, X):
        X = self._check(X)
        return X * (self.sigma_ + self.epsilon) + self.mean_

    def to_dict(self) -> dict:
        check_is_fitted(self, "mean_")
        return {"mu": self.mean_.tolist(), "sigma": self.sigma_.tolist(), "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "BenignStandardizer":
        return cls.from_params(d["mu"], d["sigma"], d["epsilon"])


def fit_standardizer(benign_numeric, epsilon: float = 1e-8) -> BenignStandardizer:
    return BenignStandardizer(epsilon=epsilon).fit(benign_numeric)


def standardize(s: BenignStandardizer, x):
    return s.transform(x)


def reconstruction_loss(net: MLP, X) -> float:
    """Mean over rows of the squared L2 reconstruction error."""
    out = net.forward(X)
    return float(np.mean(np.sum((X - out) ** 2, axis=1)))


def reconstruction_loss_grads(net: MLP, X):
    out, cache = net.forward(X, return_cache=True)
    diff = out - X
    loss = float(np.mean(np.sum(diff**2, axis=1)))
    grads = net.backward(cache, 2.0 * diff / X.shape[0])
    return loss, grads


class ReconstructionAutoencoder(BaseEstimator):
    """Dense autoencoder scored by mean squared reconstruction error.

    Architecture is ``n_features -> hidden -> bottleneck -> hidden -> n_features``
    with rectifiers on every hidden layer (bottleneck included) and a linear
    output. Trained with plain mini-batch gradient descent.

    Parameters
    ----------
    hidden : int
        Width of the encoder and decoder hidden layers.
    bottleneck : int
        Latent width; must be smaller than the input width.
    epochs, lr, batch_size : training schedule.
    random_state : int
        Seeds the uniform(-0.5, 0.5) initialization and the shuffling.
    """

    def __init__(self, hidden=8, bottleneck=2, epochs=200, lr=1e-2, batch_size=32, random_state=0):
        self.hidden = hidden
        self.bottleneck = bottleneck
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.random_state = random_state

    def _init_network(self, n_features: int) -> MLP:
        if self.bottleneck >= n_features:
            raise ValueError("bottleneck must be smaller than the input dimension")
        rng = np.random.default_rng(self.random_state)
        dims = [n_features, self.hidden, self.bottleneck, self.hidden, n_features]
        return MLP.initialize(dims, ["relu", "relu", "relu", "identity"], rng, limit=0.5)

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyTrainingSet("autoencoder needs at least one training row")
        X = check_array(X)
        self.network_ = self._init_network(X.shape[1])
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng([self.random_state, 1])
        opt = SGD(self.lr)
        params = self.network_.params()
        self.loss_curve_ = [reconstruction_loss(self.network_, X)]
        n = X.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = X[order[start : start + self.batch_size]]
                _, grads = reconstruction_loss_grads(self.network_, batch)
                opt.step(params, grads)
            self.loss_curve_.append(reconstruction_loss(self.network_, X))
        return self

    @classmethod
    def from_network(cls, network: MLP, random_state=None) -> "ReconstructionAutoencoder":
        model = cls(random_state=random_state)
        model.network_ = network
        model.n_features_in_ = network.n_in
        if network.n_out != network.n_in:
            raise DimMismatch("autoencoder output width must equal its input width")
        return model

    def reconstruct(self, X):
        check_is_fitted(self, "network_")
        return self.network_.forward(X)

    def encode(self, x):
        """Bottleneck activation for one input (the narrowest layer)."""
        check_is_fitted(self, "network_")
        outs = self.network_.layer_outputs(x)
        widths = [o.size for o in outs[:-1]]
        return outs[int(np.argmin(widths))]

    def score_samples(self, X):
        """AAD score per row: mean over features of squared residuals."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features_in_:
            raise DimMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        scores = np.mean((X - self.reconstruct(X)) ** 2, axis=1)
        return scores[0] if single else scores

    def to_dict(self) -> dict:
        check_is_fitted(self, "network_")
        return {"network": self.network_.to_dict(), "seed": self.random_state}

    @classmethod
    def from_dict(cls, d: dict) -> "ReconstructionAutoencoder":
        return cls.from_network(MLP.from_dict(d["network"]), random_state=d.get("seed"))


def train_autoencoder(benign_std, arch=(8, 2), epochs=200, lr=1e-2, seed=0, batch_size=32):
    hidden, bottleneck = arch
    return ReconstructionAutoencoder(
        hidden=hidden, bottleneck=bottleneck, epochs=epochs, lr=lr,
        batch_size=batch_size, random_state=seed,
    ).fit(benign_std)


def load_explicit_weights(spec: dict) -> ReconstructionAutoencoder:
    """Build a model from explicit matrices.

    ``spec`` carries ``weights`` (list of row-major matrices), optional
    ``biases`` (zeros when omitted) and ``activations`` per layer.
    """
    weights = [np.asarray(w, dtype=np.float64) for w in spec["weights"]]
    biases = spec.get("biases") or [np.zeros(w.shape[0]) for w in weights]
    return ReconstructionAutoencoder.from_network(MLP(weights, biases, spec["activations"]))


def aad_score(model: ReconstructionAutoencoder, x) -> float:
    return float(model.score_samples(np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class ScoredWindow:
    t: int
    start_ms: int
    aad_score: float
    metadata: WindowMetadata
    label: int


def score_windows(
    model: ReconstructionAutoencoder,
    standardizer: BenignStandardizer,
    windows: Sequence[Window],
) -> List[ScoredWindow]:
    if not windows:
        return []
    X = standardizer.transform(np.vstack([aggregate_numeric(w) for w in windows]))
    scores = model.score_samples(X)
    return [
        ScoredWindow(t=w.index, start_ms=w.start_ms, aad_score=float(s),
                     metadata=build_metadata(w), label=w.label)
        for w, s in zip(windows, scores)
    ]


def save_aad_model(path, model: ReconstructionAutoencoder, standardizer: BenignStandardizer) -> None:
    doc = {"kind": "aad", **model.to_dict(), "standardizer": standardizer.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def load_aad_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return ReconstructionAutoencoder.from_dict(doc), BenignStandardizer.from_dict(doc["standardizer"])


def benign_training_matrix(windows: Sequence[Window]) -> np.ndarray:
    """Aggregated numeric rows for windows built from benign training flows."""
    rows = [aggregate_numeric(w) for w in windows if w.flows]
    if not rows:
        return np.empty((0, N_FEATURES))
    return np.vstack(rows)
