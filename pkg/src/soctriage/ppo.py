"""Two-hidden-layer containment policy trained with clipped-surrogate PPO."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .env import DEFAULT_MODES, ContainmentEnv, RewardMode, decision_cost, regret
from .exceptions import DimMismatch
from .nn import MLP, Adam


def policy_net(d: int, rng, hidden: int = 64) -> MLP:
    """d -> hidden -> hidden -> 2 logits (index 0 = allow, 1 = contain)."""
    return MLP.initialize([d, hidden, hidden, 2], ["relu", "relu", "identity"], rng, out_scale=0.01)


def value_net(d: int, rng, hidden: int = 64) -> MLP:
    return MLP.initialize([d, hidden, hidden, 1], ["relu", "relu", "identity"], rng)


def forward(policy: MLP, s) -> np.ndarray:
    s = np.asarray(getattr(s, "vector", s), dtype=np.float64)
    if s.shape[-1] != policy.n_in:
        raise DimMismatch(f"state has dim {s.shape[-1]}, policy expects {policy.n_in}")
    return policy.forward(s)


def log_softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def action_probs(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sample_action(probs, rng: np.random.Generator, greedy: bool = False) -> int:
    probs = np.asarray(probs, dtype=np.float64)
    if greedy:
        return int(np.argmax(probs))
    return int(rng.random() < probs[1])


def compute_returns_advantages(rewards, values, gamma=0.99, gae_lambda=0.95, last_value=0.0,
                               normalize=True):
    """Discounted reward-to-go and GAE advantages for one episode.

    ``values`` are the critic's estimates for each step; ``last_value``
    bootstraps past the final step (0 for a terminal episode end).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    T = rewards.size
    if T == 0:
        raise ValueError("trajectory must be non-empty")
    returns = np.empty(T)
    adv = np.empty(T)
    running, gae = last_value, 0.0
    next_value = last_value
    for t in reversed(range(T)):
        running = rewards[t] + gamma * running
        returns[t] = running
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * gae_lambda * gae
        adv[t] = gae
        next_value = values[t]
    if normalize and T > 1:
        std = adv.std()
        adv = (adv - adv.mean()) / (std if std > 1e-8 else 1.0)
    return returns, adv


def clipped_surrogate(logits, actions, old_logp, advantages, clip_epsilon=0.2, entropy_coef=0.0):
    """PPO policy loss (to minimise) and its gradient w.r.t. the logits.

    loss = -mean(min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)) - c * mean(H)
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    actions = np.asarray(actions, dtype=int)
    n = logits.shape[0]
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    logp = logp_all[np.arange(n), actions]
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    unclipped_obj = ratio * advantages
    clipped_obj = clipped * advantages
    surrogate = np.minimum(unclipped_obj, clipped_obj)
    entropy = -(probs * logp_all).sum(axis=1)
    loss = -surrogate.mean() - entropy_coef * entropy.mean()

    # d surrogate / d ratio is A on the unclipped branch and 0 where the clip binds.
    active = unclipped_obj <= clipped_obj
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), actions] = 1.0
    d_ratio = (ratio * active * advantages)[:, None] * (onehot - probs)
    d_entropy = -probs * (logp_all + entropy[:, None])
    grad = (-d_ratio - entropy_coef * d_entropy) / n
    diag = {
        "policy_loss": float(-surrogate.mean()),
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_epsilon)),
        "approx_kl": float(np.mean(old_logp - logp)),
    }
    return float(loss), grad, diag


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    lr: float = 1e-3
    epochs_per_update: int = 4
    minibatch_size: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    total_passes: int = 100
    hidden: int = 64
    state_clip: Optional[float] = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be positive")
        if self.minibatch_size < 1 or self.epochs_per_update < 0 or self.total_passes < 0:
            raise ValueError("minibatch_size, epochs_per_update and total_passes must be non-negative")


def ppo_update(policy: MLP, value: MLP, batch: dict, cfg: TrainConfig, rng: np.random.Generator,
               policy_opt=None, value_opt=None) -> dict:
    """Run ``cfg.epochs_per_update`` epochs of minibatch PPO on one batch.

    ``batch`` holds ``states``, ``actions``, ``old_logp``, ``advantages``
    and ``returns``. Networks are updated in place.
    """
    policy_opt = policy_opt or Adam(cfg.lr)
    value_opt = value_opt or Adam(cfg.lr)
    states = batch["states"]
    n = states.shape[0]
    p_params, v_params = policy.params(), value.params()
    diags = []
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            logits, cache = policy.forward(states[idx], return_cache=True)
            loss, g_logits, diag = clipped_surrogate(
                logits, batch["actions"][idx], batch["old_logp"][idx],
                batch["advantages"][idx], cfg.clip_epsilon, cfg.entropy_coef,
            )
            policy_opt.step(p_params, policy.backward(cache, g_logits))

            v_out, v_cache = value.forward(states[idx], return_cache=True)
            err = v_out[:, 0] - batch["returns"][idx]
            diag["value_loss"] = float(np.mean(err**2))
            g_v = (cfg.value_coef * 2.0 * err / idx.size)[:, None]
            value_opt.step(v_params, value.backward(v_cache, g_v))
            diag["loss"] = loss
            diags.append(diag)
    if not diags:
        return {}
    return {k: float(np.mean([d[k] for d in diags])) for k in diags[0]}


class StateScaler:
    """Signed log1p followed by z-scoring with statistics from training states.

    Scaled values are clipped to ``[-clip, clip]`` so windows far outside
    the training range look like the most extreme seen, not arbitrary.
    """

    def __init__(self, mean=None, scale=None, clip: Optional[float] = 5.0):
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.scale = None if scale is None else np.asarray(scale, dtype=np.float64)
        self.clip = clip

    @staticmethod
    def _log(X):
        return np.sign(X) * np.log1p(np.abs(X))

    def fit(self, X):
        L = self._log(np.asarray(X, dtype=np.float64))
        self.mean = L.mean(axis=0)
        std = L.std(axis=0)
        self.scale = np.where(std > 1e-8, std, 1.0)
        return self

    def transform(self, X):
        Z = (self._log(np.asarray(X, dtype=np.float64)) - self.mean) / self.scale
        return Z if self.clip is None else np.clip(Z, -self.clip, self.clip)


def resolve_mode(mode: Union[str, RewardMode]) -> RewardMode:
    if isinstance(mode, RewardMode):
        return mode
    return DEFAULT_MODES[str(mode).upper()]


class ContainmentAgent(ClassifierMixin, BaseEstimator):
    """PPO-trained allow/contain policy over window state vectors.

    ``fit(X, y)`` treats the rows of ``X`` as one time-ordered episode and
    uses ``y`` only to compute rewards. ``predict`` is greedy.

    Parameters
    ----------
    mode : str or RewardMode
        Reward profile ("A".."D" or an explicit matrix).
    gamma, gae_lambda, clip_epsilon, lr, epochs_per_update, minibatch_size,
    entropy_coef, value_coef, total_passes, hidden : PPO hyperparameters.
    state_clip : float or None
        Bound on the scaled state features; None disables clipping.
    random_state : int
    """

    def __init__(self, mode="A", gamma=0.99, gae_lambda=0.95, clip_epsilon=0.2, lr=1e-3,
                 epochs_per_update=4, minibatch_size=64, entropy_coef=0.01, value_coef=0.5,
                 total_passes=100, hidden=64, state_clip=5.0, random_state=0):
        self.mode = mode
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.clip_epsilon = clip_epsilon
        self.lr = lr
        self.epochs_per_update = epochs_per_update
        self.minibatch_size = minibatch_size
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.total_passes = total_passes
        self.hidden = hidden
        self.state_clip = state_clip
        self.random_state = random_state

    @classmethod
    def from_config(cls, mode, cfg: TrainConfig) -> "ContainmentAgent":
        d = asdict(cfg)
        d["random_state"] = d.pop("seed")
        return cls(mode=mode, **d)

    @property
    def config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma, gae_lambda=self.gae_lambda, clip_epsilon=self.clip_epsilon,
            lr=self.lr, epochs_per_update=self.epochs_per_update,
            minibatch_size=self.minibatch_size, entropy_coef=self.entropy_coef,
            value_coef=self.value_coef, total_passes=self.total_passes, hidden=self.hidden,
            state_clip=self.state_clip, seed=self.random_state,
        )

    def _initialize(self, X):
        cfg = self.config
        self.reward_mode_ = resolve_mode(self.mode)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.scaler_ = StateScaler(clip=cfg.state_clip).fit(X)
        rng = np.random.default_rng([cfg.seed, 0])
        self.policy_ = policy_net(X.shape[1], rng, cfg.hidden)
        self.value_ = value_net(X.shape[1], rng, cfg.hidden)
        self.training_curve_ = []

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=int)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y must have the same number of rows")
        self._initialize(X)
        env = ContainmentEnv(X, y, self.reward_mode_, seed=[self.config.seed, 2])
        return self._train_on_env(env)

    def _train_on_env(self, env: ContainmentEnv):
        cfg = self.config
        sample_rng = np.random.default_rng([cfg.seed, 3])
        shuffle_rng = np.random.default_rng([cfg.seed, 4])
        policy_opt, value_opt = Adam(cfg.lr), Adam(cfg.lr)
        S = self.scaler_.transform(env.states)
        for p in range(cfg.total_passes):
            env.reset()
            logp_all = log_softmax(self.policy_.forward(S))
            probs = np.exp(logp_all)
            actions, rewards = [], []
            while not env.done:
                a = sample_action(probs[env.cursor], sample_rng)
                _, r, _ = env.step(a)
                actions.append(a)
                rewards.append(r)
            actions = np.array(actions)
            values = self.value_.forward(S)[:, 0]
            returns, adv = compute_returns_advantages(rewards, values, cfg.gamma, cfg.gae_lambda)
            batch = {
                "states": S,
                "actions": actions,
                "old_logp": logp_all[np.arange(len(actions)), actions],
                "advantages": adv,
                "returns": returns,
            }
            diag = ppo_update(self.policy_, self.value_, batch, cfg, shuffle_rng, policy_opt, value_opt)
            self.training_curve_.append({"pass": p, "mean_reward": float(np.mean(rewards)), **diag})
        return self

    def logits(self, X):
        check_is_fitted(self, "policy_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features_in_:
            raise DimMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.policy_.forward(self.scaler_.transform(X))

    def predict_proba(self, X):
        return action_probs(self.logits(X))

    def predict(self, X):
        return np.argmax(self.logits(X), axis=1)

    def to_dict(self) -> dict:
        check_is_fitted(self, "policy_")
        return {
            "kind": "ppo_agent",
            "params": {k: (v.to_dict() if isinstance(v, RewardMode) else v)
                       for k, v in self.get_params().items()},
            "reward_mode": self.reward_mode_.to_dict(),
            "scaler": {"mean": self.scaler_.mean.tolist(), "scale": self.scaler_.scale.tolist(),
                       "clip": self.scaler_.clip},
            "policy": self.policy_.to_dict(),
            "value": self.value_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContainmentAgent":
        params = dict(d["params"])
        if isinstance(params.get("mode"), dict):
            params["mode"] = RewardMode(**params["mode"])
        agent = cls(**params)
        agent.reward_mode_ = RewardMode(**d["reward_mode"])
        agent.classes_ = np.array([0, 1])
        agent.scaler_ = StateScaler(d["scaler"]["mean"], d["scaler"]["scale"], d["scaler"].get("clip"))
        agent.policy_ = MLP.from_dict(d["policy"])
        agent.value_ = MLP.from_dict(d["value"])
        agent.n_features_in_ = agent.policy_.n_in
        agent.training_curve_ = []
        return agent

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "ContainmentAgent":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(env_factory: Callable[[RewardMode], ContainmentEnv], mode, cfg: TrainConfig) -> ContainmentAgent:
    """Train an agent on the environment produced by ``env_factory(mode)``."""
    agent = ContainmentAgent.from_config(mode, cfg)
    env = env_factory(resolve_mode(mode))
    agent._initialize(env.states)
    return agent._train_on_env(env)


@dataclass(frozen=True)
class EvalMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    mean_cost: float
    mean_regret: float
    reduction_pct: float

    @classmethod
    def from_actions(cls, actions, labels, mode: RewardMode) -> "EvalMetrics":
        a = np.asarray(actions, dtype=int)
        y = np.asarray(labels, dtype=int)
        tp = int(np.sum((a == 1) & (y == 1)))
        fp = int(np.sum((a == 1) & (y == 0)))
        fn = int(np.sum((a == 0) & (y == 1)))
        tn = int(np.sum((a == 0) & (y == 0)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        costs = [decision_cost(mode.base(ai, yi)) for ai, yi in zip(a, y)]
        regrets = [regret(mode, ai, yi) for ai, yi in zip(a, y)]
        total = a.size
        return cls(
            precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn, tn=tn,
            mean_cost=float(np.mean(costs)) if total else 0.0,
            mean_regret=float(np.mean(regrets)) if total else 0.0,
            reduction_pct=100.0 * (1.0 - (tp + fp) / total) if total else 0.0,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(agent: ContainmentAgent, test_X, test_y, mode=None) -> EvalMetrics:
    mode = resolve_mode(mode) if mode is not None else agent.reward_mode_
    return EvalMetrics.from_actions(agent.predict(test_X), test_y, mode)
