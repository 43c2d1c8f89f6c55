"""PPO on linear policy/value heads with forgetting-curve prioritized replay.

The policy is a softmax over three editing strategies; the value head is
linear. Keeping both linear makes every gradient analytic and directly
checkable against finite differences.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyPool, NumericsError

N_ACTIONS = 3
ACTIONS = ("word_swap", "add_phrase", "reweight")


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    eps_clip: float = 0.2
    lr: float = 5e-5
    batch: int = 256
    ppo_epochs: int = 4
    value_coef: float = 2.2
    kl_coef: float = 0.3
    lambda_forget: float = 0.01
    epsilon_priority: float = 0.01
    beta0: float = 0.4
    episodes: int = 12000
    n_max: int = 10
    tau_stop: float = 0.92
    capacity: int = 4096
    update_every: int = 1
    value_lr: Optional[float] = None
    round_penalty: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.eps_clip <= 0:
            raise ValueError("eps_clip must be positive")
        if not (0.0 < self.beta0 <= 1.0):
            raise ValueError("beta0 must lie in (0, 1]")
        if self.epsilon_priority <= 0 or self.lambda_forget < 0:
            raise ValueError("bad replay constants")

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma, "eps_clip": self.eps_clip, "lr": self.lr,
            "batch": self.batch, "ppo_epochs": self.ppo_epochs,
            "value_coef": self.value_coef, "kl_coef": self.kl_coef,
            "lambda_forget": self.lambda_forget,
            "epsilon_priority": self.epsilon_priority, "beta0": self.beta0,
            "episodes": self.episodes, "n_max": self.n_max,
            "tau_stop": self.tau_stop, "capacity": self.capacity,
            "update_every": self.update_every, "value_lr": self.value_lr,
            "round_penalty": self.round_penalty, "seed": self.seed,
        }

    @staticmethod
    def from_json(data: dict) -> "TrainConfig":
        return TrainConfig(**data)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    delta: float
    inserted_at: int
    old_logprob: float
    terminal: bool = False

    def __post_init__(self):
        s = np.asarray(self.s, dtype=np.float64)
        s_next = np.asarray(self.s_next, dtype=np.float64)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "s_next", s_next)
        if not (-1.0 <= self.r <= 1.0):
            raise ValueError(f"reward {self.r} outside [-1, 1]")
        if not math.isfinite(self.delta):
            raise ValueError("TD error must be finite")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(s_next))):
            raise ValueError("state features must be finite")


def td_error(r: float, gamma: float, v_s: float, v_s_next: float) -> float:
    """One-step bootstrap residual r + gamma * V(s') - V(s)."""
    return r + gamma * v_s_next - v_s


def advantage(r: float, gamma: float, v_s: float, v_s_next: float) -> float:
    """One-step advantage; same formula as the TD error."""
    return td_error(r, gamma, v_s, v_s_next)


def priority(delta: float, age_steps: float, lam: float, epsilon: float) -> float:
    """Forgetting-curve replay weight exp(-lam * age) * |delta| + epsilon."""
    return math.exp(-lam * age_steps) * abs(delta) + epsilon


def anneal_beta(step: int, total: int, beta0: float) -> float:
    """Linear schedule from beta0 at step 0 to 1.0 at step == total."""
    if total <= 0:
        return 1.0
    frac = min(max(step / total, 0.0), 1.0)
    return beta0 + (1.0 - beta0) * frac


class ReplayPool:
    """Bounded transition store; oldest entries are evicted first."""

    def __init__(self, capacity: int, lambda_forget: float, epsilon_priority: float):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.lambda_forget = lambda_forget
        self.epsilon_priority = epsilon_priority
        self.entries: list[Transition] = []
        self.global_step = 0

    def __len__(self):
        return len(self.entries)

    def insert(self, t: Transition) -> None:
        if len(self.entries) >= self.capacity:
            self.entries.pop(0)
        self.entries.append(t)
        self.global_step += 1

    def priorities(self) -> np.ndarray:
        now = self.global_step
        return np.array(
            [
                priority(t.delta, now - t.inserted_at, self.lambda_forget, self.epsilon_priority)
                for t in self.entries
            ]
        )


def sample_batch(
    pool: ReplayPool, k: int, beta: float, rng: np.random.Generator
) -> tuple[list[Transition], np.ndarray]:
    """Draw k transitions with replacement, probability proportional to
    priority; importance weights (n * p)^-beta are normalized by the batch max."""
    if len(pool) == 0:
        raise EmptyPool("cannot sample from an empty replay pool")
    if k < 1:
        raise ValueError("k must be at least 1")
    prios = pool.priorities()
    probs = prios / prios.sum()
    idx = rng.choice(len(pool), size=k, replace=True, p=probs)
    n = len(pool)
    weights = (n * probs[idx]) ** (-beta)
    weights = weights / weights.max()
    return [pool.entries[i] for i in idx], weights


# ------------------------------------------------------------ linear heads


@dataclass(frozen=True)
class PolicyParams:
    w: np.ndarray  # (N_ACTIONS, feature_dim)
    b: np.ndarray  # (N_ACTIONS,)

    @staticmethod
    def init(feature_dim: int) -> "PolicyParams":
        return PolicyParams(np.zeros((N_ACTIONS, feature_dim)), np.zeros(N_ACTIONS))

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.w.copy(), self.b.copy())


@dataclass(frozen=True)
class ValueParams:
    w: np.ndarray  # (feature_dim,)
    b: float

    @staticmethod
    def init(feature_dim: int) -> "ValueParams":
        return ValueParams(np.zeros(feature_dim), 0.0)

    def copy(self) -> "ValueParams":
        return ValueParams(self.w.copy(), float(self.b))


def value_of(value: ValueParams, s: np.ndarray) -> float:
    return float(value.w @ s + value.b)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    return z - math.log(np.exp(z).sum())


def action_logprobs(policy: PolicyParams, s: np.ndarray) -> np.ndarray:
    return _log_softmax(policy.w @ s + policy.b)


def policy_action(
    policy: PolicyParams, s: np.ndarray, rng: np.random.Generator, greedy: bool = False
) -> tuple[int, float]:
    """Sample (or argmax) a strategy; returns the action id and its log-prob."""
    logp = action_logprobs(policy, s)
    if greedy:
        a = int(np.argmax(logp))
    else:
        a = int(rng.choice(N_ACTIONS, p=np.exp(logp)))
    return a, float(logp[a])


def ppo_objective(ratio: float, adv: float, eps_clip: float) -> float:
    """Clipped surrogate min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)."""
    clipped = min(max(ratio, 1.0 - eps_clip), 1.0 + eps_clip)
    return min(ratio * adv, clipped * adv)


def policy_objective(
    policy: PolicyParams,
    batch: Sequence[Transition],
    weights: np.ndarray,
    cfg: TrainConfig,
    ref: PolicyParams,
) -> float:
    """Importance-weighted clipped surrogate minus the KL penalty, as a pure
    function of the policy parameters (finite-difference friendly)."""
    total = 0.0
    kl_total = 0.0
    for t, w in zip(batch, weights):
        logp = action_logprobs(policy, t.s)
        ratio = math.exp(logp[t.a] - t.old_logprob)
        total += w * ppo_objective(ratio, t.delta, cfg.eps_clip)
        if cfg.kl_coef != 0.0:
            ref_logp = action_logprobs(ref, t.s)
            pi = np.exp(logp)
            kl_total += float(pi @ (logp - ref_logp))
    n = len(batch)
    return total / n - cfg.kl_coef * kl_total / n


def _policy_gradient(
    policy: PolicyParams,
    batch: Sequence[Transition],
    weights: np.ndarray,
    cfg: TrainConfig,
    ref: PolicyParams,
) -> tuple[np.ndarray, np.ndarray]:
    gw = np.zeros_like(policy.w)
    gb = np.zeros_like(policy.b)
    for t, w in zip(batch, weights):
        logp = action_logprobs(policy, t.s)
        pi = np.exp(logp)
        ratio = math.exp(logp[t.a] - t.old_logprob)
        clipped = min(max(ratio, 1.0 - cfg.eps_clip), 1.0 + cfg.eps_clip)
        # gradient flows through the unclipped branch only when it is the min
        if ratio * t.delta <= clipped * t.delta:
            dlogp = -pi.copy()
            dlogp[t.a] += 1.0
            coef = w * ratio * t.delta
            gw += coef * np.outer(dlogp, t.s)
            gb += coef * dlogp
        if cfg.kl_coef != 0.0:
            ref_logp = action_logprobs(ref, t.s)
            kl = float(pi @ (logp - ref_logp))
            dz = pi * ((logp - ref_logp) - kl)
            gw -= cfg.kl_coef * np.outer(dz, t.s)
            gb -= cfg.kl_coef * dz
    n = len(batch)
    return gw / n, gb / n


def update_policy(
    policy: PolicyParams,
    batch: Sequence[Transition],
    weights: np.ndarray,
    cfg: TrainConfig,
    ref: Optional[PolicyParams] = None,
) -> tuple[PolicyParams, float]:
    """Ascend the clipped surrogate for cfg.ppo_epochs passes over the batch."""
    if not batch:
        raise ValueError("batch must be non-empty")
    if ref is None:
        ref = policy.copy()
    weights = np.asarray(weights, dtype=np.float64)
    w, b = policy.w.copy(), policy.b.copy()
    for _ in range(cfg.ppo_epochs):
        cur = PolicyParams(w, b)
        gw, gb = _policy_gradient(cur, batch, weights, cfg, ref)
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericsError("non-finite policy gradient")
        w = w + cfg.lr * gw
        b = b + cfg.lr * gb
    out = PolicyParams(w, b)
    return out, policy_objective(out, batch, weights, cfg, ref)


def value_loss(value: ValueParams, batch: Sequence[Transition], cfg: TrainConfig) -> float:
    """value_coef * mean squared TD error, recomputed with the given params."""
    total = 0.0
    for t in batch:
        v_next = 0.0 if t.terminal else value_of(value, t.s_next)
        delta = td_error(t.r, cfg.gamma, value_of(value, t.s), v_next)
        total += delta * delta
    return cfg.value_coef * total / len(batch)


def update_value(
    value: ValueParams, batch: Sequence[Transition], cfg: TrainConfig
) -> tuple[ValueParams, float]:
    """One gradient-descent step on the TD loss; returns (params, new loss)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    gw = np.zeros_like(value.w)
    gb = 0.0
    for t in batch:
        v_next = 0.0 if t.terminal else value_of(value, t.s_next)
        delta = td_error(t.r, cfg.gamma, value_of(value, t.s), v_next)
        dphi = (cfg.gamma * t.s_next if not t.terminal else 0.0) - t.s
        gw += 2.0 * delta * dphi
        gb += 2.0 * delta * (cfg.gamma * (0.0 if t.terminal else 1.0) - 1.0)
    n = len(batch)
    gw = cfg.value_coef * gw / n
    gb = cfg.value_coef * gb / n
    if not (np.all(np.isfinite(gw)) and math.isfinite(gb)):
        raise NumericsError("non-finite value gradient")
    lr = cfg.value_lr if cfg.value_lr is not None else cfg.lr
    out = ValueParams(value.w - lr * gw, float(value.b - lr * gb))
    return out, value_loss(out, batch, cfg)


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path, policy: PolicyParams, value: ValueParams, cfg: TrainConfig) -> None:
    payload = {
        "format_version": 1,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_json(),
        "feature_dim": int(policy.w.shape[1]),
        "policy": {"w": policy.w.tolist(), "b": policy.b.tolist()},
        "value": {"w": value.w.tolist(), "b": float(value.b)},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_checkpoint(path) -> tuple[PolicyParams, ValueParams, TrainConfig]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise NumericsError(f"unsupported checkpoint version in {path}")
    cfg = TrainConfig.from_json(payload["config"])
    if payload.get("config_hash") != cfg.config_hash():
        raise NumericsError("checkpoint config hash mismatch")
    policy = PolicyParams(
        np.array(payload["policy"]["w"], dtype=np.float64),
        np.array(payload["policy"]["b"], dtype=np.float64),
    )
    value = ValueParams(
        np.array(payload["value"]["w"], dtype=np.float64), float(payload["value"]["b"])
    )
    return policy, value, cfg
