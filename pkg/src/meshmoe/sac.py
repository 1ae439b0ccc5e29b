"""Soft actor-critic over the one-dimensional loss-balance coefficient.

Gaussian policy squashed by tanh into [lambda_min, lambda_max]; twin
critics with soft-updated targets; entropy temperature alpha tuned toward
a target entropy of -1 (one action dimension).  The agent consumes
(state, reward) pairs from the trainer each iteration and emits the next
coefficient; an epoch is one episode, terminal on its last batch.
"""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers
from .autodiff import Tensor
from .optim import Adam
from .rng import Rng, derive

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Transition:
    state: np.ndarray
    action_pre: float      # pre-squash Gaussian draw
    action: float          # squashed lambda
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class SACConfig:
    state_dim: int
    discount: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    buffer_capacity: int = 10000
    batch_size: int = 64
    lambda_min: float = -1.0
    lambda_max: float = 1.0
    hidden: int = 64
    target_entropy: float = -1.0
    init_alpha: float = 0.1
    updates_per_step: int = 1

    def __post_init__(self):
        if self.lambda_min >= self.lambda_max:
            raise ValueError("lambda range is empty")
        if self.state_dim < 1:
            raise ValueError("state_dim must be >= 1")


def _mlp_init(prefix: str, d_in: int, hidden: int, d_out: int, seed: int) -> dict:
    return {
        f"{prefix}.w1": layers.glorot((d_in, hidden), derive(seed, prefix, 1)),
        f"{prefix}.b1": layers.zeros((hidden,)),
        f"{prefix}.w2": layers.glorot((hidden, hidden), derive(seed, prefix, 2)),
        f"{prefix}.b2": layers.zeros((hidden,)),
        f"{prefix}.w3": layers.glorot((hidden, d_out), derive(seed, prefix, 3)),
        f"{prefix}.b3": layers.zeros((d_out,)),
    }


def _mlp_forward(params: dict, prefix: str, x: Tensor) -> Tensor:
    h = ad.relu(layers.linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"]))
    h = ad.relu(layers.linear(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"]))
    return layers.linear(h, params[f"{prefix}.w3"], params[f"{prefix}.b3"])


class SACState:
    """Actor, twin critics with targets, temperature, replay, optimizers."""

    def __init__(self, config: SACConfig, seed: int = 0):
        self.config = config
        h = config.hidden
        self.actor = _mlp_init("actor", config.state_dim, h, 2, derive(seed, "actor"))
        self.critic1 = _mlp_init("q1", config.state_dim + 1, h, 1, derive(seed, "q1"))
        self.critic2 = _mlp_init("q2", config.state_dim + 1, h, 1, derive(seed, "q2"))
        self.target1 = {k: v.detach() for k, v in self.critic1.items()}
        self.target2 = {k: v.detach() for k, v in self.critic2.items()}
        self.log_alpha = Tensor(math.log(config.init_alpha), requires_grad=True)
        self.buffer = deque(maxlen=config.buffer_capacity)
        self.rng = Rng(derive(seed, "agent"))
        self.actor_opt = Adam(self.actor, lr=config.lr)
        self.critic_opt = Adam({**self.critic1, **self.critic2}, lr=config.lr)
        self.alpha_opt = Adam({"log_alpha": self.log_alpha}, lr=config.lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.data))

    def parameters(self) -> dict:
        """Flat view for checkpointing."""
        out = {}
        for group, params in (("actor", self.actor), ("critic1", self.critic1),
                              ("critic2", self.critic2), ("target1", self.target1),
                              ("target2", self.target2)):
            for k, v in params.items():
                out[f"{group}.{k}"] = v
        out["log_alpha"] = self.log_alpha
        return out


def _squash(u: np.ndarray, config: SACConfig) -> np.ndarray:
    half_span = (config.lambda_max - config.lambda_min) / 2.0
    mid = (config.lambda_max + config.lambda_min) / 2.0
    # clip because mid + half*tanh can overshoot by one ulp off-center
    return np.clip(mid + half_span * np.tanh(u), config.lambda_min, config.lambda_max)


def actor_forward(sac: SACState, states: Tensor):
    """Returns (mean, log_std) tensors of shape (B, 1)."""
    out = _mlp_forward(sac.actor, "actor", states)
    mean = ad.slice_index(out, 1, 0)
    log_std = ad.slice_index(out, 1, 1)
    log_std = ad.clamp_min(ad.clamp_max(log_std, LOG_STD_MAX), LOG_STD_MIN)
    return (ad.reshape(mean, (states.shape[0], 1)),
            ad.reshape(log_std, (states.shape[0], 1)))


def sample_action(sac: SACState, state: np.ndarray, stochastic: bool = True):
    """Draw lambda at one state; returns (lambda, pre_squash_action)."""
    states = Tensor(np.asarray(state, dtype=np.float64).reshape(1, -1))
    mean, log_std = actor_forward(sac, states)
    if stochastic:
        noise = sac.rng.normal()
        u = float(mean.data[0, 0]) + math.exp(float(log_std.data[0, 0])) * noise
    else:
        u = float(mean.data[0, 0])
    return float(_squash(np.array(u), sac.config)), u


def _log_prob(mean: Tensor, log_std: Tensor, u: Tensor, config: SACConfig) -> Tensor:
    """log pi(lambda) with the tanh change-of-variables correction; (B, 1)."""
    std = ad.exp(log_std)
    z = ad.div(ad.sub(u, mean), std)
    gauss = ad.mul(ad.add(ad.add(ad.mul(ad.mul(z, z), Tensor(0.5)), log_std),
                          Tensor(0.5 * _LOG_2PI)), Tensor(-1.0))
    t = ad.tanh(u)
    half_span = (config.lambda_max - config.lambda_min) / 2.0
    correction = ad.log(ad.add(ad.sub(Tensor(1.0), ad.mul(t, t)), Tensor(1e-6)))
    return ad.sub(ad.sub(gauss, correction), Tensor(math.log(half_span)))


def _sampled_action_and_logp(sac: SACState, states: Tensor, noise: np.ndarray):
    """Reparameterized draw at `states`; returns (lambda tensor, log-prob)."""
    mean, log_std = actor_forward(sac, states)
    u = ad.add(mean, ad.mul(ad.exp(log_std), Tensor(noise)))
    logp = _log_prob(mean, log_std, u, sac.config)
    half_span = (sac.config.lambda_max - sac.config.lambda_min) / 2.0
    mid = (sac.config.lambda_max + sac.config.lambda_min) / 2.0
    action = ad.add(ad.mul(ad.tanh(u), Tensor(half_span)), Tensor(mid))
    return action, logp


def critic_forward(params: dict, prefix: str, states: Tensor, actions: Tensor) -> Tensor:
    return _mlp_forward(params, prefix, ad.concat([states, actions], axis=1))


def soft_update(target: dict, online: dict, tau: float) -> None:
    for key in online:
        target[key].data *= (1.0 - tau)
        target[key].data += tau * online[key].data


def store_transition(sac: SACState, transition: Transition) -> None:
    sac.buffer.append(transition)


def sac_update(sac: SACState) -> dict | None:
    """One gradient step on critics, actor, and temperature; soft-update targets.

    No-op (returns None) while the buffer holds fewer than batch_size
    transitions.
    """
    cfg = sac.config
    if len(sac.buffer) < cfg.batch_size:
        return None
    sac.updates += 1
    idx = [sac.rng.randbelow(len(sac.buffer)) for _ in range(cfg.batch_size)]
    batch = [sac.buffer[i] for i in idx]
    states = Tensor(np.stack([t.state for t in batch]))
    actions = Tensor(np.array([[t.action] for t in batch]))
    rewards = np.array([[t.reward] for t in batch])
    next_states = Tensor(np.stack([t.next_state for t in batch]))
    terminals = np.array([[float(t.terminal)] for t in batch])

    # critic targets from the frozen target critics at a fresh next action
    noise = sac.rng.normal_fill((cfg.batch_size, 1))
    next_action, next_logp = _sampled_action_and_logp(sac, next_states, noise)
    q1_next = critic_forward(sac.target1, "q1", next_states, next_action)
    q2_next = critic_forward(sac.target2, "q2", next_states, next_action)
    min_next = np.minimum(q1_next.data, q2_next.data)
    y = rewards + cfg.discount * (1.0 - terminals) * (
        min_next - sac.alpha * next_logp.data)

    sac.critic_opt.zero_grad()
    q1 = critic_forward(sac.critic1, "q1", states, actions)
    q2 = critic_forward(sac.critic2, "q2", states, actions)
    d1 = ad.sub(q1, Tensor(y))
    d2 = ad.sub(q2, Tensor(y))
    critic_loss = ad.add(ad.tmean(ad.mul(d1, d1)), ad.tmean(ad.mul(d2, d2)))
    critic_loss.backward()
    sac.critic_opt.step()

    # actor: maximize min-critic value plus entropy bonus
    sac.actor_opt.zero_grad()
    noise = sac.rng.normal_fill((cfg.batch_size, 1))
    new_action, logp = _sampled_action_and_logp(sac, states, noise)
    q1_new = critic_forward(sac.critic1, "q1", states, new_action)
    q2_new = critic_forward(sac.critic2, "q2", states, new_action)
    use_q1 = (q1_new.data <= q2_new.data).astype(np.float64)
    min_q = ad.add(ad.mul(q1_new, Tensor(use_q1)),
                   ad.mul(q2_new, Tensor(1.0 - use_q1)))
    actor_loss = ad.tmean(ad.sub(ad.mul(logp, Tensor(sac.alpha)), min_q))
    actor_loss.backward()
    # actor step must not disturb critic grads: critics were just stepped,
    # and their grads from this backward pass are cleared next update
    sac.actor_opt.step()

    # temperature: move alpha toward the target entropy
    sac.alpha_opt.zero_grad()
    entropy_gap = Tensor(logp.data + cfg.target_entropy)    # detached
    alpha_loss = ad.tmean(ad.mul(entropy_gap, ad.mul(sac.log_alpha, Tensor(-1.0))))
    alpha_loss.backward()
    sac.alpha_opt.step()

    soft_update(sac.target1, sac.critic1, cfg.tau)
    soft_update(sac.target2, sac.critic2, cfg.tau)
    return {"critic_loss": critic_loss.item(), "actor_loss": actor_loss.item(),
            "alpha": sac.alpha}


def agent_step(sac: SACState, s_t: np.ndarray, r_t: float,
               s_prev: np.ndarray | None, lambda_prev: tuple | None,
               terminal: bool) -> tuple:
    """One protocol turn: store, maybe update, sample the next coefficient.

    `lambda_prev` is the (lambda, pre_squash) pair from the previous call;
    the first call (no prior action) stores nothing.  Returns the next
    (lambda, pre_squash) pair.
    """
    if s_prev is not None and lambda_prev is not None:
        store_transition(sac, Transition(
            state=np.asarray(s_prev, dtype=np.float64),
            action_pre=lambda_prev[1], action=lambda_prev[0],
            reward=float(r_t), next_state=np.asarray(s_t, dtype=np.float64),
            terminal=bool(terminal)))
        for _ in range(sac.config.updates_per_step):
            sac_update(sac)
    return sample_action(sac, s_t, stochastic=True)


class SacLambdaAgent:
    """Trainer-facing wrapper holding SACState plus the step protocol."""

    def __init__(self, config: SACConfig, seed: int = 0):
        self.sac = SACState(config, seed=seed)
        self._last = None     # (lambda, pre_squash) emitted previously

    def step(self, s_t, r_t, s_prev, terminal) -> float:
        self._last = agent_step(self.sac, s_t, r_t, s_prev, self._last, terminal)
        return self._last[0]

    def deterministic_lambda(self, state) -> float:
        return sample_action(self.sac, state, stochastic=False)[0]


class StaticLambdaAgent:
    """Constant-coefficient stand-in with the same step interface."""

    def __init__(self, value: float):
        self.value = float(value)

    def step(self, s_t, r_t, s_prev, terminal) -> float:
        return self.value

    def deterministic_lambda(self, state) -> float:
        return self.value
