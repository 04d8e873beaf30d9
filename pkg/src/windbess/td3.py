"""Twin-delayed deterministic policy gradient learner for both market agents.

One agent instance owns one actor, two critics, their target copies, Adam
optimizers, a replay buffer, and its own seeded random streams. The battery
agent additionally carries the capacity penalty: the actor loss adds
beta_l * mean(a_sum * 1(a_sum > 1)) on the decoded [0, 1] power heads, so
over-rating nominations are discouraged before the environment rescales them.

The training loop follows the delayed pattern: critics update every step once
the buffer holds a batch, the actor and all target networks update every
policy_delay-th step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import JointBiddingEnv
from .nn import Adam, Mlp, load_nets, save_nets


@dataclass(frozen=True)
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.01
    policy_delay: int = 2
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    warmup_steps: int = 1000
    explore_noise: float = 0.1
    smoothing_noise: float = 0.2
    smoothing_clip: float = 0.5
    target_smoothing: bool = True
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple[int, ...] = (256, 256)
    beta_l: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.policy_delay < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("policy_delay, batch_size and buffer_capacity must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be nonnegative")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray  # shape (n, 1)
    next_states: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO transition store backed by preallocated arrays."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros((capacity, 1))
        self.next_states = np.zeros((capacity, state_dim))
        self.ptr = 0
        self.size = 0

    def push(self, state, action, reward: float, next_state) -> None:
        i = self.ptr
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i, 0] = reward
        self.next_states[i] = next_state
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        if self.size < 1:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(
            self.states[idx].copy(),
            self.actions[idx].copy(),
            self.rewards[idx].copy(),
            self.next_states[idx].copy(),
        )


def capacity_penalty(
    actions: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean over-rating penalty and its gradient w.r.t. the raw actions.

    Power heads are the components after the mode head. Each decodes to
    (raw + 1)/2 in [0, 1]; the masked sum above 1 is penalized linearly with a
    strict inequality, so a sum of exactly 1 contributes nothing.
    """
    actions = np.atleast_2d(actions)
    mask = np.asarray(mask, dtype=np.float64)
    n = actions.shape[0]
    heads = (actions[:, 1 : 1 + mask.size] + 1.0) / 2.0
    a_sum = heads @ mask
    viol = a_sum > 1.0
    value = float(np.sum(a_sum[viol])) / n
    grad = np.zeros_like(actions)
    grad[:, 1 : 1 + mask.size] = (viol[:, None] * mask[None, :]) * (0.5 / n)
    return value, grad


class Td3Agent:
    """Actor plus twin critics for one of the two market agents.

    penalty_mask enables the capacity penalty (battery agent only): a 0/1 mask
    over the power heads matching the environment's scenario/coupling masks.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        cfg: Td3Config,
        seed: int,
        penalty_mask: np.ndarray | None = None,
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.cfg = cfg
        self.seed = seed
        self.penalty_mask = None if penalty_mask is None else np.asarray(penalty_mask, dtype=np.float64)
        if self.penalty_mask is not None and self.penalty_mask.size >= action_dim:
            raise ValueError("penalty mask must cover only the power heads")
        ss = np.random.SeedSequence(seed)
        (init_a, init_q1, init_q2, explore, sample, smooth) = (
            np.random.default_rng(s) for s in ss.spawn(6)
        )
        actor_sizes = (state_dim, *cfg.hidden, action_dim)
        critic_sizes = (state_dim + action_dim, *cfg.hidden, 1)
        self.actor = Mlp(actor_sizes, "tanh", init_a)
        self.q1 = Mlp(critic_sizes, "identity", init_q1)
        self.q2 = Mlp(critic_sizes, "identity", init_q2)
        self.target_actor = self.actor.copy()
        self.target_q1 = self.q1.copy()
        self.target_q2 = self.q2.copy()
        self.opt_actor = Adam(self.actor, cfg.actor_lr)
        self.opt_q1 = Adam(self.q1, cfg.critic_lr)
        self.opt_q2 = Adam(self.q2, cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, state_dim, action_dim)
        self._explore_rng = explore
        self._sample_rng = sample
        self._smooth_rng = smooth

    # ------------------------------------------------------------------ acting

    def act(self, state: np.ndarray, explore: bool) -> np.ndarray:
        """Deterministic policy output, plus exploration noise when training."""
        action = self.actor.forward(state)[0]
        if explore:
            action = action + self._explore_rng.normal(0.0, self.cfg.explore_noise, self.action_dim)
        return np.clip(action, -1.0, 1.0)

    def random_action(self) -> np.ndarray:
        return self._explore_rng.uniform(-1.0, 1.0, self.action_dim)

    # ---------------------------------------------------------------- learning

    def critic_target(self, batch: Batch) -> np.ndarray:
        """Bootstrap target y = r + gamma * min(Q1', Q2') at the smoothed
        target action."""
        a_next = self.target_actor.forward(batch.next_states)
        if self.cfg.target_smoothing and self.cfg.smoothing_noise > 0.0:
            noise = self._smooth_rng.normal(0.0, self.cfg.smoothing_noise, a_next.shape)
            noise = np.clip(noise, -self.cfg.smoothing_clip, self.cfg.smoothing_clip)
            a_next = np.clip(a_next + noise, -1.0, 1.0)
        x = np.concatenate([batch.next_states, a_next], axis=1)
        q_min = np.minimum(self.target_q1.forward(x), self.target_q2.forward(x))
        return batch.rewards + self.cfg.gamma * q_min

    def critic_grads(
        self, critic: Mlp, batch: Batch, targets: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """Half squared Bellman residual, averaged over the batch."""
        x = np.concatenate([batch.states, batch.actions], axis=1)
        pred, cache = critic.forward_cached(x)
        err = pred - targets
        loss = float(0.5 * np.mean(err * err))
        grads, _ = critic.backward(cache, err / err.shape[0])
        return loss, grads

    def critic_update(self, batch: Batch) -> float:
        targets = self.critic_target(batch)
        loss1, grads1 = self.critic_grads(self.q1, batch, targets)
        self.opt_q1.step(grads1)
        loss2, grads2 = self.critic_grads(self.q2, batch, targets)
        self.opt_q2.step(grads2)
        return 0.5 * (loss1 + loss2)

    def actor_grads(self, batch: Batch) -> tuple[float, list[np.ndarray]]:
        """Deterministic policy gradient through the first critic, plus the
        capacity penalty when a mask is set."""
        n = batch.states.shape[0]
        actions, a_cache = self.actor.forward_cached(batch.states)
        x = np.concatenate([batch.states, actions], axis=1)
        q, q_cache = self.q1.forward_cached(x)
        loss = -float(np.mean(q))
        upstream = np.full_like(q, -1.0 / n)
        _, dx = self.q1.backward(q_cache, upstream)
        d_action = dx[:, self.state_dim :]
        if self.penalty_mask is not None and self.cfg.beta_l > 0.0:
            pen, dpen = capacity_penalty(actions, self.penalty_mask)
            loss += self.cfg.beta_l * pen
            d_action = d_action + self.cfg.beta_l * dpen
        grads, _ = self.actor.backward(a_cache, d_action)
        return loss, grads

    def actor_update(self, batch: Batch) -> float:
        loss, grads = self.actor_grads(batch)
        self.opt_actor.step(grads)
        return loss

    def target_soft_update(self) -> None:
        """Polyak-average every target network toward its main network."""
        tau = self.cfg.tau
        for main, target in (
            (self.actor, self.target_actor),
            (self.q1, self.target_q1),
            (self.q2, self.target_q2),
        ):
            for (_, p_main), (_, p_tgt) in zip(main.param_blocks(), target.param_blocks()):
                p_tgt[...] = tau * p_main + (1.0 - tau) * p_tgt

    def sample_batch(self) -> Batch:
        return self.buffer.sample(self._sample_rng, self.cfg.batch_size)

    # ------------------------------------------------------------- persistence

    def nets(self) -> dict[str, Mlp]:
        return {
            "actor": self.actor,
            "q1": self.q1,
            "q2": self.q2,
            "target_actor": self.target_actor,
            "target_q1": self.target_q1,
            "target_q2": self.target_q2,
        }

    def save(self, path: str, meta: dict | None = None) -> None:
        info = {
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "seed": self.seed,
            "penalty_mask": None if self.penalty_mask is None else list(self.penalty_mask),
        }
        info.update(meta or {})
        save_nets(path, self.nets(), meta=info)

    def load_params(self, path: str) -> dict:
        nets, meta, _ = load_nets(path)
        for name, net in self.nets().items():
            stored = nets[name]
            if stored.sizes != net.sizes:
                raise ValueError(f"checkpoint net {name} has sizes {stored.sizes}, expected {net.sizes}")
            net.weights = [w.copy() for w in stored.weights]
            net.biases = [b.copy() for b in stored.biases]
        return meta


@dataclass
class EpisodeRecord:
    episode: int
    end_step: int
    steps: int
    wind_reward: float
    bess_reward: float


@dataclass
class TrainLog:
    episodes: list[EpisodeRecord] = field(default_factory=list)
    steps: int = 0


def train(
    env: JointBiddingEnv,
    wind_agent: Td3Agent,
    bess_agent: Td3Agent,
    steps: int,
) -> TrainLog:
    """Run the joint training loop for a fixed number of environment steps.

    Both agents act every interval. A battery bid rejected on energy limits is
    stored as the all-zero action the environment actually executed. Episode
    boundaries (and stream wrap-around) reset the environment.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    log = TrainLog()
    wind_state, bess_state = env.reset()
    ep_wind = 0.0
    ep_bess = 0.0
    ep_steps = 0
    episode = 0
    for t in range(1, steps + 1):
        if t <= wind_agent.cfg.warmup_steps:
            a_wind = wind_agent.random_action()
        else:
            a_wind = wind_agent.act(wind_state, explore=True)
        if t <= bess_agent.cfg.warmup_steps:
            a_bess = bess_agent.random_action()
        else:
            a_bess = bess_agent.act(bess_state, explore=True)
        out = env.step(a_wind, a_bess)
        stored_bess = np.zeros(bess_agent.action_dim) if out.settlement.bess_zeroed else a_bess
        wind_agent.buffer.push(wind_state, a_wind, out.r_wind, out.wind_state)
        bess_agent.buffer.push(bess_state, stored_bess, out.r_bess.total, out.bess_state)
        ep_wind += out.r_wind
        ep_bess += out.r_bess.total
        ep_steps += 1
        for agent in (wind_agent, bess_agent):
            if t > agent.cfg.warmup_steps and agent.buffer.size >= agent.cfg.batch_size:
                batch = agent.sample_batch()
                agent.critic_update(batch)
                if t % agent.cfg.policy_delay == 0:
                    agent.actor_update(batch)
                    agent.target_soft_update()
        if out.done:
            log.episodes.append(EpisodeRecord(episode, t, ep_steps, ep_wind, ep_bess))
            episode += 1
            ep_wind = ep_bess = 0.0
            ep_steps = 0
            wind_state, bess_state = env.reset()
        else:
            wind_state, bess_state = out.wind_state, out.bess_state
    log.steps = steps
    return log
