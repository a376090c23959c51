"""Double Deep Q-Learning agent with uniform experience replay.

Two networks: the online net ``q`` is trained every few decision steps, the
target net ``q_target`` is a periodic copy of it. Interaction reads only
``q_target``; the bootstrap target picks the next action with ``q`` and
values it with ``q_target``.

Rewards arrive one decision late: the transition for the action taken at
decision n is stored at decision n+1, once its reward and the next state
are known.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .mlp import MLP, Adam, huber, load_checkpoint, save_checkpoint
from .policies import DecisionContext, PlacementPolicy

__all__ = [
    "TrainSchedule",
    "epsilon",
    "act",
    "ReplayBuffer",
    "DDQLAgent",
    "DDQLPolicy",
    "TrainingCurve",
    "trailing_mean",
    "run_training",
]


@dataclass(frozen=True)
class TrainSchedule:
    total_train_steps: int = 150_000
    decay_fraction: float = 0.75
    eps_start: float = 1.0
    eps_end: float = 0.01
    train_period: int = 4  # decision steps
    target_period: int = 2000  # decision steps
    batch_size: int = 50
    gamma: float = 0.99
    capacity: int = 1_000_000
    prefill: int | None = None  # defaults to 10% of capacity
    lr: float = 2.5e-4
    hidden: tuple[int, ...] = (256, 128, 64)

    def __post_init__(self):
        if self.prefill is None:
            object.__setattr__(self, "prefill", self.capacity // 10)
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.total_train_steps < 0:
            raise ValueError("total_train_steps must be >= 0")
        if not 0.0 < self.decay_fraction <= 1.0:
            raise ValueError("decay_fraction must lie in (0, 1]")
        for name in ("train_period", "target_period", "batch_size", "capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0 <= self.prefill <= self.capacity:
            raise ValueError("prefill must lie in [0, capacity]")

    @classmethod
    def full(cls, **overrides) -> "TrainSchedule":
        """The complete schedule: the field defaults."""
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "TrainSchedule":
        base = dict(capacity=50_000, prefill=5_000, total_train_steps=15_000)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainSchedule":
        if name in ("full", "paper"):
            return cls.full(**overrides)
        if name == "desk":
            return cls.desk(**overrides)
        raise ValueError(f"unknown schedule preset {name!r}")

    @property
    def decay_steps(self) -> int:
        return math.floor(self.decay_fraction * self.total_train_steps)


def epsilon(train_step: int, sched: TrainSchedule) -> float:
    """Linear decay from eps_start to eps_end over the first decay_fraction of training."""
    end = sched.decay_steps
    if end <= 0 or train_step >= end:
        return sched.eps_end
    return sched.eps_start + (sched.eps_end - sched.eps_start) * train_step / end


def act(net: MLP, state: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over ``net``; ties go to the lowest action index."""
    n_actions = net.sizes[-1]
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(n_actions))
    return int(np.argmax(net.forward(state)))


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, dtype=np.float32):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim), dtype=dtype)
        self.next_states = np.zeros((capacity, state_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=dtype)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, state, action: int, reward: float, next_state) -> None:
        i = self.pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size < n:
            raise ValueError(f"buffer holds {self.size} transitions, batch needs {n}")
        return rng.integers(0, self.size, size=n)

    def sample(self, n: int, rng: np.random.Generator):
        idx = self.sample_indices(n, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


class DDQLAgent:
    """Agent state machine driven one decision at a time through :meth:`observe`.

    ``mode`` is ``"collect"`` (uniform random actions, transitions stored),
    ``"train"`` (epsilon-greedy, storing and training) or ``"eval"``
    (greedy, nothing stored).
    """

    def __init__(self, state_dim: int, n_actions: int, sched: TrainSchedule, seed: int = 0,
                 nets: tuple[MLP, MLP] | None = None, with_buffer: bool = True):
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.sched = sched
        self.seed = seed
        init_seq, act_seq, sample_seq = np.random.SeedSequence(seed).spawn(3)
        if nets is None:
            self.q = MLP.create([state_dim, *sched.hidden, n_actions], np.random.default_rng(init_seq))
            self.q_target = self.q.copy()
        else:
            self.q, self.q_target = nets
        self.adam = Adam(self.q.params(), lr=sched.lr)
        self.buffer = ReplayBuffer(sched.capacity, state_dim) if with_buffer else None
        self.act_rng = np.random.default_rng(act_seq)
        self.sample_rng = np.random.default_rng(sample_seq)
        self.mode = "eval"
        self.decision_steps = 0  # counted in train mode only
        self.train_steps = 0
        self.losses: list[float] = []
        self.returns: list[float] = []
        self.sync_steps: list[int] = []
        self._prev: tuple[np.ndarray, int] | None = None
        self._episode_return = 0.0

    @property
    def training_done(self) -> bool:
        return self.train_steps >= self.sched.total_train_steps

    def epsilon(self) -> float:
        if self.mode == "collect":
            return 1.0
        if self.mode == "train":
            return epsilon(self.train_steps, self.sched)
        return 0.0

    def observe(self, state: np.ndarray, reward: float) -> int:
        """One decision step: store the previous transition, maybe train, then act."""
        if self._prev is not None:
            self._episode_return += reward
            if self.mode != "eval":
                prev_state, prev_action = self._prev
                self.buffer.add(prev_state, prev_action, reward, state)
        if self.mode == "train" and not self.training_done:
            self.decision_steps += 1
            sched = self.sched
            if self.decision_steps % sched.train_period == 0 and len(self.buffer) >= sched.batch_size:
                self.train_batch()
            if self.decision_steps % sched.target_period == 0:
                self.sync()
        action = act(self.q_target, state, self.epsilon(), self.act_rng)
        self._prev = (state, action)
        return action

    def end_episode(self) -> None:
        if self._prev is not None:
            self.returns.append(self._episode_return)
        self._prev = None
        self._episode_return = 0.0

    def sync(self) -> None:
        self.q_target.load_from(self.q)
        self.sync_steps.append(self.decision_steps)

    def train_batch(self) -> float:
        sched = self.sched
        s, a, r, s2 = self.buffer.sample(sched.batch_size, self.sample_rng)
        loss = double_q_step(self.q, self.q_target, self.adam, s, a, r, s2, sched.gamma)
        self.train_steps += 1
        self.losses.append(loss)
        return loss

    # -- persistence ---------------------------------------------------

    def save(self, path, **meta) -> None:
        info = dict(state_dim=self.state_dim, n_actions=self.n_actions,
                    train_steps=self.train_steps, seed=self.seed,
                    schedule=";".join(f"{k}={v}" for k, v in asdict(self.sched).items()))
        info.update(meta)
        save_checkpoint(path, {"online": self.q, "target": self.q_target}, info)

    @classmethod
    def load(cls, path) -> tuple["DDQLAgent", dict[str, str]]:
        nets, meta = load_checkpoint(path)
        sched = _parse_schedule(meta["schedule"])
        agent = cls(int(meta["state_dim"]), int(meta["n_actions"]), sched,
                    seed=int(meta["seed"]), nets=(nets["online"], nets["target"]),
                    with_buffer=False)
        agent.train_steps = int(meta["train_steps"])
        return agent, meta


def double_q_step(q: MLP, q_target: MLP, adam: Adam, s, a, r, s2, gamma: float) -> float:
    """One Adam update of ``q`` on a batch; returns the mean Huber loss."""
    n = len(a)
    rows = np.arange(n)
    q_s, acts = q.forward_cache(s)
    if gamma > 0:
        a_star = np.argmax(q.forward(s2), axis=1)
        y = r + gamma * q_target.forward(s2)[rows, a_star]
    else:
        y = r.astype(q_s.dtype)
    loss, grad = huber(q_s[rows, a], y)
    dws, dbs = q.backward(acts, a, grad / n)
    grads = []
    for dw, db in zip(dws, dbs):
        grads += [dw, db]
    adam.step(q.params(), grads)
    if not q.all_finite():
        raise FloatingPointError("non-finite parameter after update")
    return float(np.mean(loss))


def _parse_schedule(text: str) -> TrainSchedule:
    kw = {}
    for item in text.split(";"):
        k, _, v = item.partition("=")
        if k == "hidden":
            kw[k] = tuple(int(x) for x in v.strip("()").split(",") if x.strip())
        elif k in ("decay_fraction", "eps_start", "eps_end", "gamma", "lr"):
            kw[k] = float(v)
        else:
            kw[k] = int(v)
    return TrainSchedule(**kw)


class DDQLPolicy(PlacementPolicy):
    """Adapts an agent to the placement interface.

    ``encoder`` turns a context into the state vector. Without a
    ``rewarder`` the engine's queue-census reward is passed through; with one
    (privacy-lacking variants) the reward is rebuilt from the privileged view.
    """

    def __init__(self, agent: DDQLAgent, encoder, rewarder=None, name: str = "ddql",
                 privileged: bool | None = None):
        self.agent = agent
        self.encoder = encoder
        self.rewarder = rewarder
        self.name = name
        self.privileged = (rewarder is not None) if privileged is None else privileged

    def decide(self, ctx: DecisionContext, delayed_reward: float) -> int:
        reward = delayed_reward if self.rewarder is None else self.rewarder.reward(ctx)
        state = self.encoder.encode(ctx)
        action = self.agent.observe(state, reward)
        self.encoder.commit(action)
        node = self.encoder.fog_ids[action]
        if self.rewarder is not None:
            self.rewarder.commit(ctx, node)
        return node

    def end_episode(self) -> None:
        self.agent.end_episode()
        self.encoder.reset()
        if self.rewarder is not None:
            self.rewarder.reset()


def trailing_mean(values, window: int = 10) -> list[float]:
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1):i + 1]
        out.append(float(sum(chunk) / len(chunk)))
    return out


@dataclass
class TrainingCurve:
    returns: list[float]  # per training episode
    prefill_episodes: int

    @property
    def moving_average(self) -> list[float]:
        return trailing_mean(self.returns, 10)


def run_training(play_episode: Callable[[int], object], agent: DDQLAgent) -> TrainingCurve:
    """Prefill the buffer with random play, then train until the step budget is spent.

    ``play_episode(i)`` must run episode ``i`` end to end, feeding decisions
    to ``agent`` and calling ``agent.end_episode()`` at the end.
    """
    sched = agent.sched
    if sched.total_train_steps == 0:
        agent.mode = "eval"
        return TrainingCurve([], 0)
    episode = 0
    agent.mode = "collect"
    while len(agent.buffer) < max(sched.prefill, sched.batch_size):
        before = len(agent.buffer)
        play_episode(episode)
        episode += 1
        if len(agent.buffer) == before:
            raise RuntimeError("prefill episode produced no transitions")
    prefill_episodes = episode
    n_before = len(agent.returns)
    agent.mode = "train"
    while not agent.training_done:
        before = agent.decision_steps
        play_episode(episode)
        episode += 1
        if agent.decision_steps == before:
            raise RuntimeError("training episode produced no decisions")
    agent.mode = "eval"
    return TrainingCurve(list(agent.returns[n_before:]), prefill_episodes)
