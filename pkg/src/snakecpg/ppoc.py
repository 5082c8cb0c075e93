"""Option-critic PPO over the CPG-driven snake (PPOC), desk scale.

The policy observes the goal-relative state plus its own previous action and
option, and outputs (a) a diagonal-Gaussian action that decodes into the
exclusive tonic inputs, (b) option values and a termination probability over
a discrete set of frequency ratios K_f (the options), and (c) a state value
for GAE.  Variants:

    ppoc-cpg       tonic-input actions through the CPG, c = 0
    foc-ppoc-cpg   same, with the free-oscillation constraint c = 0.75
    vanilla-ppo    actions drive the actuators directly (tanh -> psi), no CPG

Training is clipped-surrogate PPO with GAE; options stay frozen at K_f = 1
until the curriculum and reward plateau, then the termination head and the
option values take over (epsilon-greedy over Q on termination).  Everything
is seeded and single-threaded, so runs are reproducible.
"""

from __future__ import annotations

import copy
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .cpg import (IntegrationDivergedError, OscillatorParams, TonicInputs,
                  decode_action)
from .robot import (CpgRobotSession, Goal, Observation, PhysicsParams, RobotState,
                    observe, reset as robot_reset, step_robot_sequence)
from .tasks import (CurriculumLevel, EpisodeConfig, EpisodeLog, Outcome,
                    RewardConfig, StatusTracker, randomize_domain, reward,
                    sample_goal, smoke_curriculum, validate_curriculum)

__all__ = [
    "TrainConfig",
    "PolicyNet",
    "PolicyCheckpoint",
    "GoalEnv",
    "TorchPolicy",
    "train",
    "TrainResult",
    "rollout",
    "make_waypoints",
    "steering_study",
    "dominant_frequency",
]

OBS_DIM = 8
ACT_DIM = 4
VARIANTS = ("ppoc-cpg", "foc-ppoc-cpg", "vanilla-ppo")
CHECKPOINT_FORMAT = 1


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    variant: str = "foc-ppoc-cpg"
    seed: int = 0
    hidden: tuple = (128, 128)
    lr: float = 5e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    horizon: int = 1024            # env steps per policy update, across workers
    n_envs: int = 4
    max_episodes: int = 400
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    q_coef: float = 0.25
    termination_coef: float = 1.0
    termination_reg: float = 0.01  # deliberation cost added to the option advantage
    max_grad_norm: float = 0.5
    init_log_std: float = -0.7
    option_kf: tuple = (0.5, 0.7, 0.85, 1.0)
    frozen_kf: float = 1.0
    option_epsilon: float = 0.1
    unfreeze_plateau_episodes: int = 120   # no promotion for this long -> unfreeze
    early_stop_success: float | None = None  # stop once final level clears this rate
    randomize: bool = True
    curriculum: tuple = field(default_factory=smoke_curriculum)
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)
    episode_cfg: EpisodeConfig = field(default_factory=EpisodeConfig)
    params: OscillatorParams | None = None
    phys: PhysicsParams | None = None
    checkpoint_every: int = 0      # episodes; 0 disables periodic checkpoints
    out_dir: str | None = None

    def resolve(self) -> tuple[OscillatorParams, PhysicsParams]:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")
        params = self.params or OscillatorParams()
        if self.variant == "foc-ppoc-cpg":
            params = params.replace(c=0.75)
        elif self.variant == "ppoc-cpg":
            params = params.replace(c=0.0)
        phys = self.phys or PhysicsParams()
        validate_curriculum(self.curriculum)
        return params, phys


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

class PolicyNet(nn.Module):
    """Shared-trunk MLP with action, value, option-value and termination heads."""

    def __init__(self, n_options: int, hidden=(128, 128), init_log_std=-0.7):
        super().__init__()
        in_dim = OBS_DIM + ACT_DIM + n_options
        layers = []
        last = in_dim
        for h in hidden:
            layers += [nn.Linear(last, h), nn.Tanh()]
            last = h
        self.trunk = nn.Sequential(*layers)
        self.mu = nn.Linear(last, ACT_DIM)
        self.log_std = nn.Parameter(torch.full((ACT_DIM,), float(init_log_std)))
        self.value = nn.Linear(last, 1)
        self.q_options = nn.Linear(last, n_options)
        self.termination = nn.Linear(last, n_options)
        self.n_options = n_options
        nn.init.orthogonal_(self.mu.weight, gain=0.01)
        nn.init.zeros_(self.mu.bias)

    def forward(self, x):
        h = self.trunk(x)
        return (self.mu(h), self.log_std, self.value(h).squeeze(-1),
                self.q_options(h), torch.sigmoid(self.termination(h)))


class RunningNorm:
    """Streaming mean/variance used to whiten the 8 observation features."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4

    def update(self, x: np.ndarray):
        x = np.atleast_2d(x)
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        b_count = x.shape[0]
        delta = b_mean - self.mean
        tot = self.count + b_count
        self.mean = self.mean + delta * b_count / tot
        m_a = self.var * self.count
        m_b = b_var * b_count
        self.var = (m_a + m_b + delta ** 2 * self.count * b_count / tot) / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -10.0, 10.0)

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": self.count}

    @classmethod
    def from_state(cls, st: dict) -> "RunningNorm":
        rn = cls(len(st["mean"]))
        rn.mean = np.asarray(st["mean"], dtype=np.float64).copy()
        rn.var = np.asarray(st["var"], dtype=np.float64).copy()
        rn.count = float(st["count"])
        return rn


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------

class GoalEnv:
    """One goal-reaching worker: CPG + surrogate + curriculum goal sampling."""

    def __init__(self, params: OscillatorParams, phys: PhysicsParams,
                 curriculum, reward_cfg: RewardConfig, episode_cfg: EpisodeConfig,
                 rng: np.random.Generator, randomize: bool = True,
                 vanilla: bool = False, pose=(0.0, 0.0, 0.0)):
        self.base_params = params
        self.base_phys = phys
        self.curriculum = list(curriculum)
        self.reward_cfg = reward_cfg
        self.episode_cfg = episode_cfg
        self.rng = rng
        self.randomize = randomize
        self.vanilla = vanilla
        self.pose = pose
        self.level_idx = 0
        self.session: CpgRobotSession | None = None
        self.robot: RobotState | None = None

    @property
    def level(self) -> CurriculumLevel:
        return self.curriculum[self.level_idx]

    @property
    def reward_radii(self) -> list[float]:
        return [lvl.radius for lvl in self.curriculum[:self.level_idx + 1]]

    def set_level(self, idx: int):
        self.level_idx = int(np.clip(idx, 0, len(self.curriculum) - 1))

    def reset(self, goal: Goal | None = None) -> Observation:
        phys = (randomize_domain(self.rng, base=self.base_phys)
                if self.randomize else self.base_phys)
        self.phys = phys
        if self.vanilla:
            self.robot = robot_reset(phys, self.pose)
            self.session = None
        else:
            self.session = CpgRobotSession(self.base_params, phys, self.pose)
            self.robot = self.session.robot
        head, heading = self.robot.head, self.robot.heading
        self.goal = goal or sample_goal(self.level, head, heading, self.rng)
        self.tracker = StatusTracker(self.episode_cfg, self.goal.radius)
        self.prev_obs = observe(self.robot, self.goal, phys, None,
                                self.base_params.control_dt)
        return self.prev_obs

    def set_option_kf(self, k_f: float):
        if self.session is not None:
            self.session.params = self.session.params.replace(k_f=float(k_f))

    def retarget(self, goal: Goal):
        """Swap in a new goal without resetting the robot (waypoint following)."""
        self.goal = goal
        self.robot.origin = self.robot.head.copy()
        if self.session is not None:
            self.session.robot.origin = self.session.robot.head.copy()
        self.tracker = StatusTracker(self.episode_cfg, goal.radius)
        self.prev_obs = observe(self.robot, self.goal, self.phys, None,
                                self.base_params.control_dt)
        return self.prev_obs

    def step(self, action: np.ndarray):
        action = np.asarray(action, dtype=np.float64)
        if self.vanilla:
            psi_cmd = np.tanh(action)
            n_sub = int(round(self.base_params.control_dt / self.phys.dt))
            seq = np.tile(psi_cmd, (n_sub, 1))
            self.robot = step_robot_sequence(self.robot, seq, self.phys)
            psi_last, psi_avg = psi_cmd, psi_cmd.copy()
            u_e = np.full(ACT_DIM, np.nan)
        else:
            u = decode_action(action)
            psi_seg = self.session.step_control(u)
            self.robot = self.session.robot
            psi_last, psi_avg = psi_seg[-1], psi_seg.mean(axis=0)
            u_e = u.u_e
        obs = observe(self.robot, self.goal, self.phys, self.prev_obs,
                      self.base_params.control_dt)
        r = reward(obs, self.reward_radii, self.reward_cfg)
        outcome = self.tracker.update(obs.rho_g, obs.v_g, obs.speed)
        self.prev_obs = obs
        info = {"psi": psi_last, "psi_avg": psi_avg, "u_e": u_e,
                "head": self.robot.head.copy(), "v_g": obs.v_g}
        return obs, r, outcome, info


# ---------------------------------------------------------------------------
# checkpoint and policy wrapper
# ---------------------------------------------------------------------------

@dataclass
class PolicyCheckpoint:
    """Learned weights plus everything needed to run them."""

    variant: str
    hidden: tuple
    option_kf: tuple
    state_dict: dict
    normalizer: dict
    metadata: dict = field(default_factory=dict)
    format_version: int = CHECKPOINT_FORMAT

    def save(self, path):
        payload = {"format_version": self.format_version, "variant": self.variant,
                   "hidden": tuple(self.hidden), "option_kf": tuple(self.option_kf),
                   "state_dict": self.state_dict, "normalizer": self.normalizer,
                   "metadata": self.metadata}
        torch.save(payload, str(path))

    @classmethod
    def load(cls, path) -> "PolicyCheckpoint":
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
        version = payload.get("format_version")
        if version != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {version!r}")
        return cls(variant=payload["variant"], hidden=tuple(payload["hidden"]),
                   option_kf=tuple(payload["option_kf"]),
                   state_dict=payload["state_dict"], normalizer=payload["normalizer"],
                   metadata=payload.get("metadata", {}))

    def build_net(self) -> PolicyNet:
        net = PolicyNet(n_options=len(self.option_kf), hidden=self.hidden)
        net.load_state_dict(self.state_dict)
        net.eval()
        return net


class TorchPolicy:
    """Deterministic (or sampled) evaluator around a checkpoint."""

    def __init__(self, ckpt: PolicyCheckpoint, stochastic: bool = False,
                 seed: int = 0):
        self.ckpt = ckpt
        self.net = ckpt.build_net()
        self.norm = RunningNorm.from_state(ckpt.normalizer)
        self.option_kf = tuple(ckpt.option_kf)
        self.n_options = len(self.option_kf)
        self.stochastic = stochastic
        self.rng = np.random.default_rng(seed)
        self.vanilla = ckpt.variant == "vanilla-ppo"
        self.begin()

    def begin(self):
        self.prev_action = np.zeros(ACT_DIM)
        self.option = int(np.argmax([abs(k - 1.0) < 1e-9 for k in self.option_kf])) \
            if 1.0 in self.option_kf else 0

    @property
    def current_kf(self) -> float:
        return self.option_kf[self.option]

    def _input(self, obs_vec: np.ndarray) -> torch.Tensor:
        onehot = np.zeros(self.n_options)
        onehot[self.option] = 1.0
        x = np.concatenate([self.norm.normalize(obs_vec),
                            np.clip(self.prev_action, -5, 5), onehot])
        return torch.as_tensor(x, dtype=torch.float32).unsqueeze(0)

    def act(self, obs: Observation) -> np.ndarray:
        with torch.no_grad():
            mu, log_std, _, q, beta = self.net(self._input(obs.as_vector()))
        # evaluate termination of the current option, then act
        if self.stochastic:
            if self.rng.uniform() < float(beta[0, self.option]):
                self.option = int(torch.argmax(q[0]).item())
            noise = self.rng.standard_normal(ACT_DIM)
            action = mu[0].numpy() + np.exp(log_std.numpy()) * noise
        else:
            if float(beta[0, self.option]) > 0.5:
                self.option = int(torch.argmax(q[0]).item())
            action = mu[0].numpy()
        self.prev_action = action.astype(np.float64)
        return self.prev_action


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint: PolicyCheckpoint
    episodes: list            # per-episode metric dicts
    level_reached: int        # highest curriculum level index reached (1-based)
    final_success_rate: float
    aborted: bool = False


class _Worker:
    """Collection-side state of one environment."""

    def __init__(self, env: GoalEnv, frozen_option: int):
        self.env = env
        self.obs = env.reset()
        self.prev_action = np.zeros(ACT_DIM)
        self.option = frozen_option
        self.prev_option = frozen_option
        self.ep_reward = 0.0
        self.ep_steps = 0


def train(cfg: TrainConfig) -> TrainResult:
    """Run curriculum PPOC training; returns the checkpoint and episode history.

    Non-finite losses abort the run and return the last good checkpoint
    (`result.aborted` is set).
    """
    params, phys = cfg.resolve()
    torch.manual_seed(cfg.seed)
    torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)

    vanilla = cfg.variant == "vanilla-ppo"
    option_kf = (1.0,) if vanilla else tuple(cfg.option_kf)
    n_options = len(option_kf)
    if cfg.frozen_kf in option_kf:
        frozen_option = option_kf.index(cfg.frozen_kf)
    else:
        frozen_option = 0
    net = PolicyNet(n_options=n_options, hidden=cfg.hidden,
                    init_log_std=cfg.init_log_std)
    optim = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    norm = RunningNorm(OBS_DIM)

    envs = [GoalEnv(params, phys, cfg.curriculum, cfg.reward_cfg, cfg.episode_cfg,
                    rng=np.random.default_rng(rng.integers(2 ** 63)),
                    randomize=cfg.randomize, vanilla=vanilla)
            for _ in range(cfg.n_envs)]
    workers = [_Worker(env, frozen_option) for env in envs]
    for w in workers:
        w.env.set_option_kf(option_kf[w.option])

    level_idx = 0
    window: deque = deque(maxlen=cfg.curriculum[level_idx].window)
    episodes: list[dict] = []
    frozen = not vanilla and True
    last_promotion_episode = 0
    level_reached = cfg.curriculum[0].index
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    metrics_fh = None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out_dir / "metrics.ndjson", "w")

    def make_checkpoint() -> PolicyCheckpoint:
        return PolicyCheckpoint(
            variant=cfg.variant, hidden=tuple(cfg.hidden), option_kf=option_kf,
            state_dict=copy.deepcopy(net.state_dict()), normalizer=norm.state(),
            metadata={"seed": cfg.seed, "episodes": len(episodes),
                      "level_reached": level_reached,
                      "level_index": level_idx, "frozen": frozen})

    last_good = make_checkpoint()
    sigma_rate = lambda: (sum(window) / len(window)) if window else 0.0  # noqa: E731
    stop = False
    aborted = False

    def build_input(w: _Worker) -> np.ndarray:
        onehot = np.zeros(n_options)
        onehot[w.option] = 1.0
        return np.concatenate([norm.normalize(w.obs.as_vector()),
                               np.clip(w.prev_action, -5, 5), onehot])

    while not stop and len(episodes) < cfg.max_episodes:
        # ---------------- collect ----------------
        buf_inp, buf_act, buf_logp, buf_val = [], [], [], []
        buf_rew, buf_done, buf_opt, buf_prev_opt = [], [], [], []
        per_env_slices = [[] for _ in workers]
        for t in range(cfg.horizon):
            w = workers[t % len(workers)]
            inp = build_input(w)
            norm.update(w.obs.as_vector())
            x = torch.as_tensor(inp, dtype=torch.float32).unsqueeze(0)
            with torch.no_grad():
                mu, log_std, value, q, beta = net(x)
                w.prev_option = w.option
                if not frozen and not vanilla:
                    if rng.uniform() < float(beta[0, w.option]):
                        if rng.uniform() < cfg.option_epsilon:
                            w.option = int(rng.integers(n_options))
                        else:
                            w.option = int(torch.argmax(q[0]).item())
                        w.env.set_option_kf(option_kf[w.option])
                std = torch.exp(log_std)
                noise = torch.as_tensor(rng.standard_normal(ACT_DIM),
                                        dtype=torch.float32)
                action = mu[0] + std * noise
                logp = (-0.5 * (((action - mu[0]) / std) ** 2
                                + 2 * log_std + math.log(2 * math.pi))).sum()

            act_np = action.numpy().astype(np.float64)
            try:
                obs, r, outcome, _ = w.env.step(act_np)
            except IntegrationDivergedError:
                obs, r, outcome = w.env.reset(), 0.0, Outcome.TIMEOUT
            done = outcome is not None

            buf_inp.append(inp)
            buf_act.append(act_np)
            buf_logp.append(float(logp))
            buf_val.append(float(value[0]))
            buf_rew.append(r)
            buf_done.append(done)
            buf_opt.append(w.option)
            buf_prev_opt.append(w.prev_option)
            per_env_slices[t % len(workers)].append(len(buf_inp) - 1)

            w.ep_reward += r
            w.ep_steps += 1
            w.prev_action = act_np
            w.obs = obs
            if done:
                success = outcome == Outcome.SUCCESS
                window.append(1.0 if success else 0.0)
                rec = {"episode": len(episodes), "level": cfg.curriculum[level_idx].index,
                       "outcome": outcome.value, "steps": w.ep_steps,
                       "mean_reward": w.ep_reward / max(w.ep_steps, 1),
                       "success_rate": sigma_rate(), "frozen": frozen}
                episodes.append(rec)
                if metrics_fh:
                    metrics_fh.write(json.dumps(rec) + "\n")
                # curriculum promotion on the sigma window
                lvl = cfg.curriculum[level_idx]
                if (len(window) == window.maxlen and sigma_rate() >= lvl.sigma
                        and level_idx < len(cfg.curriculum) - 1):
                    level_idx += 1
                    level_reached = max(level_reached, cfg.curriculum[level_idx].index)
                    window = deque(maxlen=cfg.curriculum[level_idx].window)
                    last_promotion_episode = len(episodes)
                    for ww in workers:
                        ww.env.set_level(level_idx)
                if (cfg.early_stop_success is not None
                        and level_idx == len(cfg.curriculum) - 1
                        and len(window) == window.maxlen
                        and sigma_rate() >= cfg.early_stop_success):
                    stop = True
                if (frozen and not vanilla and cfg.unfreeze_plateau_episodes > 0
                        and len(episodes) - last_promotion_episode
                        >= cfg.unfreeze_plateau_episodes
                        and level_idx < len(cfg.curriculum) - 1):
                    frozen = False
                if cfg.checkpoint_every and out_dir \
                        and len(episodes) % cfg.checkpoint_every == 0:
                    make_checkpoint().save(out_dir / f"ckpt_ep{len(episodes)}.pt")
                w.ep_reward = 0.0
                w.ep_steps = 0
                w.obs = w.env.reset()
                w.prev_action = np.zeros(ACT_DIM)
                w.option = frozen_option if frozen else w.option
                w.env.set_option_kf(option_kf[w.option])
                if len(episodes) >= cfg.max_episodes or stop:
                    break

        # ---------------- GAE ----------------
        n = len(buf_inp)
        adv = np.zeros(n)
        returns = np.zeros(n)
        inp_t = torch.as_tensor(np.array(buf_inp), dtype=torch.float32)
        vals = np.array(buf_val)
        rews = np.array(buf_rew)
        dones = np.array(buf_done, dtype=bool)
        for env_i, sl in enumerate(per_env_slices):
            if not sl:
                continue
            idx = np.array(sl)
            w = workers[env_i]
            with torch.no_grad():
                _, _, boot, _, _ = net(torch.as_tensor(
                    build_input(w), dtype=torch.float32).unsqueeze(0))
            next_v = float(boot[0])
            gae = 0.0
            for k in range(len(idx) - 1, -1, -1):
                i = idx[k]
                nv = 0.0 if dones[i] else (next_v if k == len(idx) - 1
                                           else vals[idx[k + 1]])
                nonterm = 0.0 if dones[i] else 1.0
                delta = rews[i] + cfg.gamma * nv * nonterm - vals[i]
                gae = delta + cfg.gamma * cfg.gae_lambda * nonterm * gae
                adv[i] = gae
                returns[i] = adv[i] + vals[i]

        act_t = torch.as_tensor(np.array(buf_act), dtype=torch.float32)
        old_logp_t = torch.as_tensor(np.array(buf_logp), dtype=torch.float32)
        adv_t = torch.as_tensor((adv - adv.mean()) / (adv.std() + 1e-8),
                                dtype=torch.float32)
        ret_t = torch.as_tensor(returns, dtype=torch.float32)
        opt_t = torch.as_tensor(np.array(buf_opt), dtype=torch.long)
        prev_opt_t = torch.as_tensor(np.array(buf_prev_opt), dtype=torch.long)

        # ---------------- update ----------------
        diverged = False
        idx_all = np.arange(n)
        for _ in range(cfg.epochs):
            rng.shuffle(idx_all)
            for start in range(0, n, cfg.minibatch):
                mb = idx_all[start:start + cfg.minibatch]
                mb_t = torch.as_tensor(mb, dtype=torch.long)
                mu, log_std, value, q, beta = net(inp_t[mb_t])
                std = torch.exp(log_std)
                logp = (-0.5 * (((act_t[mb_t] - mu) / std) ** 2
                                + 2 * log_std + math.log(2 * math.pi))).sum(-1)
                ratio = torch.exp(logp - old_logp_t[mb_t])
                surr1 = ratio * adv_t[mb_t]
                surr2 = torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv_t[mb_t]
                policy_loss = -torch.min(surr1, surr2).mean()
                value_loss = ((value - ret_t[mb_t]) ** 2).mean()
                q_taken = q.gather(1, opt_t[mb_t].unsqueeze(1)).squeeze(1)
                q_loss = ((q_taken - ret_t[mb_t]) ** 2).mean()
                entropy = (log_std + 0.5 * math.log(2 * math.pi * math.e)).sum()
                loss = (policy_loss + cfg.value_coef * value_loss
                        + cfg.q_coef * q_loss - cfg.entropy_coef * entropy)
                if not frozen and not vanilla:
                    with torch.no_grad():
                        opt_adv = (q.gather(1, prev_opt_t[mb_t].unsqueeze(1)).squeeze(1)
                                   - value + cfg.termination_reg)
                    beta_prev = beta.gather(1, prev_opt_t[mb_t].unsqueeze(1)).squeeze(1)
                    loss = loss + cfg.termination_coef * (beta_prev * opt_adv).mean()
                if not torch.isfinite(loss):
                    diverged = True
                    break
                optim.zero_grad()
                loss.backward()
                nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
                optim.step()
            if diverged:
                break
        if diverged:
            aborted = True
            break
        last_good = make_checkpoint()

    if metrics_fh:
        metrics_fh.close()
    final = last_good if aborted else make_checkpoint()
    if out_dir:
        final.save(out_dir / "checkpoint.pt")
    return TrainResult(checkpoint=final, episodes=episodes,
                       level_reached=level_reached,
                       final_success_rate=sigma_rate(), aborted=aborted)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def make_waypoints(kind: str, pose=(0.0, 0.0, 0.0), distance: float = 1.0,
                   angle_deg: float = 0.0, legs: int = 4,
                   radius: float = 0.175) -> list[Goal]:
    """Way-point scripts: a single offset goal, a zigzag, or a square path."""
    x, y, heading = pose
    pos = np.array([x, y], dtype=np.float64)
    goals = []
    if kind == "single":
        ang = heading + math.radians(angle_deg)
        goals.append(Goal(pos + distance * np.array([math.cos(ang), math.sin(ang)]),
                          radius))
    elif kind == "zigzag":
        zig = abs(angle_deg) if angle_deg else 50.0
        for k in range(legs):
            ang = heading + math.radians(zig if k % 2 == 0 else -zig)
            pos = pos + distance * np.array([math.cos(ang), math.sin(ang)])
            goals.append(Goal(pos.copy(), radius))
    elif kind == "square":
        for k in range(legs):
            ang = heading + k * math.pi / 2.0
            pos = pos + distance * np.array([math.cos(ang), math.sin(ang)])
            goals.append(Goal(pos.copy(), radius))
    else:
        raise ValueError(f"unknown waypoint script {kind!r}")
    return goals


def rollout(policy, phys: PhysicsParams, goals, params: OscillatorParams | None = None,
            reward_cfg: RewardConfig | None = None,
            episode_cfg: EpisodeConfig | None = None,
            seed: int = 0, randomize: bool = False,
            pose=(0.0, 0.0, 0.0)) -> list[EpisodeLog]:
    """Drive the policy through a list of way-point goals, one log per leg.

    The robot carries its pose from leg to leg; each leg ends on any terminal
    condition.  Deterministic for a fixed seed and policy.
    """
    params = params or OscillatorParams()
    reward_cfg = reward_cfg or RewardConfig()
    episode_cfg = episode_cfg or EpisodeConfig()
    rng = np.random.default_rng(seed)
    goals = list(goals)
    env = GoalEnv(params, phys, curriculum=smoke_curriculum(), reward_cfg=reward_cfg,
                  episode_cfg=episode_cfg, rng=rng, randomize=randomize,
                  vanilla=getattr(policy, "vanilla", False), pose=pose)
    policy.begin()
    obs = env.reset(goal=goals[0])
    env.set_option_kf(policy.current_kf)
    logs = []
    for leg, goal in enumerate(goals):
        if leg > 0:
            obs = env.retarget(goal)
        rows = {k: [] for k in ("obs", "act", "optn", "rew", "u_e", "psi",
                                "psi_avg", "head", "v_g")}
        outcome = None
        while outcome is None:
            action = policy.act(obs)
            env.set_option_kf(policy.current_kf)
            obs, r, outcome, info = env.step(action)
            rows["obs"].append(obs.as_vector())
            rows["act"].append(action)
            rows["optn"].append(getattr(policy, "option", -1))
            rows["rew"].append(r)
            rows["u_e"].append(info["u_e"])
            rows["psi"].append(info["psi"])
            rows["psi_avg"].append(info["psi_avg"])
            rows["head"].append(info["head"])
            rows["v_g"].append(info["v_g"])
        logs.append(EpisodeLog(
            observations=np.array(rows["obs"]), actions=np.array(rows["act"]),
            options=np.array(rows["optn"]), rewards=np.array(rows["rew"]),
            u_e=np.array(rows["u_e"]), psi=np.array(rows["psi"]),
            psi_avg=np.array(rows["psi_avg"]), head=np.array(rows["head"]),
            v_g=np.array(rows["v_g"]), outcome=outcome,
            level=env.level.index, goal=goal, seed=seed))
    return logs


def dominant_frequency(signal: np.ndarray, dt: float) -> float:
    """Peak of the amplitude spectrum (rad/s), ignoring the mean."""
    x = np.asarray(signal, dtype=np.float64)
    x = x - x.mean()
    spec = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(len(x), d=dt)
    if len(spec) < 2:
        return 0.0
    k = 1 + int(np.argmax(spec[1:]))
    return float(2.0 * math.pi * freqs[k])


def steering_study(policy, phys: PhysicsParams, params: OscillatorParams | None = None,
                   angles_deg=(-90, -60, -30, 30, 60, 90), distance: float = 1.0,
                   trials: int = 5, seed: int = 0, max_steps: int = 600,
                   radius: float = 0.175):
    """Goal-bearing steering probe: head-unit tonic bias vs actuation bias.

    Runs `trials` rollouts per goal angle (domain randomization gives the
    trial-to-trial spread), then regresses the episode-average actuation bias
    of the head unit on the tonic-input bias.  Returns per-trial rows,
    per-angle means, and the (slope, intercept, r2) of the regression.
    """
    from .analysis import linear_fit

    params = params or OscillatorParams()
    episode_cfg = EpisodeConfig(max_steps=max_steps)
    rows = []
    for angle in angles_deg:
        for trial in range(trials):
            goals = make_waypoints("single", distance=distance, angle_deg=angle,
                                   radius=radius)
            log = rollout(policy, phys, goals, params=params,
                          episode_cfg=episode_cfg, seed=seed + 1000 * trial,
                          randomize=trials > 1)[0]
            rows.append({"angle_deg": float(angle), "trial": trial,
                         "bias_u": log.bias_u(0), "bias_psi": log.bias_psi(0),
                         "outcome": log.outcome.value})
    per_angle = {}
    for angle in angles_deg:
        vals = [r for r in rows if r["angle_deg"] == float(angle)]
        per_angle[float(angle)] = {
            "bias_u": float(np.mean([r["bias_u"] for r in vals])),
            "bias_psi": float(np.mean([r["bias_psi"] for r in vals]))}
    slope, intercept, r2 = linear_fit([r["bias_u"] for r in rows],
                                      [r["bias_psi"] for r in rows])
    return {"rows": rows, "per_angle": per_angle,
            "slope": slope, "intercept": intercept, "r2": r2}
