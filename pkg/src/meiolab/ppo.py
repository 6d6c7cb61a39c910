"""Clipped-surrogate policy optimization on the numpy actor-critic.

Provides generalized advantage estimation, the PPO loss with exact
analytic gradients, and the epoch/minibatch update loop shared by the
single-agent, multi-agent, and iterative trainers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nets


@dataclass
class TrainConfig:
    """Optimization hyperparameters; defaults follow the experiment setup."""

    learning_rate: float = 1e-4
    num_envs: int = 4
    steps_per_env: int = 256
    ppo_epochs: int = 4
    minibatches: int = 16
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    training_episodes: int = 25_000
    eval_every_episodes: int = 100
    hidden: tuple[int, int] = (256, 256)

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.steps_per_env

    def for_model(self, model: str, scenario_id: str) -> "TrainConfig":
        """Scenario- and model-specific episode budgets and net sizes."""
        sid = scenario_id.upper()[:2]
        sarl_budget = {
            "A1": 25_000, "A2": 25_000, "A3": 75_000, "A4": 75_000,
            "B1": 75_000, "B2": 75_000, "B3": 150_000, "B4": 150_000,
            "C1": 75_000, "C2": 75_000, "C3": 150_000, "C4": 150_000,
            "D1": 300_000,
        }
        if model == "sarl":
            return replace(self, hidden=(256, 256),
                           training_episodes=sarl_budget.get(sid, self.training_episodes))
        if model == "marl":
            return replace(self, hidden=(64, 64), training_episodes=20_000)
        if model == "imarl":
            return replace(self, hidden=(64, 64), training_episodes=25_000)
        return self


class TrainingDiverged(RuntimeError):
    """Raised when a loss or update produces non-finite values."""


def gae(rewards, values, next_values, truncated, gamma, lam):
    """Generalized advantage estimation over (T, B) arrays.

    ``next_values[t]`` is the value of the state following step t (the
    bootstrap value at episode truncations and at the rollout tail);
    ``truncated[t]`` cuts the recursion at episode boundaries.  Returns
    (advantages, return_targets).
    """
    rewards = np.asarray(rewards, dtype=float)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    carry = np.zeros_like(rewards[0])
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_values[t] - values[t]
        carry = delta + gamma * lam * carry * (~truncated[t])
        adv[t] = carry
    return adv, adv + values


def normalize_advantages(adv):
    mu = adv.mean()
    sd = adv.std()
    return (adv - mu) / (sd + 1e-8)


def policy_surrogate(logp_new, logp_old, adv, clip):
    """Clipped surrogate loss and its per-sample d(loss)/d(logp_new)."""
    ratio = np.exp(logp_new - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    loss = -np.mean(np.minimum(unclipped, clipped))
    active = unclipped <= clipped  # gradient flows only through the min side
    dlogp = -(adv * ratio * active) / logp_new.size
    return loss, dlogp


def value_objective(v, v_old, returns, clip):
    """Clipped value loss and its per-sample d(loss)/d(v)."""
    v_clip = v_old + np.clip(v - v_old, -clip, clip)
    err, err_clip = v - returns, v_clip - returns
    sq, sq_clip = err ** 2, err_clip ** 2
    loss = np.mean(np.maximum(sq, sq_clip))
    use_raw = sq >= sq_clip
    dv = np.where(
        use_raw, 2.0 * err, 2.0 * err_clip * (np.abs(v - v_old) < clip)
    ) / v.size
    return loss, dv


def actor_critic_loss_and_grads(actor, critic, batch, cfg: TrainConfig):
    """Composite PPO loss and exact gradients for one minibatch.

    ``batch`` maps obs, actions (pre-clamp), logp_old, advantages,
    returns, values_old to arrays with a leading sample dimension.
    Returns (loss, actor_grads, critic_grads, diagnostics).
    """
    obs = batch["obs"]
    mean, cache_a = nets.mlp_forward(actor["mlp"], obs)
    logp_new = nets.gaussian_logp(mean, actor["log_std"], batch["actions"])
    p_loss, dlogp = policy_surrogate(
        logp_new, batch["logp_old"], batch["advantages"], cfg.clip
    )
    dmean, dlog_std = nets.gaussian_logp_grads(
        mean, actor["log_std"], batch["actions"], dlogp
    )
    # entropy term: d(entropy)/d(log_std) = 1 per dimension
    entropy = float(np.sum(actor["log_std"] + 0.5 * (nets.LOG_2PI + 1.0)))
    dlog_std -= cfg.entropy_coef
    actor_grads, _ = nets.mlp_backward(actor["mlp"], cache_a, dmean)
    actor_grads = {"mlp": actor_grads, "log_std": dlog_std}

    v, cache_c = nets.mlp_forward(critic, obs)
    v = v[:, 0]
    v_loss, dv = value_objective(v, batch["values_old"], batch["returns"], cfg.clip)
    critic_grads, _ = nets.mlp_backward(critic, cache_c, cfg.value_coef * dv[:, None])

    loss = p_loss + cfg.value_coef * v_loss - cfg.entropy_coef * entropy
    diag = {"policy_loss": p_loss, "value_loss": v_loss, "entropy": entropy}
    return loss, actor_grads, critic_grads, diag


def actor_critic_loss(actor, critic, batch, cfg: TrainConfig) -> float:
    """Loss only; the finite-difference oracle differentiates this."""
    loss, _, _, _ = actor_critic_loss_and_grads(actor, critic, batch, cfg)
    return loss


def _flatten_actor(actor):
    flat = dict(actor["mlp"])
    flat["log_std"] = actor["log_std"]
    return flat


def _unflatten_actor(flat):
    mlp = {k: v for k, v in flat.items() if k != "log_std"}
    return {"mlp": mlp, "log_std": flat["log_std"]}


def ppo_update(actor, critic, batch, cfg: TrainConfig, optimizer, rng):
    """Run the full epoch/minibatch schedule over one rollout batch.

    ``optimizer`` is an Adam instance over the joint (actor, critic)
    parameter dict.  Advantages are normalized once per batch.  Returns
    (actor', critic', diagnostics).
    """
    n = batch["obs"].shape[0]
    if n % cfg.minibatches != 0:
        raise ValueError(
            f"batch size {n} not divisible into {cfg.minibatches} minibatches"
        )
    mb = n // cfg.minibatches
    batch = dict(batch)
    batch["advantages"] = normalize_advantages(batch["advantages"])
    diag = {}
    for _ in range(cfg.ppo_epochs):
        perm = rng.permutation(n)
        for k in range(cfg.minibatches):
            idx = perm[k * mb : (k + 1) * mb]
            sub = {key: val[idx] for key, val in batch.items()}
            loss, a_grads, c_grads, diag = actor_critic_loss_and_grads(
                actor, critic, sub, cfg
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite PPO loss: {diag}")
            joint = {f"actor/{k2}": v for k2, v in _flatten_actor(a_grads).items()}
            joint.update({f"critic/{k2}": v for k2, v in c_grads.items()})
            joint = nets.clip_global_norm(joint, cfg.max_grad_norm)
            params = {f"actor/{k2}": v for k2, v in _flatten_actor(actor).items()}
            params.update({f"critic/{k2}": v for k2, v in critic.items()})
            params = optimizer.step(params, joint)
            actor = _unflatten_actor(
                {k2[6:]: v for k2, v in params.items() if k2.startswith("actor/")}
            )
            critic = {k2[7:]: v for k2, v in params.items() if k2.startswith("critic/")}
    return actor, critic, diag


def make_actor(rng, obs_dim, act_dim, hidden) -> dict:
    mlp = nets.init_mlp(rng, [obs_dim, *hidden, act_dim], out_gain=0.01)
    return {"mlp": mlp, "log_std": np.zeros(act_dim)}


def make_critic(rng, obs_dim, hidden, out_dim: int = 1) -> dict:
    return nets.init_mlp(rng, [obs_dim, *hidden, out_dim], out_gain=1.0)


def joint_params(actor, critic) -> dict:
    params = {f"actor/{k}": v for k, v in _flatten_actor(actor).items()}
    params.update({f"critic/{k}": v for k, v in critic.items()})
    return params
