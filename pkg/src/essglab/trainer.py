"""Rollout collection and policy optimization.

A training block collects one fixed-length rollout from every parallel
environment (episodes reset inline, so rollouts span episode boundaries),
then runs one optimization phase: several clipped-surrogate epochs for PPO,
or a single gradient step for REINFORCE. The collision auxiliary loss
supervises the range-encoder bypass head on translation steps only.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import ad, policynet
from .actions import MH, SH16, ActionChoice, StageMask, full_mask, make_action_spec, stage_mask
from .env import EnvConfig, ExploreEnv
from .policynet import (Policy, flatten_time, forward_sequence, forward_step,
                        log_prob_and_entropy, sample_choice, wrap_params)
from .world import SceneSpec


@dataclass(frozen=True)
class TrainerConfig:
    algorithm: str = "ppo"  # "ppo" | "reinforce"
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.90
    clip_eps: float = 0.25
    value_coef: float = 0.5
    entropy_coef: float = 0.05
    aux_coef: float = 0.2
    epochs: int = 4
    minibatch_trajs: int = 8
    grad_clip: float = 0.5
    kl_target: float = 0.01
    envs: int = 32
    rollout_len: int = 60
    blocks: int = 1000


def default_trainer_config(algorithm: str, variant: str) -> TrainerConfig:
    """Tuned defaults per algorithm and action-space variant."""
    if algorithm == "reinforce":
        return TrainerConfig(algorithm="reinforce", lr=5e-4, gamma=0.97,
                             entropy_coef=0.05, aux_coef=0.3)
    if variant == SH16:
        return TrainerConfig(algorithm="ppo", gae_lambda=0.90, clip_eps=0.25, aux_coef=0.2)
    return TrainerConfig(algorithm="ppo", gae_lambda=0.97, clip_eps=0.15, aux_coef=0.3)


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


@dataclass
class RolloutBatch:
    obs: np.ndarray        # (B, T, obs_dim)
    rot_idx: np.ndarray    # (B, T) int
    len_idx: np.ndarray    # (B, T) int
    stop_idx: np.ndarray   # (B, T) int (0/1; always 0 for SH)
    logp_old: np.ndarray   # (B, T)
    value_old: np.ndarray  # (B, T)
    reward: np.ndarray     # (B, T)
    done: np.ndarray       # (B, T) bool: episode ended after this step
    truncated: np.ndarray  # (B, T) bool
    coll_label: np.ndarray  # (B, T) float: 1 when a translation failed
    coll_mask: np.ndarray   # (B, T) float: 1 on translation steps
    mask: StageMask
    h0: np.ndarray         # (B, H) recurrent state at rollout start
    bootstrap: np.ndarray  # (B,) value of the post-rollout state


def collect_rollouts(policy: Policy, envs: list, mask: StageMask, cfg: TrainerConfig,
                     samplers: list, h: np.ndarray) -> tuple[RolloutBatch, np.ndarray, list]:
    """Advance every environment cfg.rollout_len steps under the policy.

    Episodes ending mid-rollout reset immediately (fresh random start, zeroed
    recurrent state). Returns the batch, the carried hidden state, and the
    stats of episodes that completed inside this rollout.
    """
    bsz, tlen = len(envs), cfg.rollout_len
    net = policy.net
    dim = net.layout.dim
    batch = RolloutBatch(
        obs=np.zeros((bsz, tlen, dim)),
        rot_idx=np.zeros((bsz, tlen), dtype=int),
        len_idx=np.zeros((bsz, tlen), dtype=int),
        stop_idx=np.zeros((bsz, tlen), dtype=int),
        logp_old=np.zeros((bsz, tlen)),
        value_old=np.zeros((bsz, tlen)),
        reward=np.zeros((bsz, tlen)),
        done=np.zeros((bsz, tlen), dtype=bool),
        truncated=np.zeros((bsz, tlen), dtype=bool),
        coll_label=np.zeros((bsz, tlen)),
        coll_mask=np.zeros((bsz, tlen)),
        mask=mask,
        h0=h.copy(),
        bootstrap=np.zeros(bsz),
    )
    finished = []
    for t in range(tlen):
        obs_mat = np.stack([env.observation.pack() for env in envs])
        batch.obs[:, t] = obs_mat
        out, h = forward_step(policy.params, obs_mat, h, net)
        choices = [sample_choice(out, i, mask, net, samplers[i]) for i in range(bsz)]
        rot = np.array([c.rotation_index for c in choices])
        ln = np.array([c.length_index for c in choices])
        stp = np.array([int(c.stop_flag) for c in choices])
        logp, _ = log_prob_and_entropy(out, mask, net, rot, ln, stp)
        batch.rot_idx[:, t] = rot
        batch.len_idx[:, t] = ln
        batch.stop_idx[:, t] = stp
        batch.logp_old[:, t] = logp
        batch.value_old[:, t] = out.value
        for i, env in enumerate(envs):
            res = env.step(choices[i])
            batch.reward[i, t] = res.reward
            batch.done[i, t] = res.done
            batch.truncated[i, t] = res.truncated
            batch.coll_mask[i, t] = float(res.events.is_translation)
            batch.coll_label[i, t] = float(res.events.is_translation and res.events.move_failed)
            if res.done:
                finished.append(env.episode_stats())
                env.reset()
                h[i] = 0.0
    obs_mat = np.stack([env.observation.pack() for env in envs])
    out, _ = forward_step(policy.params, obs_mat, h, net)
    batch.bootstrap = out.value * (~batch.done[:, -1])
    return batch, h, finished


# ---------------------------------------------------------------------------
# Advantage estimation and losses
# ---------------------------------------------------------------------------


def gae(reward: np.ndarray, value: np.ndarray, done: np.ndarray, bootstrap: np.ndarray,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (B, T) arrays.

    Episode ends (stop or budget) are terminal: no bootstrapping across
    them. The rollout tail bootstraps with the critic value of the final
    state when the episode is still running.
    """
    bsz, tlen = reward.shape
    adv = np.zeros((bsz, tlen))
    last = np.zeros(bsz)
    next_value = bootstrap
    for t in range(tlen - 1, -1, -1):
        nonterminal = 1.0 - done[:, t].astype(float)
        delta = reward[:, t] + gamma * next_value * nonterminal - value[:, t]
        last = delta + gamma * lam * nonterminal * last
        adv[:, t] = last
        next_value = value[:, t]
    returns = adv + value
    return adv, returns


def normalize(x: np.ndarray, guard: float = 1e-8) -> np.ndarray:
    std = x.std()
    if std < guard:
        return np.zeros_like(x)
    return (x - x.mean()) / std


def discounted_returns(reward: np.ndarray, done: np.ndarray, gamma: float) -> np.ndarray:
    bsz, tlen = reward.shape
    out = np.zeros((bsz, tlen))
    acc = np.zeros(bsz)
    for t in range(tlen - 1, -1, -1):
        acc = reward[:, t] + gamma * acc * (1.0 - done[:, t].astype(float))
        out[:, t] = acc
    return out


def collision_aux_loss(logits, labels, translation_mask):
    """Mean binary cross entropy over translation steps; 0 with no translations."""
    m = np.asarray(ad.val(translation_mask), dtype=float)
    total = m.sum()
    if total == 0:
        return 0.0
    bce = ad.bce_with_logits(logits, labels)
    return ad.mul(ad.asum(ad.mul(bce, m)), 1.0 / total)


def mean_approx_kl(logp_old: np.ndarray, logp_new: np.ndarray) -> float:
    return float(np.mean(logp_old - logp_new))


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            self.params[k] -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


def _collect_grads(params_tape: dict) -> dict:
    return {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
            for k, v in params_tape.items()}


def ppo_update(policy: Policy, batch: RolloutBatch, cfg: TrainerConfig, adam: Adam,
               rng: np.random.Generator, entropy_coef: Optional[float] = None) -> dict:
    """K epochs of clipped-surrogate updates over trajectory minibatches.

    The recurrent state is replayed from the rollout-start snapshot so the
    recurrence during optimization matches collection. The epoch loop stops
    early once the mean approximate KL of an epoch exceeds the target.
    """
    net = policy.net
    c_ent = cfg.entropy_coef if entropy_coef is None else entropy_coef
    adv, ret = gae(batch.reward, batch.value_old, batch.done, batch.bootstrap,
                   cfg.gamma, cfg.gae_lambda)
    adv = normalize(adv)

    bsz = batch.obs.shape[0]
    order = np.arange(bsz)
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "kl": [],
             "clip_frac": [], "grad_norm": [], "epochs_run": 0, "aux_loss": []}
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        epoch_kls = []
        for start in range(0, bsz, cfg.minibatch_trajs):
            idx = order[start:start + cfg.minibatch_trajs]
            loss_stats = _ppo_minibatch(policy, batch, idx, adv, ret, cfg, c_ent, adam)
            epoch_kls.append(loss_stats["kl"])
            for k in ("policy_loss", "value_loss", "entropy", "kl", "clip_frac",
                      "grad_norm", "aux_loss"):
                stats[k].append(loss_stats[k])
        stats["epochs_run"] += 1
        if float(np.mean(epoch_kls)) > cfg.kl_target:
            break
    out = {k: float(np.mean(v)) for k, v in stats.items() if isinstance(v, list) and v}
    out["epochs_run"] = stats["epochs_run"]
    return out


def _ppo_minibatch(policy: Policy, batch: RolloutBatch, idx: np.ndarray,
                   adv: np.ndarray, ret: np.ndarray, cfg: TrainerConfig,
                   c_ent: float, adam: Adam) -> dict:
    net = policy.net
    p = wrap_params(policy.params)
    out = forward_sequence(p, batch.obs[idx], batch.h0[idx], batch.done[idx], net)
    rot = flatten_time(batch.rot_idx[idx])
    ln = flatten_time(batch.len_idx[idx])
    stp = flatten_time(batch.stop_idx[idx])
    logp_new, entropy = log_prob_and_entropy(out, batch.mask, net, rot, ln, stp)

    logp_old = flatten_time(batch.logp_old[idx])
    adv_f = flatten_time(adv[idx])
    ret_f = flatten_time(ret[idx])
    val_old = flatten_time(batch.value_old[idx])

    ratio = ad.exp(ad.sub(logp_new, logp_old))
    surr1 = ad.mul(ratio, adv_f)
    surr2 = ad.mul(ad.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_f)
    policy_loss = ad.neg(ad.amean(ad.minimum(surr1, surr2)))

    v_clip = ad.add(val_old, ad.clip(ad.sub(out.value, val_old), -cfg.clip_eps, cfg.clip_eps))
    v_err = ad.square(ad.sub(out.value, ret_f))
    v_err_clip = ad.square(ad.sub(v_clip, ret_f))
    value_loss = ad.amean(ad.maximum(v_err, v_err_clip))

    ent_mean = ad.amean(entropy)
    loss = ad.add(policy_loss, ad.sub(ad.mul(value_loss, cfg.value_coef),
                                      ad.mul(ent_mean, c_ent)))
    aux_val = 0.0
    if net.collision_head:
        aux = collision_aux_loss(out.collision_logit, flatten_time(batch.coll_label[idx]),
                                 flatten_time(batch.coll_mask[idx]))
        if isinstance(aux, ad.Var):
            loss = ad.add(loss, ad.mul(aux, cfg.aux_coef))
            aux_val = float(aux.value)
    if not np.isfinite(ad.val(loss)):
        raise FloatingPointError("non-finite PPO loss; aborting update")
    ad.backward(loss)
    grads = _collect_grads(p)
    norm = clip_gradients(grads, cfg.grad_clip)
    adam.step(grads)

    ratio_v = ad.val(ratio)
    return {
        "policy_loss": float(ad.val(policy_loss)),
        "value_loss": float(ad.val(value_loss)),
        "entropy": float(ad.val(ent_mean)),
        "kl": mean_approx_kl(logp_old, ad.val(logp_new)),
        "clip_frac": float(np.mean(np.abs(ratio_v - 1.0) > cfg.clip_eps)),
        "grad_norm": norm,
        "aux_loss": aux_val,
    }


def reinforce_update(policy: Policy, batch: RolloutBatch, cfg: TrainerConfig, adam: Adam,
                     entropy_coef: Optional[float] = None) -> dict:
    """Single policy-gradient step on batch-normalized discounted returns."""
    net = policy.net
    c_ent = cfg.entropy_coef if entropy_coef is None else entropy_coef
    returns = normalize(discounted_returns(batch.reward, batch.done, cfg.gamma))

    p = wrap_params(policy.params)
    out = forward_sequence(p, batch.obs, batch.h0, batch.done, net)
    rot = flatten_time(batch.rot_idx)
    ln = flatten_time(batch.len_idx)
    stp = flatten_time(batch.stop_idx)
    logp, entropy = log_prob_and_entropy(out, batch.mask, net, rot, ln, stp)

    pg = ad.neg(ad.amean(ad.mul(logp, flatten_time(returns))))
    ent_mean = ad.amean(entropy)
    loss = ad.sub(pg, ad.mul(ent_mean, c_ent))
    aux_val = 0.0
    if net.collision_head:
        aux = collision_aux_loss(out.collision_logit, flatten_time(batch.coll_label),
                                 flatten_time(batch.coll_mask))
        if isinstance(aux, ad.Var):
            loss = ad.add(loss, ad.mul(aux, cfg.aux_coef))
            aux_val = float(aux.value)
    if not np.isfinite(ad.val(loss)):
        raise FloatingPointError("non-finite REINFORCE loss; aborting update")
    ad.backward(loss)
    grads = _collect_grads(p)
    norm = clip_gradients(grads, cfg.grad_clip)
    adam.step(grads)
    return {
        "policy_loss": float(ad.val(pg)),
        "value_loss": 0.0,
        "entropy": float(ad.val(ent_mean)),
        "kl": 0.0,
        "clip_frac": 0.0,
        "grad_norm": norm,
        "epochs_run": 1,
        "aux_loss": aux_val,
    }


# ---------------------------------------------------------------------------
# Imitation-learning pretraining
# ---------------------------------------------------------------------------


def replay_demo_features(demo, scene: SceneSpec, action_spec, env_cfg: EnvConfig):
    """Recorded demonstration -> (observation sequence, atom indices)."""
    env = ExploreEnv(scene, action_spec, env_cfg)
    obs = env.reset(start=demo.start)
    xs, ys = [], []
    for atom in demo.actions:
        r, l = action_spec.atom_to_indices(atom)
        xs.append(obs.pack())
        ys.append(atom)
        obs = env.step(ActionChoice(rotation_index=r, length_index=l)).obs
    return np.array(xs), np.array(ys, dtype=int)


def il_pretrain(policy: Policy, sequences: list, epochs: int, lr: float,
                rng: np.random.Generator, batch_size: int = 8) -> dict:
    """Behavior cloning on replayed expert feature sequences (SH16 atoms).

    sequences: list of (obs (T, D), atoms (T,)) pairs. Returns the final
    cross-entropy and argmax accuracy over the dataset.
    """
    if not sequences:
        raise ValueError("empty demonstration dataset")
    net = policy.net
    adam = Adam(policy.params, lr)
    order = np.arange(len(sequences))
    full = full_mask(policy.action_spec)
    for _ in range(epochs):
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            chunk = [sequences[i] for i in order[start:start + batch_size]]
            p = wrap_params(policy.params)
            loss = _bc_loss(p, chunk, net, full)
            ad.backward(loss)
            adam.step(_collect_grads(p))
    ce, acc = bc_metrics(policy, sequences)
    return {"cross_entropy": ce, "accuracy": acc}


def _pad_sequences(chunk, dim):
    tmax = max(len(x) for x, _ in chunk)
    bsz = len(chunk)
    obs = np.zeros((bsz, tmax, dim))
    atoms = np.zeros((bsz, tmax), dtype=int)
    mask = np.zeros((bsz, tmax))
    for i, (x, y) in enumerate(chunk):
        obs[i, :len(x)] = x
        atoms[i, :len(y)] = y
        mask[i, :len(y)] = 1.0
    return obs, atoms, mask


def _bc_loss(p: dict, chunk, net, mask: StageMask):
    obs, atoms, valid = _pad_sequences(chunk, net.layout.dim)
    bsz, tmax, _ = obs.shape
    out = forward_sequence(p, obs, np.zeros((bsz, net.hidden)), np.zeros((bsz, tmax), dtype=bool), net)
    lp = ad.masked_log_softmax(out.atom_logits, mask.atom_array())
    chosen = ad.take_along_last(lp, flatten_time(atoms))
    w = flatten_time(valid)
    return ad.mul(ad.neg(ad.asum(ad.mul(chosen, w))), 1.0 / max(w.sum(), 1.0))


def bc_metrics(policy: Policy, sequences: list) -> tuple[float, float]:
    net = policy.net
    full = full_mask(policy.action_spec)
    ce_sum, correct, count = 0.0, 0, 0
    for x, y in sequences:
        out = forward_sequence(policy.params, x[None], np.zeros((1, net.hidden)),
                               np.zeros((1, len(x)), dtype=bool), net)
        lp = ad.masked_log_softmax(out.atom_logits, full.atom_array())
        ce_sum += float(-lp[np.arange(len(y)), y].sum())
        correct += int((np.argmax(lp, axis=-1) == y).sum())
        count += len(y)
    return ce_sum / count, correct / count


# ---------------------------------------------------------------------------
# Curriculum controller
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurriculumConfig:
    min_stage_blocks: int = 50
    window: int = 50
    recent: int = 10
    plateau_threshold: float = 0.02
    backstop: int = 250
    entropy_boost: float = 2.0
    boost_duration: int = 20
    ema_alpha: float = 0.2


@dataclass
class CurriculumState:
    stage: int = 1
    blocks_in_stage: int = 0
    ema: Optional[tuple[float, float, float]] = None
    history: list = field(default_factory=list)  # smoothed (recall, return, ep_len)
    blocks_since_boost: Optional[int] = None


def _plateaued(history: list, cfg: CurriculumConfig) -> bool:
    window = history[-cfg.window:]
    recent = np.array(window[-cfg.recent:])
    earlier = np.array(window[:cfg.window - cfg.recent])
    for j in range(3):
        m_recent = recent[:, j].mean()
        m_earlier = earlier[:, j].mean()
        change = abs(m_recent - m_earlier) / max(abs(m_earlier), 1e-8)
        if change >= cfg.plateau_threshold:
            return False
    return True


def curriculum_update(cstate: CurriculumState, block_metrics: tuple[float, float, float],
                      cfg: CurriculumConfig = CurriculumConfig()) -> CurriculumState:
    """Advance the plateau detector by one block; promote when all smoothed
    metrics have flattened (or the backstop budget is exhausted)."""
    x = tuple(float(v) for v in block_metrics)
    if cstate.ema is None:
        ema = x
    else:
        a = cfg.ema_alpha
        ema = tuple(a * p + (1 - a) * v for p, v in zip(cstate.ema, x))
    history = cstate.history + [ema]
    blocks = cstate.blocks_in_stage + 1
    boost = cstate.blocks_since_boost
    if boost is not None:
        boost += 1
        if boost >= cfg.boost_duration:
            boost = None

    stage = cstate.stage
    if stage < 4:
        promote = blocks >= cfg.backstop
        if not promote and blocks >= cfg.min_stage_blocks and blocks % cfg.window == 0:
            promote = _plateaued(history, cfg)
        if promote:
            return CurriculumState(stage=stage + 1, blocks_in_stage=0, ema=ema,
                                   history=history, blocks_since_boost=0)
    return CurriculumState(stage=stage, blocks_in_stage=blocks, ema=ema,
                           history=history, blocks_since_boost=boost)


def entropy_coef_scale(cstate: Optional[CurriculumState], cfg: CurriculumConfig = CurriculumConfig()) -> float:
    """Post-promotion entropy boost, linearly annealed back to 1."""
    if cstate is None or cstate.blocks_since_boost is None:
        return 1.0
    k = cstate.blocks_since_boost
    return cfg.entropy_boost - (cfg.entropy_boost - 1.0) * (k / cfg.boost_duration)


# ---------------------------------------------------------------------------
# Block loop
# ---------------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    algorithm: str = "ppo"
    variant: str = SH16
    depth: bool = False
    curriculum: bool = False
    il_dataset: Optional[str] = None
    il_epochs: int = 5
    il_lr: float = 1e-3
    seed: int = 0
    train_scene_seeds: tuple = tuple(range(1, 28))
    eval_scene_seeds: tuple = (28, 29, 30)
    eval_every: int = 50
    eval_episodes: int = 10
    trainer: Optional[TrainerConfig] = None

    def resolved_trainer(self) -> TrainerConfig:
        return self.trainer if self.trainer is not None else default_trainer_config(self.algorithm, self.variant)


TRAIN_CSV_COLUMNS = (
    "block", "stage", "node_recall", "edge_recall", "return", "ep_len",
    "move_success_rate", "path_len", "entropy_coef", "kl", "clip_frac",
    "collision_rate", "truncation_rate",
)
EVAL_CSV_COLUMNS = (
    "block", "node_recall", "node_recall_std", "edge_recall", "return",
    "ep_len", "move_success_rate", "path_len",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def train_loop(scenario: ScenarioConfig, out_dir) -> dict:
    """Run one training scenario: per block collect, update masks, optimize,
    log; evaluate on held-out scenes every eval_every blocks, checkpointing
    at each evaluation and at the end."""
    from . import harness
    from .env import EnvConfig
    from .features import ObsConfig
    from .policynet import make_policy, save_checkpoint
    from .world import generate_scene

    os.makedirs(out_dir, exist_ok=True)
    tcfg = scenario.resolved_trainer()
    obs_cfg = ObsConfig(depth=scenario.depth)
    env_cfg = EnvConfig(obs=obs_cfg)

    ss = np.random.SeedSequence(scenario.seed)
    init_ss, shuffle_ss, *per_env = ss.spawn(2 + 2 * tcfg.envs)
    policy = make_policy(scenario.variant, obs_cfg, np.random.default_rng(init_ss))
    rng_shuffle = np.random.default_rng(shuffle_ss)

    train_scenes = [generate_scene(s) for s in scenario.train_scene_seeds]
    eval_scenes = [generate_scene(s) for s in scenario.eval_scene_seeds]

    if scenario.il_dataset:
        from .expert import load_demonstrations
        demos = load_demonstrations(scenario.il_dataset)
        by_id = {sc.scene_id: sc for sc in train_scenes}
        seqs = []
        for demo in demos:
            scene = by_id.get(demo.scene_id)
            if scene is None:
                scene = generate_scene(int(demo.scene_id.rsplit("_", 1)[1]))
                by_id[demo.scene_id] = scene
            seqs.append(replay_demo_features(demo, scene, policy.action_spec, env_cfg))
        il_stats = il_pretrain(policy, seqs, scenario.il_epochs, scenario.il_lr,
                               np.random.default_rng(np.random.SeedSequence((scenario.seed, 17))))
    else:
        il_stats = None

    envs = []
    samplers = []
    for i in range(tcfg.envs):
        env = ExploreEnv(train_scenes[i % len(train_scenes)], policy.action_spec, env_cfg,
                         rng=np.random.default_rng(per_env[i]))
        env.reset()
        envs.append(env)
        samplers.append(np.random.default_rng(per_env[tcfg.envs + i]))

    adam = Adam(policy.params, tcfg.lr)
    curriculum_on = scenario.curriculum and policy.action_spec.variant != SH16
    cstate = CurriculumState() if curriculum_on else None
    ccfg = CurriculumConfig()
    h = policy.initial_state(tcfg.envs)

    train_path = os.path.join(out_dir, "train_log.csv")
    eval_path = os.path.join(out_dir, "eval_log.csv")
    checkpoints = []
    with open(train_path, "w", newline="") as train_f, open(eval_path, "w", newline="") as eval_f:
        train_csv = csv.writer(train_f)
        train_csv.writerow(TRAIN_CSV_COLUMNS)
        eval_csv = csv.writer(eval_f)
        eval_csv.writerow(EVAL_CSV_COLUMNS)
        for block in range(1, tcfg.blocks + 1):
            stage = cstate.stage if cstate else None
            mask = stage_mask(stage, policy.action_spec) if cstate else full_mask(policy.action_spec)
            c_ent = tcfg.entropy_coef * entropy_coef_scale(cstate, ccfg)
            batch, h, finished = collect_rollouts(policy, envs, mask, tcfg, samplers, h)
            if tcfg.algorithm == "ppo":
                ustats = ppo_update(policy, batch, tcfg, adam, rng_shuffle, entropy_coef=c_ent)
            else:
                ustats = reinforce_update(policy, batch, tcfg, adam, entropy_coef=c_ent)

            recall = float(np.mean([f["node_recall"] for f in finished]))
            edge = float(np.mean([f["edge_recall"] for f in finished]))
            ep_ret = float(np.mean([f["return"] for f in finished]))
            ep_len = float(np.mean([f["length"] for f in finished]))
            path_len = float(np.mean([f["path_length"] for f in finished]))
            trunc_rate = float(np.mean([1.0 if f["truncated"] else 0.0 for f in finished]))
            n_trans = batch.coll_mask.sum()
            n_fail = batch.coll_label.sum()
            msr = (1.0 - n_fail / n_trans) if n_trans > 0 else None
            coll_rate = (n_fail / n_trans) if n_trans > 0 else 0.0

            train_csv.writerow([_fmt(v) for v in (
                block, stage if stage is not None else 0, recall, edge, ep_ret, ep_len,
                msr, path_len, c_ent, ustats.get("kl"), ustats.get("clip_frac"),
                coll_rate, trunc_rate,
            )])

            if cstate:
                cstate = curriculum_update(cstate, (recall, ep_ret, ep_len), ccfg)

            if block % scenario.eval_every == 0:
                report = harness.evaluate(policy, eval_scenes, env_cfg,
                                          episodes_per_scene=scenario.eval_episodes,
                                          seed=scenario.seed, mask=mask)
                agg = report.aggregate
                eval_csv.writerow([_fmt(v) for v in (
                    block, agg["node_recall_mean"], agg["node_recall_std"],
                    agg["edge_recall_mean"], agg["episodic_return_mean"],
                    agg["episode_length_mean"], agg["move_success_rate_mean"],
                    agg["path_length_mean"],
                )])
                ckpt = os.path.join(out_dir, f"checkpoint_block{block:05d}.npz")
                save_checkpoint(ckpt, policy)
                checkpoints.append(ckpt)

    final_ckpt = os.path.join(out_dir, "checkpoint_final.npz")
    save_checkpoint(final_ckpt, policy)
    checkpoints.append(final_ckpt)
    return {
        "policy": policy,
        "train_log": train_path,
        "eval_log": eval_path,
        "checkpoints": checkpoints,
        "il_stats": il_stats,
        "final_stage": cstate.stage if cstate else None,
    }
