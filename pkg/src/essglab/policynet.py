"""Recurrent policy/value/collision network on the tape autodiff.

Per-channel encoders feed a single gated recurrent layer; its hidden state
drives either one categorical head over action atoms (single-head) or
factorised rotation/length/stop heads (multi-head), plus a scalar value
head. When the range scan is enabled, a collision head is attached directly
to the range encoder features, bypassing the recurrent core.

All forward functions accept plain ndarrays (fast inference during rollout
collection) or tape Vars (gradient recording during updates); the math is
identical in both modes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import ad
from .actions import MH, ActionChoice, ActionSpec, StageMask, full_mask, make_action_spec
from .features import ObsConfig, ObsLayout, obs_layout


@dataclass(frozen=True)
class NetConfig:
    variant: str
    layout: ObsLayout
    n_rotations: int
    n_lengths: int
    hidden: int = 128
    enc_dim: int = 64
    action_emb: int = 64
    stag_hidden: int = 64
    stag_dim: int = 32

    @property
    def has_range(self) -> bool:
        return self.layout.range_scan is not None

    @property
    def collision_head(self) -> bool:
        return self.has_range

    @property
    def gru_input(self) -> int:
        base = 2 * self.enc_dim + self.action_emb + self.stag_dim
        return base + (self.enc_dim if self.has_range else 0)

    @property
    def n_atoms(self) -> int:
        return self.n_rotations * self.n_lengths


def make_net_config(action_spec: ActionSpec, layout: ObsLayout, **overrides) -> NetConfig:
    return NetConfig(
        variant=action_spec.variant,
        layout=layout,
        n_rotations=action_spec.n_rotations,
        n_lengths=action_spec.n_lengths,
        **overrides,
    )


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(cfg: NetConfig, rng: np.random.Generator) -> dict:
    p = {}

    def dense(name, n_in, n_out, gain):
        p[f"{name}_W"] = _orthogonal(rng, n_in, n_out, gain)
        p[f"{name}_b"] = np.zeros(n_out)

    g = np.sqrt(2.0)
    span = cfg.layout
    if cfg.has_range:
        dense("enc_range", span.range_scan[1] - span.range_scan[0], cfg.enc_dim, g)
    dense("enc_local", span.local_slots[1] - span.local_slots[0], cfg.enc_dim, g)
    dense("enc_global", span.global_slots[1] - span.global_slots[0], cfg.enc_dim, g)
    dense("enc_action", span.last_action[1] - span.last_action[0], cfg.action_emb, 1.0)
    dense("stag1", 3, cfg.stag_hidden, g)
    dense("stag2", cfg.stag_hidden, cfg.stag_dim, 1.0)
    for gate in ("z", "r", "n"):
        dense(f"gru_x{gate}", cfg.gru_input, cfg.hidden, 1.0)
        p[f"gru_u{gate}_W"] = _orthogonal(rng, cfg.hidden, cfg.hidden, 1.0)
    p["gru_un_b"] = np.zeros(cfg.hidden)
    if cfg.variant == MH:
        dense("head_rot", cfg.hidden, cfg.n_rotations, 0.01)
        dense("head_len", cfg.hidden, cfg.n_lengths, 0.01)
        dense("head_stop", cfg.hidden, 2, 0.01)
    else:
        dense("head_atom", cfg.hidden, cfg.n_atoms, 0.01)
    dense("value", cfg.hidden, 1, 1.0)
    if cfg.collision_head:
        dense("collision", cfg.enc_dim, 1, 1.0)
    return p


def wrap_params(params: dict) -> dict:
    return {k: ad.Var(v) for k, v in params.items()}


def _dense(p, name, x):
    return ad.add(ad.matmul(x, p[f"{name}_W"]), p[f"{name}_b"])


def encode(p: dict, obs2d, cfg: NetConfig):
    """Per-channel encoders; obs2d is (N, obs_dim). Returns the recurrent
    input (N, gru_input) and the range features (or None)."""
    span = cfg.layout
    parts = []
    range_feat = None
    if cfg.has_range:
        xr = ad.cols(obs2d, *span.range_scan)
        range_feat = ad.relu(_dense(p, "enc_range", xr))
        parts.append(range_feat)
    parts.append(ad.relu(_dense(p, "enc_local", ad.cols(obs2d, *span.local_slots))))
    parts.append(ad.relu(_dense(p, "enc_global", ad.cols(obs2d, *span.global_slots))))
    parts.append(_dense(p, "enc_action", ad.cols(obs2d, *span.last_action)))
    sh = ad.relu(_dense(p, "stag1", ad.cols(obs2d, *span.stagnation)))
    parts.append(_dense(p, "stag2", sh))
    return ad.concat(parts, axis=-1), range_feat


def gru_gate_inputs(p: dict, x):
    """x-side gate pre-activations (can be batched over all timesteps)."""
    return (_dense(p, "gru_xz", x), _dense(p, "gru_xr", x), _dense(p, "gru_xn", x))


def gru_step_from_gates(p: dict, xz, xr, xn, h):
    z = ad.sigmoid(ad.add(xz, ad.matmul(h, p["gru_uz_W"])))
    r = ad.sigmoid(ad.add(xr, ad.matmul(h, p["gru_ur_W"])))
    n = ad.tanh(ad.add(xn, ad.mul(r, ad.add(ad.matmul(h, p["gru_un_W"]), p["gru_un_b"]))))
    return ad.add(ad.mul(ad.sub(1.0, z), n), ad.mul(z, h))


def gru_step(p: dict, x, h, cfg: NetConfig):
    xz, xr, xn = gru_gate_inputs(p, x)
    return gru_step_from_gates(p, xz, xr, xn, h)


@dataclass
class HeadOutputs:
    """Raw (unmasked) head outputs; ndarray or Var depending on the mode."""

    atom_logits: Optional[object]  # SH: (N, n_atoms)
    rot_logits: Optional[object]   # MH: (N, n_rotations)
    len_logits: Optional[object]
    stop_logits: Optional[object]
    value: object                  # (N,)
    collision_logit: Optional[object]  # (N,)


def head_outputs(p: dict, h2d, range_feat, cfg: NetConfig) -> HeadOutputs:
    if cfg.variant == MH:
        atom = None
        rot = _dense(p, "head_rot", h2d)
        ln = _dense(p, "head_len", h2d)
        stop = _dense(p, "head_stop", h2d)
    else:
        atom = _dense(p, "head_atom", h2d)
        rot = ln = stop = None
    value = ad.reshape(_dense(p, "value", h2d), (-1,))
    coll = None
    if cfg.collision_head:
        coll = ad.reshape(_dense(p, "collision", range_feat), (-1,))
    return HeadOutputs(atom_logits=atom, rot_logits=rot, len_logits=ln, stop_logits=stop,
                       value=value, collision_logit=coll)


def forward_step(p: dict, obs2d, h, cfg: NetConfig):
    """One recurrent step over a batch of observations -> (outputs, h')."""
    x, range_feat = encode(p, obs2d, cfg)
    h_new = gru_step(p, x, h, cfg)
    return head_outputs(p, h_new, range_feat, cfg), h_new


def forward_sequence(p: dict, obs, h0, done, cfg: NetConfig):
    """Unrolled forward over (B, T, obs_dim) observations.

    done[:, t] marks episode ends after step t; the hidden state is zeroed
    before the following step, exactly as during collection. Outputs are
    flattened to (T*B, ...) in time-major order (use flatten_time on the
    per-step constants to match).
    """
    obs = np.asarray(obs, dtype=float)
    bsz, tlen, dim = obs.shape
    flat = np.moveaxis(obs, 0, 1).reshape(tlen * bsz, dim)
    x_all, range_all = encode(p, flat, cfg)
    xz_all, xr_all, xn_all = gru_gate_inputs(p, x_all)
    h = h0
    hs = []
    for t in range(tlen):
        if t > 0:
            keep = (~done[:, t - 1].astype(bool)).astype(float)[:, None]
            h = ad.mul(h, keep)
        a, b = t * bsz, (t + 1) * bsz
        h = gru_step_from_gates(p, ad.rows(xz_all, a, b), ad.rows(xr_all, a, b),
                                ad.rows(xn_all, a, b), h)
        hs.append(h)
    h_seq = ad.reshape(ad.stack(hs, axis=0), (tlen * bsz, cfg.hidden))
    return head_outputs(p, h_seq, range_all, cfg)


def flatten_time(arr: np.ndarray) -> np.ndarray:
    """(B, T, ...) -> (T*B, ...) matching forward_sequence's output order."""
    return np.moveaxis(np.asarray(arr), 0, 1).reshape((-1,) + arr.shape[2:])


# ---------------------------------------------------------------------------
# Distributions: masked log-probabilities, entropy, sampling
# ---------------------------------------------------------------------------


def masked_logits_report(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Logits with inadmissible entries at -inf (reporting convention)."""
    return np.where(np.broadcast_to(mask, logits.shape), logits, -np.inf)


def log_prob_and_entropy(out: HeadOutputs, mask: StageMask, cfg: NetConfig,
                         rot_idx, len_idx, stop_idx=None):
    """log pi(choice) and entropy over the admissible set, batched.

    Multi-head values decompose additively across the rotation, length and
    stop heads; each head is normalized over its own admissible subset.
    Index arguments are constant integer arrays aligned with the batch.
    """
    if cfg.variant == MH:
        lp_rot = ad.masked_log_softmax(out.rot_logits, mask.rotation_array())
        lp_len = ad.masked_log_softmax(out.len_logits, mask.length_array())
        lp_stop = ad.masked_log_softmax(out.stop_logits, None)
        logp = ad.add(
            ad.add(ad.take_along_last(lp_rot, rot_idx), ad.take_along_last(lp_len, len_idx)),
            ad.take_along_last(lp_stop, stop_idx),
        )
        entropy = ad.add(ad.add(_entropy(lp_rot), _entropy(lp_len)), _entropy(lp_stop))
        return logp, entropy
    atom = np.asarray(rot_idx) * cfg.n_lengths + np.asarray(len_idx)
    lp = ad.masked_log_softmax(out.atom_logits, mask.atom_array())
    return ad.take_along_last(lp, atom), _entropy(lp)


def _entropy(logp):
    # exp(MASK_NEG) underflows to exactly 0, so masked entries contribute 0.
    return ad.neg(ad.asum(ad.mul(ad.exp(logp), logp), axis=-1))


def _sample_row(logp_row: np.ndarray, rng: np.random.Generator) -> int:
    probs = np.exp(logp_row)
    cum = np.cumsum(probs)
    cum /= cum[-1]
    return int(np.searchsorted(cum, rng.random(), side="right"))


def sample_choice(out: HeadOutputs, row: int, mask: StageMask, cfg: NetConfig,
                  rng: np.random.Generator) -> ActionChoice:
    """Sample one admissible action for batch row `row`."""
    if cfg.variant == MH:
        lp_rot = ad.masked_log_softmax(out.rot_logits[row], mask.rotation_array())
        lp_len = ad.masked_log_softmax(out.len_logits[row], mask.length_array())
        lp_stop = ad.masked_log_softmax(out.stop_logits[row], None)
        r = _sample_row(lp_rot, rng)
        l = _sample_row(lp_len, rng)
        s = _sample_row(lp_stop, rng)
        return ActionChoice(rotation_index=r, length_index=l, stop_flag=bool(s))
    lp = ad.masked_log_softmax(out.atom_logits[row], mask.atom_array())
    atom = _sample_row(lp, rng)
    r, l = divmod(atom, cfg.n_lengths)
    return ActionChoice(rotation_index=r, length_index=l, stop_flag=False)


def greedy_choice(out: HeadOutputs, row: int, mask: StageMask, cfg: NetConfig) -> ActionChoice:
    if cfg.variant == MH:
        rot = int(np.argmax(masked_logits_report(out.rot_logits[row], mask.rotation_array())))
        ln = int(np.argmax(masked_logits_report(out.len_logits[row], mask.length_array())))
        stop = int(np.argmax(out.stop_logits[row]))
        return ActionChoice(rotation_index=rot, length_index=ln, stop_flag=bool(stop))
    atom = int(np.argmax(masked_logits_report(out.atom_logits[row], mask.atom_array())))
    r, l = divmod(atom, cfg.n_lengths)
    return ActionChoice(rotation_index=r, length_index=l, stop_flag=False)


# ---------------------------------------------------------------------------
# Policy bundle and checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Policy:
    params: dict
    net: NetConfig
    action_spec: ActionSpec
    obs: ObsConfig

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.net.hidden))

    def step(self, obs_batch: np.ndarray, h: np.ndarray):
        return forward_step(self.params, obs_batch, h, self.net)


def make_policy(variant: str, obs_cfg: ObsConfig, rng: np.random.Generator, **net_overrides) -> Policy:
    spec = make_action_spec(variant)
    layout = obs_layout(obs_cfg, spec)
    net = make_net_config(spec, layout, **net_overrides)
    return Policy(params=init_params(net, rng), net=net, action_spec=spec, obs=obs_cfg)


def config_fingerprint(policy: Policy) -> str:
    desc = {
        "variant": policy.net.variant,
        "hidden": policy.net.hidden,
        "enc_dim": policy.net.enc_dim,
        "action_emb": policy.net.action_emb,
        "stag_hidden": policy.net.stag_hidden,
        "stag_dim": policy.net.stag_dim,
        "obs": {
            "slots": policy.obs.slots,
            "n_rays": policy.obs.n_rays,
            "max_range": policy.obs.max_range,
            "fov": policy.obs.fov,
            "depth": policy.obs.depth,
            "type_vocab": list(policy.obs.type_vocab),
        },
    }
    return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(path, policy: Policy) -> None:
    meta = {
        "variant": policy.net.variant,
        "hidden": policy.net.hidden,
        "enc_dim": policy.net.enc_dim,
        "action_emb": policy.net.action_emb,
        "stag_hidden": policy.net.stag_hidden,
        "stag_dim": policy.net.stag_dim,
        "obs_slots": policy.obs.slots,
        "obs_n_rays": policy.obs.n_rays,
        "obs_max_range": policy.obs.max_range,
        "obs_fov": policy.obs.fov,
        "obs_depth": policy.obs.depth,
        "obs_type_vocab": list(policy.obs.type_vocab),
        "config_hash": config_fingerprint(policy),
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **policy.params)


def load_checkpoint(path) -> Policy:
    data = np.load(path)
    meta = json.loads(bytes(data["__meta__"]).decode())
    obs_cfg = ObsConfig(
        slots=meta["obs_slots"],
        n_rays=meta["obs_n_rays"],
        max_range=meta["obs_max_range"],
        fov=meta["obs_fov"],
        depth=meta["obs_depth"],
        type_vocab=tuple(meta["obs_type_vocab"]),
    )
    spec = make_action_spec(meta["variant"])
    layout = obs_layout(obs_cfg, spec)
    net = make_net_config(
        spec, layout,
        hidden=meta["hidden"], enc_dim=meta["enc_dim"], action_emb=meta["action_emb"],
        stag_hidden=meta["stag_hidden"], stag_dim=meta["stag_dim"],
    )
    params = {k: data[k] for k in data.files if k != "__meta__"}
    policy = Policy(params=params, net=net, action_spec=spec, obs=obs_cfg)
    if meta.get("config_hash") != config_fingerprint(policy):
        raise ValueError("checkpoint config hash mismatch")
    return policy
