"""Multi-action policy/value networks, masked sampling, GAE, and PPO.

Dense layers and backpropagation are hand-rolled on numpy so the gradient
path can be checked against finite differences; the clipped-surrogate update
follows the standard PPO recipe with Adam as the default optimizer.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import LoopEnv, RewardMode
from .errors import AllMasked, LengthMismatch, NonFiniteLoss
from .features import EnvLimits
from .ir import LinalgOp
from .transforms import (Action, ActionMask, Interchange, Im2col,
                         Parallelization, Schedule, Tiling, Vectorization,
                         T_TILING, T_PARALLEL, T_INTERCHANGE, T_IM2COL,
                         T_VECTORIZE, build_action)


@dataclass
class PPOConfig:
    lr: float = 0.001
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    batch: int = 64
    epochs: int = 4
    iterations: int = 1000
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    optimizer: str = "adam"  # "adam" | "sgd"

    @classmethod
    def from_dict(cls, d: dict) -> "PPOConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return dict(asdict(self))


# --- dense networks -------------------------------------------------------

@dataclass
class Dense:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str = "none"  # "relu" | "none"


def net_init(rng: np.random.Generator, sizes: Sequence[int],
             acts: Sequence[str]) -> List[Dense]:
    """He-uniform weights and small random biases.

    Nonzero biases keep pre-activations off the exact ReLU kink that
    all-zero rows would otherwise produce at every later layer.
    """
    layers = []
    for (fan_in, fan_out), act in zip(zip(sizes[:-1], sizes[1:]), acts):
        limit = math.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        b = rng.uniform(-0.05, 0.05, size=fan_out)
        layers.append(Dense(W, b, act))
    return layers


def net_forward(net: List[Dense], x: np.ndarray):
    caches = []
    for layer in net:
        z = x @ layer.W.T + layer.b
        caches.append((x, z))
        x = np.maximum(z, 0.0) if layer.act == "relu" else z
    return x, caches


def net_backward(net: List[Dense], caches, dout: np.ndarray):
    grads: List[Tuple[np.ndarray, np.ndarray]] = []
    for layer, (x, z) in zip(reversed(net), reversed(caches)):
        dz = dout * (z > 0) if layer.act == "relu" else dout
        grads.append((dz.T @ x, dz.sum(axis=0)))
        dout = dz @ layer.W
    return dout, list(reversed(grads))


def masked_dist(logits: np.ndarray, mask: np.ndarray):
    """Masked softmax over the last axis; returns (probs, safe log-probs)."""
    if not mask.any(axis=-1).all():
        raise AllMasked("a sampling head has no legal entry")
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    e = np.exp(z - zmax)
    s = e.sum(axis=-1, keepdims=True)
    p = e / s
    logp = np.where(mask, z - zmax - np.log(s), 0.0)
    return p, logp


def _onehot(idx: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(idx.shape + (k,))
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


# --- samples --------------------------------------------------------------

@dataclass
class HierarchicalSample:
    transform: int
    tile_idx: Optional[np.ndarray]  # (N,) indices in [0, M]
    swap_index: Optional[int]
    logprob: float
    entropy: float


@dataclass
class FlatSample:
    index: int
    logprob: float
    entropy: float


# --- simple (ablation) action space --------------------------------------

SIMPLE_UNIFORM_SIZES = (0, 4, 32)


def simple_action_specs(limits: EnvLimits) -> List[tuple]:
    specs: List[tuple] = [("tiling", u) for u in SIMPLE_UNIFORM_SIZES]
    specs += [("parallelization", u) for u in SIMPLE_UNIFORM_SIZES]
    specs += [("interchange", k) for k in range(limits.N)]
    specs += [("im2col",), ("vectorization",)]
    return specs


def simple_to_action(op: LinalgOp, spec: tuple, limits: EnvLimits) -> Action:
    if spec[0] in ("tiling", "parallelization"):
        u = spec[1]
        sizes = [0] * op.n
        budget = limits.N - op.n
        for i in range(min(op.n, 3)):
            if u and budget > 0 and op.loops[i].trip % u == 0:
                sizes[i] = u
                budget -= 1
        cls = Tiling if spec[0] == "tiling" else Parallelization
        return cls(tuple(sizes))
    if spec[0] == "interchange":
        return Interchange(min(spec[1], op.n - 1))
    if spec[0] == "im2col":
        return Im2col()
    return Vectorization()


def simple_mask(op: LinalgOp, mask: ActionMask, limits: EnvLimits) -> np.ndarray:
    out = []
    for spec in simple_action_specs(limits):
        if spec[0] == "tiling":
            out.append(bool(mask.transform[T_TILING]))
        elif spec[0] == "parallelization":
            out.append(bool(mask.transform[T_PARALLEL]))
        elif spec[0] == "interchange":
            out.append(bool(mask.transform[T_INTERCHANGE]) and spec[1] < op.n
                       and bool(mask.interchange[min(spec[1], op.n - 1)]))
        elif spec[0] == "im2col":
            out.append(bool(mask.transform[T_IM2COL]))
        else:
            out.append(bool(mask.transform[T_VECTORIZE]))
    return np.array(out, dtype=bool)


# --- policy ---------------------------------------------------------------

class Policy:
    """Backbone + per-transform heads (hierarchical) or one flat head (simple),
    with an independent value network."""

    def __init__(self, limits: EnvLimits, obs_dim: Optional[int] = None,
                 space: str = "hier", hidden: int = 512, depth: int = 4,
                 rng: Optional[np.random.Generator] = None,
                 nets: Optional[Dict[str, List[Dense]]] = None):
        self.limits = limits
        self.obs_dim = obs_dim if obs_dim is not None else limits.obs_len
        self.space = space
        if nets is not None:
            self.nets = nets
            return
        rng = rng or np.random.default_rng(0)
        N, M = limits.N, limits.M
        bb_sizes = [self.obs_dim] + [hidden] * depth
        self.nets: Dict[str, List[Dense]] = {
            "backbone": net_init(rng, bb_sizes, ["relu"] * depth),
            "value": net_init(rng, bb_sizes + [1], ["relu"] * depth + ["none"]),
        }
        if space == "hier":
            self.nets["transform"] = net_init(rng, [hidden, 5], ["none"])
            self.nets["tile"] = net_init(rng, [hidden, hidden, N * (M + 1)],
                                         ["relu", "none"])
            self.nets["inter"] = net_init(rng, [hidden, hidden, N], ["relu", "none"])
        elif space == "simple":
            k = len(simple_action_specs(limits))
            self.nets["flat"] = net_init(rng, [hidden, k], ["none"])
        else:
            raise ValueError(f"unknown action space {space!r}")

    # -- parameter access --

    def param_dict(self) -> Dict[str, np.ndarray]:
        out = {}
        for name in sorted(self.nets):
            for i, layer in enumerate(self.nets[name]):
                out[f"{name}.{i}.W"] = layer.W
                out[f"{name}.{i}.b"] = layer.b
        return out

    # -- forward / evaluate --

    def _features(self, obs: np.ndarray):
        return net_forward(self.nets["backbone"], obs)

    def evaluate(self, obs: np.ndarray, masks: dict, actions: dict):
        """Joint log-prob and entropy of stored actions under current params.

        Unused parameter slots in ``actions`` must hold 0 (always unmasked),
        so the batched math stays finite; their terms are zeroed by the
        usage indicators.
        """
        B = obs.shape[0]
        ar = np.arange(B)
        f, bb_cache = self._features(obs)
        cache = {"obs": obs, "bb_cache": bb_cache, "masks": masks,
                 "actions": actions, "B": B}

        if self.space == "simple":
            z, cz = net_forward(self.nets["flat"], f)
            p, lp_all = masked_dist(z, masks["transform"])
            a = actions["transform"]
            lp = lp_all[ar, a]
            H = -(p * lp_all).sum(axis=1)
            cache.update(flat_cache=cz, p=p, logp=lp_all, H=H)
            return lp, H, cache

        N, M = self.limits.N, self.limits.M
        zT, cT = net_forward(self.nets["transform"], f)
        pT, lT = masked_dist(zT, masks["transform"])
        zTile, cTile = net_forward(self.nets["tile"], f)
        pTile, lTile = masked_dist(zTile.reshape(B, N, M + 1), masks["tile"])
        zI, cI = net_forward(self.nets["inter"], f)
        pI, lI = masked_dist(zI, masks["inter"])

        aT = actions["transform"]
        used_t = (aT <= T_PARALLEL).astype(float)
        used_i = (aT == T_INTERCHANGE).astype(float)
        lpT = lT[ar, aT]
        a_tile = actions["tile"]
        lpTile = np.take_along_axis(lTile, a_tile[:, :, None], axis=2)[:, :, 0].sum(axis=1)
        lpI = lI[ar, actions["swap"]]
        HT = -(pT * lT).sum(axis=1)
        HTileRow = -(pTile * lTile).sum(axis=2)
        HI = -(pI * lI).sum(axis=1)

        lp = lpT + used_t * lpTile + used_i * lpI
        ent = HT + used_t * HTileRow.sum(axis=1) + used_i * HI
        cache.update(cT=cT, cTile=cTile, cI=cI, pT=pT, lT=lT, pTile=pTile,
                     lTile=lTile, pI=pI, lI=lI, HT=HT, HTileRow=HTileRow,
                     HI=HI, used_t=used_t, used_i=used_i)
        return lp, ent, cache

    def backward(self, cache, dlp: np.ndarray, dent: np.ndarray):
        """Backprop d(loss)/d(logprob) and d(loss)/d(entropy) to all params."""
        actions = cache["actions"]
        grads: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = {}

        if self.space == "simple":
            p, lp_all, H = cache["p"], cache["logp"], cache["H"]
            oh = _onehot(actions["transform"], p.shape[1])
            dz = dlp[:, None] * (oh - p) + dent[:, None] * (-p * (lp_all + H[:, None]))
            df, grads["flat"] = net_backward(self.nets["flat"], cache["flat_cache"], dz)
            _, grads["backbone"] = net_backward(self.nets["backbone"],
                                                cache["bb_cache"], df)
            return grads

        B = cache["B"]
        pT, lT, HT = cache["pT"], cache["lT"], cache["HT"]
        pTile, lTile, HTileRow = cache["pTile"], cache["lTile"], cache["HTileRow"]
        pI, lI, HI = cache["pI"], cache["lI"], cache["HI"]
        used_t, used_i = cache["used_t"], cache["used_i"]

        ohT = _onehot(actions["transform"], pT.shape[1])
        dzT = dlp[:, None] * (ohT - pT) + dent[:, None] * (-pT * (lT + HT[:, None]))

        ohTile = _onehot(actions["tile"], pTile.shape[2])
        dzTile = used_t[:, None, None] * (
            dlp[:, None, None] * (ohTile - pTile)
            + dent[:, None, None] * (-pTile * (lTile + HTileRow[:, :, None])))

        ohI = _onehot(actions["swap"], pI.shape[1])
        dzI = used_i[:, None] * (
            dlp[:, None] * (ohI - pI) + dent[:, None] * (-pI * (lI + HI[:, None])))

        df1, grads["transform"] = net_backward(self.nets["transform"], cache["cT"], dzT)
        df2, grads["tile"] = net_backward(self.nets["tile"], cache["cTile"],
                                          dzTile.reshape(B, -1))
        df3, grads["inter"] = net_backward(self.nets["inter"], cache["cI"], dzI)
        _, grads["backbone"] = net_backward(self.nets["backbone"],
                                            cache["bb_cache"], df1 + df2 + df3)
        return grads

    # -- value net --

    def value_forward(self, obs: np.ndarray):
        v, caches = net_forward(self.nets["value"], obs)
        return v[:, 0], caches

    def value_backward(self, caches, dv: np.ndarray):
        _, grads = net_backward(self.nets["value"], caches, dv[:, None])
        return {"value": grads}

    # -- acting --

    def mask_arrays(self, op: LinalgOp, mask: ActionMask) -> dict:
        if self.space == "simple":
            return {"transform": simple_mask(op, mask, self.limits)[None, :]}
        return {"transform": mask.transform[None, :],
                "tile": mask.tile[None, :, :],
                "inter": mask.interchange[None, :]}

    def act(self, obs: np.ndarray, mask: ActionMask, op: LinalgOp,
            rng: Optional[np.random.Generator] = None, greedy: bool = False):
        """Sample (or argmax) one composite action; returns (Action, sample)."""
        masks = self.mask_arrays(op, mask)
        f, _ = self._features(obs[None, :])

        def pick(p, r):
            return int(np.argmax(p)) if greedy else int(r.choice(len(p), p=p))

        if self.space == "simple":
            z, _ = net_forward(self.nets["flat"], f)
            p, lp_all = masked_dist(z, masks["transform"])
            idx = pick(p[0], rng)
            sample = FlatSample(idx, float(lp_all[0, idx]),
                                float(-(p[0] * lp_all[0]).sum()))
            action = simple_to_action(op, simple_action_specs(self.limits)[idx],
                                      self.limits)
            return action, sample

        N, M = self.limits.N, self.limits.M
        zT, _ = net_forward(self.nets["transform"], f)
        pT, lT = masked_dist(zT, masks["transform"])
        t = pick(pT[0], rng)
        lp = float(lT[0, t])
        ent = float(-(pT[0] * lT[0]).sum())
        tile_idx = None
        swap = None
        if t in (T_TILING, T_PARALLEL):
            zTile, _ = net_forward(self.nets["tile"], f)
            pTile, lTile = masked_dist(zTile.reshape(1, N, M + 1), masks["tile"])
            tile_idx = np.zeros(N, dtype=np.int64)
            for i in range(N):
                j = pick(pTile[0, i], rng)
                tile_idx[i] = j
                lp += float(lTile[0, i, j])
                ent += float(-(pTile[0, i] * lTile[0, i]).sum())
            action = build_action(op, self.limits, t, tile_idx=tile_idx)
        elif t == T_INTERCHANGE:
            zI, _ = net_forward(self.nets["inter"], f)
            pI, lI = masked_dist(zI, masks["inter"])
            swap = pick(pI[0], rng)
            lp += float(lI[0, swap])
            ent += float(-(pI[0] * lI[0]).sum())
            action = build_action(op, self.limits, t, swap_index=swap)
        else:
            action = build_action(op, self.limits, t)
        return action, HierarchicalSample(t, tile_idx, swap, lp, ent)


# --- GAE ------------------------------------------------------------------

def gae(rewards: Sequence[float], values: Sequence[float], bootstrap: float,
        gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise LengthMismatch(f"{rewards.shape} vs {values.shape}")
    T = len(rewards)
    adv = np.zeros(T)
    nxt = bootstrap
    acc = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * nxt - values[t]
        acc = delta + gamma * lam * acc
        adv[t] = acc
        nxt = values[t]
    return adv, adv + values


# --- rollouts -------------------------------------------------------------

@dataclass
class RolloutBatch:
    obs: np.ndarray
    masks: dict                 # batched mask arrays per head
    actions: dict               # batched action indices per head
    old_logprob: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    episode_speedups: List[float]
    episode_rewards: List[float]

    def __len__(self) -> int:
        return self.obs.shape[0]


def collect_rollouts(env: LoopEnv, dataset: Sequence[LinalgOp], policy: Policy,
                     n: int, rng: np.random.Generator,
                     cfg: Optional[PPOConfig] = None) -> RolloutBatch:
    """Run masked episodes until >= n transitions, GAE per episode, then
    normalize advantages batch-wide and truncate to n."""
    cfg = cfg or PPOConfig()
    limits = policy.limits
    N, M = limits.N, limits.M
    hier = policy.space == "hier"

    rows = {k: [] for k in ("obs", "tmask", "tile_mask", "inter_mask",
                            "a_t", "a_tile", "a_swap", "lp", "rew", "val",
                            "adv", "ret")}
    ep_speedups: List[float] = []
    ep_rewards: List[float] = []
    total = 0
    while total < n:
        op = dataset[int(rng.integers(len(dataset)))]
        res = env.reset(op)
        ep_obs, ep_rew = [], []
        while not res.done:
            cur_op = env.state.current_op
            obs, mask = res.observation, res.mask
            action, sample = policy.act(obs, mask, cur_op, rng=rng)
            marr = policy.mask_arrays(cur_op, mask)
            rows["obs"].append(obs)
            rows["tmask"].append(marr["transform"][0])
            if hier:
                rows["tile_mask"].append(marr["tile"][0])
                rows["inter_mask"].append(marr["inter"][0])
                rows["a_t"].append(sample.transform)
                rows["a_tile"].append(sample.tile_idx if sample.tile_idx is not None
                                      else np.zeros(N, dtype=np.int64))
                rows["a_swap"].append(sample.swap_index or 0)
            else:
                rows["a_t"].append(sample.index)
            rows["lp"].append(sample.logprob)
            res = env.step(action)
            ep_obs.append(obs)
            ep_rew.append(res.reward)
        vals, _ = policy.value_forward(np.stack(ep_obs))
        adv, ret = gae(ep_rew, vals, 0.0, cfg.gamma, cfg.lam)
        rows["rew"].extend(ep_rew)
        rows["val"].extend(vals)
        rows["adv"].extend(adv)
        rows["ret"].extend(ret)
        sp = env.episode_speedup
        if sp is not None:
            ep_speedups.append(sp)
        ep_rewards.append(float(np.sum(ep_rew)))
        total += len(ep_rew)

    adv = np.array(rows["adv"])
    std = adv.std()
    adv = (adv - adv.mean()) / (std if std > 1e-8 else 1.0)

    sl = slice(0, n)
    masks = {"transform": np.stack(rows["tmask"])[sl]}
    actions = {"transform": np.array(rows["a_t"], dtype=np.int64)[sl]}
    if hier:
        masks["tile"] = np.stack(rows["tile_mask"])[sl]
        masks["inter"] = np.stack(rows["inter_mask"])[sl]
        actions["tile"] = np.stack(rows["a_tile"])[sl]
        actions["swap"] = np.array(rows["a_swap"], dtype=np.int64)[sl]
    return RolloutBatch(
        obs=np.stack(rows["obs"])[sl], masks=masks, actions=actions,
        old_logprob=np.array(rows["lp"])[sl],
        rewards=np.array(rows["rew"])[sl],
        values=np.array(rows["val"])[sl],
        advantages=adv[sl],
        returns=np.array(rows["ret"])[sl],
        episode_speedups=ep_speedups, episode_rewards=ep_rewards)


# --- PPO ------------------------------------------------------------------

def ppo_loss(policy: Policy, batch: RolloutBatch, cfg: PPOConfig) -> dict:
    """Loss pieces only (no gradients); kept independent for finite-difference
    checks of the backward path."""
    lp, ent, _ = policy.evaluate(batch.obs, batch.masks, batch.actions)
    rho = np.exp(lp - batch.old_logprob)
    a = batch.advantages
    unclipped = rho * a
    clipped = np.clip(rho, 1 - cfg.clip, 1 + cfg.clip) * a
    pg = -np.minimum(unclipped, clipped).mean()
    v, _ = policy.value_forward(batch.obs)
    vloss = ((v - batch.returns) ** 2).mean()
    total = pg + cfg.value_coef * vloss - cfg.entropy_coef * ent.mean()
    return {"total": total, "policy_loss": pg, "value_loss": vloss,
            "entropy": float(ent.mean())}


def ppo_gradients(policy: Policy, batch: RolloutBatch, cfg: PPOConfig):
    B = len(batch)
    lp, ent, cache = policy.evaluate(batch.obs, batch.masks, batch.actions)
    rho = np.exp(lp - batch.old_logprob)
    a = batch.advantages
    unclipped = rho * a
    clipped = np.clip(rho, 1 - cfg.clip, 1 + cfg.clip) * a
    pg = -np.minimum(unclipped, clipped).mean()
    active = unclipped <= clipped  # tie -> unclipped branch
    dlp = np.where(active, -a * rho, 0.0) / B
    dent = np.full(B, -cfg.entropy_coef / B)
    grads = policy.backward(cache, dlp, dent)

    v, vcache = policy.value_forward(batch.obs)
    vloss = ((v - batch.returns) ** 2).mean()
    dv = cfg.value_coef * 2.0 * (v - batch.returns) / B
    grads.update(policy.value_backward(vcache, dv))

    flat = {}
    for name, layer_grads in grads.items():
        for i, (dW, db) in enumerate(layer_grads):
            flat[f"{name}.{i}.W"] = dW
            flat[f"{name}.{i}.b"] = db
    loss = {"total": pg + cfg.value_coef * vloss - cfg.entropy_coef * ent.mean(),
            "policy_loss": pg, "value_loss": vloss, "entropy": float(ent.mean())}
    return flat, loss


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        for k, p in params.items():
            p -= self.lr * grads[k]


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.t += 1
        for k, p in params.items():
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(p))
            v = self.v.setdefault(k, np.zeros_like(p))
            m += (1 - self.b1) * (g - m)
            v += (1 - self.b2) * (g * g - v)
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(cfg: PPOConfig):
    return Adam(cfg.lr) if cfg.optimizer == "adam" else SGD(cfg.lr)


def ppo_update(policy: Policy, batch: RolloutBatch, cfg: PPOConfig,
               optimizer) -> List[dict]:
    reports = []
    params = policy.param_dict()
    for _ in range(cfg.epochs):
        grads, loss = ppo_gradients(policy, batch, cfg)
        if not np.isfinite(loss["total"]) or any(
                not np.isfinite(g).all() for g in grads.values()):
            raise NonFiniteLoss(f"non-finite loss/gradient: {loss}")
        optimizer.step(params, grads)
        reports.append(loss)
    return reports


# --- training loop --------------------------------------------------------

def train(dataset: Sequence[LinalgOp], cfg: PPOConfig, limits: EnvLimits,
          cost_cfg=None, mode: RewardMode = RewardMode.FINAL,
          space: str = "hier", seed: int = 0,
          iterations: Optional[int] = None, backend=None,
          hidden: int = 512, depth: int = 4,
          on_iteration=None) -> Tuple[Policy, List[dict]]:
    """iterations x (collect_rollouts; ppo_update) with per-iteration logging."""
    rng = np.random.default_rng(seed)
    env = LoopEnv(limits=limits, cost_cfg=cost_cfg, mode=mode, backend=backend)
    policy = Policy(limits, limits.obs_len, space=space, hidden=hidden,
                    depth=depth, rng=rng)
    optimizer = make_optimizer(cfg)
    n_iters = cfg.iterations if iterations is None else iterations
    log: List[dict] = []
    for it in range(1, n_iters + 1):
        batch = collect_rollouts(env, dataset, policy, cfg.batch, rng, cfg)
        reports = ppo_update(policy, batch, cfg, optimizer)
        entry = {
            "iteration": it,
            "mean_reward": float(np.mean(batch.episode_rewards)),
            "mean_speedup": float(np.mean(batch.episode_speedups))
            if batch.episode_speedups else float("nan"),
            "policy_loss": reports[-1]["policy_loss"],
            "value_loss": reports[-1]["value_loss"],
            "entropy": reports[-1]["entropy"],
        }
        log.append(entry)
        if on_iteration is not None:
            on_iteration(it, policy, entry)
    return policy, log


# --- evaluation rollouts --------------------------------------------------

def greedy_rollout(env: LoopEnv, op: LinalgOp, policy: Policy
                   ) -> Tuple[Schedule, Optional[float]]:
    res = env.reset(op)
    while not res.done:
        action, _ = policy.act(res.observation, res.mask,
                               env.state.current_op, greedy=True)
        res = env.step(action)
    return env.state.schedule, env.episode_speedup


def sample_rollouts(env: LoopEnv, op: LinalgOp, policy: Policy, count: int,
                    rng: np.random.Generator) -> List[Tuple[Schedule, float]]:
    out = []
    for _ in range(count):
        res = env.reset(op)
        while not res.done:
            action, _ = policy.act(res.observation, res.mask,
                                   env.state.current_op, rng=rng)
            res = env.step(action)
        sp = env.episode_speedup
        out.append((env.state.schedule, sp if sp is not None else 0.0))
    return out


# --- checkpoints ----------------------------------------------------------

def save_checkpoint(path, policy: Policy) -> None:
    meta = {
        "version": 1,
        "space": policy.space,
        "obs_dim": policy.obs_dim,
        "limits": asdict(policy.limits),
        "acts": {name: [layer.act for layer in net]
                 for name, net in policy.nets.items()},
    }
    arrays = {k: v for k, v in policy.param_dict().items()}
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> Policy:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    limits = EnvLimits(**meta["limits"])
    nets: Dict[str, List[Dense]] = {}
    for name, acts in meta["acts"].items():
        nets[name] = [Dense(data[f"{name}.{i}.W"].copy(),
                            data[f"{name}.{i}.b"].copy(), act)
                      for i, act in enumerate(acts)]
    return Policy(limits, meta["obs_dim"], space=meta["space"], nets=nets)
