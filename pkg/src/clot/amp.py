"""Adversarial motion prior: a small discriminator with hand-written
backpropagation, its loss, the style reward log D and reward composition."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .transforms import projected_gravity, quat_conj, quat_mul, quat_to_matrix, quat_to_rotvec

LN_EPS = 1e-5
MANIFEST_FORMAT = "clot-amp-discriminator"


@dataclass(frozen=True)
class AmpConfig:
    lambda_style: float = 0.5
    lambda_task: float = 0.5
    epsilon: float = 1e-4
    learning_rate: float = 1e-2
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.lambda_style < 0 or self.lambda_task < 0:
            raise ValueError("reward weights must be >= 0")
        if not self.lambda_style + self.lambda_task > 0:
            raise ValueError("lambda_style + lambda_task must be > 0")
        if not 0 < self.epsilon < 0.5:
            raise ValueError("epsilon must be in (0, 0.5)")

    @classmethod
    def full_scale(cls, **kw) -> "AmpConfig":
        """Four hidden layers of 1024 units."""
        return cls(hidden=(1024,) * 4, **kw)


@dataclass(frozen=True)
class DiscriminatorNet:
    """Hidden layers Linear -> LayerNorm -> ReLU, then a linear logit.

    ``layers`` holds (W, b, gamma, beta) per hidden layer; ``out`` is (w, b).
    """

    layers: tuple[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray], ...]
    out: tuple[np.ndarray, np.ndarray]
    epsilon: float = 1e-4

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1] if self.layers else self.out[0].shape[0]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(layer[0].shape[0] for layer in self.layers)

    @classmethod
    def init(cls, input_dim: int, hidden=(64, 64), rng: np.random.Generator | None = None,
             epsilon: float = 1e-4, zero_output: bool = False, output_scale: float = 0.1) -> "DiscriminatorNet":
        rng = np.random.default_rng(0) if rng is None else rng
        layers, fan_in = [], input_dim
        for width in hidden:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (width, fan_in))
            layers.append((w, np.zeros(width), np.ones(width), np.zeros(width)))
            fan_in = width
        if zero_output:
            out = (np.zeros(fan_in), np.zeros(1))
        else:
            out = (rng.normal(0.0, output_scale / np.sqrt(fan_in), fan_in), np.zeros(1))
        return cls(tuple(layers), out, epsilon)

    def params(self) -> list[np.ndarray]:
        flat = [p for layer in self.layers for p in layer]
        return flat + list(self.out)

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names += [f"layers.{i}.{k}" for k in ("weight", "bias", "ln_gain", "ln_bias")]
        return names + ["out.weight", "out.bias"]

    def with_params(self, params) -> "DiscriminatorNet":
        params = [np.array(p, dtype=float) for p in params]
        layers = tuple(tuple(params[4 * i:4 * i + 4]) for i in range(len(self.layers)))
        k = 4 * len(self.layers)
        return DiscriminatorNet(layers, (params[k], params[k + 1]), self.epsilon)

    def copy(self) -> "DiscriminatorNet":
        return self.with_params(self.params())


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward(net: DiscriminatorNet, x: np.ndarray):
    cache = []
    h = x
    for w, b, g, beta in net.layers:
        z = h @ w.T + b
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        xhat = (z - mu) * inv
        y = g * xhat + beta
        cache.append((h, xhat, inv, y))
        h = np.maximum(y, 0.0)
    logit = h @ net.out[0] + net.out[1][0]
    return logit, h, cache


def _batch(net: DiscriminatorNet, feature) -> tuple[np.ndarray, bool]:
    x = np.asarray(feature, dtype=float)
    single = x.ndim == 1
    x = x[None] if single else x
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"feature length {x.shape[-1]} does not match discriminator input {net.input_dim}")
    return x, single


def disc_logit(net: DiscriminatorNet, feature):
    x, single = _batch(net, feature)
    logit = _forward(net, x)[0]
    return float(logit[0]) if single else logit


def disc_forward(net: DiscriminatorNet, feature):
    """D(s) clamped to [eps, 1 - eps]; accepts one feature or a batch."""
    x, single = _batch(net, feature)
    d = np.clip(_sigmoid(_forward(net, x)[0]), net.epsilon, 1.0 - net.epsilon)
    return float(d[0]) if single else d


def disc_loss(net: DiscriminatorNet, real, fake) -> tuple[float, list[np.ndarray]]:
    """L_D = mean log D(real) + mean log(1 - D(fake)), and the gradient of -L_D.

    Where the output clamp is active the gradient is zero.
    """
    xr, _ = _batch(net, real)
    xf, _ = _batch(net, fake)
    if len(xr) == 0 or len(xf) == 0:
        raise ValueError("discriminator batches must be non-empty")
    x = np.concatenate([xr, xf])
    nr, nf = len(xr), len(xf)
    logit, h_last, cache = _forward(net, x)
    s = _sigmoid(logit)
    eps = net.epsilon
    d = np.clip(s, eps, 1.0 - eps)
    live = (s > eps) & (s < 1.0 - eps)
    loss = float(np.mean(np.log(d[:nr])) + np.mean(np.log(1.0 - d[nr:])))

    # d(-L_D)/d logit
    g_logit = np.empty_like(logit)
    g_logit[:nr] = -(1.0 - d[:nr]) / nr
    g_logit[nr:] = d[nr:] / nf
    g_logit *= live

    grads: list[np.ndarray] = []
    g_out_w = h_last.T @ g_logit
    g_out_b = np.array([g_logit.sum()])
    dh = np.outer(g_logit, net.out[0])
    for (w, _b, g, _beta), (h_in, xhat, inv, y) in zip(reversed(net.layers), reversed(cache)):
        dy = dh * (y > 0)
        d_gamma = np.sum(dy * xhat, axis=0)
        d_beta = np.sum(dy, axis=0)
        dxhat = dy * g
        dz = inv * (dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True))
        d_w = dz.T @ h_in
        d_b = dz.sum(axis=0)
        dh = dz @ w
        grads = [d_w, d_b, d_gamma, d_beta] + grads
    return loss, grads + [g_out_w, g_out_b]


def amp_reward(net: DiscriminatorNet, feature) -> float:
    """Style reward log D, bounded to [log eps, log(1 - eps)]."""
    return float(np.log(disc_forward(net, feature)))


def combine_reward(r_amp: float, r_task: float, config: AmpConfig = AmpConfig()) -> float:
    return config.lambda_style * r_amp + config.lambda_task * r_task


def train_step(net: DiscriminatorNet, real, fake, lr: float) -> tuple[DiscriminatorNet, float]:
    """One gradient step increasing L_D; returns the new net and the pre-step L_D."""
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    loss, grads = disc_loss(net, real, fake)
    if lr == 0:
        return net, loss
    return net.with_params([p - lr * g for p, g in zip(net.params(), grads)]), loss


class MomentumSGD:
    """SGD with heavy-ball momentum over a discriminator's parameters."""

    def __init__(self, lr: float, momentum: float = 0.9):
        if lr < 0 or not 0 <= momentum < 1:
            raise ValueError("invalid optimizer settings")
        self.lr, self.momentum = lr, momentum
        self.velocity: list[np.ndarray] | None = None

    def step(self, net: DiscriminatorNet, real, fake) -> tuple[DiscriminatorNet, float]:
        loss, grads = disc_loss(net, real, fake)
        if self.velocity is None:
            self.velocity = [np.zeros_like(g) for g in grads]
        self.velocity = [self.momentum * v + g for v, g in zip(self.velocity, grads)]
        return net.with_params([p - self.lr * v for p, v in zip(net.params(), self.velocity)]), loss


def accuracy(net: DiscriminatorNet, real, fake) -> float:
    dr = disc_forward(net, np.asarray(real))
    df = disc_forward(net, np.asarray(fake))
    return float((np.sum(dr > 0.5) + np.sum(df < 0.5)) / (len(dr) + len(df)))


# -- serialization ------------------------------------------------------------


def net_to_manifest(net: DiscriminatorNet) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "input_dim": net.input_dim,
        "hidden": list(net.hidden),
        "epsilon": net.epsilon,
        "tensors": [
            {"name": name, "shape": list(p.shape), "data": [float(v) for v in p.ravel()]}
            for name, p in zip(net.param_names(), net.params())
        ],
    }


def net_from_manifest(doc: dict) -> DiscriminatorNet:
    if doc.get("format") != MANIFEST_FORMAT or doc.get("version") != 1:
        raise ValueError("not a version-1 discriminator manifest")
    skeleton = DiscriminatorNet.init(int(doc["input_dim"]), tuple(doc["hidden"]), epsilon=float(doc["epsilon"]))
    by_name = {t["name"]: t for t in doc["tensors"]}
    params = []
    for name, ref in zip(skeleton.param_names(), skeleton.params()):
        if name not in by_name:
            raise ValueError(f"manifest lacks tensor {name!r}")
        t = by_name[name]
        arr = np.asarray(t["data"], dtype=float).reshape(t["shape"])
        if arr.shape != ref.shape:
            raise ValueError(f"tensor {name!r} has shape {arr.shape}, expected {ref.shape}")
        params.append(arr)
    return skeleton.with_params(params)


def save_net(net: DiscriminatorNet, path) -> None:
    Path(path).write_text(json.dumps(net_to_manifest(net)) + "\n")


def load_net(path) -> DiscriminatorNet:
    return net_from_manifest(json.loads(Path(path).read_text()))


# -- features -------------------------------------------------------------------


@dataclass(frozen=True)
class AmpFrame:
    q: np.ndarray
    qd: np.ndarray
    root_height: float
    projected_gravity: np.ndarray
    root_lin_vel: np.ndarray  # root frame
    root_ang_vel: np.ndarray  # root frame


def frame_size(n: int) -> int:
    return 2 * n + 1 + 3 + 3 + 3


def feature_size(n: int) -> int:
    return 2 * frame_size(n)


def _frame_vector(f: AmpFrame) -> np.ndarray:
    return np.concatenate([f.q, f.qd, [f.root_height], f.projected_gravity, f.root_lin_vel, f.root_ang_vel])


def amp_feature(prev: AmpFrame, cur: AmpFrame) -> np.ndarray:
    """Discriminator input over a two-step window (previous, current)."""
    out = np.concatenate([_frame_vector(prev), _frame_vector(cur)])
    if not np.all(np.isfinite(out)):
        raise ValueError("AMP feature is not finite")
    return out


def amp_frame(q, qd, root_pos, root_quat, world_lin_vel, world_ang_vel) -> AmpFrame:
    rot_t = quat_to_matrix(root_quat).T
    return AmpFrame(np.asarray(q, dtype=float), np.asarray(qd, dtype=float), float(root_pos[2]),
                    projected_gravity(root_quat), rot_t @ np.asarray(world_lin_vel, dtype=float),
                    rot_t @ np.asarray(world_ang_vel, dtype=float))


def reference_features(ref) -> np.ndarray:
    """Expert features from a reference trajectory, velocities by backward difference."""
    T = len(ref)
    if T < 3:
        raise ValueError("need at least 3 reference frames")
    frames = []
    for k in range(1, T):
        lin = (ref.root_pos[k] - ref.root_pos[k - 1]) * ref.fps
        dq = quat_mul(ref.root_quat[k], quat_conj(ref.root_quat[k - 1]))
        ang = quat_to_rotvec(dq) * ref.fps
        frames.append(amp_frame(ref.q[k], ref.joint_velocity(k), ref.root_pos[k], ref.root_quat[k], lin, ang))
    return np.array([amp_feature(frames[i - 1], frames[i]) for i in range(1, len(frames))])
