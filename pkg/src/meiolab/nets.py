"""Small actor-critic function approximators in plain numpy.

Forward passes cache activations so gradients are computed analytically
by reverse-mode accumulation; no autodiff framework is involved.  Params
live in flat dicts of arrays, which keeps finite-difference checking and
global-norm clipping trivial.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def orthogonal(rng: np.random.Generator, shape, gain: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


def init_mlp(rng, sizes, out_gain=1.0) -> dict[str, np.ndarray]:
    """Relu MLP params; hidden layers get gain sqrt(2), the output layer
    the given gain (small for actor means, 1.0 for critics)."""
    params = {}
    n = len(sizes) - 1
    for i in range(n):
        gain = out_gain if i == n - 1 else float(np.sqrt(2.0))
        params[f"W{i}"] = orthogonal(rng, (sizes[i], sizes[i + 1]), gain)
        params[f"b{i}"] = np.zeros(sizes[i + 1])
    return params


def n_layers(params) -> int:
    return sum(1 for k in params if k.startswith("W"))


def mlp_forward(params, x):
    """Returns (output, cache) where cache holds layer inputs for backprop."""
    n = n_layers(params)
    cache = []
    h = x
    for i in range(n):
        cache.append(h)
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        h = np.maximum(z, 0.0) if i < n - 1 else z
    return h, cache


def mlp_backward(params, cache, dout):
    """Gradients of a scalar loss given d(loss)/d(output); returns
    (grads, d(loss)/d(input))."""
    n = n_layers(params)
    grads = {}
    g = dout
    for i in reversed(range(n)):
        h = cache[i]
        if i < n - 1:
            z = h @ params[f"W{i}"] + params[f"b{i}"]
            g = g * (z > 0.0)
        grads[f"W{i}"] = h.T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ params[f"W{i}"].T
    return grads, g


def gaussian_head(mean, log_std, rng=None, deterministic=False):
    """Diagonal Gaussian action head.

    Samples are clamped to [-1, 1] for the environment while the
    log-probability is evaluated at the pre-clamp sample; deterministic
    mode returns the clamped mean.  Returns
    (action, pre_clamp_sample, log_prob, entropy).
    """
    std = np.exp(log_std)
    if deterministic or rng is None:
        pre = np.array(mean, copy=True)
    else:
        pre = mean + std * rng.standard_normal(mean.shape)
    action = np.clip(pre, -1.0, 1.0)
    logp = gaussian_logp(mean, log_std, pre)
    entropy = float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))
    return action, pre, logp, entropy


def gaussian_logp(mean, log_std, sample):
    std = np.exp(log_std)
    z = (sample - mean) / std
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(axis=-1)


def gaussian_logp_grads(mean, log_std, sample, dlogp):
    """Backprop d(loss)/d(logp) to the mean and the state-independent
    log-std; returns (dmean, dlog_std)."""
    std = np.exp(log_std)
    z = (sample - mean) / std
    dmean = dlogp[:, None] * z / std
    dlog_std = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
    return dmean, dlog_std


# -- parameter collections ----------------------------------------------

def tree_flatten(params: dict) -> np.ndarray:
    return np.concatenate([params[k].ravel() for k in sorted(params)])


def tree_unflatten(template: dict, flat: np.ndarray) -> dict:
    out = {}
    i = 0
    for k in sorted(template):
        size = template[k].size
        out[k] = flat[i : i + size].reshape(template[k].shape)
        i += size
    return out


def tree_map(fn, *trees):
    return {k: fn(*[t[k] for t in trees]) for k in trees[0]}


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    norm = global_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        return tree_map(lambda g: g * scale, grads)
    return grads


class Adam:
    """Plain Adam over a params dict; state keyed like the params."""

    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = tree_map(np.zeros_like, params)
        self.v = tree_map(np.zeros_like, params)

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in params:
            g = grads.get(k)
            if g is None:
                out[k] = params[k]
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mh = self.m[k] / bc1
            vh = self.v[k] / bc2
            out[k] = params[k] - self.lr * mh / (np.sqrt(vh) + self.eps)
        return out
