"""Small tanh MLPs with explicit backpropagation and an Adam optimizer.

Parameters are kept as a flat list of arrays so optimizers and serializers
can treat every network the same way.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpConfig:
    n_in: int
    hidden: tuple = (64, 64)
    n_out: int = 16
    weight_norm: bool = False

    def sizes(self):
        return [int(self.n_in), *[int(h) for h in self.hidden], int(self.n_out)]


class Mlp:
    """Hidden layers use tanh, the output layer is linear.

    With ``weight_norm`` each layer's weight is W = g * V / ||V||_row, and the
    trainable arrays are (V, g, b) instead of (W, b).
    """

    def __init__(self, config: MlpConfig, rng=None, params=None):
        self.cfg = config
        sizes = config.sizes()
        self.n_layers = len(sizes) - 1
        if params is not None:
            self.params = [np.array(p, dtype=float) for p in params]
            return
        rng = np.random.default_rng(rng)
        self.params = []
        for i in range(self.n_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            # Glorot uniform
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            W = rng.uniform(-lim, lim, (fan_out, fan_in))
            if config.weight_norm:
                g = np.linalg.norm(W, axis=1)
                self.params += [W, g, np.zeros(fan_out)]
            else:
                self.params += [W, np.zeros(fan_out)]

    @property
    def per_layer(self):
        return 3 if self.cfg.weight_norm else 2

    def _weights(self, i):
        k = self.per_layer * i
        if self.cfg.weight_norm:
            V, g, b = self.params[k:k + 3]
            nrm = np.linalg.norm(V, axis=1)
            return g[:, None] * V / nrm[:, None], b
        return self.params[k], self.params[k + 1]

    def forward(self, x, keep=False):
        """x: (batch, n_in) -> (batch, n_out)."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [h]
        for i in range(self.n_layers):
            W, b = self._weights(i)
            a = h @ W.T + b
            h = np.tanh(a) if i < self.n_layers - 1 else a
            cache.append(h)
        return (h, cache) if keep else h

    def __call__(self, x):
        return self.forward(x)

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. every parameter array."""
        grads = [None] * len(self.params)
        delta = np.asarray(grad_out, dtype=float)
        for i in reversed(range(self.n_layers)):
            h_in, h_out = cache[i], cache[i + 1]
            if i < self.n_layers - 1:
                delta = delta * (1.0 - h_out ** 2)
            W, _ = self._weights(i)
            gW = delta.T @ h_in
            gb = delta.sum(axis=0)
            k = self.per_layer * i
            if self.cfg.weight_norm:
                V, g, _ = self.params[k:k + 3]
                nrm = np.linalg.norm(V, axis=1)
                Vh = V / nrm[:, None]
                gg = np.sum(gW * Vh, axis=1)
                gV = (g / nrm)[:, None] * (gW - gg[:, None] * Vh)
                grads[k:k + 3] = [gV, gg, gb]
            else:
                grads[k:k + 2] = [gW, gb]
            delta = delta @ W
        return grads

    def n_params(self):
        return int(sum(p.size for p in self.params))


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
