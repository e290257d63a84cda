"""Minimal fully-convolutional network with hand-written backprop.

Float64 tensors are (batch, channels, height, width) numpy arrays. The policy
network maps a 2-channel input (contone + noise) through an input conv, B
residual blocks (conv-ReLU-conv plus identity skip) and an output conv to a
single channel, finished by a pixel-wise sigmoid. 3x3 kernels, stride 1,
zero padding 1 everywhere, so spatial dims never change.

Gradients are exact analytic transposes of the forward ops; training injects
an upstream dL/dp at the sigmoid output and backpropagates to every weight.
Checkpoints are a fixed little-endian binary: magic "HTNN", version, arch,
then float64 parameter and Adam moment blobs.
"""

import math
import struct

import numpy as np

CHECKPOINT_MAGIC = b"HTNN"
CHECKPOINT_VERSION = 1

# architecture presets: channels, residual blocks
PRESET_PAPER = (32, 16)
PRESET_MINI = (8, 2)


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


class Conv2d:
    """3x3, stride 1, zero-pad 1; forward caches the padded input."""

    def __init__(self, c_in, c_out):
        self.c_in = c_in
        self.c_out = c_out
        self.weight = Parameter(np.zeros((c_out, c_in, 3, 3)))
        self.bias = Parameter(np.zeros(c_out))
        self._xp = None

    def forward(self, x):
        b, c, hgt, wid = x.shape
        if c != self.c_in:
            raise ValueError(f"expected {self.c_in} input channels, got {c}")
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        out = np.empty((b, self.c_out, hgt, wid))
        out[:] = self.bias.value[None, :, None, None]
        w = self.weight.value
        for ki in range(3):
            for kj in range(3):
                out += np.tensordot(
                    xp[:, :, ki:ki + hgt, kj:kj + wid], w[:, :, ki, kj],
                    axes=([1], [1])).transpose(0, 3, 1, 2)
        self._xp = xp
        return out

    def backward(self, dout):
        xp = self._xp
        b, _, hp, wp = xp.shape
        hgt, wid = hp - 2, wp - 2
        self.bias.grad += dout.sum(axis=(0, 2, 3))
        w = self.weight.value
        dxp = np.zeros_like(xp)
        for ki in range(3):
            for kj in range(3):
                self.weight.grad[:, :, ki, kj] += np.tensordot(
                    dout, xp[:, :, ki:ki + hgt, kj:kj + wid],
                    axes=([0, 2, 3], [0, 2, 3]))
                dxp[:, :, ki:ki + hgt, kj:kj + wid] += np.tensordot(
                    dout, w[:, :, ki, kj],
                    axes=([1], [0])).transpose(0, 3, 1, 2)
        return dxp[:, :, 1:-1, 1:-1]

    def params(self):
        return [self.weight, self.bias]


class ResidualBlock:
    """x + conv2(relu(conv1(x))); no normalization layers."""

    def __init__(self, channels):
        self.conv1 = Conv2d(channels, channels)
        self.conv2 = Conv2d(channels, channels)
        self._relu_mask = None

    def forward(self, x):
        y = self.conv1.forward(x)
        self._relu_mask = y > 0
        y = y * self._relu_mask
        return x + self.conv2.forward(y)

    def backward(self, dout):
        dy = self.conv2.backward(dout)
        dy = dy * self._relu_mask
        return dout + self.conv1.backward(dy)

    def params(self):
        return self.conv1.params() + self.conv2.params()


class PolicyNetwork:
    """Input conv (2 -> C), B residual blocks, output conv (C -> 1), sigmoid."""

    def __init__(self, channels=32, blocks=16, in_channels=2):
        self.channels = channels
        self.blocks = blocks
        self.in_channels = in_channels
        self.conv_in = Conv2d(in_channels, channels)
        self.res = [ResidualBlock(channels) for _ in range(blocks)]
        self.conv_out = Conv2d(channels, 1)
        self._p = None

    def params(self):
        out = self.conv_in.params()
        for blk in self.res:
            out += blk.params()
        return out + self.conv_out.params()

    def init_params(self, rng, std=0.01):
        """Weights N(0, std^2) drawn in fixed order, biases zero."""
        for p in self.params():
            if p.value.ndim > 1:
                p.value[...] = rng.gaussians(p.value.size).reshape(
                    p.value.shape) * std
            else:
                p.value[...] = 0.0
            p.grad[...] = 0.0

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, x):
        """Probabilities in (0, 1), shape (B, 1, H, W)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4:
            raise ValueError("input must be (batch, channels, height, width)")
        y = self.conv_in.forward(x)
        for blk in self.res:
            y = blk.forward(y)
        logits = self.conv_out.forward(y)
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError("non-finite logits")
        self._p = 1.0 / (1.0 + np.exp(-logits))
        return self._p

    def backward(self, dp):
        """Backpropagate dL/dp injected at the sigmoid output; accumulates
        parameter gradients and returns dL/dinput."""
        p = self._p
        dlogits = dp * p * (1.0 - p)
        dy = self.conv_out.backward(dlogits)
        for blk in reversed(self.res):
            dy = blk.backward(dy)
        return self.conv_in.backward(dy)


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(t, total, lr_start=3e-4, lr_end=1e-5):
    """Cosine decay from lr_start to lr_end over `total` steps; clamps past
    the end."""
    if total <= 0:
        raise ValueError("total steps must be positive")
    if t >= total:
        return lr_end
    if t < 0:
        raise ValueError("step must be non-negative")
    return float(lr_end + 0.5 * (lr_start - lr_end) * (
        1.0 + math.cos(math.pi * t / total)))


# ---------------------------------------------------------------------------
# checkpoint format

_HEADER = struct.Struct("<4sIIIIQQ4Q")   # magic, ver, in_ch, ch, blocks,
                                         # iteration, adam step, rng state


def save_checkpoint(path, net, adam=None, iteration=0, rng_state=(0, 0, 0, 0)):
    params = net.params()
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                          net.in_channels, net.channels, net.blocks,
                          iteration, adam.t if adam else 0, *rng_state)
    with open(path, "wb") as fh:
        fh.write(header)
        for p in params:
            fh.write(p.value.astype("<f8").tobytes())
        if adam is not None:
            for buf in adam.m + adam.v:
                fh.write(buf.astype("<f8").tobytes())


class CheckpointError(ValueError):
    pass


def read_checkpoint(path):
    """Returns (meta dict, list of parameter arrays, adam m, adam v).

    adam blobs are None when the file carries bare parameters.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise CheckpointError("file shorter than checkpoint header")
    magic, ver, in_ch, ch, blocks, iteration, adam_t, *rng_state = \
        _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if ver != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported version {ver}")
    probe = PolicyNetwork(channels=ch, blocks=blocks, in_channels=in_ch)
    shapes = [p.value.shape for p in probe.params()]
    sizes = [int(np.prod(s)) for s in shapes]
    n_params = sum(sizes)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if len(body) not in (n_params, 3 * n_params):
        raise CheckpointError(
            f"blob length {len(body)} does not match arch "
            f"(C={ch}, B={blocks}): expected {n_params} or {3 * n_params}")
    meta = {"in_channels": in_ch, "channels": ch, "blocks": blocks,
            "iteration": iteration, "adam_t": adam_t,
            "rng_state": tuple(rng_state)}

    def split(vec):
        out, at = [], 0
        for shape, size in zip(shapes, sizes):
            out.append(vec[at:at + size].reshape(shape).copy())
            at += size
        return out

    values = split(body[:n_params])
    if len(body) == 3 * n_params:
        m = split(body[n_params:2 * n_params])
        v = split(body[2 * n_params:])
    else:
        m = v = None
    return meta, values, m, v


def load_checkpoint(path, net, adam=None):
    """Restore parameters (and Adam state) into an existing net; the file
    arch must match. Returns the meta dict."""
    meta, values, m, v = read_checkpoint(path)
    if (meta["in_channels"], meta["channels"], meta["blocks"]) != (
            net.in_channels, net.channels, net.blocks):
        raise CheckpointError(
            f"arch mismatch: file C={meta['channels']} B={meta['blocks']} "
            f"vs net C={net.channels} B={net.blocks}")
    for p, val in zip(net.params(), values):
        p.value[...] = val
    if adam is not None:
        if m is None:
            raise CheckpointError("checkpoint carries no optimizer state")
        adam.t = meta["adam_t"]
        for buf, val in zip(adam.m, m):
            buf[...] = val
        for buf, val in zip(adam.v, v):
            buf[...] = val
    return meta


def network_from_checkpoint(path):
    """Build a fresh net with the arch recorded in the file."""
    meta, values, _, _ = read_checkpoint(path)
    net = PolicyNetwork(channels=meta["channels"], blocks=meta["blocks"],
                        in_channels=meta["in_channels"])
    for p, val in zip(net.params(), values):
        p.value[...] = val
    return net, meta
