"""LeNet-style two-class grasp classifier and its binary file format."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import layers as L

MAGIC = b"GPDCNN\x00\x01"
VERSION = 1
PARAM_ORDER = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")
_HEADER = struct.Struct("<8sI8IIQ")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    channels: int
    input_size: int = 60
    conv1_filters: int = 20
    conv1_kernel: int = 5
    conv2_filters: int = 50
    conv2_kernel: int = 5
    hidden: int = 500
    outputs: int = 2

    def __post_init__(self):
        vals = (self.channels, self.input_size, self.conv1_filters, self.conv1_kernel,
                self.conv2_filters, self.conv2_kernel, self.hidden, self.outputs)
        if min(vals) < 1:
            raise ModelError("architecture sizes must be positive")
        self.sizes()  # validates the chain

    def sizes(self):
        """Spatial size after conv1, pool1, conv2, pool2."""
        s1 = self.input_size - self.conv1_kernel + 1
        if s1 < 2 or s1 % 2:
            raise ModelError(f"conv1 output {s1} cannot be pooled")
        p1 = s1 // 2
        s2 = p1 - self.conv2_kernel + 1
        if s2 < 2 or s2 % 2:
            raise ModelError(f"conv2 output {s2} cannot be pooled")
        return s1, p1, s2, s2 // 2

    @property
    def flat(self):
        return self.sizes()[3] ** 2 * self.conv2_filters

    def shapes(self):
        c1, k1, c2, k2 = self.conv1_filters, self.conv1_kernel, self.conv2_filters, self.conv2_kernel
        return {
            "conv1_w": (c1, k1, k1, self.channels), "conv1_b": (c1,),
            "conv2_w": (c2, k2, k2, c1), "conv2_b": (c2,),
            "fc1_w": (self.hidden, self.flat), "fc1_b": (self.hidden,),
            "fc2_w": (self.outputs, self.hidden), "fc2_b": (self.outputs,),
        }

    def fields(self):
        return (self.channels, self.input_size, self.conv1_filters, self.conv1_kernel,
                self.conv2_filters, self.conv2_kernel, self.hidden, self.outputs)


class CnnModel:
    """Parameters, solver velocity and iteration counter of one network."""

    def __init__(self, arch: Architecture, params=None, velocity=None, iteration=0, dtype=np.float32):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        shapes = arch.shapes()
        if params is None:
            params = {k: np.zeros(s) for k, s in shapes.items()}
        self.params = {}
        for k in PARAM_ORDER:
            a = np.array(params[k], dtype=self.dtype)
            if a.shape != shapes[k]:
                raise ModelError(f"{k} has shape {a.shape}, expected {shapes[k]}")
            if not np.isfinite(a).all():
                raise ModelError(f"{k} is not finite")
            self.params[k] = a
        if velocity is None:
            velocity = {k: np.zeros(shapes[k]) for k in PARAM_ORDER}
        self.velocity = {k: np.array(velocity[k], dtype=self.dtype) for k in PARAM_ORDER}
        self.iteration = int(iteration)

    @classmethod
    def random(cls, arch: Architecture, seed=0, dtype=np.float32):
        """Uniform fan-in scaled weights (limit sqrt(3 / fan_in)), zero biases."""
        rng = np.random.default_rng(seed)
        params = {}
        for k, shape in arch.shapes().items():
            if k.endswith("_b"):
                params[k] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                lim = np.sqrt(3.0 / fan_in)
                params[k] = rng.uniform(-lim, lim, size=shape)
        return cls(arch, params, dtype=dtype)

    @classmethod
    def zeros(cls, arch: Architecture, dtype=np.float32):
        return cls(arch, dtype=dtype)

    @property
    def channels(self):
        return self.arch.channels

    def copy(self, dtype=None):
        return CnnModel(self.arch, self.params, self.velocity, self.iteration, dtype or self.dtype)

    def reset_solver(self):
        for v in self.velocity.values():
            v[...] = 0
        self.iteration = 0
        return self

    def check_input(self, x):
        a = self.arch
        want = (a.input_size, a.input_size, a.channels)
        if x.ndim != 4 or x.shape[1:] != want:
            raise ModelError(f"input shape {x.shape[1:]} does not match model {want}")

    # --- forward / backward -----------------------------------------------

    def logits(self, x, keep=False):
        p = self.params
        c1, k1 = L.conv_forward(x, p["conv1_w"], p["conv1_b"])
        s1, kp1 = L.pool_forward(c1)
        c2, k2 = L.conv_forward(s1, p["conv2_w"], p["conv2_b"])
        s2, kp2 = L.pool_forward(c2)
        h, kf1 = L.fc_forward(s2, p["fc1_w"], p["fc1_b"])
        a, mask = L.relu_forward(h)
        out, kf2 = L.fc_forward(a, p["fc2_w"], p["fc2_b"])
        cache = (k1, kp1, k2, kp2, kf1, mask, kf2) if keep else None
        return out, cache

    def gradients(self, x, labels):
        """Mean cross-entropy loss and its gradient for every parameter."""
        x = np.asarray(x, dtype=self.dtype)
        self.check_input(x)
        labels = np.asarray(labels, dtype=np.int64)
        out, (k1, kp1, k2, kp2, kf1, mask, kf2) = self.logits(x, keep=True)
        loss, d = L.softmax_cross_entropy(out, labels)
        p, g = self.params, {}
        d, g["fc2_w"], g["fc2_b"] = L.fc_backward(d, kf2, p["fc2_w"])
        d = L.relu_backward(d, mask)
        d, g["fc1_w"], g["fc1_b"] = L.fc_backward(d, kf1, p["fc1_w"])
        d = L.pool_backward(d, kp2)
        d, g["conv2_w"], g["conv2_b"] = L.conv_backward(d, k2, p["conv2_w"])
        d = L.pool_backward(d, kp1)
        _, g["conv1_w"], g["conv1_b"] = L.conv_backward(d, k1, p["conv1_w"], need_dx=False)
        return loss, g

    def loss(self, x, labels):
        out, _ = self.logits(np.asarray(x, dtype=self.dtype))
        return L.softmax_cross_entropy(out, np.asarray(labels, dtype=np.int64))[0]


def forward(model: CnnModel, batch) -> np.ndarray:
    """Class probabilities (N, 2) for an (N, H, W, C) batch."""
    x = np.asarray(batch, dtype=model.dtype)
    model.check_input(x)
    out, _ = model.logits(x)
    return L.softmax(out)


# --- serialization ------------------------------------------------------

def save_model(model: CnnModel, path, velocity=True):
    """Write header, parameters and (optionally) solver state as little-endian float32."""
    head = _HEADER.pack(MAGIC, VERSION, *model.arch.fields(), int(velocity), model.iteration)
    with open(path, "wb") as fh:
        fh.write(head)
        blocks = [model.params] + ([model.velocity] if velocity else [])
        for block in blocks:
            for k in PARAM_ORDER:
                fh.write(np.ascontiguousarray(block[k], dtype="<f4").tobytes())
    return path


def load_model(path, channels=None) -> CnnModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ModelError(f"{path}: truncated header")
    magic, version, *rest = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ModelError(f"{path}: not a model file")
    if version != VERSION:
        raise ModelError(f"{path}: unsupported format version {version}")
    arch = Architecture(*rest[:8])
    has_vel, iteration = rest[8], rest[9]
    if channels is not None and channels != arch.channels:
        raise ModelError(f"model expects {arch.channels} channels, data has {channels}")
    shapes = arch.shapes()
    total = sum(int(np.prod(s)) for s in shapes.values())
    blocks = 2 if has_vel else 1
    if len(raw) != _HEADER.size + 4 * total * blocks:
        raise ModelError(f"{path}: parameter blob does not match architecture")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    out, pos = [], 0
    for _ in range(blocks):
        d = {}
        for k in PARAM_ORDER:
            n = int(np.prod(shapes[k]))
            d[k] = flat[pos:pos + n].reshape(shapes[k])
            pos += n
        out.append(d)
    return CnnModel(arch, out[0], out[1] if has_vel else None, iteration)
