"""3D-UNet assembled from the primitive ops.

Encoder levels run [conv -> instance norm -> ReLU] x2 then 2x max pooling;
the bottleneck is the same double-conv block; decoder levels upsample with a
2x2x2 transposed convolution, concatenate the matching encoder skip along
channels, and apply another double-conv block. A final 1x1x1 convolution
maps to one channel and a sigmoid yields per-voxel probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from . import ops


@dataclass(frozen=True)
class UNetConfig:
    level_channels: tuple[int, ...] = (12, 24, 48)
    bottleneck_channels: int = 96
    kernel: int = 3
    pool: int = 2
    norm_epsilon: float = 1e-5
    output_threshold: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "level_channels", tuple(int(c) for c in self.level_channels))
        if len(self.level_channels) < 1 or any(c < 1 for c in self.level_channels):
            raise ValueError("level_channels must be a non-empty list of positive ints")
        if self.kernel != 3 or self.pool != 2:
            raise ValueError("kernel is fixed at 3 and pool at 2")

    @property
    def levels(self) -> int:
        return len(self.level_channels)

    def to_dict(self) -> dict:
        return {
            "level_channels": list(self.level_channels),
            "bottleneck_channels": self.bottleneck_channels,
            "kernel": self.kernel,
            "pool": self.pool,
            "norm_epsilon": self.norm_epsilon,
            "output_threshold": self.output_threshold,
        }

    @staticmethod
    def from_dict(d: dict) -> "UNetConfig":
        d = dict(d)
        d["level_channels"] = tuple(d.get("level_channels", (12, 24, 48)))
        return UNetConfig(**d)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


class UNet3D:
    """Owns the parameter map and Adam state; single-writer during training."""

    def __init__(self, config: UNetConfig | None = None, in_channels: int = 3,
                 seed: int = 0, dtype=np.float32):
        self.config = config or UNetConfig()
        self.in_channels = in_channels
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.adam = AdamState()
        self._init_params(seed)

    # parameter construction -------------------------------------------------

    def _add_conv(self, rng, name: str, c_in: int, c_out: int, k: int) -> None:
        fan_in = c_in * k ** 3
        self.params[f"{name}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                              size=(c_out, c_in, k, k, k)).astype(self.dtype)
        self.params[f"{name}.b"] = np.zeros(c_out, dtype=self.dtype)

    def _add_upconv(self, rng, name: str, c_in: int, c_out: int) -> None:
        fan_in = c_in * 8
        self.params[f"{name}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                              size=(c_in, c_out, 2, 2, 2)).astype(self.dtype)
        self.params[f"{name}.b"] = np.zeros(c_out, dtype=self.dtype)

    def _add_norm(self, name: str, channels: int) -> None:
        self.params[f"{name}.gamma"] = np.ones(channels, dtype=self.dtype)
        self.params[f"{name}.beta"] = np.zeros(channels, dtype=self.dtype)

    def _init_params(self, seed: int) -> None:
        cfg = self.config
        rng = np.random.Generator(np.random.PCG64(seed))
        c_prev = self.in_channels
        for i, c in enumerate(cfg.level_channels):
            self._add_conv(rng, f"enc{i}.conv0", c_prev, c, cfg.kernel)
            self._add_norm(f"enc{i}.norm0", c)
            self._add_conv(rng, f"enc{i}.conv1", c, c, cfg.kernel)
            self._add_norm(f"enc{i}.norm1", c)
            c_prev = c
        cb = cfg.bottleneck_channels
        self._add_conv(rng, "bottleneck.conv0", c_prev, cb, cfg.kernel)
        self._add_norm("bottleneck.norm0", cb)
        self._add_conv(rng, "bottleneck.conv1", cb, cb, cfg.kernel)
        self._add_norm("bottleneck.norm1", cb)
        c_prev = cb
        for i in reversed(range(cfg.levels)):
            c = cfg.level_channels[i]
            self._add_upconv(rng, f"dec{i}.up", c_prev, c)
            self._add_conv(rng, f"dec{i}.conv0", 2 * c, c, cfg.kernel)
            self._add_norm(f"dec{i}.norm0", c)
            self._add_conv(rng, f"dec{i}.conv1", c, c, cfg.kernel)
            self._add_norm(f"dec{i}.norm1", c)
            c_prev = c
        self._add_conv(rng, "head", c_prev, 1, 1)

    # forward / backward ------------------------------------------------------

    def _block(self, prefix: str, h: np.ndarray, caches: list):
        """[conv -> instance norm -> relu] x2 with caches recorded."""
        for j in (0, 1):
            h, c_conv = ops.conv3d(h, self.params[f"{prefix}.conv{j}.w"], self.params[f"{prefix}.conv{j}.b"])
            h, c_norm = ops.instance_norm(h, self.params[f"{prefix}.norm{j}.gamma"],
                                          self.params[f"{prefix}.norm{j}.beta"], self.config.norm_epsilon)
            h, c_relu = ops.relu(h)
            caches.append((prefix, j, c_conv, c_norm, c_relu))
        return h

    def _block_backward(self, entry, dh: np.ndarray, grads: dict) -> np.ndarray:
        prefix, j, c_conv, c_norm, c_relu = entry
        dh = ops.relu_backward(dh, c_relu)
        dh, dgamma, dbeta = ops.instance_norm_backward(dh, c_norm)
        grads[f"{prefix}.norm{j}.gamma"] = dgamma
        grads[f"{prefix}.norm{j}.beta"] = dbeta
        dh, dw, db = ops.conv3d_backward(dh, c_conv)
        grads[f"{prefix}.conv{j}.w"] = dw
        grads[f"{prefix}.conv{j}.b"] = db
        return dh

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 5 or x.shape[0] != 1 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"expected (1, {self.in_channels}, D, H, W), got {x.shape}")
        divisor = self.config.pool ** self.config.levels
        if any(dim % divisor for dim in x.shape[2:]):
            raise ShapeMismatch(f"spatial dims {x.shape[2:]} must be divisible by {divisor}")

    def forward_logits(self, x: np.ndarray, want_cache: bool = False):
        """Pre-sigmoid output (1, 1, D, H, W); optionally keeps layer caches."""
        self._check_input(x)
        x = np.ascontiguousarray(x, dtype=self.dtype)
        cfg = self.config
        caches = {"blocks": [], "pools": [], "ups": [], "skips_ch": []}
        skips = []
        h = x
        for i in range(cfg.levels):
            block_caches: list = []
            h = self._block(f"enc{i}", h, block_caches)
            caches["blocks"].append(block_caches)
            skips.append(h)
            h, c_pool = ops.maxpool3d(h)
            caches["pools"].append(c_pool)
        block_caches = []
        h = self._block("bottleneck", h, block_caches)
        caches["blocks"].append(block_caches)
        for i in reversed(range(cfg.levels)):
            h, c_up = ops.transposed_conv3d(h, self.params[f"dec{i}.up.w"], self.params[f"dec{i}.up.b"])
            caches["ups"].append(c_up)
            skip = skips[i]
            caches["skips_ch"].append(skip.shape[1])
            h = np.concatenate([h, skip], axis=1)
            block_caches = []
            h = self._block(f"dec{i}", h, block_caches)
            caches["blocks"].append(block_caches)
        logits, c_head = ops.conv3d(h, self.params["head.w"], self.params["head.b"])
        caches["head"] = c_head
        if want_cache:
            self._cache = caches
            return logits
        return logits

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Per-voxel probabilities in (0, 1)."""
        probs, _ = ops.sigmoid(self.forward_logits(x))
        return probs

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given dLoss/dlogits from the most recent cached forward."""
        caches = self._cache
        cfg = self.config
        grads: dict[str, np.ndarray] = {}
        dh, dw, db = ops.conv3d_backward(dlogits, caches["head"])
        grads["head.w"] = dw
        grads["head.b"] = db

        blocks = list(caches["blocks"])
        ups = list(caches["ups"])
        skips_ch = list(caches["skips_ch"])
        dskips: dict[int, np.ndarray] = {}
        # decoder caches were appended in forward order (level = levels-1 .. 0);
        # backward walks them last-to-first
        for pos in reversed(range(cfg.levels)):
            block = blocks[cfg.levels + 1 + pos]
            level = cfg.levels - 1 - pos
            for entry in reversed(block):
                dh = self._block_backward(entry, dh, grads)
            up_ch = dh.shape[1] - skips_ch[pos]
            dup, dskip = dh[:, :up_ch], dh[:, up_ch:]
            dskips[level] = dskip
            dh, dw, db = ops.transposed_conv3d_backward(np.ascontiguousarray(dup), ups[pos])
            grads[f"dec{level}.up.w"] = dw
            grads[f"dec{level}.up.b"] = db

        for entry in reversed(blocks[cfg.levels]):  # bottleneck
            dh = self._block_backward(entry, dh, grads)

        for i in reversed(range(cfg.levels)):
            dh = ops.maxpool3d_backward(dh, caches["pools"][i])
            dh = dh + dskips[i]
            for entry in reversed(blocks[i]):
                dh = self._block_backward(entry, dh, grads)
        return grads

    # bookkeeping --------------------------------------------------------------

    def param_count(self) -> int:
        return sum(int(p.size) for p in self.params.values())


def param_count(model: UNet3D) -> int:
    """Total trainable element count across the parameter map."""
    return model.param_count()


def analytic_param_count(config: UNetConfig, in_channels: int = 3) -> int:
    """Closed-form parameter count for a config, independent of any model instance."""
    k3 = config.kernel ** 3
    total = 0
    c_prev = in_channels
    for c in config.level_channels:
        total += c * c_prev * k3 + c  # conv0
        total += c * c * k3 + c  # conv1
        total += 4 * c  # two affine norms
        c_prev = c
    cb = config.bottleneck_channels
    total += cb * c_prev * k3 + cb
    total += cb * cb * k3 + cb
    total += 4 * cb
    c_prev = cb
    for c in reversed(config.level_channels):
        total += c_prev * c * 8 + c  # transposed conv
        total += c * (2 * c) * k3 + c  # conv0 after skip concat
        total += c * c * k3 + c  # conv1
        total += 4 * c
        c_prev = c
    total += c_prev * 1 + 1  # 1x1x1 head
    return total
