"""Spatio-temporal graph convolutional network built on :mod:`gpstgn.autodiff`.

Layout: ``num_blocks`` ST-Conv blocks (temporal -> Chebyshev spatial + ReLU ->
temporal), then an output head whose temporal layer spans all remaining
steps, followed by two 1x1 linear layers producing one value per node.
Parameter shapes never depend on the node count.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .graph import cheb_graph_conv

Params = dict[str, Tensor]


@dataclass(frozen=True)
class ModelConfig:
    num_blocks: int = 2
    channels: tuple[tuple[int, int, int], ...] = field(default=((32, 16, 32), (32, 16, 32)))
    kt: int = 3
    ks: int = 3
    his: int = 12
    activation: str = "glu"
    in_channels: int = 1
    head_linear_layers: int = 2

    def __post_init__(self):
        chans = tuple(tuple(int(c) for c in triple) for triple in self.channels)
        if len(chans) == 1 and self.num_blocks > 1:
            chans = chans * self.num_blocks
        object.__setattr__(self, "channels", chans)
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")
        if len(chans) != self.num_blocks or any(len(t) != 3 for t in chans):
            raise ConfigError(f"need {self.num_blocks} channel triples, got {chans}")
        if any(c < 1 for t in chans for c in t) or self.in_channels < 1:
            raise ConfigError("all channel counts must be >= 1")
        if self.kt < 1 or self.ks < 1:
            raise ConfigError("kernel sizes must be >= 1")
        if self.activation not in ("glu", "relu"):
            raise ConfigError(f"activation must be 'glu' or 'relu', got {self.activation!r}")
        if self.head_linear_layers < 1:
            raise ConfigError("head needs at least one linear layer")
        if self.head_time <= self.kt - 1:
            raise ConfigError(
                f"his={self.his} too short: {self.num_blocks} blocks with K_t={self.kt} leave "
                f"{self.head_time} steps, need at least {self.kt}"
            )

    @property
    def head_time(self) -> int:
        """Time steps left after the blocks; the head kernel spans all of them."""
        return self.his - self.num_blocks * 2 * (self.kt - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = [list(t) for t in self.channels]
        return d


def _temporal_shapes(prefix: str, c_in: int, c_out: int, kt: int, glu: bool) -> dict[str, tuple]:
    conv_out = 2 * c_out if glu else c_out
    return {
        f"{prefix}.align_w": (c_out, c_in, 1, 1),
        f"{prefix}.conv_w": (conv_out, c_in, kt, 1),
        f"{prefix}.conv_b": (conv_out,),
    }


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Ordered parameter names and shapes; the draw order of :func:`init_params`."""
    glu = cfg.activation == "glu"
    shapes: dict[str, tuple] = {}
    c_prev = cfg.in_channels
    for b, (ct1, cs, ct2) in enumerate(cfg.channels):
        shapes.update(_temporal_shapes(f"block{b}.t1", c_prev, ct1, cfg.kt, glu))
        shapes[f"block{b}.s.theta"] = (cfg.ks, ct1, cs)
        shapes[f"block{b}.s.bias"] = (cs,)
        shapes.update(_temporal_shapes(f"block{b}.t2", cs, ct2, cfg.kt, glu))
        c_prev = ct2
    shapes.update(_temporal_shapes("head.t", c_prev, c_prev, cfg.head_time, glu))
    for i in range(cfg.head_linear_layers):
        c_out = 1 if i == cfg.head_linear_layers - 1 else c_prev
        shapes[f"head.fc{i}.w"] = (c_out, c_prev, 1, 1)
        shapes[f"head.fc{i}.b"] = (c_out,)
    return shapes


def xavier_bound(c_in: int, c_out: int) -> float:
    return float(np.sqrt(6.0 / (c_in + c_out)))


def xavier_uniform(shape: tuple, rng: np.random.Generator) -> np.ndarray:
    """Uniform Xavier draw with fans taken from the channel axes only.

    Conv weights are ``C_out x C_in x kh x kw``, Chebyshev weights are
    ``K x C_in x C_out``. The kernel extent is left out of the fans, so every
    element has variance ``2 / (C_in + C_out)`` and
    ``E||W||_F^2 = C_out * C_in * k * 2 / (C_in + C_out)``.
    """
    if len(shape) == 4:
        c_out, c_in = shape[0], shape[1]
    elif len(shape) == 3:
        c_in, c_out = shape[1], shape[2]
    elif len(shape) == 2:
        c_in, c_out = shape
    else:
        raise ConfigError(f"no Xavier rule for shape {shape}")
    a = xavier_bound(c_in, c_out)
    return rng.uniform(-a, a, size=shape)


def init_params(cfg: ModelConfig, seed: int) -> Params:
    """Xavier-uniform weights, zero biases, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            value = np.zeros(shape)
        else:
            value = xavier_uniform(shape, rng)
        params[name] = Tensor(value, name=name, requires_grad=True)
    return params


def param_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


def temporal_layer_forward(x: Tensor, params: Mapping[str, Tensor], prefix: str, activation: str) -> Tensor:
    conv_w = params[f"{prefix}.conv_w"]
    kt = conv_w.shape[2]
    res = ad.pointwise_channel_map(x, params[f"{prefix}.align_w"])
    if kt > 1:
        res = ad.crop_time(res, kt - 1)
    conv = ad.causal_conv_time(x, conv_w, params[f"{prefix}.conv_b"])
    if activation == "glu":
        p, q = ad.split_channels(conv)
        return ad.glu_residual(p, q, res)
    return ad.relu(ad.add(conv, res))


def spatial_layer_forward(x: Tensor, params: Mapping[str, Tensor], prefix: str, basis: np.ndarray) -> Tensor:
    out = cheb_graph_conv(x, params[f"{prefix}.theta"], basis)
    return ad.relu(ad.add_bias(out, params[f"{prefix}.bias"]))


def st_conv_block_forward(x: Tensor, params, block: int, cfg: ModelConfig, basis) -> Tensor:
    h = temporal_layer_forward(x, params, f"block{block}.t1", cfg.activation)
    h = spatial_layer_forward(h, params, f"block{block}.s", basis)
    return temporal_layer_forward(h, params, f"block{block}.t2", cfg.activation)


def model_forward(x: Tensor, params: Mapping[str, Tensor], cfg: ModelConfig, basis: np.ndarray) -> Tensor:
    """``B x C_in x his x N`` input to ``B x N`` predictions (normalized units)."""
    if x.data.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[2] != cfg.his:
        raise ConfigError(f"model expects B x {cfg.in_channels} x {cfg.his} x N input, got {x.shape}")
    h = x
    for b in range(cfg.num_blocks):
        h = st_conv_block_forward(h, params, b, cfg, basis)
    h = temporal_layer_forward(h, params, "head.t", cfg.activation)
    last = cfg.head_linear_layers - 1
    for i in range(cfg.head_linear_layers):
        h = ad.add_bias(ad.pointwise_channel_map(h, params[f"head.fc{i}.w"]), params[f"head.fc{i}.b"])
        if i < last:
            h = ad.relu(h)
    batch, _, _, n = h.shape
    return ad.reshape(h, (batch, n))


class STGCN:
    """Binds a config and graph basis into a ``forward(params, x)`` callable."""

    def __init__(self, cfg: ModelConfig, basis: np.ndarray):
        self.cfg = cfg
        self.basis = np.asarray(basis)

    def init_params(self, seed: int) -> Params:
        return init_params(self.cfg, seed)

    def forward(self, params: Mapping[str, Tensor], x: np.ndarray) -> Tensor:
        """``x`` is ``B x his x N`` (single channel) or already ``B x C x his x N``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[:, None, :, :]
        return model_forward(Tensor._wrap(x), params, self.cfg, self.basis)
