"""Rademacher-complexity upper bounds for the temporal convolution layer and the network.

Per layer, ``R(TemporalConvLayer) <= (||W_align||_F + ||W_conv||_F) / sqrt(m)``.
Analytic mode plugs in Xavier expectations (``E||W||_F`` taken as
``sqrt(E||W||_F^2)``); measured mode reads the norms off checkpoint weights.
Frobenius norms stand in for Lipschitz constants, so every figure is an
upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Iterable

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class LayerComplexitySpec:
    c_in: int
    c_out: int
    kernel_elems: int
    m: int

    def __post_init__(self):
        if min(self.c_in, self.c_out, self.kernel_elems, self.m) < 1:
            raise ConfigError(f"complexity spec values must be positive: {self}")


@dataclass
class ComplexityReport:
    mode: str
    align_frobenius: float
    conv_frobenius: float
    m: int
    num_blocks: int
    layer_bound: float
    block_lipschitz: float
    network_bound_single: float
    network_bound_compositional: float
    inputs: dict = field(default_factory=dict)
    per_layer: list[dict] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"mode={self.mode}"]
        out += [f"{k}={v}" for k, v in self.inputs.items()]
        out += [
            f"m={self.m}",
            f"num_blocks={self.num_blocks}",
            f"align_frobenius={self.align_frobenius!r}",
            f"conv_frobenius={self.conv_frobenius!r}",
            f"layer_bound={self.layer_bound!r}",
            f"block_lipschitz={self.block_lipschitz!r}",
            f"network_bound_single={self.network_bound_single!r}",
            f"network_bound_compositional={self.network_bound_compositional!r}",
        ]
        for layer in self.per_layer:
            name = layer["layer"]
            out.append(f"layer.{name}.align_frobenius={layer['align_frobenius']!r}")
            out.append(f"layer.{name}.conv_frobenius={layer['conv_frobenius']!r}")
            out.append(f"layer.{name}.bound={layer['bound']!r}")
        return out

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def parse_report(text: str) -> dict[str, str]:
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def xavier_expected_frobenius(c_in: int, c_out: int, kernel_elems: int = 1) -> float:
    """``sqrt(c_out * c_in * kernel_elems * 2 / (c_in + c_out))``."""
    if min(c_in, c_out, kernel_elems) <= 0:
        raise ConfigError("channel counts and kernel size must be positive")
    return math.sqrt(c_out * c_in * kernel_elems * 2.0 / (c_in + c_out))


def bound_from_norms(align_norm: float, conv_norm: float, m: int) -> float:
    if m < 1:
        raise ConfigError(f"sample count must be >= 1, got {m}")
    return (align_norm + conv_norm) / math.sqrt(m)


def layer_bound(spec: LayerComplexitySpec) -> float:
    align = xavier_expected_frobenius(spec.c_in, spec.c_out, 1)
    conv = xavier_expected_frobenius(spec.c_in, spec.c_out, spec.kernel_elems)
    return bound_from_norms(align, conv, spec.m)


def block_lipschitz(norms: Iterable[float]) -> float:
    """Product of per-layer Lipschitz surrogates; ReLU contributes a factor 1."""
    norms = list(norms)
    if not norms:
        raise ConfigError("block_lipschitz needs at least one norm")
    if any(v < 0 for v in norms):
        raise ConfigError("norms must be non-negative")
    return math.prod(norms)


def network_bound(lipschitz: float, layer: float, num_blocks: int) -> tuple[float, float]:
    """``(single-product form, compositional form)``.

    The single-product form is ``lipschitz * layer``; the compositional form
    is ``lipschitz ** (num_blocks - 1) * layer``.
    """
    if num_blocks < 1:
        raise ConfigError("num_blocks must be >= 1")
    return lipschitz * layer, lipschitz ** (num_blocks - 1) * layer


def analytic_report(c_in: int = 16, c_out: int = 32, kt: int = 3, m: int = 10000,
                    num_blocks: int = 2) -> ComplexityReport:
    spec = LayerComplexitySpec(c_in, c_out, kt, m)
    align = xavier_expected_frobenius(c_in, c_out, 1)
    conv = xavier_expected_frobenius(c_in, c_out, kt)
    lb = layer_bound(spec)
    lip = block_lipschitz([align, conv])
    single, comp = network_bound(lip, lb, num_blocks)
    return ComplexityReport("analytic", align, conv, m, num_blocks, lb, lip, single, comp,
                            inputs={"c_in": c_in, "c_out": c_out, "kt": kt})


def measured_report(params: dict, m: int, num_blocks: int | None = None) -> ComplexityReport:
    """Bounds from stored weights.

    Every temporal layer (``*.align_w`` with a matching ``*.conv_w``) gets its
    own bound; the headline figures use the layer with the largest bound.
    """
    layers = []
    for name in params:
        if not name.endswith(".align_w"):
            continue
        prefix = name[: -len(".align_w")]
        conv_key = f"{prefix}.conv_w"
        if conv_key not in params:
            continue
        a = float(np.linalg.norm(np.asarray(params[name]).reshape(-1)))
        c = float(np.linalg.norm(np.asarray(params[conv_key]).reshape(-1)))
        layers.append({"layer": prefix, "align_frobenius": a, "conv_frobenius": c,
                       "bound": bound_from_norms(a, c, m)})
    if not layers:
        raise ConfigError("no temporal layers found in parameters")
    if num_blocks is None:
        num_blocks = len({ly["layer"].split(".")[0] for ly in layers if ly["layer"].startswith("block")}) or 1
    top = max(layers, key=lambda ly: ly["bound"])
    lip = block_lipschitz([top["align_frobenius"], top["conv_frobenius"]])
    single, comp = network_bound(lip, top["bound"], num_blocks)
    return ComplexityReport("measured", top["align_frobenius"], top["conv_frobenius"], m, num_blocks,
                            top["bound"], lip, single, comp, inputs={"headline_layer": top["layer"]},
                            per_layer=layers)
