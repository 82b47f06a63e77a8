"""NN4EO convolutional classifiers and a minimal ViT, with classical or quantum heads.

Every family ends in a single logit. The classical head squashes it with a
sigmoid; the hybrid head feeds it unchanged as the rotation angle of the
single-qubit circuit and reads out P(1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError, ValidationError
from .qsim import ANALYTIC, QuantumBackend, circuit_forward, param_shift_grad

FAMILIES = ("nn4eo_v1", "nn4eo_v2", "nn4eo_v3", "vit")
DEFAULT_CHANNELS = {"nn4eo_v1": (6,), "nn4eo_v2": (6, 12), "nn4eo_v3": (6, 12, 24), "vit": ()}
_BLOCKS = {"nn4eo_v1": 1, "nn4eo_v2": 2, "nn4eo_v3": 3}
_DISPLAY = {"nn4eo_v1": "NN4EOv1", "nn4eo_v2": "NN4EOv2", "nn4eo_v3": "NN4EOv3", "vit": "ViT"}
KERNEL = 5
HIDDEN = 64


@dataclass(frozen=True)
class ModelSpec:
    family: str = "nn4eo_v1"
    quantum_head: bool = False
    conv_channels: tuple[int, ...] | None = None
    padding: str = "same"
    vit_patch: int = 8
    vit_embed_dim: int = 48
    vit_heads: int = 2
    input_shape: tuple[int, int, int] = (3, 64, 64)

    def __post_init__(self):
        family = self.family.replace("-", "_").lower()
        object.__setattr__(self, "family", family)
        if family not in FAMILIES:
            raise ValidationError(f"unknown model family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.conv_channels is None:
            object.__setattr__(self, "conv_channels", DEFAULT_CHANNELS[family])
        else:
            object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        self.validate()

    def validate(self) -> None:
        c, h, w = self.input_shape
        if self.family == "vit":
            if self.conv_channels:
                raise ValidationError("vit takes no conv_channels")
            if self.vit_patch < 1 or h % self.vit_patch or w % self.vit_patch:
                raise ValidationError(f"vit_patch {self.vit_patch} must divide the input size {h}x{w}")
            if self.vit_heads < 1 or self.vit_embed_dim % self.vit_heads:
                raise ValidationError(
                    f"vit_embed_dim {self.vit_embed_dim} must be divisible by vit_heads {self.vit_heads}"
                )
            return
        blocks = _BLOCKS[self.family]
        if len(self.conv_channels) != blocks:
            raise ValidationError(f"{self.family} needs {blocks} conv channel counts, got {len(self.conv_channels)}")
        if any(ch < 1 for ch in self.conv_channels):
            raise ValidationError("conv channel counts must be positive")
        if self.padding not in ("same", "valid"):
            raise ValidationError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        block_spatial_sizes(self)

    @property
    def display_name(self) -> str:
        base = _DISPLAY[self.family]
        return f"HQ{base}" if self.quantum_head else base

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "quantum_head": self.quantum_head,
            "conv_channels": list(self.conv_channels),
            "padding": self.padding,
            "vit_patch": self.vit_patch,
            "vit_embed_dim": self.vit_embed_dim,
            "vit_heads": self.vit_heads,
            "input_shape": list(self.input_shape),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        if "input_shape" in d:
            d["input_shape"] = tuple(d["input_shape"])
        return cls(**d)


def block_spatial_sizes(spec: ModelSpec) -> list[tuple[int, int]]:
    """Spatial size after each conv block (conv -> 2x2 pool)."""
    _, h, w = spec.input_shape
    sizes = []
    for i, _ in enumerate(spec.conv_channels):
        if spec.padding == "valid":
            h, w = h - KERNEL + 1, w - KERNEL + 1
            if h < 1 or w < 1:
                raise ValidationError(f"block {i}: input too small for a {KERNEL}x{KERNEL} valid convolution")
        if h % 2 or w % 2:
            raise ValidationError(f"block {i}: spatial size {h}x{w} is odd and cannot be 2x2 pooled")
        h, w = h // 2, w // 2
        sizes.append((h, w))
    return sizes


@dataclass
class AttentionLayer:
    """Per-head query/key/value projections plus the output projection."""

    heads: list[dict[str, Tensor]]
    wo: Tensor
    bo: Tensor

    @property
    def d_k(self) -> int:
        return self.heads[0]["wq"].shape[0]


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, Tensor]
    plan: list[str] = field(default_factory=list)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.params.items())

    @property
    def param_count(self) -> int:
        return param_count(self)

    def attention(self) -> AttentionLayer:
        if self.spec.family != "vit":
            raise ValidationError(f"{self.spec.family} has no attention layer")
        p = self.params
        heads = [
            {k: p[f"msa.head{h}.{k}"] for k in ("wq", "bq", "wk", "bk", "wv", "bv")}
            for h in range(self.spec.vit_heads)
        ]
        return AttentionLayer(heads, p["msa.wo"], p["msa.bo"])

    def logit(self, image: Tensor) -> Tensor:
        return _logit(self, image)

    def __call__(self, image: Tensor, backend: QuantumBackend = ANALYTIC, rng=None) -> Tensor:
        return forward(self, image, backend, rng)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------
def _param_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...], str]]:
    """(name, shape, init) in the fixed draw order."""
    shapes: list[tuple[str, tuple[int, ...], str]] = []
    c_in = spec.input_shape[0]
    if spec.family == "vit":
        d, p, dk = spec.vit_embed_dim, spec.vit_patch, spec.vit_embed_dim // spec.vit_heads
        shapes += [("patch.weight", (d, c_in * p * p), "uniform"), ("patch.bias", (d,), "uniform")]
        for h in range(spec.vit_heads):
            for proj in ("q", "k", "v"):
                shapes += [(f"msa.head{h}.w{proj}", (dk, d), "uniform"), (f"msa.head{h}.b{proj}", (dk,), "uniform")]
        shapes += [("msa.wo", (d, d), "uniform"), ("msa.bo", (d,), "uniform")]
        shapes += [("norm1.gamma", (d,), "ones"), ("norm1.beta", (d,), "zeros")]
        shapes += [("ffn.weight", (d, d), "uniform"), ("ffn.bias", (d,), "uniform")]
        shapes += [("norm2.gamma", (d,), "ones"), ("norm2.beta", (d,), "zeros")]
        shapes += [("head.weight", (1, d), "uniform"), ("head.bias", (1,), "uniform")]
        return shapes

    for i, c_out in enumerate(spec.conv_channels):
        shapes += [(f"conv{i}.weight", (c_out, c_in, KERNEL, KERNEL), "uniform"), (f"conv{i}.bias", (c_out,), "uniform")]
        c_in = c_out
    h, w = block_spatial_sizes(spec)[-1]
    flat = c_in * h * w
    if spec.family == "nn4eo_v1":
        shapes += [("fc0.weight", (1, flat), "uniform"), ("fc0.bias", (1,), "uniform")]
    else:
        shapes += [("fc0.weight", (HIDDEN, flat), "uniform"), ("fc0.bias", (HIDDEN,), "uniform")]
        shapes += [("fc1.weight", (1, HIDDEN), "uniform"), ("fc1.bias", (1,), "uniform")]
    return shapes


def _fan_in(name: str, shapes: dict[str, tuple[int, ...]]) -> int:
    layer = name.rsplit(".", 1)[0]
    if name.startswith("msa.head"):
        weight = shapes[f"{layer}.w{name[-1]}"]
    elif layer == "msa":
        weight = shapes["msa.wo"]
    else:
        weight = shapes[f"{layer}.weight"]
    return int(np.prod(weight[1:]))


def layer_plan(spec: ModelSpec) -> list[str]:
    plan = []
    if spec.family == "vit":
        d = spec.vit_embed_dim
        n = (spec.input_shape[1] // spec.vit_patch) * (spec.input_shape[2] // spec.vit_patch)
        plan += [
            f"patch_embed {spec.vit_patch}x{spec.vit_patch} -> {n} tokens x {d}",
            f"msa heads={spec.vit_heads} d_k={d // spec.vit_heads} -> layer_norm -> +residual",
            f"ffn linear {d}->{d} -> relu -> layer_norm -> +residual",
            "mean over tokens",
            f"linear {d}->1",
        ]
    else:
        c_in = spec.input_shape[0]
        for (h, w), c in zip(block_spatial_sizes(spec), spec.conv_channels):
            plan.append(f"conv{KERNEL}x{KERNEL} {c_in}->{c} ({spec.padding}) -> maxpool2x2 -> relu => {c}x{h}x{w}")
            c_in = c
        h, w = block_spatial_sizes(spec)[-1]
        flat = c_in * h * w
        if spec.family == "nn4eo_v1":
            plan.append(f"flatten -> linear {flat}->1")
        else:
            plan.append(f"flatten -> linear {flat}->{HIDDEN} -> relu -> linear {HIDDEN}->1")
    plan.append("quantum head: H -> Ry(logit) -> P(1)" if spec.quantum_head else "sigmoid head")
    return plan


def build_model(spec: ModelSpec, seed: int) -> Model:
    """Instantiate a model, drawing every weight from one seeded generator."""
    spec.validate()
    rng = np.random.default_rng(seed)
    entries = _param_shapes(spec)
    shapes = {name: shape for name, shape, _ in entries}
    params: dict[str, Tensor] = {}
    for name, shape, init in entries:
        if init == "uniform":
            bound = 1.0 / math.sqrt(_fan_in(name, shapes))
            data = rng.uniform(-bound, bound, size=shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return Model(spec, params, layer_plan(spec))


def param_count(model: Model) -> int:
    return int(sum(t.size for t in model.params.values()))


def with_head(model: Model, quantum: bool) -> Model:
    """Same parameters (shared, not copied) under the other head type."""
    return Model(replace(model.spec, quantum_head=quantum), model.params, layer_plan(replace(model.spec, quantum_head=quantum)))


# ---------------------------------------------------------------------------
# ViT pieces
# ---------------------------------------------------------------------------
def patch_embed(image: Tensor, patch: int, weight: Tensor, bias: Tensor) -> Tensor:
    """Flatten non-overlapping patches and map each through a shared linear layer."""
    return ad.linear(ad.patchify(image, patch), weight, bias)


def self_attention(x: Tensor, layer: AttentionLayer, return_weights: bool = False):
    """Multi-head scaled dot-product self-attention over the rows of ``x``."""
    if x.data.ndim != 2:
        raise DimensionError(f"self_attention: expected [n, d] tokens, got shape {x.shape}")
    d = x.shape[1]
    if layer.wo.shape != (d, layer.d_k * len(layer.heads)):
        raise DimensionError(f"self_attention: token axis 1 has size {d}, projections expect {layer.wo.shape[1]}")
    scale = 1.0 / math.sqrt(layer.d_k)
    outs, weights = [], []
    for h in layer.heads:
        q = ad.linear(x, h["wq"], h["bq"])
        k = ad.linear(x, h["wk"], h["bk"])
        v = ad.linear(x, h["wv"], h["bv"])
        a = ad.softmax(ad.mul(ad.matmul(q, ad.transpose(k)), scale), axis=-1)
        weights.append(a.data)
        outs.append(ad.matmul(a, v))
    out = ad.linear(ad.concat(outs, axis=-1), layer.wo, layer.bo)
    return (out, weights) if return_weights else out


def msa_block(x: Tensor, model: Model) -> Tensor:
    """Attention sublayer then feed-forward sublayer, each normalised before its residual add."""
    p = model.params
    x_msa = ad.add(ad.layer_norm(self_attention(x, model.attention()), p["norm1.gamma"], p["norm1.beta"]), x)
    ffn = ad.relu(ad.linear(x_msa, p["ffn.weight"], p["ffn.bias"]))
    return ad.add(ad.layer_norm(ffn, p["norm2.gamma"], p["norm2.beta"]), x_msa)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------
def quantum_head(theta: Tensor, backend: QuantumBackend = ANALYTIC, rng=None) -> Tensor:
    """P(1) of the H -> Ry(theta) circuit, differentiated by parameter shift."""
    if theta.size != 1:
        raise DimensionError(f"quantum_head: expected one angle, got shape {theta.shape}")
    angle = theta.item()
    p1 = circuit_forward(angle, backend, rng)
    shape = theta.shape

    def backward(g):
        return (g * param_shift_grad(angle),)

    return ad.record("quantum_head", (theta,), np.full(shape, p1), backward)


def _logit(model: Model, image: Tensor) -> Tensor:
    spec, p = model.spec, model.params
    if image.shape != spec.input_shape:
        raise DimensionError(f"expected an image of shape {spec.input_shape}, got {image.shape}")
    if spec.family == "vit":
        tokens = patch_embed(image, spec.vit_patch, p["patch.weight"], p["patch.bias"])
        pooled = ad.mean(msa_block(tokens, model), axis=0)
        return ad.linear(pooled, p["head.weight"], p["head.bias"])

    x = image
    for i in range(len(spec.conv_channels)):
        x = ad.conv2d(x, p[f"conv{i}.weight"], p[f"conv{i}.bias"], spec.padding)
        x = ad.relu(ad.maxpool2d(x, 2))
    x = ad.flatten(x)
    if spec.family == "nn4eo_v1":
        return ad.linear(x, p["fc0.weight"], p["fc0.bias"])
    x = ad.relu(ad.linear(x, p["fc0.weight"], p["fc0.bias"]))
    return ad.linear(x, p["fc1.weight"], p["fc1.bias"])


def forward(model: Model, image: Tensor, backend: QuantumBackend = ANALYTIC, rng=None) -> Tensor:
    """Positive-class probability for one [3, H, W] image, shape (1,)."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    logit = _logit(model, image)
    if model.spec.quantum_head:
        return quantum_head(logit, backend, rng)
    return ad.sigmoid(logit)
