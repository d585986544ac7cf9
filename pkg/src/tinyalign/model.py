"""Two-stage landmark network assembly.

Stage 1: stem conv + inverted residual trunk -> per-landmark heatmaps at a
quarter of the input resolution -> soft-argmax -> coarse normalized coords.
Stage 2: two shared 3x3 convs branch off the last stride-4 block; square
boxes centered on the coarse predictions are RoI-aligned out of the shared
features, stacked channel-wise, and one grouped conv (one group per
landmark) emits an offset heatmap per landmark. A centered offset heatmap
decodes to zero offset, leaving the coarse prediction untouched.

Training form: convs are bias-free and followed by batch norm except the
two prediction heads (which carry a bias driving the background prior).
Deploy form: batch norms are folded into conv weights, every conv has bias.
RoI box positions are taken from coarse coordinate values and carry no
gradient; learning flows through the shared features and the additive
coarse + offset composition.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .budget import ComputeBudget, account
from .heatmaps import soft_argmax
from .layers import BatchNorm2d, ConvSpec, InvertedResidualSpec, conv2d, roi_align, upsample_nearest
from .layout import get_layout
from .tensor import Tensor

DEFAULT_BLOCK_TABLE = (
    # (base_out_channels, stride, expansion)
    (16, 1, 6),
    (24, 2, 6),
    (24, 1, 6),
    (48, 2, 6),
    (48, 1, 6),
    (64, 1, 6),
)


def scale_channels(base: int, alpha: float) -> int:
    """Width-multiplier scaling: scale then round up to a multiple of 8."""
    return int(math.ceil(base * alpha / 8.0) * 8)


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 128
    input_channels: int = 3
    width_multiplier: float = 1.0
    num_landmarks: int = 65
    heatmap_size: int = 32
    shared_feature_stride: int = 4
    roi_out_size: int = 8
    roi_box_extent: float = 0.25
    stem_channels: int = 16
    branch_channels: int = 32
    block_table: tuple[tuple[int, int, int], ...] = DEFAULT_BLOCK_TABLE
    two_stage: bool = True
    decode_normalizer: str = "sigmoid"
    landmark_layout: str = "synth65"

    def __post_init__(self):
        if not 0.25 <= self.width_multiplier <= 2.0:
            raise ValueError("width_multiplier must be in [0.25, 2.0]")
        if self.input_size % self.heatmap_size:
            raise ValueError("heatmap_size must divide input_size")
        if self.roi_out_size < 2:
            raise ValueError("roi_out_size must be at least 2")
        if self.roi_box_extent * self.input_size < self.roi_out_size:
            raise ValueError("roi box too small for roi_out_size")
        if self.decode_normalizer not in ("sigmoid", "softmax"):
            raise ValueError("decode_normalizer must be sigmoid or softmax")
        strides = self.block_strides()
        if self.shared_feature_stride not in strides:
            raise ValueError("block table never reaches shared_feature_stride")
        up = self.heatmap_size * strides[-1] / self.input_size
        if up < 1 or up != int(up):
            raise ValueError("heatmap_size incompatible with trunk stride")

    def block_strides(self) -> tuple[int, ...]:
        """Cumulative downsampling factor after the stem and each block."""
        acc = [2]
        for _, stride, _ in self.block_table:
            acc.append(acc[-1] * stride)
        return tuple(acc)

    def branch_block_index(self) -> int:
        """Index of the last block whose output sits at shared_feature_stride."""
        strides = self.block_strides()
        candidates = [i for i, s in enumerate(strides[1:]) if s == self.shared_feature_stride]
        return candidates[-1]

    def head_upsample(self) -> int:
        return int(self.heatmap_size * self.block_strides()[-1] / self.input_size)

    def channels(self) -> dict:
        a = self.width_multiplier
        stem = scale_channels(self.stem_channels, a)
        blocks = []
        cin = stem
        for base_out, stride, t in self.block_table:
            cout = scale_channels(base_out, a)
            blocks.append(InvertedResidualSpec(cin, cout, t, stride))
            cin = cout
        return {
            "stem": stem,
            "blocks": blocks,
            "branch": scale_channels(self.branch_channels, a),
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        raw = json.loads(text)
        raw["block_table"] = tuple(tuple(row) for row in raw["block_table"])
        return ModelConfig(**raw)


def manifest(config: ModelConfig) -> list[tuple[str, ConvSpec]]:
    """Deploy-form layer list; a pure function of the config."""
    ch = config.channels()
    layers: list[tuple[str, ConvSpec]] = [
        ("stem", ConvSpec(config.input_channels, ch["stem"], 3, stride=2, padding=1,
                          activation="relu6")),
    ]
    for i, block in enumerate(ch["blocks"]):
        for part, spec in block.conv_specs(with_bias=True):
            layers.append((f"block{i}.{part}", spec))
    trunk_out = ch["blocks"][-1].out_channels
    layers.append(("head", ConvSpec(trunk_out, config.num_landmarks, 1)))
    if config.two_stage:
        branch_in = ch["blocks"][config.branch_block_index()].out_channels
        cb = ch["branch"]
        layers.append(("branch1", ConvSpec(branch_in, cb, 3, padding=1, activation="relu6")))
        layers.append(("branch2", ConvSpec(cb, cb, 3, padding=1, activation="relu6")))
        layers.append(("predict", ConvSpec(config.num_landmarks * cb, config.num_landmarks,
                                           3, padding=1, groups=config.num_landmarks)))
    return layers


def parameter_manifest(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs for the serialized deploy weights."""
    entries = []
    for name, spec in manifest(config):
        entries.append((f"{name}.w", spec.weight_shape))
        entries.append((f"{name}.b", (spec.out_channels,)))
    return entries


def layer_output_sizes(config: ModelConfig) -> dict[str, int]:
    """Square spatial extent of each layer's output."""
    sizes = {}
    extent = config.input_size // 2
    sizes["stem"] = extent
    for i, (_, stride, _) in enumerate(config.block_table):
        hidden_extent = extent           # expand + first part of dw at input extent
        extent = extent // stride
        sizes[f"block{i}.expand"] = hidden_extent
        sizes[f"block{i}.depthwise"] = extent
        sizes[f"block{i}.project"] = extent
    sizes["head"] = config.heatmap_size
    if config.two_stage:
        branch_extent = config.input_size // config.shared_feature_stride
        sizes["branch1"] = branch_extent
        sizes["branch2"] = branch_extent
        sizes["predict"] = config.roi_out_size
    return sizes


def compute_budget(config: ModelConfig) -> ComputeBudget:
    sizes = layer_output_sizes(config)
    layers = [(spec, sizes[name], sizes[name]) for name, spec in manifest(config)]
    return account(layers)


class ModelWeights:
    """Named deploy-form parameter arrays in manifest order."""

    def __init__(self, entries: list[tuple[str, np.ndarray]]):
        self.entries = [(name, np.asarray(arr, dtype=np.float32)) for name, arr in entries]
        self._index = {name: arr for name, arr in self.entries}
        if len(self._index) != len(self.entries):
            raise ValueError("duplicate parameter name")

    def __getitem__(self, name: str) -> np.ndarray:
        return self._index[name]

    def names(self) -> list[str]:
        return [name for name, _ in self.entries]

    def validate_against(self, config: ModelConfig) -> None:
        expected = parameter_manifest(config)
        got = [(name, arr.shape) for name, arr in self.entries]
        if got != [(n, tuple(s)) for n, s in expected]:
            raise ValueError("weights do not match the config manifest")


class _Layer:
    __slots__ = ("name", "spec", "weight", "bias", "bn")

    def __init__(self, name, spec, weight, bias, bn):
        self.name = name
        self.spec = spec
        self.weight = weight
        self.bias = bias
        self.bn = bn


_HEAD_LAYERS = ("head", "predict")


class AlignmentModel:
    """Holds parameters for either the training or the deploy form."""

    def __init__(self, config: ModelConfig, layers: list[_Layer], training_form: bool):
        self.config = config
        self.layers = {layer.name: layer for layer in layers}
        self.layer_order = [layer.name for layer in layers]
        self.training_form = training_form

    # -- construction -------------------------------------------------------

    @staticmethod
    def initialize(config: ModelConfig, rng: np.random.Generator) -> "AlignmentModel":
        layers = []
        for name, deploy_spec in manifest(config):
            is_head = name in _HEAD_LAYERS
            spec = replace(deploy_spec, bias=is_head)
            if is_head:
                w = (rng.standard_normal(spec.weight_shape) * 0.01).astype(np.float32)
                b = np.full(spec.out_channels, -3.0, dtype=np.float32)
                layers.append(_Layer(name, spec, Tensor(w, requires_grad=True),
                                     Tensor(b, requires_grad=True), None))
            else:
                fan_out = spec.kernel * spec.kernel * spec.out_channels // spec.groups
                std = math.sqrt(2.0 / fan_out)
                w = (rng.standard_normal(spec.weight_shape) * std).astype(np.float32)
                layers.append(_Layer(name, spec, Tensor(w, requires_grad=True),
                                     None, BatchNorm2d(spec.out_channels)))
        return AlignmentModel(config, layers, training_form=True)

    @staticmethod
    def from_weights(config: ModelConfig, weights: ModelWeights) -> "AlignmentModel":
        weights.validate_against(config)
        layers = []
        for name, spec in manifest(config):
            layers.append(_Layer(name, spec, Tensor(weights[f"{name}.w"]),
                                 Tensor(weights[f"{name}.b"]), None))
        return AlignmentModel(config, layers, training_form=False)

    # -- parameter access -----------------------------------------------------

    def parameters(self) -> list[Tensor]:
        params = []
        for name in self.layer_order:
            layer = self.layers[name]
            params.append(layer.weight)
            if layer.bias is not None:
                params.append(layer.bias)
            if layer.bn is not None:
                params.extend([layer.bn.gamma, layer.bn.beta])
        return params

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Full training state (weights, biases, bn params and stats)."""
        state = {}
        for name in self.layer_order:
            layer = self.layers[name]
            state[f"{name}.w"] = layer.weight.data
            if layer.bias is not None:
                state[f"{name}.b"] = layer.bias.data
            if layer.bn is not None:
                state[f"{name}.bn.gamma"] = layer.bn.gamma.data
                state[f"{name}.bn.beta"] = layer.bn.beta.data
                state[f"{name}.bn.mean"] = layer.bn.running_mean
                state[f"{name}.bn.var"] = layer.bn.running_var
        return state

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for name in self.layer_order:
            layer = self.layers[name]
            layer.weight.data = state[f"{name}.w"].astype(np.float32)
            if layer.bias is not None:
                layer.bias.data = state[f"{name}.b"].astype(np.float32)
            if layer.bn is not None:
                layer.bn.gamma.data = state[f"{name}.bn.gamma"].astype(np.float32)
                layer.bn.beta.data = state[f"{name}.bn.beta"].astype(np.float32)
                layer.bn.running_mean = state[f"{name}.bn.mean"].astype(np.float32)
                layer.bn.running_var = state[f"{name}.bn.var"].astype(np.float32)

    def fold_weights(self) -> ModelWeights:
        """Deploy weights with batch norm folded into conv weight and bias."""
        entries = []
        for name in self.layer_order:
            layer = self.layers[name]
            if layer.bn is None:
                entries.append((f"{name}.w", layer.weight.data.copy()))
                entries.append((f"{name}.b", layer.bias.data.copy()))
            else:
                scale, shift = layer.bn.fold_scale_shift()
                entries.append((f"{name}.w", layer.weight.data * scale[:, None, None, None]))
                entries.append((f"{name}.b", shift))
        return ModelWeights(entries)

    # -- forward passes ---------------------------------------------------------

    def _apply(self, name: str, x: Tensor, training: bool) -> Tensor:
        layer = self.layers[name]
        spec = layer.spec
        if layer.bn is None:
            return conv2d(x, spec, layer.weight, layer.bias)
        # run conv linear, then bn, then the activation the spec names
        linear_spec = replace(spec, activation="none")
        out = conv2d(x, linear_spec, layer.weight)
        out = layer.bn.forward(out, training)
        if spec.activation == "relu6":
            out = T.relu6(out)
        return out

    def forward_stage1(self, image: Tensor, training: bool = False):
        """-> (coarse_logits (N,L,H,H), shared_features, coarse_coords (N,L,2))."""
        cfg = self.config
        n = image.shape[0]
        if image.shape[1] != cfg.input_channels or image.shape[2] != cfg.input_size \
                or image.shape[3] != cfg.input_size:
            raise ValueError(f"expected (N,{cfg.input_channels},{cfg.input_size},"
                             f"{cfg.input_size}) input, got {image.shape}")
        out = self._apply("stem", image, training)
        shared = None
        branch_idx = cfg.branch_block_index() if cfg.two_stage else -1
        for i, block in enumerate(cfg.channels()["blocks"]):
            block_in = out
            for part, _ in block.conv_specs(with_bias=False):
                out = self._apply(f"block{i}.{part}", out, training)
            if block.use_skip:
                out = T.add(out, block_in)
            if i == branch_idx:
                shared = out
        trunk = upsample_nearest(out, cfg.head_upsample())
        logits = self._apply("head", trunk, training)
        coarse_hm = soft_argmax(logits, cfg.decode_normalizer)      # (N,L,2) grid units
        denom = float(cfg.heatmap_size - 1)
        coarse = T.mul(coarse_hm, Tensor(np.asarray(1.0 / denom, dtype=coarse_hm.dtype)))
        return logits, shared, coarse

    def forward_stage2(self, shared: Tensor, coarse: Tensor, training: bool = False):
        """-> (offset_logits (N,L,S,S), refined_coords (N,L,2)).

        Boxes are squares of side roi_box_extent centered on the coarse
        coordinate *values*; the box path is non-differentiable by design.
        """
        cfg = self.config
        if not cfg.two_stage:
            raise RuntimeError("stage 2 disabled in this config")
        s = cfg.roi_out_size
        half = cfg.roi_box_extent / 2.0
        centers = coarse.data                                        # detached
        boxes = np.concatenate([centers - half, centers + half], axis=-1)
        crops = roi_align(shared, boxes, s)                          # (N,L,C,S,S)
        n, l, c = crops.shape[0], crops.shape[1], crops.shape[2]
        stacked = T.reshape(crops, (n, l * c, s, s))
        offset_logits = self._apply("predict", stacked, training)    # (N,L,S,S)
        decode = soft_argmax(offset_logits, cfg.decode_normalizer)   # [0, S-1]
        scale = cfg.roi_box_extent / (s - 1)
        center_const = Tensor(np.asarray((s - 1) / 2.0, dtype=decode.dtype))
        offset = T.mul(T.sub(decode, center_const),
                       Tensor(np.asarray(scale, dtype=decode.dtype)))
        refined = T.add(coarse, offset)
        return offset_logits, refined

    def forward_shared_branch(self, shared: Tensor, training: bool = False) -> Tensor:
        out = self._apply("branch1", shared, training)
        return self._apply("branch2", out, training)

    def forward(self, image: Tensor, training: bool = False):
        """Full network. Returns a dict of intermediate tensors."""
        logits, shared, coarse = self.forward_stage1(image, training)
        result = {"coarse_logits": logits, "coarse": coarse}
        if self.config.two_stage:
            feats = self.forward_shared_branch(shared, training)
            offset_logits, refined = self.forward_stage2(feats, coarse, training)
            result["offset_logits"] = offset_logits
            result["refined"] = refined
            result["final"] = refined
        else:
            result["final"] = coarse
        return result

    def predict(self, images: np.ndarray) -> np.ndarray:
        """(N,C,H,W) float image batch -> (N,L,2) normalized coords in [0,1]."""
        with T.no_grad():
            out = self.forward(Tensor(images.astype(np.float32)), training=False)
        return np.clip(out["final"].data, 0.0, 1.0)

    @property
    def layout(self):
        return get_layout(self.config.landmark_layout)
