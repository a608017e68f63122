"""Pyramid-style saliency network with attention-fused dilated branches.

Encoder: five plain conv blocks, each two 3x3 conv+ReLU then a stride-2
max-pool, with 1x1 lateral projections and top-down summation producing
aggregated feature maps FM2..FM5; only FM2 (quarter resolution) feeds the
decoder.  The aggregation module runs three parallel dilated 3x3 convs,
fuses them with per-branch scalar attention gates, post-processes with two
conv+ReLU layers and closes with a residual connection.  The decoder
stacks three such modules (or their 1x1 degraded form), reduces to one
channel, applies a sigmoid and upsamples x4 back to input resolution.

Parameters live in a flat name->Tensor dict; ``param_shapes`` is the
single source of truth for which parameters a configuration owns, so
initialization, checkpointing and ablation wiring cannot drift apart.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class MsFamConfig:
    feature_dim: int = 64
    dilation_rates: tuple = (1, 2, 4)
    use_bam: bool = True
    degrade_to_1x1: bool = False

    def validate(self):
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1; got {self.feature_dim}")
        if not self.degrade_to_1x1 and len(self.dilation_rates) != 3:
            raise ValueError(
                f"exactly 3 dilation branches required; got {self.dilation_rates}")
        return self


@dataclass
class ModelConfig:
    input_size: int = 64
    encoder_channels: tuple = (16, 32, 48, 64, 64)
    msfam_in_encoder: bool = False
    msfam_in_decoder: bool = False
    msfam: MsFamConfig = field(default_factory=MsFamConfig)

    def validate(self):
        if len(self.encoder_channels) != 5:
            raise ValueError(
                f"exactly 5 encoder blocks required; got {self.encoder_channels}")
        if self.input_size % 16 != 0:
            raise ValueError(f"input_size must be divisible by 16; got {self.input_size}")
        self.msfam.validate()
        return self


def _conv_shapes(shapes, prefix, c_in, c_out, k):
    shapes[prefix + ".w"] = (c_out, c_in, k, k)
    shapes[prefix + ".b"] = (c_out,)


def _msfam_shapes(shapes, prefix, c_in, mcfg):
    fd = mcfg.feature_dim
    if mcfg.degrade_to_1x1:
        _conv_shapes(shapes, prefix + ".deg", c_in, fd, 1)
        return
    _conv_shapes(shapes, prefix + ".red1", c_in, fd, 1)
    _conv_shapes(shapes, prefix + ".red2", fd, fd, 3)
    for b in range(3):
        _conv_shapes(shapes, f"{prefix}.br{b + 1}", fd, fd, 3)
    if mcfg.use_bam:
        hidden = (3 * fd) // 4
        shapes[prefix + ".fc1.w"] = (hidden, 3 * fd)
        shapes[prefix + ".fc1.b"] = (hidden,)
        shapes[prefix + ".fc2.w"] = (3, hidden)
        shapes[prefix + ".fc2.b"] = (3,)
    _conv_shapes(shapes, prefix + ".adj1", fd, fd, 3)
    _conv_shapes(shapes, prefix + ".adj2", fd, fd, 3)
    if c_in != fd:
        _conv_shapes(shapes, prefix + ".proj", c_in, fd, 1)


def param_shapes(cfg):
    """Name -> shape for every parameter the configuration owns, in a
    fixed order shared by init, checkpoints and the optimizer."""
    cfg.validate()
    shapes = {}
    chans = (3,) + tuple(cfg.encoder_channels)
    for i in range(1, 6):
        _conv_shapes(shapes, f"enc{i}a", chans[i - 1], chans[i], 3)
        _conv_shapes(shapes, f"enc{i}b", chans[i], chans[i], 3)
    fd = cfg.msfam.feature_dim
    for i in range(2, 6):
        lat_in = chans[i]
        if cfg.msfam_in_encoder and i >= 3:
            _msfam_shapes(shapes, f"encfam{i}", chans[i], cfg.msfam)
            lat_in = fd
        _conv_shapes(shapes, f"lat{i}", lat_in, fd, 1)
    for s in range(1, 4):
        if cfg.msfam_in_decoder:
            _msfam_shapes(shapes, f"decfam{s}", fd, cfg.msfam)
        else:
            _conv_shapes(shapes, f"dec{s}.deg", fd, fd, 1)
    _conv_shapes(shapes, "deca", fd, fd, 3)
    _conv_shapes(shapes, "decb", fd, fd, 3)
    _conv_shapes(shapes, "dechead", fd, 1, 1)
    return shapes


def init_params(cfg, seed):
    """Fan-in-scaled uniform weights, zero biases, fully seed-determined."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = ad.Tensor(np.zeros(shape), requires_grad=True)
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = ad.Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)
    return params


def _conv(x, params, prefix, stride=1, padding=0, dilation=1, act=True):
    out = ad.conv2d(x, params[prefix + ".w"], params[prefix + ".b"],
                    stride=stride, padding=padding, dilation=dilation)
    return out.relu() if act else out


def _pool_ceil(x):
    # stride-2 max-pool in ceil mode; odd sizes get a replicated edge that
    # always loses argmax ties to the real pixel it copies
    x = ad.pad_edge_br(x, x.shape[2] % 2, x.shape[3] % 2)
    return ad.maxpool2d(x, 2, 2, 0)


def bam_weights(branches, params, prefix):
    """Per-branch scalar gates in (0,1): pooled descriptors through a
    two-layer bottleneck, one sigmoid scalar per branch."""
    pooled = [ad.global_avg_pool(b) for b in branches]
    bsz = branches[0].shape[0]
    desc = ad.concat([p.reshape(bsz, -1) for p in pooled], axis=1)
    h = ad.linear(desc, params[prefix + ".fc1.w"], params[prefix + ".fc1.b"]).relu()
    gates = ad.linear(h, params[prefix + ".fc2.w"], params[prefix + ".fc2.b"]).sigmoid()
    return tuple(ad.narrow(gates, 1, i, 1).reshape(bsz, 1, 1, 1) for i in range(3))


def msfam_forward(x, mcfg, params, prefix):
    """Aggregation module; spatial size is preserved for any input size."""
    if mcfg.degrade_to_1x1:
        return _conv(x, params, prefix + ".deg")
    fd = mcfg.feature_dim
    if x.shape[1] != fd and prefix + ".proj.w" not in params:
        raise ValueError(
            f"channel mismatch {x.shape[1]} -> {fd} without a residual projection")
    r = _conv(x, params, prefix + ".red1")
    r = _conv(r, params, prefix + ".red2", padding=1)
    branches = [
        _conv(r, params, f"{prefix}.br{b + 1}", padding=rate, dilation=rate, act=False)
        for b, rate in enumerate(mcfg.dilation_rates)
    ]
    if mcfg.use_bam:
        gates = bam_weights(branches, params, prefix)
        fused = gates[0] * branches[0] + gates[1] * branches[1] + gates[2] * branches[2]
    else:
        fused = branches[0] + branches[1] + branches[2]
    out = _conv(fused, params, prefix + ".adj1", padding=1)
    out = _conv(out, params, prefix + ".adj2", padding=1)
    res = _conv(x, params, prefix + ".proj", act=False) if x.shape[1] != fd else x
    return out + res


def encoder_forward(image, cfg, params):
    """Bottom-up blocks then top-down aggregation; returns (FM2..FM5)."""
    if image.data.ndim != 4 or image.shape[1] != 3:
        raise ValueError(f"expected a (B,3,H,W) image batch; got {image.shape}")
    if image.shape[2] % 16 != 0 or image.shape[3] % 16 != 0:
        raise ValueError(
            f"spatial size must be divisible by 16; got {image.shape[2:]}")
    feats = []
    x = image
    for i in range(1, 6):
        x = _conv(x, params, f"enc{i}a", padding=1)
        x = _conv(x, params, f"enc{i}b", padding=1)
        x = _pool_ceil(x)
        feats.append(x)
    laterals = {}
    for i in range(2, 6):
        side = feats[i - 1]
        if cfg.msfam_in_encoder and i >= 3:
            side = msfam_forward(side, cfg.msfam, params, f"encfam{i}")
        laterals[i] = _conv(side, params, f"lat{i}", act=False)
    fm = {5: laterals[5]}
    for i in (4, 3, 2):
        lat = laterals[i]
        fm[i] = lat + ad.bilinear_resize(fm[i + 1], lat.shape[2], lat.shape[3])
    return fm[2], fm[3], fm[4], fm[5]


def decoder_forward(fm2, cfg, params):
    """Three stacked aggregation stages, 1-channel head, sigmoid, x4 upsample."""
    x = fm2
    for s in range(1, 4):
        if cfg.msfam_in_decoder:
            x = msfam_forward(x, cfg.msfam, params, f"decfam{s}")
        else:
            x = _conv(x, params, f"dec{s}.deg")
    x = _conv(x, params, "deca", padding=1)
    x = _conv(x, params, "decb", padding=1)
    x = _conv(x, params, "dechead", act=False)
    return ad.bilinear_upsample(x.sigmoid(), 4)


def model_forward(image, cfg, params):
    """Full image -> saliency map pass; output is (B,1,H,W) in (0,1)."""
    fm2, _, _, _ = encoder_forward(image, cfg, params)
    return decoder_forward(fm2, cfg, params)


class SaliencyModel:
    """Config + parameters bundle with a convenient forward."""

    def __init__(self, cfg, seed=0, params=None):
        self.cfg = cfg.validate()
        self.params = init_params(cfg, seed) if params is None else params

    def forward(self, images):
        if not isinstance(images, ad.Tensor):
            images = ad.Tensor(images)
        return model_forward(images, self.cfg, self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def param_count(self):
        return sum(p.data.size for p in self.params.values())
