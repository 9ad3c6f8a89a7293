"""Encoders, generator and discriminator of the typeface completion network."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import torch
from torch import Tensor, nn
from torch.nn import functional as F

IMAGE_SIZE = 128
LATENT_DIM = 256
CHECKPOINT_FORMAT = "tcnfont-bundle"
CHECKPOINT_VERSION = 1


class ConfigMismatchError(ValueError):
    """A checkpoint or request does not match the model configuration."""


@dataclass(frozen=True)
class NetConfig:
    n_contents: int
    n_typefaces: int
    mode: str = "paired"  # or "unpaired"
    n_styles: int = 0
    image_channels: int = 1
    latent_dim: int = LATENT_DIM
    embed_dim: int = LATENT_DIM
    backbone_widths: tuple[int, ...] = (8, 16, 32, 64, 64, 64)
    generator_widths: tuple[int, ...] = (64, 32, 16, 8)
    mixer_hidden: int = 16
    use_input_label: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("paired", "unpaired"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if len(self.backbone_widths) != 6:
            raise ValueError("backbone needs exactly 6 residual block widths")
        if len(self.generator_widths) != 4:
            raise ValueError("generator needs exactly 4 upsampling block widths")
        if self.mode == "paired" and (self.n_contents < 1 or self.n_typefaces < 1):
            raise ValueError("paired mode needs n_contents and n_typefaces >= 1")
        if self.mode == "unpaired" and self.n_styles < 1:
            raise ValueError("unpaired mode needs n_styles >= 1")

    @property
    def n_labels(self) -> int:
        """Rows of the label-embedding table."""
        return self.n_contents if self.mode == "paired" else self.n_styles

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backbone_widths"] = list(self.backbone_widths)
        d["generator_widths"] = list(self.generator_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in known}
        for k in ("backbone_widths", "generator_widths"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


class EncoderOutput(NamedTuple):
    h: Tensor  # (B, latent_dim)
    logits: Tensor  # (B, n_classes)


class DiscriminatorOutput(NamedTuple):
    tf_logit: Tensor  # (B,)
    t_logits: Tensor | None  # (B, T); None without a typeface head
    c_logits: Tensor  # (B, N) or (B, S) in unpaired mode

    @property
    def p_tf(self) -> Tensor:
        return torch.sigmoid(self.tf_logit)

    @property
    def p_t(self) -> Tensor | None:
        return None if self.t_logits is None else self.t_logits.softmax(dim=1)

    @property
    def p_c(self) -> Tensor:
        return self.c_logits.softmax(dim=1)


def _norm(ch: int, use_norm: bool) -> nn.Module:
    return nn.InstanceNorm2d(ch, affine=True) if use_norm else nn.Identity()


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int, use_norm: bool, act: type[nn.Module]):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride, 1)
        self.norm1 = _norm(out_ch, use_norm)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1)
        self.norm2 = _norm(out_ch, use_norm)
        self.act = act()
        if stride != 1 or in_ch != out_ch:
            self.skip = nn.Conv2d(in_ch, out_ch, 1, stride)
        else:
            self.skip = nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        y = self.act(self.norm1(self.conv1(x)))
        y = self.norm2(self.conv2(y))
        return self.act(y + self.skip(x))


class ResNetBackbone(nn.Module):
    """Stem + 6 residual blocks down to an 8x8 map, projected to `out_dim` and pooled."""

    strides = (2, 2, 2, 1, 1, 1)

    def __init__(
        self,
        in_ch: int,
        widths: tuple[int, ...],
        out_dim: int = LATENT_DIM,
        use_norm: bool = True,
        leaky: bool = False,
    ):
        super().__init__()
        act: type[nn.Module] = (lambda: nn.LeakyReLU(0.2)) if leaky else nn.ReLU  # type: ignore[assignment]
        self.stem = nn.Sequential(nn.Conv2d(in_ch, widths[0], 4, 2, 1), _norm(widths[0], use_norm), act())
        blocks = []
        ch = widths[0]
        for w, s in zip(widths, self.strides):
            blocks.append(ResBlock(ch, w, s, use_norm, act))
            ch = w
        self.blocks = nn.Sequential(*blocks)
        self.proj = nn.Conv2d(ch, out_dim, 1)
        self.in_ch = in_ch
        if not use_norm:
            # without normalization the default init shrinks the signal to near-constant features
            for m in self.modules():
                if isinstance(m, nn.Conv2d):
                    nn.init.kaiming_normal_(m.weight, a=0.2 if leaky else 0.0, nonlinearity="leaky_relu" if leaky else "relu")
                    nn.init.zeros_(m.bias)

    def forward(self, x: Tensor) -> Tensor:
        if x.dim() != 4 or x.shape[1] != self.in_ch or x.shape[-2:] != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"expected (B, {self.in_ch}, {IMAGE_SIZE}, {IMAGE_SIZE}) input, got {tuple(x.shape)}")
        y = self.proj(self.blocks(self.stem(x)))
        return y.mean(dim=(2, 3))


class Encoder(nn.Module):
    """ResNet feature extractor with a one-layer classifier head."""

    def __init__(self, in_ch: int, widths: tuple[int, ...], n_classes: int, latent_dim: int = LATENT_DIM):
        super().__init__()
        self.backbone = ResNetBackbone(in_ch, widths, latent_dim)
        self.head = nn.Linear(latent_dim, n_classes)

    def forward(self, x: Tensor) -> EncoderOutput:
        h = self.backbone(x)
        return EncoderOutput(h, self.head(h))


class LabelEmbedding(nn.Module):
    """Learned table of label vectors; the only block whose size scales with N."""

    def __init__(self, n_labels: int, embed_dim: int):
        super().__init__()
        self.n_labels = n_labels
        self.table = nn.Embedding(n_labels, embed_dim)
        nn.init.normal_(self.table.weight, std=1.0)

    def forward(self, labels: Tensor) -> Tensor:
        if labels.numel() and (labels.min() < 0 or labels.max() >= self.n_labels):
            raise IndexError(f"label id out of range [0, {self.n_labels})")
        return self.table(labels)


class FeatureCombiner(nn.Module):
    """1x1 convolution over the stacked (feature..., label...) channels at each of 256 positions."""

    def __init__(self, n_inputs: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(n_inputs, hidden, 1),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, 1, 1),
        )
        self.n_inputs = n_inputs

    def forward(self, *vectors: Tensor) -> Tensor:
        if len(vectors) != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} vectors, got {len(vectors)}")
        return self.net(torch.stack(vectors, dim=1)).squeeze(1)


class ImageGenerator(nn.Module):
    """Latent vector to image: an 8x8 projection and four stride-2 transposed convolutions.

    `widths` are the channel counts at 8, 16, 32 and 64 px; the last block emits the
    128 px image directly.
    """

    def __init__(self, widths: tuple[int, ...], out_ch: int = 1, latent_dim: int = LATENT_DIM):
        super().__init__()
        self.c0 = widths[0]
        self.fc = nn.Linear(latent_dim, widths[0] * 8 * 8)
        layers: list[nn.Module] = [nn.InstanceNorm2d(widths[0], affine=True), nn.ReLU()]
        for cin, cout in zip(widths[:-1], widths[1:]):
            layers += [nn.ConvTranspose2d(cin, cout, 4, 2, 1), nn.InstanceNorm2d(cout, affine=True), nn.ReLU()]
        layers += [nn.ConvTranspose2d(widths[-1], out_ch, 4, 2, 1), nn.Sigmoid()]
        self.net = nn.Sequential(*layers)

    def forward(self, u: Tensor) -> Tensor:
        return self.net(self.fc(u).view(-1, self.c0, 8, 8))


class Generator(nn.Module):
    """Feature combination followed by image generation, with its label embedding."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.embedding = LabelEmbedding(cfg.n_labels, cfg.embed_dim)
        if cfg.embed_dim != cfg.latent_dim:
            self.label_proj: nn.Module = nn.Linear(cfg.embed_dim, cfg.latent_dim, bias=False)
        else:
            self.label_proj = nn.Identity()
        self.n_features = 2 if cfg.mode == "paired" else 1
        self.combiner = FeatureCombiner(self.n_features + 2, cfg.mixer_hidden)
        self.image = ImageGenerator(cfg.generator_widths, cfg.image_channels, cfg.latent_dim)
        self.use_input_label = cfg.use_input_label
        self.register_buffer("null_label", torch.zeros(cfg.latent_dim))

    def label_vectors(self, labels: Tensor) -> Tensor:
        return self.label_proj(self.embedding(labels))

    def combine(self, features: tuple[Tensor, ...], e_in: Tensor, e_tgt: Tensor) -> Tensor:
        return self.combiner(*features, e_in, e_tgt)

    def forward(self, features: tuple[Tensor, ...], y_in: Tensor, y_tgt: Tensor) -> Tensor:
        e_tgt = self.label_vectors(y_tgt)
        if not self.use_input_label:
            e_in = self.null_label.expand_as(e_tgt)
        else:
            e_in = self.label_vectors(y_in)
        return self.image(self.combine(features, e_in, e_tgt))


class Decoder(nn.Module):
    """Pretraining-only auto-encoder decoder, same structure as the generator minus labels."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.combiner = FeatureCombiner(2, cfg.mixer_hidden)
        self.image = ImageGenerator(cfg.generator_widths, cfg.image_channels, cfg.latent_dim)

    def forward(self, h_t: Tensor, h_c: Tensor) -> Tensor:
        return self.image(self.combiner(h_t, h_c))


class Discriminator(nn.Module):
    """One shared ResNet with real/fake, typeface and content heads."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.backbone = ResNetBackbone(cfg.image_channels, cfg.backbone_widths, cfg.latent_dim, use_norm=False, leaky=True)
        self.tf_head = nn.Linear(cfg.latent_dim, 1)
        self.t_head = nn.Linear(cfg.latent_dim, cfg.n_typefaces) if cfg.mode == "paired" else None
        self.c_head = nn.Linear(cfg.latent_dim, cfg.n_labels)

    def forward(self, x: Tensor) -> DiscriminatorOutput:
        f = F.leaky_relu(self.backbone(x), 0.2)
        t = self.t_head(f) if self.t_head is not None else None
        return DiscriminatorOutput(self.tf_head(f).squeeze(1), t, self.c_head(f))


class Classifier(nn.Module):
    """ResNet image classifier with a linear head (used for evaluation)."""

    def __init__(self, in_ch: int, widths: tuple[int, ...], n_classes: int, latent_dim: int = LATENT_DIM):
        super().__init__()
        self.backbone = ResNetBackbone(in_ch, widths, latent_dim)
        self.head = nn.Linear(latent_dim, n_classes)
        self.n_classes = n_classes

    def forward(self, x: Tensor) -> Tensor:
        return self.head(F.relu(self.backbone(x)))


@dataclass
class ModelBundle:
    config: NetConfig
    typeface_encoder: Encoder
    content_encoder: Encoder | None
    generator: Generator
    discriminator: Discriminator
    classifiers: dict[str, Classifier] = field(default_factory=dict)

    @classmethod
    def build(cls, config: NetConfig, seed: int | None = None) -> "ModelBundle":
        if seed is not None:
            torch.manual_seed(seed)
        ch = config.image_channels
        if config.mode == "paired":
            te = Encoder(ch, config.backbone_widths, config.n_typefaces, config.latent_dim)
            ce: Encoder | None = Encoder(ch, config.backbone_widths, config.n_contents, config.latent_dim)
        else:
            # the single encoder keeps the non-style part of the image; its head is unused
            te = Encoder(ch, config.backbone_widths, config.n_styles, config.latent_dim)
            ce = None
        return cls(config, te, ce, Generator(config), Discriminator(config))

    @property
    def paired(self) -> bool:
        return self.config.mode == "paired"

    def modules(self) -> dict[str, nn.Module]:
        mods: dict[str, nn.Module] = {"typeface_encoder": self.typeface_encoder}
        if self.content_encoder is not None:
            mods["content_encoder"] = self.content_encoder
        mods["generator"] = self.generator
        mods["discriminator"] = self.discriminator
        for name, clf in self.classifiers.items():
            mods[f"classifier_{name}"] = clf
        return mods

    def encoders(self) -> list[Encoder]:
        return [e for e in (self.typeface_encoder, self.content_encoder) if e is not None]

    def encode(self, x: Tensor) -> tuple[EncoderOutput, ...]:
        return tuple(e(x) for e in self.encoders())

    def features(self, x: Tensor) -> tuple[Tensor, ...]:
        return tuple(out.h for out in self.encode(x))

    def generator_parameters(self) -> list[nn.Parameter]:
        params: list[nn.Parameter] = []
        for e in self.encoders():
            params += list(e.parameters())
        return params + list(self.generator.parameters())

    def train(self, mode: bool = True) -> "ModelBundle":
        for m in self.modules().values():
            m.train(mode)
        return self

    def eval(self) -> "ModelBundle":
        return self.train(False)

    def state_dict(self) -> dict[str, dict[str, Tensor]]:
        return {name: m.state_dict() for name, m in self.modules().items()}

    def load_state_dict(self, state: dict[str, dict[str, Tensor]]) -> None:
        for name, sd in state.items():
            if name.startswith("classifier_") and name[len("classifier_"):] not in self.classifiers:
                continue
            self.modules()[name].load_state_dict(sd)


def count_parameters(bundle: ModelBundle) -> dict[str, int]:
    """Exact parameter counts per sub-block plus the total of the generative model.

    Evaluation classifiers are reported separately and excluded from ``total``.
    """
    def n(m: nn.Module | None) -> int:
        return 0 if m is None else sum(p.numel() for p in m.parameters())

    counts: dict[str, int] = {}
    for name, enc in (("typeface_encoder", bundle.typeface_encoder), ("content_encoder", bundle.content_encoder)):
        if enc is not None:
            counts[f"{name}.backbone"] = n(enc.backbone)
            counts[f"{name}.head"] = n(enc.head)
    g = bundle.generator
    counts["generator.embedding"] = n(g.embedding)
    counts["generator.label_proj"] = n(g.label_proj)
    counts["generator.combiner"] = n(g.combiner)
    counts["generator.image"] = n(g.image)
    d = bundle.discriminator
    counts["discriminator.backbone"] = n(d.backbone)
    counts["discriminator.tf_head"] = n(d.tf_head)
    counts["discriminator.t_head"] = n(d.t_head)
    counts["discriminator.c_head"] = n(d.c_head)
    counts["total"] = sum(counts.values())
    for name, clf in bundle.classifiers.items():
        counts[f"classifier_{name}"] = n(clf)
    return counts


def n_dependent_parameters_per_label(config: NetConfig) -> int:
    """Parameters added to the generative model by one more content class."""
    per = config.embed_dim + (config.latent_dim + 1)  # embedding row + discriminator content row
    if config.mode == "paired":
        per += config.latent_dim + 1  # content-encoder classifier row
    return per


def save_bundle(path: str | Path, bundle: ModelBundle, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": bundle.config.to_dict(),
        "classifiers": {k: v.n_classes for k, v in bundle.classifiers.items()},
        "state": bundle.state_dict(),
        "extra": extra or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigMismatchError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigMismatchError(f"unsupported checkpoint version {payload.get('version')}")
    return payload


def load_bundle(path: str | Path, expected: NetConfig | None = None) -> tuple[ModelBundle, dict]:
    payload = read_checkpoint(path)
    config = NetConfig.from_dict(payload["config"])
    if expected is not None and expected != config:
        raise ConfigMismatchError(f"checkpoint config {config} does not match expected {expected}")
    bundle = ModelBundle.build(config)
    for name, n_classes in payload.get("classifiers", {}).items():
        bundle.classifiers[name] = Classifier(config.image_channels, config.backbone_widths, n_classes, config.latent_dim)
    bundle.load_state_dict(payload["state"])
    return bundle, payload.get("extra", {})
