"""Model definitions: image backbone, metadata encoders, fused multitask
diagnosis model, quality gate, severity grader, and the reconstruction decoder
used for pretraining.

The backbone is a 4-stage residual CNN. At full width (64, 128, 256, 512) with
two blocks per stage it mirrors the classic 18-layer residual architecture;
desk-scale configs shrink widths and input size so everything trains on a CPU
in minutes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import DISEASES
from .fusion import CrossModalFusion, concat_fused

DOWNSAMPLE = 8  # stem keeps resolution; stages 2-4 halve it


@dataclass(frozen=True)
class BackboneConfig:
    input_size: int = 224
    stage_widths: tuple[int, ...] = (64, 128, 256, 512)
    embedding_dim: int = 512
    residual: bool = True
    blocks_per_stage: int = 2

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")
        if len(self.stage_widths) != 4:
            raise ValueError(f"expected 4 stage widths, got {len(self.stage_widths)}")
        if self.input_size % DOWNSAMPLE != 0:
            raise ValueError(
                f"input_size {self.input_size} not divisible by downsampling factor {DOWNSAMPLE}"
            )

    @classmethod
    def desk(cls, input_size: int = 64, embedding_dim: int = 64) -> "BackboneConfig":
        return cls(
            input_size=input_size,
            stage_widths=(8, 16, 32, 64),
            embedding_dim=embedding_dim,
            blocks_per_stage=1,
        )

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "stage_widths": list(self.stage_widths),
            "embedding_dim": self.embedding_dim,
            "residual": self.residual,
            "blocks_per_stage": self.blocks_per_stage,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        d = dict(d)
        d["stage_widths"] = tuple(d["stage_widths"])
        return cls(**d)


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, residual: bool = True):
        super().__init__()
        self.residual = residual
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.shortcut = nn.Sequential()
        if residual and (stride != 1 or in_ch != out_ch):
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        if self.residual:
            out = out + self.shortcut(x)
        return F.relu(out)


class ImageBackbone(nn.Module):
    """4-stage residual CNN: image (B, 3, S, S) in [0, 1] -> embedding (B, d)."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.stage_widths
        self.stem = nn.Sequential(
            nn.Conv2d(3, w[0], 3, stride=1, padding=1, bias=False),
            nn.BatchNorm2d(w[0]),
            nn.ReLU(inplace=True),
        )
        stages = []
        in_ch = w[0]
        for i, out_ch in enumerate(w):
            stride = 1 if i == 0 else 2
            blocks = [ResidualBlock(in_ch, out_ch, stride, cfg.residual)]
            blocks += [
                ResidualBlock(out_ch, out_ch, 1, cfg.residual)
                for _ in range(cfg.blocks_per_stage - 1)
            ]
            stages.append(nn.Sequential(*blocks))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.project = nn.Linear(w[-1], cfg.embedding_dim)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, S, S) images, got {tuple(images.shape)}")
        s = self.cfg.input_size
        if images.shape[2] != s or images.shape[3] != s:
            raise ValueError(
                f"expected {s}x{s} input, got {images.shape[2]}x{images.shape[3]}; "
                "resize before the forward pass"
            )
        out = self.stem(images)
        out = self.stages(out)
        out = self.pool(out).flatten(1)
        return self.project(out)


@dataclass(frozen=True)
class FeatureSpec:
    """One metadata feature: how it is encoded and at what dimension."""

    name: str
    kind: str  # binary | categorical | continuous
    dim: int = 16
    cardinality: int = 2
    levels: Optional[tuple[str, ...]] = None  # string levels for categorical lookups

    def __post_init__(self):
        if self.kind not in ("binary", "categorical", "continuous"):
            raise ValueError(f"unknown feature kind {self.kind!r} for {self.name!r}")
        if self.dim <= 0:
            raise ValueError(f"feature {self.name!r} needs positive dim")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "dim": self.dim,
            "cardinality": self.cardinality,
            "levels": list(self.levels) if self.levels else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        d = dict(d)
        if d.get("levels"):
            d["levels"] = tuple(d["levels"])
        return cls(**d)


@dataclass
class MetadataEncoderSpec:
    """Ordered feature list plus normalization stats for continuous features.

    The feature order is fixed and travels with checkpoints; continuous
    features are standardised with (mean, std) learned from the training
    split.
    """

    features: tuple[FeatureSpec, ...]
    normalization: dict[str, tuple[float, float]] = field(default_factory=dict)

    @classmethod
    def default(cls, dim: int = 16) -> "MetadataEncoderSpec":
        return cls(
            features=(
                FeatureSpec("age", "continuous", dim),
                FeatureSpec("sex", "categorical", dim, 2, ("male", "female")),
                FeatureSpec("diabetes", "binary", dim),
                FeatureSpec("diabetes_duration", "continuous", dim),
                FeatureSpec("hypertension", "binary", dim),
            )
        )

    @property
    def dims(self) -> list[int]:
        return [f.dim for f in self.features]

    def fit_normalization(self, records: Sequence) -> "MetadataEncoderSpec":
        """Learn (mean, std) for every continuous feature from training records."""
        stats = {}
        for f in self.features:
            if f.kind != "continuous":
                continue
            values = [float(getattr(r, f.name)) for r in records]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            stats[f.name] = (mean, max(var ** 0.5, 1e-8))
        return MetadataEncoderSpec(self.features, stats)

    def featurize(self, records: Sequence) -> dict[str, torch.Tensor]:
        """Records -> per-feature input tensors (indices or standardised floats)."""
        out = {}
        for f in self.features:
            raw = [getattr(r, f.name) for r in records]
            if f.kind == "continuous":
                mean, std = self.normalization.get(f.name, (0.0, 1.0))
                out[f.name] = torch.tensor(
                    [(float(v) - mean) / std for v in raw], dtype=torch.get_default_dtype()
                )
            else:
                indices = []
                for v in raw:
                    if f.levels is not None and isinstance(v, str):
                        if v not in f.levels:
                            raise ValueError(
                                f"unknown level {v!r} for categorical feature {f.name!r}"
                            )
                        indices.append(f.levels.index(v))
                    else:
                        idx = int(v)
                        if not 0 <= idx < f.cardinality:
                            raise ValueError(
                                f"unknown level {v!r} for categorical feature {f.name!r}"
                            )
                        indices.append(idx)
                out[f.name] = torch.tensor(indices, dtype=torch.long)
        return out

    def to_dict(self) -> dict:
        return {
            "features": [f.to_dict() for f in self.features],
            "normalization": {k: list(v) for k, v in self.normalization.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetadataEncoderSpec":
        return cls(
            features=tuple(FeatureSpec.from_dict(f) for f in d["features"]),
            normalization={k: (float(v[0]), float(v[1])) for k, v in d["normalization"].items()},
        )


class MetadataEncoder(nn.Module):
    """One embedding per metadata feature.

    Binary/categorical features are table lookups; continuous features are the
    standardised scalar times a learned projection vector, so the training-mean
    value maps to the zero embedding.
    """

    def __init__(self, spec: MetadataEncoderSpec):
        super().__init__()
        self.spec = spec
        tables = {}
        projections = {}
        for f in spec.features:
            if f.kind == "continuous":
                projections[f.name] = nn.Parameter(torch.randn(f.dim) / f.dim ** 0.5)
            else:
                tables[f.name] = nn.Embedding(f.cardinality, f.dim)
        self.tables = nn.ModuleDict(tables)
        self.projections = nn.ParameterDict(projections)

    def forward(self, inputs: dict[str, torch.Tensor]) -> list[torch.Tensor]:
        out = []
        for f in self.spec.features:
            x = inputs[f.name]
            if f.kind == "continuous":
                out.append(x.unsqueeze(-1) * self.projections[f.name])
            else:
                out.append(self.tables[f.name](x))
        return out


@dataclass
class DiagnosisOutput:
    """Per-disease positive probabilities, plus the severity distribution when
    the DR call is positive."""

    probabilities: dict[str, float]
    dr_grade_distribution: Optional[list[float]] = None
    grade_classes: Optional[list[str]] = None

    def to_dict(self) -> dict:
        return {
            "probabilities": self.probabilities,
            "dr_grade_distribution": self.dr_grade_distribution,
            "grade_classes": self.grade_classes,
        }


class DiagnosisModel(nn.Module):
    """Backbone + metadata encoders + cross-modal fusion + one 2-class head per disease.

    ``encoder_spec=None`` gives the image-only ablation; ``use_fusion=False``
    keeps the encoders but concatenates unfused embeddings.
    """

    def __init__(
        self,
        backbone_cfg: BackboneConfig,
        encoder_spec: Optional[MetadataEncoderSpec] = None,
        use_fusion: bool = True,
        diseases: Sequence[str] = DISEASES,
        sequential_fusion: bool = False,
    ):
        super().__init__()
        self.backbone_cfg = backbone_cfg
        self.encoder_spec = encoder_spec
        self.diseases = tuple(diseases)
        self.backbone = ImageBackbone(backbone_cfg)
        d1 = backbone_cfg.embedding_dim
        if encoder_spec is not None:
            self.encoder = MetadataEncoder(encoder_spec)
            self.fusion = (
                CrossModalFusion(d1, encoder_spec.dims, sequential=sequential_fusion)
                if use_fusion
                else None
            )
            head_in = d1 + sum(encoder_spec.dims)
        else:
            self.encoder = None
            self.fusion = None
            head_in = d1
        self.heads = nn.ModuleList(nn.Linear(head_in, 2) for _ in self.diseases)

    @property
    def uses_metadata(self) -> bool:
        return self.encoder is not None

    def config(self) -> dict:
        return {
            "backbone": self.backbone_cfg.to_dict(),
            "encoder_spec": self.encoder_spec.to_dict() if self.encoder_spec else None,
            "use_fusion": self.fusion is not None,
            "sequential_fusion": bool(self.fusion.sequential) if self.fusion else False,
            "diseases": list(self.diseases),
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "DiagnosisModel":
        spec = cfg.get("encoder_spec")
        return cls(
            BackboneConfig.from_dict(cfg["backbone"]),
            MetadataEncoderSpec.from_dict(spec) if spec else None,
            use_fusion=cfg.get("use_fusion", True),
            diseases=cfg.get("diseases", DISEASES),
            sequential_fusion=cfg.get("sequential_fusion", False),
        )

    def forward(
        self, images: torch.Tensor, meta_inputs: Optional[dict[str, torch.Tensor]] = None
    ) -> list[torch.Tensor]:
        x1 = self.backbone(images)
        if self.encoder is not None:
            if meta_inputs is None:
                raise ValueError("model uses metadata but no metadata inputs were given")
            x2 = self.encoder(meta_inputs)
            if self.fusion is not None:
                x1, x2 = self.fusion(x1, x2)
            fused = concat_fused(x1, x2)
        else:
            fused = x1
        return [head(fused) for head in self.heads]

    @torch.no_grad()
    def predict_proba(
        self, images: torch.Tensor, meta_inputs: Optional[dict[str, torch.Tensor]] = None
    ) -> torch.Tensor:
        """(B, n_diseases) positive-class probabilities."""
        logits = self.forward(images, meta_inputs)
        return torch.stack([F.softmax(l, dim=-1)[:, 1] for l in logits], dim=1)


class QualityModel(nn.Module):
    """Binary gate scoring the probability that an image is LOW quality."""

    def __init__(self, backbone_cfg: BackboneConfig):
        super().__init__()
        self.backbone_cfg = backbone_cfg
        self.backbone = ImageBackbone(backbone_cfg)
        self.head = nn.Linear(backbone_cfg.embedding_dim, 1)

    def config(self) -> dict:
        return {"backbone": self.backbone_cfg.to_dict()}

    @classmethod
    def from_config(cls, cfg: dict) -> "QualityModel":
        return cls(BackboneConfig.from_dict(cfg["backbone"]))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """Logit of P(low quality), shape (B,)."""
        return self.head(self.backbone(images)).squeeze(-1)

    @torch.no_grad()
    def prob_low(self, images: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward(images))


class GradingModel(nn.Module):
    """Severity classifier over K classes for DR-positive images."""

    def __init__(self, backbone_cfg: BackboneConfig, classes: Sequence[str] = ("npdr", "pdr")):
        super().__init__()
        if len(classes) < 2:
            raise ValueError("need at least 2 severity classes")
        self.backbone_cfg = backbone_cfg
        self.classes = tuple(classes)
        self.backbone = ImageBackbone(backbone_cfg)
        self.head = nn.Linear(backbone_cfg.embedding_dim, len(classes))

    def config(self) -> dict:
        return {"backbone": self.backbone_cfg.to_dict(), "classes": list(self.classes)}

    @classmethod
    def from_config(cls, cfg: dict) -> "GradingModel":
        return cls(BackboneConfig.from_dict(cfg["backbone"]), cfg["classes"])

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(images))

    @torch.no_grad()
    def predict_distribution(self, images: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.forward(images), dim=-1)


class ReconstructionDecoder(nn.Module):
    """Embedding -> image, a transposed-convolution mirror of the backbone."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.stage_widths
        self.start_size = cfg.input_size // DOWNSAMPLE
        self.expand = nn.Linear(cfg.embedding_dim, w[-1] * self.start_size ** 2)
        self.up = nn.Sequential(
            nn.ConvTranspose2d(w[3], w[2], 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(w[2], w[1], 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(w[1], w[0], 4, stride=2, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(w[0], 3, 3, padding=1),
        )

    def forward(self, embedding: torch.Tensor) -> torch.Tensor:
        if embedding.shape[-1] != self.cfg.embedding_dim:
            raise ValueError(
                f"embedding dim {embedding.shape[-1]} != decoder dim {self.cfg.embedding_dim}"
            )
        out = self.expand(embedding)
        out = out.view(-1, self.cfg.stage_widths[-1], self.start_size, self.start_size)
        return self.up(out)


class PretrainModel(nn.Module):
    """Backbone + decoder + the two supervised pretraining heads."""

    def __init__(self, backbone_cfg: BackboneConfig):
        super().__init__()
        self.backbone_cfg = backbone_cfg
        self.backbone = ImageBackbone(backbone_cfg)
        self.decoder = ReconstructionDecoder(backbone_cfg)
        self.head_dr = nn.Linear(backbone_cfg.embedding_dim, 2)
        self.head_glaucoma = nn.Linear(backbone_cfg.embedding_dim, 2)

    def config(self) -> dict:
        return {"backbone": self.backbone_cfg.to_dict()}

    @classmethod
    def from_config(cls, cfg: dict) -> "PretrainModel":
        return cls(BackboneConfig.from_dict(cfg["backbone"]))

    def forward(self, images: torch.Tensor):
        emb = self.backbone(images)
        return self.head_dr(emb), self.head_glaucoma(emb), self.decoder(emb)


def parameter_count(model: nn.Module) -> int:
    """Exact number of trainable scalars."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
