"""ViT-style patch classifier and its training loop.

Patchify -> linear embed -> transformer blocks with dropout on the
attention-weight matrix -> softmax head over two classes. The estimator
follows the fit/predict/predict_proba convention and trains with either
RMSprop (exponentially weighted squared gradients, decay 0.9, epsilon
inside the square root) or Adam.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from torch import nn

from .images import load_image
from .manifest import ClassLabel, Manifest, Split
from .validation import (
    check_image_batch, check_labels, check_seed, check_unit_interval,
)

RMSPROP_DECAY = 0.9
RMSPROP_EPS = 1e-8


@dataclass(frozen=True)
class ViTConfig:
    """Architecture knobs; defaults are the desk-scale profile."""

    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 4.0
    attention_dropout_rate: float = 0.1
    num_classes: int = 2
    channels: int = 3

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be divisible by patch_size")
        if self.embed_dim % self.heads:
            raise ValueError("heads must divide embed_dim")
        check_unit_interval(self.attention_dropout_rate, "attention_dropout_rate")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def paper_profile(cls) -> "ViTConfig":
        return cls(image_size=224, patch_size=16, embed_dim=768, depth=12, heads=12)


@dataclass
class TrainConfig:
    """Classifier training hyperparameters (reference defaults)."""

    batch_size: int = 64
    epochs: int = 150
    learning_rate: float = 1e-4
    optimizer: str = "rmsprop"
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("rmsprop", "adam"):
            raise ValueError(f"optimizer must be rmsprop or adam, got {self.optimizer!r}")
        check_seed(self.seed)


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """Split an HxWxC image into (H/p * W/p) flattened patches, row-major."""
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    patches = (
        arr.reshape(gh, patch_size, gw, patch_size, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(gh * gw, patch_size * patch_size * c)
    )
    return patches


def unpatchify(patches: np.ndarray, height: int, width: int, patch_size: int) -> np.ndarray:
    """Inverse of patchify; reconstructs the HxWxC image exactly."""
    patches = np.asarray(patches)
    gh, gw = height // patch_size, width // patch_size
    c = patches.shape[1] // (patch_size * patch_size)
    return (
        patches.reshape(gh, gw, patch_size, patch_size, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(height, width, c)
    )


def attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    dropout_rate: float = 0.0,
    mode: str = "eval",
    seed: int | torch.Generator | None = None,
) -> torch.Tensor:
    """softmax(q k^T / sqrt(d)) v with dropout on the attention weights.

    Dropout applies only in train mode, scaled by 1/(1-rate); eval mode
    ignores the seed entirely.
    """
    check_unit_interval(dropout_rate, "dropout_rate")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("q and k must share the feature dimension")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("k and v must share the sequence dimension")
    scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(q.shape[-1])
    weights = torch.softmax(scores, dim=-1)
    if mode == "train" and dropout_rate > 0.0:
        if isinstance(seed, torch.Generator):
            g = seed
        else:
            g = torch.Generator(device="cpu").manual_seed(check_seed(seed if seed is not None else 0))
        keep = (torch.rand(weights.shape, generator=g) >= dropout_rate).to(weights.dtype)
        weights = weights * keep / (1.0 - dropout_rate)
    return torch.matmul(weights, v)


class _Attention(nn.Module):
    def __init__(self, config: ViTConfig):
        super().__init__()
        self.heads = config.heads
        self.head_dim = config.embed_dim // config.heads
        self.dropout_rate = config.attention_dropout_rate
        self.qkv = nn.Linear(config.embed_dim, config.embed_dim * 3)
        self.proj = nn.Linear(config.embed_dim, config.embed_dim)

    def forward(self, x, mode: str, generator: torch.Generator | None):
        n, s, d = x.shape
        qkv = self.qkv(x).reshape(n, s, 3, self.heads, self.head_dim)
        qkv = qkv.permute(2, 0, 3, 1, 4)  # (3, N, heads, seq, head_dim)
        out = attention(qkv[0], qkv[1], qkv[2], self.dropout_rate, mode, generator)
        return self.proj(out.transpose(1, 2).reshape(n, s, d))


class _Block(nn.Module):
    def __init__(self, config: ViTConfig):
        super().__init__()
        hidden = int(config.embed_dim * config.mlp_ratio)
        self.norm1 = nn.LayerNorm(config.embed_dim)
        self.attn = _Attention(config)
        self.norm2 = nn.LayerNorm(config.embed_dim)
        self.mlp = nn.Sequential(
            nn.Linear(config.embed_dim, hidden),
            nn.GELU(),
            nn.Linear(hidden, config.embed_dim),
        )

    def forward(self, x, mode, generator):
        x = x + self.attn(self.norm1(x), mode, generator)
        return x + self.mlp(self.norm2(x))


class ViT(nn.Module):
    """Patch classifier; forward returns class probabilities."""

    def __init__(self, config: ViTConfig, seed: int = 0):
        super().__init__()
        self.config = config
        n_patches = (config.image_size // config.patch_size) ** 2
        patch_dim = config.patch_size ** 2 * config.channels
        torch.manual_seed(seed)
        self.patch_embed = nn.Linear(patch_dim, config.embed_dim)
        self.cls_token = nn.Parameter(torch.randn(1, 1, config.embed_dim) * 0.02)
        self.pos_embed = nn.Parameter(torch.randn(1, n_patches + 1, config.embed_dim) * 0.02)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.depth))
        self.norm = nn.LayerNorm(config.embed_dim)
        self.head = nn.Linear(config.embed_dim, config.num_classes)

    def _patch_tokens(self, images: torch.Tensor) -> torch.Tensor:
        # mirror patchify()'s row-major ordering on an NHWC tensor
        n, h, w, c = images.shape
        p = self.config.patch_size
        if h != self.config.image_size or w != self.config.image_size:
            raise ValueError(
                f"expected {self.config.image_size}x{self.config.image_size} images, got {h}x{w}"
            )
        x = images.reshape(n, h // p, p, w // p, p, c)
        x = x.permute(0, 1, 3, 2, 4, 5).reshape(n, (h // p) * (w // p), p * p * c)
        return x

    def forward_logits(self, images: torch.Tensor, mode: str = "eval",
                       generator: torch.Generator | None = None) -> torch.Tensor:
        x = self.patch_embed(self._patch_tokens(images))
        cls = self.cls_token.expand(x.shape[0], -1, -1).to(x.dtype)
        x = torch.cat([cls, x], dim=1) + self.pos_embed.to(x.dtype)
        for block in self.blocks:
            x = block(x, mode, generator)
        return self.head(self.norm(x[:, 0]))

    def forward(self, images: torch.Tensor, mode: str = "eval",
                generator: torch.Generator | None = None) -> torch.Tensor:
        return torch.softmax(self.forward_logits(images, mode, generator), dim=-1)


class _RMSprop:
    """lr * g / sqrt(avg + eps) with avg an EWMA of squared gradients."""

    def __init__(self, params, lr: float, decay: float = RMSPROP_DECAY,
                 eps: float = RMSPROP_EPS):
        self.params = list(params)
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.avg = [torch.zeros_like(p) for p in self.params]

    def step(self):
        with torch.no_grad():
            for p, avg in zip(self.params, self.avg):
                if p.grad is None:
                    continue
                avg.mul_(self.decay).addcmul_(p.grad, p.grad, value=1.0 - self.decay)
                p.addcdiv_(p.grad, torch.sqrt(avg + self.eps), value=-self.lr)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class ViTClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper: fit on NxHxWxC arrays in [-1, 1], labels 0/1."""

    def __init__(self, image_size: int = 64, patch_size: int = 8, embed_dim: int = 64,
                 depth: int = 2, heads: int = 4, mlp_ratio: float = 4.0,
                 attention_dropout_rate: float = 0.1, channels: int = 3,
                 batch_size: int = 64, epochs: int = 150, learning_rate: float = 1e-4,
                 optimizer: str = "rmsprop", seed: int = 0, patience: int | None = None):
        self.image_size = image_size
        self.patch_size = patch_size
        self.embed_dim = embed_dim
        self.depth = depth
        self.heads = heads
        self.mlp_ratio = mlp_ratio
        self.attention_dropout_rate = attention_dropout_rate
        self.channels = channels
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.seed = seed
        self.patience = patience

    @classmethod
    def from_configs(cls, vit_config: ViTConfig, train_config: TrainConfig) -> "ViTClassifier":
        return cls(
            image_size=vit_config.image_size, patch_size=vit_config.patch_size,
            embed_dim=vit_config.embed_dim, depth=vit_config.depth, heads=vit_config.heads,
            mlp_ratio=vit_config.mlp_ratio,
            attention_dropout_rate=vit_config.attention_dropout_rate,
            channels=vit_config.channels,
            batch_size=train_config.batch_size, epochs=train_config.epochs,
            learning_rate=train_config.learning_rate, optimizer=train_config.optimizer,
            seed=train_config.seed, patience=train_config.patience,
        )

    def _vit_config(self) -> ViTConfig:
        return ViTConfig(
            image_size=self.image_size, patch_size=self.patch_size,
            embed_dim=self.embed_dim, depth=self.depth, heads=self.heads,
            mlp_ratio=self.mlp_ratio,
            attention_dropout_rate=self.attention_dropout_rate,
            channels=self.channels,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        """Train for self.epochs full passes; keep the best-validation epoch.

        Without a validation set the final-epoch weights are kept. History
        rows carry per-epoch mean train loss and validation accuracy.
        """
        X = check_image_batch(X, channels=self.channels)
        y = check_labels(y, n=len(X))
        if len(X) == 0:
            raise ValueError("training set must be non-empty")
        has_val = X_val is not None and y_val is not None and len(X_val) > 0
        if has_val:
            X_val = check_image_batch(X_val, channels=self.channels)
            y_val = check_labels(y_val, n=len(X_val))

        config = self._vit_config()
        model = ViT(config, seed=self.seed)
        xt = torch.from_numpy(X)
        yt = torch.from_numpy(y)
        rng = np.random.default_rng(self.seed)
        dropout_gen = torch.Generator(device="cpu").manual_seed(self.seed + 1)
        if self.optimizer == "rmsprop":
            opt = _RMSprop(model.parameters(), lr=self.learning_rate)
        else:
            opt = torch.optim.Adam(model.parameters(), lr=self.learning_rate)

        best_acc = -1.0
        best_state = None
        stale = 0
        history: list[dict] = []
        steps_per_epoch = math.ceil(len(X) / self.batch_size)
        for epoch in range(self.epochs):
            order = rng.permutation(len(X))
            epoch_loss = 0.0
            for step in range(steps_per_epoch):
                idx = order[step * self.batch_size:(step + 1) * self.batch_size]
                batch = xt[idx]
                logits = model.forward_logits(batch, mode="train", generator=dropout_gen)
                loss = torch.nn.functional.cross_entropy(logits, yt[idx])
                if not torch.isfinite(loss):
                    raise RuntimeError(f"non-finite loss at epoch {epoch} step {step}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += float(loss.item()) * len(idx)
            row = {"epoch": epoch, "train_loss": epoch_loss / len(X)}
            if has_val:
                row["val_accuracy"] = self._accuracy(model, X_val, y_val)
                # >= so ties prefer the longer-trained weights
                if row["val_accuracy"] >= best_acc:
                    if row["val_accuracy"] > best_acc:
                        stale = 0
                    else:
                        stale += 1
                    best_acc = row["val_accuracy"]
                    best_state = copy.deepcopy(model.state_dict())
                else:
                    stale += 1
            history.append(row)
            if has_val and self.patience is not None and stale > self.patience:
                break

        if best_state is not None:
            model.load_state_dict(best_state)
        self.model_ = model
        self.history_ = history
        self.classes_ = np.array([0, 1])
        return self

    @staticmethod
    def _accuracy(model: ViT, X: np.ndarray, y: np.ndarray) -> float:
        with torch.no_grad():
            probs = model(torch.from_numpy(X))
        return float((probs.argmax(dim=-1).numpy() == y).mean())

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("ViTClassifier must be fitted before predict")
        X = check_image_batch(X, channels=self.channels)
        with torch.no_grad():
            probs = self.model_(torch.from_numpy(X))
        return probs.numpy().astype(np.float64)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def score(self, X, y) -> float:
        y = check_labels(y)
        return float((self.predict(X) == y).mean())


def save_classifier(clf: ViTClassifier, path: str | Path) -> Path:
    """Persist a fitted classifier (architecture config plus flat weights)."""
    from .checkpoint import module_arrays, save_checkpoint

    if not hasattr(clf, "model_"):
        raise RuntimeError("classifier is not fitted")
    configs = {"vit": clf._vit_config().to_dict(), "params": clf.get_params()}
    return save_checkpoint(path, configs, module_arrays(clf.model_, "vit."))


def load_classifier(path: str | Path) -> ViTClassifier:
    from .checkpoint import load_checkpoint, load_module_arrays

    configs, arrays = load_checkpoint(path)
    params = dict(configs["params"])
    clf = ViTClassifier(**params)
    model = ViT(clf._vit_config())
    load_module_arrays(model, arrays, "vit.")
    clf.model_ = model
    clf.history_ = []
    clf.classes_ = np.array([0, 1])
    return clf


@dataclass(frozen=True)
class PredictionEntry:
    id: str
    score: float
    predicted_label: ClassLabel
    true_label: ClassLabel


@dataclass
class PredictionSet:
    """Per-image positive-class scores and hard labels."""

    entries: list[PredictionEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)

    def predicted(self) -> np.ndarray:
        return np.array([1 if e.predicted_label is ClassLabel.POSITIVE else 0
                         for e in self.entries], dtype=np.int64)

    def truth(self) -> np.ndarray:
        return np.array([1 if e.true_label is ClassLabel.POSITIVE else 0
                         for e in self.entries], dtype=np.int64)

    def save_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["id", "score", "predicted_label", "true_label"])
            for e in self.entries:
                writer.writerow([e.id, f"{e.score:.10f}",
                                 e.predicted_label.value, e.true_label.value])
        return path

    @classmethod
    def load_csv(cls, path: str | Path) -> "PredictionSet":
        entries = []
        with Path(path).open("r", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                entries.append(PredictionEntry(
                    id=row["id"], score=float(row["score"]),
                    predicted_label=ClassLabel(row["predicted_label"]),
                    true_label=ClassLabel(row["true_label"]),
                ))
        return cls(entries=entries)


def _manifest_arrays(manifest: Manifest, split: Split, data_root: str | Path,
                     image_size: int, channels: int):
    records = manifest.select(split=split)
    if not records:
        raise ValueError(f"no records in split {split.value!r}")
    images = np.stack([
        load_image(Path(data_root) / r.path, size=image_size, channels=channels)
        for r in records
    ])
    labels = np.array([1 if r.class_label is ClassLabel.POSITIVE else 0 for r in records],
                      dtype=np.int64)
    return records, images, labels


def train_classifier(
    manifest: Manifest,
    data_root: str | Path,
    vit_config: ViTConfig,
    train_config: TrainConfig,
) -> ViTClassifier:
    """Fit a classifier on the manifest's train split, selecting by val accuracy."""
    _, X, y = _manifest_arrays(manifest, Split.TRAIN, data_root,
                               vit_config.image_size, vit_config.channels)
    try:
        _, X_val, y_val = _manifest_arrays(manifest, Split.VAL, data_root,
                                           vit_config.image_size, vit_config.channels)
    except ValueError:
        X_val, y_val = None, None
    clf = ViTClassifier.from_configs(vit_config, train_config)
    return clf.fit(X, y, X_val, y_val)


def predict_manifest(
    clf: ViTClassifier,
    manifest: Manifest,
    split: Split,
    data_root: str | Path,
) -> PredictionSet:
    """One prediction entry per image in the split; score is P(positive)."""
    records, X, y = _manifest_arrays(manifest, split, data_root,
                                     clf.image_size, clf.channels)
    probs = clf.predict_proba(X)
    entries = []
    for record, p, true in zip(records, probs, y):
        predicted = ClassLabel.POSITIVE if p[1] >= p[0] else ClassLabel.NEGATIVE
        entries.append(PredictionEntry(
            id=record.id, score=float(p[1]), predicted_label=predicted,
            true_label=ClassLabel.POSITIVE if true else ClassLabel.NEGATIVE,
        ))
    return PredictionSet(entries=entries)
