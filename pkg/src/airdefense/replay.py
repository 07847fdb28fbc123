"""Pseudo-replay generation from the current adversarial batch.

Isotropic replay adds Gaussian noise and a stochastic transform pipeline
(rotation, pad-and-crop, flip, erase, in that order) to break the attack's
pixel pattern while keeping the semantics. Anisotropic replay convexly mixes
the batch with a shuffled copy of itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import InputError


@dataclass(frozen=True)
class AugmentationPolicy:
    """Knobs for the isotropic replay pipeline.

    ``noise_scale`` is the Gaussian scale applied before the transforms.
    A zero value disables the corresponding stage entirely, so the all-zero
    policy is an exact identity.
    """

    noise_scale: float = 0.15
    rotation_degrees: float = 15.0
    crop_padding: int = 4
    flip_probability: float = 0.5
    erase_probability: float = 0.25
    erase_max_fraction: float = 0.10

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise InputError("noise_scale must be >= 0")
        for name in ("flip_probability", "erase_probability", "erase_max_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must be in [0, 1], got {v}")
        if self.crop_padding < 0:
            raise InputError("crop_padding must be >= 0")


# Digits are 8x8 and orientation-sensitive: small crop jitter, no flips.
DIGITS_POLICY = AugmentationPolicy(noise_scale=0.15, rotation_degrees=15.0,
                                   crop_padding=1, flip_probability=0.0)
MNIST_POLICY = AugmentationPolicy(noise_scale=0.15, rotation_degrees=15.0,
                                  crop_padding=4, flip_probability=0.0)
IDENTITY_POLICY = AugmentationPolicy(noise_scale=0.0, rotation_degrees=0.0,
                                     crop_padding=0, flip_probability=0.0,
                                     erase_probability=0.0, erase_max_fraction=0.0)


@dataclass
class ReplayBatch:
    """Isotropic and anisotropic replay tensors plus generation metadata."""

    isotropic: torch.Tensor
    anisotropic: torch.Tensor
    alpha: float
    permutation: torch.Tensor
    seed: int | None = None


def _rand(shape, rng: torch.Generator | None, like: torch.Tensor) -> torch.Tensor:
    return torch.rand(shape, generator=rng, dtype=like.dtype).to(like.device)


def _rotate(x: torch.Tensor, angles_deg: torch.Tensor) -> torch.Tensor:
    """Batched rotation by per-sample angles, bilinear, zero padding."""
    rad = angles_deg * (math.pi / 180.0)
    cos, sin = torch.cos(rad), torch.sin(rad)
    theta = torch.zeros(x.shape[0], 2, 3, dtype=x.dtype, device=x.device)
    theta[:, 0, 0] = cos
    theta[:, 0, 1] = -sin
    theta[:, 1, 0] = sin
    theta[:, 1, 1] = cos
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    return F.grid_sample(x, grid, align_corners=False, padding_mode="zeros")


def isotropic_augment(x: torch.Tensor, policy: AugmentationPolicy,
                      rng: torch.Generator | None = None) -> torch.Tensor:
    """Gaussian noise followed by the stochastic transform pipeline.

    Clipping to [0, 1] happens once, after the full pipeline.
    """
    if x.dim() != 4:
        raise InputError(f"expected (B, C, H, W) batch, got shape {tuple(x.shape)}")
    b, _, height, width = x.shape
    out = x.clone()

    if policy.noise_scale > 0:
        noise = torch.randn(x.shape, generator=rng, dtype=x.dtype).to(x.device)
        out = out + policy.noise_scale * noise

    if policy.rotation_degrees > 0:
        angles = (_rand((b,), rng, x) * 2.0 - 1.0) * policy.rotation_degrees
        out = _rotate(out, angles)

    if policy.crop_padding > 0:
        p = policy.crop_padding
        padded = F.pad(out, (p, p, p, p))
        offsets = (torch.rand(b, 2, generator=rng) * (2 * p + 1)).long()
        rows = []
        for i in range(b):
            oy, ox = int(offsets[i, 0]), int(offsets[i, 1])
            rows.append(padded[i, :, oy:oy + height, ox:ox + width])
        out = torch.stack(rows)

    if policy.flip_probability > 0:
        flips = _rand((b,), rng, x) < policy.flip_probability
        if flips.any():
            out = torch.where(flips.view(b, 1, 1, 1), out.flip(-1), out)

    if policy.erase_probability > 0 and policy.erase_max_fraction > 0:
        hits = _rand((b,), rng, x) < policy.erase_probability
        for i in range(b):
            if not bool(hits[i]):
                continue
            frac = float(_rand((), rng, x)) * policy.erase_max_fraction
            aspect = math.exp(float(_rand((), rng, x)) * (math.log(2.0) - math.log(0.5))
                              + math.log(0.5))
            eh = max(1, min(height, round(math.sqrt(frac * height * width * aspect))))
            ew = max(1, min(width, round(math.sqrt(frac * height * width / aspect))))
            oy = int(float(_rand((), rng, x)) * (height - eh + 1))
            ox = int(float(_rand((), rng, x)) * (width - ew + 1))
            out[i, :, oy:oy + eh, ox:ox + ew] = 0.0

    return torch.clamp(out, 0.0, 1.0)


def anisotropic_mix(x: torch.Tensor, rng: torch.Generator | None = None
                    ) -> tuple[torch.Tensor, float, torch.Tensor]:
    """Convexly mix the batch with a shuffled copy; alpha ~ U[0.3, 0.7]."""
    if x.dim() < 1 or x.shape[0] < 2:
        raise InputError("anisotropic mixing needs batch size >= 2")
    alpha = 0.3 + 0.4 * float(torch.rand((), generator=rng))
    perm = torch.randperm(x.shape[0], generator=rng)
    mixed = alpha * x + (1.0 - alpha) * x[perm]
    return mixed, alpha, perm


def mixed_query_labels(teacher, x: torch.Tensor, permutation: torch.Tensor,
                       alpha: float) -> torch.Tensor:
    """Teacher logits mixed with the same weights as the data (ablation path).

    This is the mixup-style label strategy; the default training path queries
    the teacher on the mixed inputs directly instead.
    """
    logits = teacher(x)
    return alpha * logits + (1.0 - alpha) * logits[permutation]


def build_replay(x: torch.Tensor, policy: AugmentationPolicy,
                 rng: torch.Generator | None = None,
                 seed: int | None = None) -> ReplayBatch:
    """Generate both replay views of a batch from one rng stream."""
    iso = isotropic_augment(x, policy, rng)
    mixed, alpha, perm = anisotropic_mix(x, rng)
    return ReplayBatch(isotropic=iso, anisotropic=mixed, alpha=alpha,
                       permutation=perm, seed=seed)
