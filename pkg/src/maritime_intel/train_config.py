"""Context-extension and loss-function numerics for the fine-tuning recipe.

Covers the frequency-selective rotary-embedding rescaling used to stretch a
32k context window to 131k (interpolating low frequencies while preserving
high ones) and label-smoothed cross-entropy, plus emission of a training
configuration file consumable by external fine-tuning frameworks. No model
training happens here; this module computes and validates the math only.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class RopeScalingConfig:
    """Rotary-embedding rescaling parameters.

    ramp_low/ramp_high bound the wavelength ratio r = original_context /
    wavelength(d): dimensions with r above ramp_high keep their original
    frequency, dimensions below ramp_low are fully interpolated by 1/scale,
    and the blend is linear in between.
    """

    base: float = 10000.0
    scale: float = 4.0
    original_context: int = 32768
    head_dim: int = 128
    ramp_low: float = 1.0
    ramp_high: float = 32.0

    def __post_init__(self) -> None:
        if self.head_dim <= 0 or self.head_dim % 2 != 0:
            raise ValueError(f"head_dim must be a positive even integer, got {self.head_dim}")
        if self.base <= 1.0:
            raise ValueError("base must exceed 1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not 0 < self.ramp_low < self.ramp_high:
            raise ValueError("need 0 < ramp_low < ramp_high")

    @property
    def target_context(self) -> int:
        return int(self.scale * self.original_context)

    @property
    def frequency_pairs(self) -> int:
        return self.head_dim // 2


def _check_dim(d: int, cfg: RopeScalingConfig) -> None:
    if not 0 <= d < cfg.frequency_pairs:
        raise ValueError(f"dimension index {d} outside [0, {cfg.frequency_pairs})")


def base_frequency(d: int, cfg: RopeScalingConfig) -> float:
    """Original rotary frequency b^(-2d/|D|) at dimension pair d."""
    _check_dim(d, cfg)
    return cfg.base ** (-2.0 * d / cfg.head_dim)


def wavelength(d: int, cfg: RopeScalingConfig) -> float:
    """Wavelength 2*pi*b^(2d/|D|) at dimension pair d."""
    _check_dim(d, cfg)
    return 2.0 * math.pi * cfg.base ** (2.0 * d / cfg.head_dim)


def wavelength_ratio(d: int, cfg: RopeScalingConfig) -> float:
    """r(d) = original context length over wavelength at d."""
    return cfg.original_context / wavelength(d, cfg)


def ramp(r: float, low: float, high: float) -> float:
    """Piecewise-linear blend weight: 0 below low, 1 above high."""
    if low >= high:
        raise ValueError("need low < high")
    if r < low:
        return 0.0
    if r > high:
        return 1.0
    return (r - low) / (high - low)


def scaled_frequency(d: int, cfg: RopeScalingConfig) -> float:
    """Blended frequency (1 - g) * theta/s + g * theta with g = ramp(r(d)).

    g = 1 (short wavelengths, high frequency) leaves the frequency
    untouched; g = 0 applies the full 1/scale interpolation.
    """
    theta = base_frequency(d, cfg)
    gamma = ramp(wavelength_ratio(d, cfg), cfg.ramp_low, cfg.ramp_high)
    return (1.0 - gamma) * theta / cfg.scale + gamma * theta


def position_map(m: int) -> int:
    """Position indices pass through unchanged (no index rescaling)."""
    if m < 0:
        raise ValueError("position index must be non-negative")
    return m


def frequency_table(cfg: RopeScalingConfig) -> list[dict]:
    """Per-dimension original and rescaled frequencies, 12 significant digits."""
    rows = []
    for d in range(cfg.frequency_pairs):
        rows.append({
            "dim": d,
            "wavelength": float(f"{wavelength(d, cfg):.12g}"),
            "original_frequency": float(f"{base_frequency(d, cfg):.12g}"),
            "scaled_frequency": float(f"{scaled_frequency(d, cfg):.12g}"),
        })
    return rows


@dataclass(frozen=True)
class SmoothingConfig:
    """Label smoothing parameters: mixing weight epsilon over vocab_size."""

    vocab_size: int
    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")


def smoothed_labels(true_index: int, cfg: SmoothingConfig) -> list[float]:
    """Mix a one-hot target with the uniform distribution.

    The true slot gets (1 - eps) + eps/V and every other slot eps/V, so the
    result is always a valid probability distribution.
    """
    if not 0 <= true_index < cfg.vocab_size:
        raise ValueError(f"true_index {true_index} outside vocabulary of {cfg.vocab_size}")
    floor = cfg.epsilon / cfg.vocab_size
    dist = [floor] * cfg.vocab_size
    dist[true_index] = (1.0 - cfg.epsilon) + floor
    return dist


def smoothed_ce_loss(predicted: Sequence[float], true_index: int, cfg: SmoothingConfig) -> float:
    """Cross-entropy of predicted probabilities against the smoothed target."""
    if len(predicted) != cfg.vocab_size:
        raise ValueError("predicted length must equal vocab_size")
    total = math.fsum(predicted)
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"predicted probabilities sum to {total}, expected 1")
    if any(p <= 0.0 for p in predicted):
        raise ValueError("predicted probabilities must be strictly positive")
    targets = smoothed_labels(true_index, cfg)
    return -math.fsum(t * math.log(p) for t, p in zip(targets, predicted))


# Fine-tuning hyperparameters emitted into the training config file.
TRAINING_HYPERPARAMETERS = {
    "base_model": "Qwen2.5-7B-Instruct",
    "method": "qlora",
    "lora_rank": 256,
    "lora_alpha": 512,
    "dropout": 0.1,
    "learning_rate": 2e-4,
    "batch_size": 1,
    "warmup_steps": 100,
    "gradient_accumulation_steps": 16,
    "context_length": 131072,
    "rope_scaling_factor": 4.0,
    "label_smoothing_epsilon": 0.1,
}


def build_training_config(rope: RopeScalingConfig | None = None) -> dict:
    """Assemble the full training configuration mapping."""
    rope = rope or RopeScalingConfig()
    cfg = dict(TRAINING_HYPERPARAMETERS)
    cfg["context_length"] = rope.target_context
    cfg["rope_scaling_factor"] = float(rope.scale)
    cfg["rope_scaling"] = {
        "base": rope.base,
        "scale": rope.scale,
        "original_context": rope.original_context,
        "target_context": rope.target_context,
        "head_dim": rope.head_dim,
        "ramp_low": rope.ramp_low,
        "ramp_high": rope.ramp_high,
        "frequencies": frequency_table(rope),
    }
    return cfg


def emit_training_config(path: str | Path, rope: RopeScalingConfig | None = None) -> dict:
    """Write the training configuration as JSON and return the mapping."""
    cfg = build_training_config(rope)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return cfg


def load_training_config(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
