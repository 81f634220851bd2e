"""Stochastic difference quantization and threshold censoring.

The quantizer centres a ``2R``-wide grid of ``2**b - 1`` steps on the
previous reconstruction and rounds each coordinate of the new model up or
down at random so that the reconstruction is unbiased. A message carries
the ``b``-bit indices plus ``R`` as a 32-bit float.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

R_MIN = 1e-12
HEADER_BITS = 32
FLOAT_BITS = 32


def step_size(radius: float, bits: int) -> float:
    return 2.0 * radius / (2 ** bits - 1)


def encode_radius(radius: float) -> float:
    """Round ``radius`` to the nearest float32 that is not smaller than it."""
    r32 = np.float32(radius)
    if float(r32) < radius:
        r32 = np.nextafter(r32, np.float32(np.inf))
    return float(r32)


@dataclass
class QuantizerState:
    bits: int
    prev: np.ndarray
    radius: float = R_MIN
    adaptive: bool = True

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise InvalidArgumentError("bits per element must be an integer >= 1")
        self.prev = np.array(self.prev, dtype=float)

    @property
    def step(self) -> float:
        return step_size(self.radius, self.bits)

    @property
    def levels(self) -> int:
        return 2 ** self.bits - 1


def quantize(theta, qstate: QuantizerState, rng: np.random.Generator):
    """Stochastically round ``theta - prev`` onto the grid.

    Returns ``(q, radius)``. With an adaptive state the radius is the
    tightest one covering the update, ``max(||theta - prev||_inf, R_MIN)``;
    otherwise ``qstate.radius`` is used and only grown if it falls short.
    """
    if int(qstate.bits) != qstate.bits or qstate.bits < 1:
        raise InvalidArgumentError("bits per element must be an integer >= 1")
    theta = np.asarray(theta, dtype=float)
    diff = theta - qstate.prev
    spread = float(np.max(np.abs(diff))) if diff.size else 0.0
    radius = max(spread, R_MIN) if qstate.adaptive else max(qstate.radius, spread, R_MIN)
    radius = encode_radius(radius)
    top = qstate.levels
    level = np.clip((diff + radius) / step_size(radius, qstate.bits), 0.0, top)
    low = np.floor(level)
    up = rng.random(level.shape) < (level - low)
    q = np.minimum(low + up, top).astype(np.int64)
    return q, radius


def dequantize(q, prev, radius: float, bits: int) -> np.ndarray:
    """Reconstruction ``prev + step * q - radius``."""
    q = np.asarray(q)
    if np.any(q < 0) or np.any(q > 2 ** bits - 1):
        raise InvalidArgumentError(f"quantization index outside [0, {2 ** bits - 1}]")
    return np.asarray(prev, dtype=float) + step_size(radius, bits) * q - radius


def quantize_update(theta, qstate: QuantizerState, rng: np.random.Generator) -> np.ndarray:
    """Quantize, reconstruct, and advance ``qstate`` to the new reconstruction."""
    q, radius = quantize(theta, qstate, rng)
    recon = dequantize(q, qstate.prev, radius, qstate.bits)
    # tolerance covers the rounding in prev + step*q - R
    slack = 1e-9 * max(1.0, float(np.max(np.abs(recon))))
    assert np.all(np.abs(recon - theta) <= step_size(radius, qstate.bits) + slack), "quantization error exceeds one step"
    qstate.prev = recon
    qstate.radius = radius
    return recon


def payload_bits(dim: int, bits: int | None = None, mode: str = "quantized") -> int:
    """Bits in one model message: ``b d + 32`` quantized, ``32 d`` full precision."""
    if dim < 1:
        raise InvalidArgumentError("dimension must be >= 1")
    if mode == "full":
        return FLOAT_BITS * dim
    if mode != "quantized":
        raise InvalidArgumentError(f"unknown payload mode {mode!r}")
    if bits is None or bits < 1:
        raise InvalidArgumentError("quantized payload needs bits >= 1")
    return bits * dim + HEADER_BITS


@dataclass(frozen=True)
class CensorSchedule:
    omega: float = 1.0
    zeta: float = 0.9
    norm_kind: str = "inf"

    def __post_init__(self):
        if not self.omega >= 1:
            raise InvalidArgumentError("censor omega must be >= 1")
        if not 0 < self.zeta < 1:
            raise InvalidArgumentError("censor zeta must lie in (0, 1)")
        if self.norm_kind not in ("inf", "l2"):
            raise InvalidArgumentError("censor norm must be 'inf' or 'l2'")

    def threshold(self, k: int) -> float:
        return self.omega * self.zeta ** k


def censor_decision(candidate, last_sent, k: int, schedule: CensorSchedule) -> bool:
    """True when the worker should transmit at round ``k``."""
    if k < 0:
        raise InvalidArgumentError("round index must be >= 0")
    gap = np.asarray(candidate, dtype=float) - np.asarray(last_sent, dtype=float)
    size = float(np.max(np.abs(gap))) if schedule.norm_kind == "inf" else float(np.linalg.norm(gap))
    return size > schedule.threshold(k)
