"""Link rate and energy pricing plus the analog multiple-access channel.

Rates are in bits per channel use (base-2 logs throughout). Digital
transmitters that are active at the same time split the bandwidth into
equal orthogonal shares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

from .errors import InvalidArgumentError

LOG2E = math.log2(math.e)
DEFAULT_H_THRESHOLD = 0.1


@dataclass(frozen=True)
class LinkBudget:
    snr: float = 10.0
    bandwidth_hz: float = 1e6
    blocklength: int = 1000
    target_error: float = 1e-3
    noise_psd: float = 1e-9
    slot_sec: float = 1e-3
    rate_model: str = "shannon"  # or "finite-blocklength", used for latency

    def __post_init__(self):
        if self.rate_model not in ("shannon", "finite-blocklength"):
            raise InvalidArgumentError(f"unknown rate model {self.rate_model!r}")
        for name in ("snr", "bandwidth_hz", "noise_psd", "slot_sec"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if int(self.blocklength) != self.blocklength or self.blocklength < 1:
            raise InvalidArgumentError("blocklength must be a positive integer")
        if not 0 < self.target_error < 1:
            raise InvalidArgumentError("target_error must lie strictly inside (0, 1)")

    @classmethod
    def from_db(cls, snr_db: float, **kw) -> "LinkBudget":
        return cls(snr=10 ** (snr_db / 10), **kw)


def shannon_rate(snr: float) -> float:
    if snr < 0:
        raise InvalidArgumentError("snr must be nonnegative")
    return math.log2(1.0 + snr)


def q_function(x):
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


def q_inverse(eps: float) -> float:
    if not 0 < eps < 1:
        raise InvalidArgumentError("error probability must lie strictly inside (0, 1)")
    return float(math.sqrt(2.0) * erfcinv(2.0 * eps))


def dispersion(snr: float) -> float:
    """AWGN channel dispersion in bits^2."""
    return (2.0 * snr + snr ** 2) * LOG2E ** 2 / (1.0 + snr) ** 2


def finite_blocklength_rate(snr: float, n: int, eps: float) -> float:
    """Normal approximation ``C - sqrt(V/n) Q^-1(eps)``, O(log n / n) dropped, floored at 0."""
    if n < 1:
        raise InvalidArgumentError("blocklength must be >= 1")
    qinv = q_inverse(eps)
    rate = shannon_rate(snr) - math.sqrt(dispersion(snr) / n) * qinv
    return max(rate, 0.0)


def transmit_energy(bits: float, budget: LinkBudget, share: int = 1) -> float:
    """Joules to push ``bits`` through one slot on a ``1/share`` bandwidth slice.

    Inverts the Shannon rate: ``P = N0 B' (2**(bits / (B' T)) - 1)`` with
    ``B' = B / share``, energy ``P T``.
    """
    if bits < 0:
        raise InvalidArgumentError("bits must be nonnegative")
    if share < 1:
        raise InvalidArgumentError("bandwidth share count must be >= 1")
    if bits == 0:
        return 0.0
    bw = budget.bandwidth_hz / share
    uses = bw * budget.slot_sec
    power = budget.noise_psd * bw * math.expm1(bits / uses * math.log(2.0))
    return power * budget.slot_sec


def aggregated_rate(snr: float, n: int, eps: float, packets: int = 1) -> float:
    """Finite-blocklength rate when ``packets`` consecutive packets share one codeword."""
    if packets < 1:
        raise InvalidArgumentError("packets must be >= 1")
    return finite_blocklength_rate(snr, n * packets, eps)


def link_rate(budget: LinkBudget) -> float:
    if budget.rate_model == "finite-blocklength":
        return finite_blocklength_rate(budget.snr, budget.blocklength, budget.target_error)
    return shannon_rate(budget.snr)


def upload_latency(bits: float, budget: LinkBudget, share: int = 1) -> float:
    """Seconds to send ``bits`` on a ``1/share`` bandwidth slice at the budget's rate model."""
    if bits < 0:
        raise InvalidArgumentError("bits must be nonnegative")
    rate = link_rate(budget)
    if rate <= 0:
        return math.inf
    return bits / (budget.bandwidth_hz / share * rate)


def sample_fading(rng: np.random.Generator, size=None):
    """Unit-variance circularly-symmetric complex Gaussian (Rayleigh) gain(s)."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return (re + 1j * im) / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    noise_variance: float = 0.0
    mode: str = "analog-mac"

    def __post_init__(self):
        if self.mode not in ("analog-mac", "digital-orthogonal"):
            raise InvalidArgumentError(f"unknown channel mode {self.mode!r}")
        if self.noise_variance < 0:
            raise InvalidArgumentError("noise variance must be nonnegative")
        g = np.array(self.gains, dtype=complex)
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @classmethod
    def draw(cls, rng: np.random.Generator, num_workers: int, dim: int | None = None,
             noise_variance: float = 0.0, mode: str = "analog-mac") -> "ChannelRealization":
        size = num_workers if dim is None else (num_workers, dim)
        return cls(sample_fading(rng, size), noise_variance, mode)


def complex_noise(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    if variance == 0:
        return np.zeros(shape, dtype=complex)
    return sample_fading(rng, shape) * math.sqrt(variance)


def analog_mac(signals, gains, noise_variance: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Superpose fading-weighted signals on one shared channel and add noise.

    ``signals`` has shape (N, d); ``gains`` is (N,) or (N, d). Returns the
    single received (d,) vector; individual contributions are not
    recoverable from it.
    """
    s = np.asarray(signals)
    if s.ndim != 2:
        raise InvalidArgumentError("signals must be an (N, d) array")
    h = np.asarray(gains)
    if h.shape == (s.shape[0],):
        h = h[:, None]
    elif h.shape != s.shape:
        raise InvalidArgumentError(f"gains of shape {h.shape} do not match signals {s.shape}")
    received = np.sum(h * s, axis=0)
    if noise_variance > 0:
        if rng is None:
            raise InvalidArgumentError("noisy channel needs an rng")
        received = received + complex_noise(rng, received.shape, noise_variance)
    return received


def channel_inversion_precode(signal, h: complex, power_budget: float,
                              h_threshold: float = DEFAULT_H_THRESHOLD):
    """``signal / h`` if the gain clears the threshold and fits the budget, else ``None``."""
    if not power_budget > 0:
        raise InvalidArgumentError("power budget must be positive")
    if abs(h) < h_threshold:
        return None
    pre = np.asarray(signal) / h
    if float(np.sum(np.abs(pre) ** 2)) > power_budget:
        return None
    return pre
