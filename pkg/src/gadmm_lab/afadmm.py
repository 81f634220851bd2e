"""Analog federated ADMM over a fading multiple-access channel.

Problem: ``min sum_n f_n(theta_n)`` subject to ``h_n theta_n = h_n Theta``
(coordinate-wise gains). Writing ``mu_n = Re(conj(lam_n) h_n)`` for the
effective real dual, one round is::

    worker   grad f_n(theta_n) + mu_n + rho |h_n|^2 (theta_n - Theta) = 0
    uplink   x_n = conj(h_n) theta_n + conj(lam_n) / rho      (all at once)
    server   Theta = Re(sum_n h_n x_n + z) / sum_n |h_n|^2
    worker   lam_n += rho h_n (theta_n - Theta)

The server only ever sees the superposed reception, never an individual
``x_n``. When the gains change, duals are rescaled by
``conj(h_old) / conj(h_new)`` so that ``mu_n`` (and hence the next primal
step at a fixed point) is unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelRealization, LinkBudget, analog_mac, sample_fading, transmit_energy, upload_latency
from .compression import payload_bits
from .engine import (STREAM_FADING, STREAM_NOISE, ObjectiveError, SolverConfig, _done, _guard, stream)
from .errors import InvalidArgumentError
from .problem import ProblemInstance, prox_solve
from .trace import FADMM_COLUMNS, MetricsTrace

GAIN_GUARD = 1e-9
SCALAR_BITS = 32


@dataclass
class AfadmmState:
    theta: np.ndarray         # (N, d) real local models
    lam: np.ndarray           # (N, d) complex duals
    global_model: np.ndarray  # (d,) real
    gains: np.ndarray         # (N, d) complex
    rho: float = 1.0
    last_info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgumentError("penalty rho must be positive")

    @classmethod
    def initial(cls, num_workers: int, dim: int, gains, rho: float = 1.0) -> "AfadmmState":
        return cls(np.zeros((num_workers, dim)), np.zeros((num_workers, dim), dtype=complex),
                   np.zeros(dim), _as_grid(gains, num_workers, dim), rho)

    @property
    def effective_duals(self) -> np.ndarray:
        return np.real(np.conj(self.lam) * self.gains)


def _as_grid(gains, num_workers: int, dim: int) -> np.ndarray:
    g = np.asarray(gains, dtype=complex)
    if g.shape == (num_workers,):
        g = np.repeat(g[:, None], dim, axis=1)
    if g.shape != (num_workers, dim):
        raise InvalidArgumentError(f"gains of shape {g.shape} do not fit {num_workers} workers x {dim} coordinates")
    return g


def time_varying_channel_step(state: AfadmmState, new_gains) -> AfadmmState:
    """Re-express the duals for new gains, keeping ``Re(conj(lam) h)`` fixed."""
    N, d = state.theta.shape
    new = _as_grid(new_gains, N, d)
    if np.array_equal(new, state.gains):
        return state
    ok = (np.abs(state.gains) > GAIN_GUARD) & (np.abs(new) > GAIN_GUARD)
    ratio = np.ones_like(new)
    ratio[ok] = np.conj(state.gains[ok]) / np.conj(new[ok])
    return replace(state, lam=state.lam * ratio, gains=new, last_info={})


def afadmm_round(state: AfadmmState, problem: ProblemInstance, channel: ChannelRealization,
                 rng: np.random.Generator | None = None, power_budget: float | None = None) -> AfadmmState:
    """One analog ADMM sweep; ``state.last_info`` reports the uplink."""
    N, d = problem.num_workers, problem.dim
    if channel.mode != "analog-mac":
        raise InvalidArgumentError("afadmm_round needs an analog-mac channel")
    state = time_varying_channel_step(state, channel.gains)
    h, rho = state.gains, state.rho
    weight = np.abs(h) ** 2
    theta = prox_solve(problem, range(N), state.effective_duals, weight * state.global_model, weight, rho,
                       warm=state.theta)

    uplink = np.conj(h) * theta + np.conj(state.lam) / rho
    alpha = 1.0
    if power_budget is not None:
        energy = np.sum(np.abs(uplink) ** 2, axis=1)
        fits = np.where(energy > 0, np.sqrt(power_budget / np.where(energy > 0, energy, 1.0)), np.inf)
        alpha = float(np.min(fits)) if np.isfinite(np.min(fits)) else 1.0
    received = analog_mac(alpha * uplink, h, channel.noise_variance, rng) / alpha

    total = weight.sum(axis=0)
    live = total > GAIN_GUARD ** 2
    glob = state.global_model.copy()
    glob[live] = np.real(received[live]) / total[live]
    lam = state.lam + rho * h * (theta - glob)
    info = {
        "alpha": alpha,
        "skipped": not live.any(),
        "imag_residue": float(np.linalg.norm(np.imag(received))),
        "noise_floor_est": float(np.mean(0.5 * channel.noise_variance / (alpha ** 2 * total[live] ** 2)))
        if live.any() else 0.0,
        "tx_energy": float(np.sum(np.abs(alpha * uplink) ** 2)),
    }
    return AfadmmState(theta, lam, glob, h, rho, info)


def digital_fadmm_round(state: AfadmmState, problem: ProblemInstance, link: LinkBudget | None = None,
                        bandwidth_multiplier: int = 1) -> AfadmmState:
    """Same ADMM sweep with exact digital uploads on orthogonal bandwidth shares.

    Each worker uploads ``theta_n + lam_n / rho`` at full precision; the
    channel gains play no role once the packet is decoded. With ``N``
    workers sharing ``bandwidth_multiplier`` model-sized channels, one sweep
    takes ``ceil(N / bandwidth_multiplier)`` upload slots.
    """
    N, d = problem.num_workers, problem.dim
    link = link or LinkBudget()
    ones = np.ones((N, d), dtype=complex)
    unit = replace(state, gains=ones)
    theta = prox_solve(problem, range(N), np.real(unit.lam), np.broadcast_to(unit.global_model, (N, d)),
                       np.ones((N, d)), unit.rho, warm=unit.theta)
    glob = np.mean(theta + np.real(unit.lam) / unit.rho, axis=0)
    lam = unit.lam + unit.rho * (theta - glob)
    bits = payload_bits(d, mode="full")
    wide = replace(link, bandwidth_hz=link.bandwidth_hz * bandwidth_multiplier)
    info = {
        "slots": math.ceil(N / bandwidth_multiplier),
        "latency": upload_latency(bits, wide, share=N),
        "bits": N * bits,
        "joules": N * transmit_energy(bits, wide, share=N),
    }
    return AfadmmState(theta, lam, glob, ones, unit.rho, info)


def run_fadmm(problem: ProblemInstance, config: SolverConfig, seed: int = 0,
              objective: ObjectiveError | None = None) -> MetricsTrace:
    """Driver for ``a-fadmm`` and ``d-fadmm``; the objective is measured at the global model."""
    if config.variant not in ("a-fadmm", "d-fadmm"):
        raise InvalidArgumentError(f"run_fadmm cannot run {config.variant!r}")
    objective = objective or ObjectiveError(problem, config.error_kind)
    N, d = problem.num_workers, problem.dim
    trace = MetricsTrace(config.variant, problem.fingerprint, seed, columns=FADMM_COLUMNS)
    fading_rng = stream(seed, STREAM_FADING)
    noise_rng = stream(seed, STREAM_NOISE)
    shape = (N, d) if config.per_subcarrier_fading else (N,)
    draw = lambda: sample_fading(fading_rng, shape) if config.fading else np.ones(shape, dtype=complex)
    state = AfadmmState.initial(N, d, draw(), config.rho)
    tot = dict(bits=0.0, joules=0.0, sent=0, censored=0, slots=0)

    def record(k, err, info):
        trace.append(round=k, obj_error=err, cum_bits=tot["bits"], cum_joules=tot["joules"],
                     msgs_sent=tot["sent"], msgs_censored=tot["censored"],
                     noise_floor_est=info.get("noise_floor_est", 0.0),
                     imag_residue=info.get("imag_residue", 0.0), uplink_slots=tot["slots"])

    initial = objective(state.global_model)
    trace.initial_error = initial
    if _done(initial, config) or config.max_rounds == 0:
        record(0, initial, {})
        trace.meta["final_model"] = state.global_model
        return trace
    for k in range(1, config.max_rounds + 1):
        if config.variant == "a-fadmm":
            gains = draw() if (config.time_varying and k > 1) else state.gains
            channel = ChannelRealization(gains, config.noise_variance, "analog-mac")
            state = afadmm_round(state, problem, channel, noise_rng, config.power_budget)
            info = state.last_info
            if info["skipped"]:
                tot["censored"] += N
            else:
                tot["sent"] += N
            tot["slots"] += 1
            tot["joules"] += config.link.slot_sec * info["tx_energy"]
            if config.power_budget is not None:
                tot["bits"] += N * SCALAR_BITS
        else:
            state = digital_fadmm_round(state, problem, config.link, config.bandwidth_multiplier)
            info = state.last_info
            tot["sent"] += N
            tot["slots"] += info["slots"]
            tot["bits"] += info["bits"]
            tot["joules"] += info["joules"]
        err = objective(state.global_model)
        _guard(k, err, initial)
        record(k, err, info)
        if _done(err, config):
            break
    trace.meta["final_model"] = state.global_model
    trace.meta["state"] = state
    return trace
