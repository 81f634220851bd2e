"""GADMM-family solvers and the parameter-server baselines.

A GADMM round over a bipartite head/tail graph::

    heads solve their prox step against cached tail models
    heads transmit (maybe censored, maybe quantized)
    tails solve their prox step against the head models just received
    tails transmit
    every edge updates lam_e += rho (hat_head - hat_tail)

The dual update uses the reconstructions ``hat`` held identically by both
endpoints, so the two ends of an edge always agree on ``lam_e`` without
extra traffic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import LinkBudget, transmit_energy
from .compression import (CensorSchedule, QuantizerState, censor_decision, payload_bits,
                          quantize_update)
from .errors import DivergenceError, InvalidArgumentError
from .problem import ProblemInstance, centralized_solution, local_gradient, prox_solve
from .topology import Topology, reshuffle, validate_bipartite
from .trace import MetricsTrace

GADMM_VARIANTS = ("gadmm", "ggadmm", "d-gadmm", "q-gadmm", "c-ggadmm", "c-qggadmm")
PS_VARIANTS = ("ps-admm", "fedavg-gd", "quantized-gd")
FADMM_VARIANTS = ("a-fadmm", "d-fadmm")
VARIANTS = GADMM_VARIANTS + PS_VARIANTS + FADMM_VARIANTS
DIVERGENCE_FACTOR = 1e6

# rng stream tags, combined with the experiment seed
STREAM_QUANT = 1
STREAM_TOPOLOGY = 2
STREAM_FADING = 3
STREAM_NOISE = 4


def stream(seed: int, tag: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), tag, *extra])


@dataclass
class SolverConfig:
    variant: str = "gadmm"
    rho: float = 1.0
    max_rounds: int = 2000
    target_error: float = math.inf  # non-finite disables early stopping
    error_kind: str = "relative"
    bits: int = 2
    censor: CensorSchedule | None = None
    shuffle_period: int = 10
    step_size: float | None = None  # None picks 1/L
    local_steps: int = 1
    link: LinkBudget = field(default_factory=LinkBudget)
    # FADMM knobs
    noise_variance: float = 0.0
    time_varying: bool = True
    power_budget: float | None = None
    bandwidth_multiplier: int = 1
    fading: bool = True
    per_subcarrier_fading: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidArgumentError(f"unknown variant {self.variant!r}")
        if not self.rho > 0:
            raise InvalidArgumentError("penalty rho must be positive")
        if self.max_rounds < 0:
            raise InvalidArgumentError("max_rounds must be nonnegative")
        if self.target_error < 0:
            raise InvalidArgumentError("target_error must be nonnegative")
        if self.error_kind not in ("relative", "absolute"):
            raise InvalidArgumentError("error_kind must be 'relative' or 'absolute'")
        if self.bits < 1:
            raise InvalidArgumentError("bits must be >= 1")
        if self.shuffle_period < 1:
            raise InvalidArgumentError("shuffle_period must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise InvalidArgumentError("step size must be positive")
        if self.local_steps < 1:
            raise InvalidArgumentError("local_steps must be >= 1")
        if self.noise_variance < 0:
            raise InvalidArgumentError("noise variance must be nonnegative")
        if self.power_budget is not None and not self.power_budget > 0:
            raise InvalidArgumentError("power budget must be positive")
        if self.bandwidth_multiplier < 1:
            raise InvalidArgumentError("bandwidth_multiplier must be >= 1")
        if self.censored and self.censor is None:
            self.censor = CensorSchedule()

    @property
    def quantized(self) -> bool:
        return self.variant in ("q-gadmm", "c-qggadmm", "quantized-gd")

    @property
    def censored(self) -> bool:
        return self.variant in ("c-ggadmm", "c-qggadmm")

    @property
    def dynamic(self) -> bool:
        return self.variant == "d-gadmm"

    def payload(self, dim: int) -> int:
        return payload_bits(dim, self.bits, "quantized") if self.quantized else payload_bits(dim, mode="full")


class ObjectiveError:
    """``|F(t) - F*|``, optionally divided by ``|F*|``."""

    def __init__(self, problem: ProblemInstance, kind: str = "relative"):
        self.problem = problem
        self.theta_star = centralized_solution(problem)
        self.f_star = problem.objective(self.theta_star)
        self.scale = abs(self.f_star) if kind == "relative" and self.f_star != 0 else 1.0

    def __call__(self, theta) -> float:
        return abs(self.problem.objective(theta) - self.f_star) / self.scale


@dataclass
class Meter:
    bits: float = 0.0
    joules: float = 0.0
    sent: int = 0
    censored: int = 0

    def charge(self, num_msgs: int, bits_each: int, link: LinkBudget, share: int) -> None:
        if num_msgs:
            self.bits += num_msgs * bits_each
            self.joules += num_msgs * transmit_energy(bits_each, link, share=share)
            self.sent += num_msgs


@dataclass
class WorkerState:
    """Read-only view of one worker inside a :class:`GadmmState`."""

    theta: np.ndarray
    theta_hat: np.ndarray
    duals: dict
    neighbor_cache: dict


@dataclass
class GadmmState:
    theta: np.ndarray            # (N, d) true models
    hat: np.ndarray              # (N, d) last transmitted reconstruction per worker
    lam: np.ndarray              # (E, d) one dual per edge, oriented head -> tail
    cache_at_head: np.ndarray    # (E, d) what the head end holds for its tail neighbour
    cache_at_tail: np.ndarray    # (E, d) what the tail end holds for its head neighbour
    quantizers: list | None = None
    rngs: list | None = None

    @classmethod
    def initial(cls, problem: ProblemInstance, topology: Topology, config: SolverConfig, seed: int = 0,
                theta0: np.ndarray | None = None) -> "GadmmState":
        N, d, E = problem.num_workers, problem.dim, len(topology.edges)
        if topology.num_workers != N:
            raise InvalidArgumentError(f"topology has {topology.num_workers} workers, problem has {N}")
        theta = np.zeros((N, d)) if theta0 is None else np.array(theta0, dtype=float).reshape(N, d)
        hat = theta.copy()
        heads = np.array([h for h, _ in topology.edges], dtype=int)
        tails = np.array([t for _, t in topology.edges], dtype=int)
        st = cls(theta, hat, np.zeros((E, d)), hat[tails].copy(), hat[heads].copy())
        if config.quantized:
            st.quantizers = [QuantizerState(config.bits, hat[n].copy()) for n in range(N)]
            st.rngs = [stream(seed, STREAM_QUANT, n) for n in range(N)]
        return st

    def copy(self) -> "GadmmState":
        return replace(self, theta=self.theta.copy(), hat=self.hat.copy(), lam=self.lam.copy(),
                       cache_at_head=self.cache_at_head.copy(), cache_at_tail=self.cache_at_tail.copy())

    def worker(self, n: int, topology: Topology) -> WorkerState:
        duals, cache = {}, {}
        for e, sign in topology.incident[n]:
            h, t = topology.edges[e]
            duals[(h, t)] = self.lam[e].copy()
            if sign > 0:
                cache[t] = self.cache_at_head[e].copy()
            else:
                cache[h] = self.cache_at_tail[e].copy()
        return WorkerState(self.theta[n].copy(), self.hat[n].copy(), duals, cache)

    def check_consistency(self, topology: Topology) -> None:
        heads = [h for h, _ in topology.edges]
        tails = [t for _, t in topology.edges]
        assert np.array_equal(self.cache_at_head, self.hat[tails]), "head-side neighbour cache out of sync"
        assert np.array_equal(self.cache_at_tail, self.hat[heads]), "tail-side neighbour cache out of sync"


def _edge_sums(state: GadmmState, topology: Topology, workers: list[int], side: str):
    """Per-worker neighbour-model sum, signed dual sum and degree from that worker's caches."""
    N, d = state.theta.shape
    nbr = np.zeros((N, d))
    dual = np.zeros((N, d))
    if topology.edges:
        heads = np.array([h for h, _ in topology.edges])
        tails = np.array([t for _, t in topology.edges])
        if side == "head":
            np.add.at(nbr, heads, state.cache_at_head)
            np.add.at(dual, heads, state.lam)
        else:
            np.add.at(nbr, tails, state.cache_at_tail)
            np.add.at(dual, tails, -state.lam)
    idx = np.asarray(workers, dtype=int)
    return nbr[idx], dual[idx], topology.degrees[idx]


def _transmit(state: GadmmState, topology: Topology, problem: ProblemInstance, config: SolverConfig,
              group: list[int], side: str, round_k: int, meter: Meter) -> list[int]:
    """One broadcast phase. Returns the workers that actually transmitted."""
    senders = []
    for n in group:
        if config.censored and not censor_decision(state.theta[n], state.hat[n], round_k, config.censor):
            meter.censored += 1
            continue
        if config.quantized:
            state.hat[n] = quantize_update(state.theta[n], state.quantizers[n], state.rngs[n])
        else:
            state.hat[n] = state.theta[n]
        senders.append(n)
    group_set = topology.heads if side == "head" else topology.tails
    assert set(senders) <= group_set, "only one group may transmit per phase"
    for n in senders:
        for e, _ in topology.incident[n]:
            if side == "head":
                state.cache_at_tail[e] = state.hat[n]
            else:
                state.cache_at_head[e] = state.hat[n]
    meter.charge(len(senders), config.payload(problem.dim), config.link, share=max(len(senders), 1))
    return senders


def gadmm_round(state: GadmmState, topology: Topology, problem: ProblemInstance, config: SolverConfig,
                round_k: int, meter: Meter | None = None) -> GadmmState:
    """Advance every worker by one head/tail round; returns the new state."""
    state.check_consistency(topology)
    meter = meter if meter is not None else Meter()
    new = state.copy()
    rho = config.rho
    heads, tails = topology.head_list(), topology.tail_list()

    nbr, dual, deg = _edge_sums(new, topology, heads, "head")
    new.theta[heads] = prox_solve(problem, heads, dual, nbr, deg, rho, warm=new.theta[heads])
    _transmit(new, topology, problem, config, heads, "head", round_k, meter)

    nbr, dual, deg = _edge_sums(new, topology, tails, "tail")
    new.theta[tails] = prox_solve(problem, tails, dual, nbr, deg, rho, warm=new.theta[tails])
    _transmit(new, topology, problem, config, tails, "tail", round_k, meter)

    edge_h = [h for h, _ in topology.edges]
    edge_t = [t for _, t in topology.edges]
    new.lam += rho * (new.hat[edge_h] - new.hat[edge_t])
    new.check_consistency(topology)
    return new


def rewire(state: GadmmState, old: Topology, new_topology: Topology, problem: ProblemInstance,
           config: SolverConfig, meter: Meter) -> GadmmState:
    """Move a GADMM state onto a reshuffled graph.

    New neighbours swap their current reconstructions (one message per
    worker, each group in its own phase). Edge duals are re-fitted to the
    fixed-point condition ``grad f_n(theta_n) + sum_e s_e lam_e = 0`` in the
    least-squares sense over the new incidence matrix.
    """
    N, d = state.theta.shape
    grads = np.stack([local_gradient(problem, n, state.theta[n]) for n in range(N)])
    lam, *_ = np.linalg.lstsq(new_topology.incidence, -grads, rcond=None)
    heads = [h for h, _ in new_topology.edges]
    tails = [t for _, t in new_topology.edges]
    out = GadmmState(state.theta.copy(), state.hat.copy(), lam, state.hat[tails].copy(),
                     state.hat[heads].copy(), state.quantizers, state.rngs)
    bits = config.payload(d)
    for group in (new_topology.heads, new_topology.tails):
        meter.charge(len(group), bits, config.link, share=len(group))
    return out


# ---------------------------------------------------------------- PS baselines

@dataclass
class PsState:
    theta: np.ndarray        # (N, d) local models
    global_model: np.ndarray  # (d,)
    lam: np.ndarray          # (N, d) local duals (ps-admm)
    quantizers: list | None = None
    rngs: list | None = None


def _smoothness(problem: ProblemInstance) -> tuple[np.ndarray, float]:
    """Per-worker and global gradient Lipschitz constants."""
    d = problem.dim
    if problem.is_quadratic:
        grams = problem.grams
    else:
        grams = np.stack([0.25 * A.T @ A + problem.mu * np.eye(d) for A, _ in problem.shards])
    local = np.array([np.linalg.eigvalsh(G)[-1] for G in grams])
    total = float(np.linalg.eigvalsh(grams.sum(axis=0))[-1])
    return local, total


def ps_admm_round(state: PsState, problem: ProblemInstance, config: SolverConfig,
                  meter: Meter | None = None) -> PsState:
    """Consensus ADMM with a parameter server: local prox, server average, local dual step."""
    meter = meter if meter is not None else Meter()
    N = problem.num_workers
    workers = list(range(N))
    rho = config.rho
    theta = prox_solve(problem, workers, state.lam, np.broadcast_to(state.global_model, state.theta.shape),
                       np.ones(N), rho, warm=state.theta)
    meter.charge(N, payload_bits(problem.dim, mode="full"), config.link, share=N)
    glob = np.mean(theta + state.lam / rho, axis=0)
    lam = state.lam + rho * (theta - glob)
    return PsState(theta, glob, lam)


def fedavg_gd_round(state: PsState, problem: ProblemInstance, config: SolverConfig,
                    meter: Meter | None = None) -> PsState:
    """``local_steps`` gradient steps per worker from the global model, then average."""
    meter = meter if meter is not None else Meter()
    eta = config.step_size
    if eta is None:
        eta = 1.0 / float(np.max(_smoothness(problem)[0]))
    if not eta > 0:
        raise InvalidArgumentError("step size must be positive")
    N = problem.num_workers
    theta = np.tile(state.global_model, (N, 1))
    for _ in range(config.local_steps):
        theta = theta - eta * np.stack([local_gradient(problem, n, theta[n]) for n in range(N)])
    meter.charge(N, payload_bits(problem.dim, mode="full"), config.link, share=N)
    return PsState(theta, theta.mean(axis=0), state.lam)


def quantized_gd_round(state: PsState, problem: ProblemInstance, config: SolverConfig,
                       meter: Meter | None = None) -> PsState:
    """Server gradient descent on ``F`` from stochastically quantized worker gradients.

    Each worker quantizes its gradient against its previous reconstructed
    gradient with the same ``b``-bit quantizer as Q-GADMM.
    """
    meter = meter if meter is not None else Meter()
    eta = config.step_size if config.step_size is not None else 1.0 / _smoothness(problem)[1]
    N = problem.num_workers
    grads = np.empty((N, problem.dim))
    for n in range(N):
        g = local_gradient(problem, n, state.global_model)
        grads[n] = quantize_update(g, state.quantizers[n], state.rngs[n])
    meter.charge(N, payload_bits(problem.dim, config.bits, "quantized"), config.link, share=N)
    glob = state.global_model - eta * grads.sum(axis=0)
    return PsState(np.tile(glob, (N, 1)), glob, state.lam, state.quantizers, state.rngs)


# ---------------------------------------------------------------- driver

def _record(trace: MetricsTrace, k: int, err: float, meter: Meter) -> None:
    trace.append(round=k, obj_error=err, cum_bits=meter.bits, cum_joules=meter.joules,
                 msgs_sent=meter.sent, msgs_censored=meter.censored)


def _guard(k: int, err: float, initial: float) -> None:
    if not math.isfinite(err) or err > DIVERGENCE_FACTOR * max(initial, 1e-300):
        raise DivergenceError(k, err, initial)


def _done(err: float, config: SolverConfig) -> bool:
    return math.isfinite(config.target_error) and err <= config.target_error


def run(problem: ProblemInstance, topology: Topology | None, config: SolverConfig, seed: int = 0,
        objective: ObjectiveError | None = None) -> MetricsTrace:
    """Iterate the configured variant, one trace row per round (round 1 first).

    Stops after ``max_rounds`` or once the objective error (at the worker
    average model) reaches ``target_error``.
    """
    if config.variant in FADMM_VARIANTS:
        from .afadmm import run_fadmm
        return run_fadmm(problem, config, seed, objective=objective)
    objective = objective or ObjectiveError(problem, config.error_kind)
    trace = MetricsTrace(config.variant, problem.fingerprint, seed)
    meter = Meter()
    N, d = problem.num_workers, problem.dim

    if config.variant in PS_VARIANTS:
        state = PsState(np.zeros((N, d)), np.zeros(d), np.zeros((N, d)))
        if config.variant == "quantized-gd":
            state.quantizers = [QuantizerState(config.bits, np.zeros(d)) for _ in range(N)]
            state.rngs = [stream(seed, STREAM_QUANT, n) for n in range(N)]
        step = {"ps-admm": ps_admm_round, "fedavg-gd": fedavg_gd_round,
                "quantized-gd": quantized_gd_round}[config.variant]
        current = lambda s: s.global_model if config.variant != "ps-admm" else s.theta.mean(axis=0)
    else:
        if topology is None:
            raise InvalidArgumentError(f"{config.variant} needs a topology")
        if not validate_bipartite(topology):
            raise InvalidArgumentError("topology must be connected and bipartite over head/tail groups")
        state = GadmmState.initial(problem, topology, config, seed)
        topo_rng = stream(seed, STREAM_TOPOLOGY)
        current = lambda s: s.theta.mean(axis=0)

    initial = objective(current(state))
    trace.initial_error = initial
    if _done(initial, config) or config.max_rounds == 0:
        # nothing to iterate: the trace holds the starting point alone
        _record(trace, 0, initial, meter)
        trace.meta["final_model"] = current(state)
        return trace
    for k in range(1, config.max_rounds + 1):
        if config.variant in PS_VARIANTS:
            state = step(state, problem, config, meter)
        else:
            if config.dynamic and k > 1 and (k - 1) % config.shuffle_period == 0:
                new_topology = reshuffle(topology, topo_rng, period_marker=k)
                assert validate_bipartite(new_topology)
                state = rewire(state, topology, new_topology, problem, config, meter)
                topology = new_topology
            state = gadmm_round(state, topology, problem, config, k, meter)
        err = objective(current(state))
        _guard(k, err, initial)
        _record(trace, k, err, meter)
        if _done(err, config):
            break
    trace.meta["final_model"] = current(state)
    if config.variant in GADMM_VARIANTS:
        trace.meta["consensus_gap"] = _consensus_gap(state, topology)
        trace.meta["topology"] = topology
    return trace


def _consensus_gap(state: GadmmState, topology: Topology) -> float:
    if not topology.edges:
        return 0.0
    h = [u for u, _ in topology.edges]
    t = [v for _, v in topology.edges]
    return float(np.max(np.abs(state.hat[h] - state.hat[t])))
