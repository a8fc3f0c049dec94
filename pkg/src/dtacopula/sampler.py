"""Multinomial No-U-Turn sampler with step-size and diagonal-metric adaptation.

Randomness comes from a counter-based generator (Philox) keyed by
``(seed, chain)`` with the iteration number in the counter, so each
iteration's stream is fixed regardless of how chains are scheduled.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MAX_DELTA_H = 1000.0
_INIT_STREAM = 1
_ITER_STREAM = 0


class SamplingError(RuntimeError):
    pass


class InitializationError(SamplingError):
    pass


@dataclass(frozen=True)
class ChainConfig:
    chains: int = 3
    iter: int = 2000
    warmup: int = 1000
    thin: int = 1
    seed: int = 0
    max_tree_depth: int = 10
    target_accept: float = 0.8
    algorithm: str = "nuts"
    hmc_steps: int = 10

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0 <= self.warmup < self.iter:
            raise ValueError(f"need 0 <= warmup < iter, got warmup={self.warmup}, iter={self.iter}")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")
        if self.algorithm not in ("nuts", "hmc"):
            raise ValueError("algorithm must be 'nuts' or 'hmc'")

    @property
    def kept_per_chain(self) -> int:
        return (self.iter - self.warmup) // self.thin


@dataclass
class ChainDraws:
    """Post-warmup output of one chain."""

    chain: int
    draws: np.ndarray  # kept x dim, unconstrained scale
    param_names: list
    accept_stat: np.ndarray  # per iteration, warmup included
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    step_size: float
    inv_metric: np.ndarray
    warmup: int
    loglik: np.ndarray | None = None  # kept x 2n
    generated: dict = field(default_factory=dict)  # name -> kept x k

    @property
    def divergence_count(self) -> int:
        return int(self.divergent[self.warmup:].sum())

    @property
    def n_kept(self) -> int:
        return self.draws.shape[0]


def chain_rng(seed: int, chain: int, iteration: int, stream: int = _ITER_STREAM) -> np.random.Generator:
    """Generator for one (seed, chain, iteration) cell of the random stream."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, chain], dtype=np.uint64)
    counter = np.array([0, 0, stream, iteration], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def leapfrog(position, momentum, step_size, gradient_fn, inv_metric=None):
    """One leapfrog step; ``gradient_fn`` returns the gradient of the log density."""
    q = np.asarray(position, float)
    p = np.asarray(momentum, float)
    m = 1.0 if inv_metric is None else inv_metric
    p = p + 0.5 * step_size * gradient_fn(q)
    q = q + step_size * m * p
    p = p + 0.5 * step_size * gradient_fn(q)
    return q, p


class _State:
    __slots__ = ("q", "p", "logp", "grad")

    def __init__(self, q, p, logp, grad):
        self.q, self.p, self.logp, self.grad = q, p, logp, grad


def _criterion(p_sharp_a, p_sharp_b, rho) -> bool:
    return float(p_sharp_a @ rho) > 0.0 and float(p_sharp_b @ rho) > 0.0


class NUTS:
    """Transition kernel bound to a target exposing ``value_and_grad`` and ``dim``."""

    def __init__(self, target, max_tree_depth=10):
        self.target = target
        self.max_tree_depth = max_tree_depth
        self.step_size = 1.0
        self.inv_metric = np.ones(target.dim)

    # -- integrator ---------------------------------------------------------
    def _leapfrog(self, s: _State, eps: float) -> _State:
        p = s.p + 0.5 * eps * s.grad
        q = s.q + eps * self.inv_metric * p
        logp, grad = self.target.value_and_grad(q)
        if not np.isfinite(logp):
            return _State(q, p, -np.inf, np.zeros_like(q))
        p = p + 0.5 * eps * grad
        return _State(q, p, logp, grad)

    def energy(self, s: _State) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            # a blown-up momentum is a divergence, not an error
            h = -s.logp + 0.5 * float(s.p @ (self.inv_metric * s.p))
        return h if np.isfinite(h) else np.inf

    def sample_momentum(self, rng, dim):
        return rng.standard_normal(dim) / np.sqrt(self.inv_metric)

    # -- tree building ------------------------------------------------------
    def _build_tree(self, depth, state, sign, H0, rng, stats):
        """Returns (valid, end_state, proposal, ps_beg, ps_end, rho, p_beg, p_end, log_weight)."""
        if depth == 0:
            new = self._leapfrog(state, sign * self.step_size)
            stats["n_leapfrog"] += 1
            h = self.energy(new)
            if h - H0 > MAX_DELTA_H:
                stats["divergent"] = True
            stats["sum_metro"] += 1.0 if H0 - h > 0 else math.exp(H0 - h)
            ps = self.inv_metric * new.p
            return (not stats["divergent"], new, new, ps, ps, new.p.copy(), new.p, new.p, H0 - h)

        v1, state, prop1, psb1, pse1, rho1, pb1, pe1, w1 = self._build_tree(depth - 1, state, sign, H0, rng, stats)
        if not v1:
            return (False, state, prop1, psb1, pse1, rho1, pb1, pe1, w1)
        v2, state, prop2, psb2, pse2, rho2, pb2, pe2, w2 = self._build_tree(depth - 1, state, sign, H0, rng, stats)
        if not v2:
            return (False, state, prop2, psb1, pse2, rho1, pb1, pe2, w1)
        w = np.logaddexp(w1, w2)
        prop = prop2 if rng.uniform() < math.exp(w2 - w) else prop1
        rho = rho1 + rho2
        ok = (
            _criterion(psb1, pse2, rho)
            and _criterion(psb1, psb2, rho1 + pb2)
            and _criterion(pse1, pse2, rho2 + pe1)
        )
        return (ok, state, prop, psb1, pse2, rho, pb1, pe2, w)

    def transition(self, current: _State, rng):
        p0 = self.sample_momentum(rng, current.q.size)
        start = _State(current.q, p0, current.logp, current.grad)
        H0 = self.energy(start)
        stats = {"n_leapfrog": 0, "sum_metro": 0.0, "divergent": False}

        fwd = bck = start
        p_fwd = p_bck = p0
        ps_fwd = ps_bck = self.inv_metric * p0
        rho = p0.copy()
        log_w = 0.0
        sample = start
        depth = 0
        while depth < self.max_tree_depth:
            if rng.uniform() > 0.5:
                valid, fwd_new, prop, psb, pse, rho_s, pb, pe, w_s = self._build_tree(depth, fwd, 1, H0, rng, stats)
                if valid:
                    persist = (
                        _criterion(ps_bck, pse, rho + rho_s)
                        and _criterion(ps_bck, psb, rho + pb)
                        and _criterion(ps_fwd, pse, rho_s + p_fwd)
                    )
                    fwd, p_fwd, ps_fwd = fwd_new, pe, pse
            else:
                valid, bck_new, prop, psb, pse, rho_s, pb, pe, w_s = self._build_tree(depth, bck, -1, H0, rng, stats)
                if valid:
                    persist = (
                        _criterion(pse, ps_fwd, rho + rho_s)
                        and _criterion(ps_fwd, psb, rho + pb)
                        and _criterion(ps_bck, pse, rho_s + p_bck)
                    )
                    bck, p_bck, ps_bck = bck_new, pe, pse
            if not valid:
                break
            depth += 1
            if w_s > log_w or rng.uniform() < math.exp(w_s - log_w):
                sample = prop
            log_w = np.logaddexp(log_w, w_s)
            rho = rho + rho_s
            if not persist:
                break
        accept = stats["sum_metro"] / max(stats["n_leapfrog"], 1)
        return sample, {
            "accept_stat": accept,
            "n_leapfrog": stats["n_leapfrog"],
            "tree_depth": depth,
            "divergent": stats["divergent"],
        }

    def hmc_transition(self, current: _State, rng, n_steps: int):
        """Fixed-length HMC with a Metropolis correction (debugging fallback).

        The step size is jittered by up to 20% per transition so that a
        trajectory length near a period of the target cannot lock the chain.
        """
        p0 = self.sample_momentum(rng, current.q.size)
        eps = self.step_size * rng.uniform(0.8, 1.2)
        s = _State(current.q, p0, current.logp, current.grad)
        H0 = self.energy(s)
        divergent = False
        for _ in range(n_steps):
            s = self._leapfrog(s, eps)
            if self.energy(s) - H0 > MAX_DELTA_H:
                divergent = True
                break
        h = self.energy(s)
        accept = 0.0 if divergent else min(1.0, math.exp(min(0.0, H0 - h)))
        out = s if (not divergent and rng.uniform() < accept) else current
        return out, {"accept_stat": accept, "n_leapfrog": n_steps, "tree_depth": 0, "divergent": divergent}

    # -- step size heuristics -----------------------------------------------
    def init_step_size(self, current: _State, rng):
        """Double or halve the step until one leapfrog step crosses acceptance 0.8."""
        log08 = math.log(0.8)

        def delta_h():
            p = self.sample_momentum(rng, current.q.size)
            s = _State(current.q, p, current.logp, current.grad)
            h0 = self.energy(s)
            h = self.energy(self._leapfrog(s, self.step_size))
            return h0 - h if np.isfinite(h) else -np.inf

        dh = delta_h()
        direction = 1 if dh > log08 else -1
        for _ in range(100):
            dh = delta_h()
            if direction == 1 and not dh > log08:
                break
            if direction == -1 and not dh < log08:
                break
            self.step_size = self.step_size * 2.0 if direction == 1 else self.step_size / 2.0
            if self.step_size > 1e7 or self.step_size < 1e-12:
                raise SamplingError(f"step size heuristic diverged (step size {self.step_size:g})")


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(step_size)

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat) -> float:
        self.counter += 1
        a = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - a)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    @property
    def final(self) -> float:
        return math.exp(self.x_bar)


def warmup_windows(warmup: int) -> list[tuple[int, int]]:
    """Slow (metric) adaptation windows as half-open iteration ranges.

    15% initial fast buffer, doubling windows from 25 iterations, 10% terminal
    fast buffer; the last window stretches to the terminal buffer.
    """
    if warmup < 20:
        return []
    init = int(0.15 * warmup)
    term = int(0.10 * warmup)
    end = warmup - term
    size = min(25, end - init)
    windows, start = [], init
    while start < end:
        stop = start + size
        if stop + 2 * size > end:
            stop = end
        windows.append((start, stop))
        start = stop
        size *= 2
    return windows


def _initial_state(target, seed, chain) -> _State:
    rng = chain_rng(seed, chain, 0, _INIT_STREAM)
    for _ in range(100):
        q = target.initial_point(rng) if hasattr(target, "initial_point") else rng.uniform(-2, 2, target.dim)
        logp, grad = target.value_and_grad(q)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            return _State(q, np.zeros_like(q), logp, grad)
    raise InitializationError("could not find a finite log-posterior in 100 initialization attempts")


def run_chain(target, config: ChainConfig, chain: int) -> ChainDraws:
    """Run one chain: warmup with adaptation, then keep every ``thin``-th draw."""
    kernel = NUTS(target, config.max_tree_depth)
    state = _initial_state(target, config.seed, chain)
    kernel.init_step_size(state, chain_rng(config.seed, chain, 1, _INIT_STREAM))
    adapter = DualAveraging(kernel.step_size, config.target_accept)
    windows = warmup_windows(config.warmup)
    window_end = {stop: start for start, stop in windows}
    in_window = np.zeros(config.warmup, bool)
    for start, stop in windows:
        in_window[start:stop] = True
    welford_n, welford_mean, welford_m2 = 0, np.zeros(target.dim), np.zeros(target.dim)

    n_iter = config.iter
    accept = np.empty(n_iter)
    depth = np.empty(n_iter, dtype=np.int16)
    n_leap = np.empty(n_iter, dtype=np.int32)
    divergent = np.zeros(n_iter, dtype=bool)
    kept = []
    for it in range(n_iter):
        rng = chain_rng(config.seed, chain, it)
        if config.algorithm == "nuts":
            state, info = kernel.transition(state, rng)
        else:
            state, info = kernel.hmc_transition(state, rng, config.hmc_steps)
        accept[it] = info["accept_stat"]
        depth[it] = info["tree_depth"]
        n_leap[it] = info["n_leapfrog"]
        divergent[it] = info["divergent"]

        if it < config.warmup:
            kernel.step_size = adapter.update(info["accept_stat"])
            if in_window[it]:
                welford_n += 1
                delta = state.q - welford_mean
                welford_mean = welford_mean + delta / welford_n
                welford_m2 = welford_m2 + delta * (state.q - welford_mean)
            if (it + 1) in window_end:
                n = welford_n
                var = welford_m2 / max(n - 1, 1)
                kernel.inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                welford_n, welford_mean, welford_m2 = 0, np.zeros(target.dim), np.zeros(target.dim)
                kernel.init_step_size(state, chain_rng(config.seed, chain, it + 2, _INIT_STREAM))
                adapter.restart(kernel.step_size)
                logger.info(
                    "chain %d: metric window ending at %d, step size %.4g", chain, it + 1, kernel.step_size
                )
            if it + 1 == config.warmup:
                kernel.step_size = adapter.final
        elif (it - config.warmup + 1) % config.thin == 0:
            kept.append(state.q)

    draws = np.array(kept).reshape(len(kept), target.dim)
    return ChainDraws(
        chain=chain,
        draws=draws,
        param_names=list(getattr(target, "param_names", [f"x[{i}]" for i in range(target.dim)])),
        accept_stat=accept,
        tree_depth=depth,
        n_leapfrog=n_leap,
        divergent=divergent,
        step_size=kernel.step_size,
        inv_metric=kernel.inv_metric.copy(),
        warmup=config.warmup,
    )


def _attach_quantities(target, cd: ChainDraws) -> ChainDraws:
    if hasattr(target, "loglik_pointwise"):
        cd.loglik = np.array([target.loglik_pointwise(q) for q in cd.draws])
    if hasattr(target, "generated"):
        rows = [target.generated(q) for q in cd.draws]
        if rows:
            cd.generated = {k: np.array([np.atleast_1d(r[k]) for r in rows]) for k in rows[0]}
    return cd


def _run_one(args):
    target, config, chain = args
    return _attach_quantities(target, run_chain(target, config, chain))


def run_chains(target, config: ChainConfig, n_jobs: int = 1) -> list[ChainDraws]:
    """Run ``config.chains`` independent chains; output does not depend on ``n_jobs``."""
    jobs = [(target, config, c) for c in range(config.chains)]
    if n_jobs == 1 or config.chains == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_one, jobs))
