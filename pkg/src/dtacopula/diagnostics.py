"""Convergence diagnostics for multiple chains of a scalar quantity."""

from __future__ import annotations

import warnings

import numpy as np


class DegenerateChainWarning(UserWarning):
    """All draws identical; the diagnostic falls back to its nominal value."""


def _as_chains(series, min_draws: int) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected an (m chains x N draws) array")
    if x.shape[1] < min_draws:
        raise ValueError(f"need at least {min_draws} draws per chain, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("draws must be finite")
    return x


def split_rhat(series) -> float:
    """Potential scale reduction on half-chains.

    Returns ``inf`` when within-chain variance vanishes but between-chain
    variance does not, and 1.0 (with :class:`DegenerateChainWarning`) for
    all-constant input.
    """
    x = _as_chains(series, 4)
    half = x.shape[1] // 2
    # odd lengths drop the middle draw
    halves = np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)
    n = halves.shape[1]
    B = n * np.var(halves.mean(axis=1), ddof=1)
    W = np.mean(np.var(halves, axis=1, ddof=1))
    if W == 0.0:
        if B == 0.0:
            warnings.warn("constant draws; R-hat set to 1", DegenerateChainWarning, stacklevel=2)
            return 1.0
        return np.inf
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row via FFT."""
    n = x.shape[-1]
    centred = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, n=size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=-1)[..., :n]
    return acov / n


def ess(series) -> float:
    """Multi-chain effective sample size with Geyer's initial monotone sequence."""
    x = _as_chains(series, 8)
    m, n = x.shape
    acov = _autocovariance(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    W = chain_var.mean()
    if W == 0.0:
        warnings.warn("constant draws; ESS set to the draw count", DegenerateChainWarning, stacklevel=2)
        return float(m * n)
    var_plus = W * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # pair sums P_k = rho_2k + rho_2k+1; keep the initial positive run, forced monotone
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    stop = np.flatnonzero(pairs <= 0.0)
    k_max = stop[0] if stop.size else n_pairs
    pairs = np.minimum.accumulate(pairs[:k_max]) if k_max else pairs[:0]
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def mcse(series) -> float:
    """Monte Carlo standard error of the posterior mean: sd / sqrt(ESS)."""
    x = _as_chains(series, 8)
    sd = np.std(x, ddof=1)
    if sd == 0.0:
        warnings.warn("constant draws; MCSE is 0", DegenerateChainWarning, stacklevel=2)
        return 0.0
    return float(sd / np.sqrt(ess(x)))


def trace(chains_draws, name: str, column: int = 0) -> np.ndarray:
    """Extract an (m x N) series of a generated quantity from chain outputs."""
    return np.array([cd.generated[name][:, column] for cd in chains_draws])
