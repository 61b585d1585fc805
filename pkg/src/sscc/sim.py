"""Monte-Carlo engine for the underlay SSD relaying link.

Trials are processed in vectorised batches.  Every batch owns a private
:class:`RngStream`, so results depend only on (seed, config, grid) and not on
how many worker processes share the load.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    DEFAULT_PMAX_OFFSET_DB,
    Policy,
    SystemConfig,
    mean_value_power,
    operating_point,
)
from .modem import (
    RotatedConstellation,
    interleave,
    ml_detect,
    relay_detect,
    reorder,
    rotate_constellation,
)
from .specialfn import q_function

WORKERS_ENV = "SSCC_WORKERS"
DEFAULT_CHUNK = 1 << 16
# keeps (point, chunk) stream ids disjoint
_CHUNK_BITS = 24


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


def _as_generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, RngStream) else rng


@dataclass(frozen=True)
class ChannelRealization:
    """Complex gains for a batch of trials; relay links have shape (n, n_relays)."""

    h_sd: np.ndarray
    h_sr: np.ndarray
    h_rd: np.ndarray
    h_sp: np.ndarray
    h_rp: np.ndarray

    def __len__(self) -> int:
        return len(self.h_sd)


@dataclass(frozen=True)
class PowerAllocation:
    p_s: np.ndarray
    p_r: np.ndarray
    policy: Policy


@dataclass(frozen=True)
class SnrSample:
    gamma_sd: np.ndarray
    gamma_sr: np.ndarray
    gamma_rd: np.ndarray
    gamma_srd: np.ndarray
    gamma_d: np.ndarray
    relay_index: np.ndarray


@dataclass(frozen=True)
class TrialOutcome:
    tx_bits: np.ndarray
    rx_bits: np.ndarray
    tx_symbols: np.ndarray
    rx_symbols: np.ndarray
    relay_ok: np.ndarray
    relay_index: np.ndarray

    @property
    def bit_errors(self) -> int:
        return int(np.count_nonzero(self.tx_bits != self.rx_bits))

    @property
    def symbol_errors(self) -> int:
        return int(np.count_nonzero(self.tx_symbols != self.rx_symbols))


@dataclass(frozen=True)
class BerEstimate:
    snr_point: float
    errors: int
    bits: int
    ber: float
    ci_low: float
    ci_high: float
    relay_decode_error_rate: float
    trials: int


def _cn(rng: np.random.Generator, var: float, size) -> np.ndarray:
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def draw_channels(cfg: SystemConfig, rng, n: int = 1) -> ChannelRealization:
    """Independent circularly-symmetric Gaussian gains for ``n`` trials."""
    g = _as_generator(rng)
    r = cfg.n_relays
    return ChannelRealization(
        h_sd=_cn(g, cfg.var_sd, n),
        h_sr=_cn(g, cfg.var_sr, (n, r)),
        h_rd=_cn(g, cfg.var_rd, (n, r)),
        h_sp=_cn(g, cfg.var_p, n),
        h_rp=_cn(g, cfg.var_p, (n, r)),
    )


def _capped(qp: float, gain: np.ndarray, pmax: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.minimum(qp / gain, pmax)


def candidate_powers(cfg: SystemConfig, realization: ChannelRealization):
    """Source power (n,) and the power of every candidate relay (n, n_relays)."""
    if cfg.policy is Policy.MEAN_VALUE:
        p = mean_value_power(cfg)
        n = len(realization)
        return np.full(n, p), np.full((n, cfg.n_relays), p)
    p_s = _capped(cfg.qp, np.abs(realization.h_sp) ** 2, cfg.pmax)
    p_r = _capped(cfg.qp, np.abs(realization.h_rp) ** 2, cfg.pmax)
    return p_s, p_r


def snr_sample(cfg: SystemConfig, realization: ChannelRealization) -> SnrSample:
    p_s, p_r = candidate_powers(cfg, realization)
    gamma_sd = p_s * np.abs(realization.h_sd) ** 2
    gamma_sr = p_s[:, None] * np.abs(realization.h_sr) ** 2
    gamma_rd = p_r * np.abs(realization.h_rd) ** 2
    bottleneck = np.minimum(gamma_sr, gamma_rd)
    idx = np.argmax(bottleneck, axis=1)
    gamma_srd = np.take_along_axis(bottleneck, idx[:, None], axis=1)[:, 0]
    return SnrSample(gamma_sd, gamma_sr, gamma_rd, gamma_srd, gamma_srd + gamma_sd, idx)


def select_relay(cfg: SystemConfig, realization: ChannelRealization) -> np.ndarray:
    """Max-min best relay per trial; ties go to the lowest index."""
    return snr_sample(cfg, realization).relay_index


def allocate_power(cfg: SystemConfig, realization: ChannelRealization,
                   relay_index) -> PowerAllocation:
    p_s, p_r = candidate_powers(cfg, realization)
    idx = np.broadcast_to(np.asarray(relay_index), p_s.shape)
    return PowerAllocation(p_s, np.take_along_axis(p_r, idx[:, None], axis=1)[:, 0], cfg.policy)


def interference_at_primary(realization: ChannelRealization, alloc: PowerAllocation,
                            relay_index) -> tuple[np.ndarray, np.ndarray]:
    """Interference power p|h_xP|^2 caused by the source and by the chosen relay."""
    idx = np.asarray(relay_index)
    h_rp = np.take_along_axis(realization.h_rp, idx[:, None], axis=1)[:, 0]
    return alloc.p_s * np.abs(realization.h_sp) ** 2, alloc.p_r * np.abs(h_rp) ** 2


def sample_snr(cfg: SystemConfig, rng, n: int) -> SnrSample:
    return snr_sample(cfg, draw_channels(cfg, rng, n))


def run_trial(cfg: SystemConfig, rng, n_trials: int = 1, noise_scale: float = 1.0,
              constellation: RotatedConstellation | None = None) -> TrialOutcome:
    """Push ``n_trials`` symbol pairs through the two-slot cooperative link.

    ``noise_scale`` multiplies every noise sample (0 gives a noiseless link);
    the detector keeps assuming unit noise power.
    """
    g = _as_generator(rng)
    const = constellation or rotate_constellation(theta=cfg.theta)
    ch = draw_channels(cfg, g, n_trials)
    relay = select_relay(cfg, ch)
    alloc = allocate_power(cfg, ch, relay)
    sym = g.integers(0, const.size, size=(n_trials, 2))
    pts = const.rotated_points
    tx = interleave(pts[sym[:, 0]], pts[sym[:, 1]])

    rows = np.arange(n_trials)
    h_sr = ch.h_sr[rows, relay]
    h_rd = ch.h_rd[rows, relay]
    n_r = _cn(g, cfg.noise_var, n_trials) * noise_scale
    n_d = _cn(g, cfg.noise_var, n_trials) * noise_scale
    n_rd = _cn(g, cfg.noise_var, n_trials) * noise_scale

    amp_s = np.sqrt(alloc.p_s)
    y_sr = amp_s * h_sr * tx.lambda_s + n_r
    y_sd = amp_s * ch.h_sd * tx.lambda_s + n_d

    if cfg.genie_relay:
        lambda_r = tx.lambda_r
        relay_ok = np.ones(n_trials, dtype=bool)
    else:
        r1, r2 = relay_detect(y_sr, h_sr, alloc.p_s, const)
        relay_ok = (r1 == sym[:, 0]) & (r2 == sym[:, 1])
        lambda_r = interleave(pts[r1], pts[r2]).lambda_r

    y_rd = np.sqrt(alloc.p_r) * h_rd * lambda_r + n_rd
    obs = reorder(y_sd, y_rd, ch.h_sd, h_rd, alloc.p_s, alloc.p_r)
    d1, d2 = ml_detect(obs, const)
    det = np.stack([d1, d2], axis=1)

    labels = const.bit_labels
    return TrialOutcome(
        tx_bits=labels[sym].reshape(n_trials, -1),
        rx_bits=labels[det].reshape(n_trials, -1),
        tx_symbols=sym,
        rx_symbols=det,
        relay_ok=relay_ok,
        relay_index=relay,
    )


def wilson_interval(errors: int, n: int, level: float = 0.95) -> tuple[float, float]:
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(errors, n, alpha=1.0 - level, method="wilson")
    p = errors / n
    # guard the rounding of the closed form at 0 and n
    return float(max(0.0, min(lo, p))), float(min(1.0, max(hi, p)))


def worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunk_task(args):
    cfg, seed, stream_id, n, symbol_errors = args
    out = run_trial(cfg, RngStream(seed, stream_id), n)
    if symbol_errors:
        errs, units = out.symbol_errors, out.tx_symbols.size
    else:
        errs, units = out.bit_errors, out.tx_bits.size
    return stream_id >> _CHUNK_BITS, errs, units, int(np.count_nonzero(~out.relay_ok)), n


def estimate_ber(cfg: SystemConfig, snr_grid: Sequence[float], trials_per_point: int,
                 seed: int, pmax_offset_db: float = DEFAULT_PMAX_OFFSET_DB,
                 workers: int | None = None, chunk_size: int = DEFAULT_CHUNK,
                 symbol_errors: bool = False) -> list[BerEstimate]:
    """Monte-Carlo BER (or SER with ``symbol_errors``) at each grid point.

    Each trial carries two symbols.  Intervals are 95% Wilson score
    intervals.  Output is identical for any ``workers`` value.
    """
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be positive")
    tasks = []
    for i, snr in enumerate(snr_grid):
        point_cfg = operating_point(cfg, snr, pmax_offset_db)
        remaining, c = trials_per_point, 0
        while remaining > 0:
            n = min(chunk_size, remaining)
            tasks.append((point_cfg, seed, (i << _CHUNK_BITS) | c, n, symbol_errors))
            remaining -= n
            c += 1

    workers = worker_count() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_task, tasks))
    else:
        results = [_chunk_task(t) for t in tasks]

    totals = np.zeros((len(snr_grid), 4), dtype=np.int64)
    for point, errs, units, relay_fail, n in results:
        totals[point] += (errs, units, relay_fail, n)

    estimates = []
    for snr, (errs, units, relay_fail, n) in zip(snr_grid, totals):
        lo, hi = wilson_interval(int(errs), int(units))
        estimates.append(BerEstimate(
            snr_point=float(snr), errors=int(errs), bits=int(units), ber=errs / units,
            ci_low=lo, ci_high=hi, relay_decode_error_rate=relay_fail / n, trials=int(n),
        ))
    return estimates


def estimate_model_ber(cfg: SystemConfig, snr_grid: Sequence[float], trials_per_point: int,
                       seed: int, pmax_offset_db: float = DEFAULT_PMAX_OFFSET_DB):
    """Sample mean of alpha Q(sqrt(beta gamma_d)) over simulated channels.

    Separates distributional effects from the detector: the result uses the
    simulated end-to-end SNR but the analytical error kernel.  Returns
    (mean, standard error) per grid point.
    """
    out = []
    for i, snr in enumerate(snr_grid):
        point_cfg = operating_point(cfg, snr, pmax_offset_db)
        s = sample_snr(point_cfg, RngStream(seed, i), trials_per_point)
        v = cfg.alpha * q_function(np.sqrt(cfg.beta * s.gamma_d))
        out.append((float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))))
    return out
