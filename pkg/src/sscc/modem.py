"""Signal-space-diversity modem.

A pair of rotated symbols (X1, X2) is split across two transmissions:
the source sends Re X1 + j Im X2 and the relay sends Re X2 + j Im X1.
The destination matched-filters each branch and detects each symbol from
the two components that carry it.

All per-symbol operations broadcast over numpy arrays so a whole batch of
trials goes through in one call.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class DegenerateAngleWarning(UserWarning):
    """Rotated constellation cannot be identified from one component."""


def qpsk() -> tuple[np.ndarray, np.ndarray]:
    """Gray-labelled unit-energy QPSK: bit 0 drives I, bit 1 drives Q."""
    labels = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
    signs = 1 - 2 * labels.astype(int)
    points = (signs[:, 0] + 1j * signs[:, 1]) / math.sqrt(2.0)
    return points, labels


def _pairwise_distinct(values: np.ndarray, tol: float) -> bool:
    v = np.sort(values)
    return bool(np.all(np.diff(v) > tol))


@dataclass(frozen=True)
class RotatedConstellation:
    base_points: np.ndarray
    theta: float
    rotated_points: np.ndarray
    bit_labels: np.ndarray
    component_unique: bool

    @property
    def size(self) -> int:
        return len(self.base_points)

    @property
    def bits_per_symbol(self) -> int:
        return self.bit_labels.shape[1]


def rotate_constellation(base: np.ndarray | None = None, theta: float = math.radians(26.6),
                         bit_labels: np.ndarray | None = None,
                         tol: float = 1e-9) -> RotatedConstellation:
    """Rotate ``base`` (QPSK by default) by ``theta`` radians.

    Warns with :class:`DegenerateAngleWarning` when two rotated points share
    a real or an imaginary part; the constellation is still returned.
    """
    if base is None:
        base, default_labels = qpsk()
        bit_labels = default_labels if bit_labels is None else bit_labels
    base = np.asarray(base, dtype=complex)
    if bit_labels is None:
        k = max(1, math.ceil(math.log2(len(base))))
        idx = np.arange(len(base))
        bit_labels = ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    if len(np.unique(np.round(base, 12))) != len(base):
        raise ValueError("constellation points must be distinct")
    if abs(np.mean(np.abs(base) ** 2) - 1.0) > 1e-9:
        raise ValueError("constellation must have unit average energy")

    rotated = base * np.exp(1j * theta)
    unique = _pairwise_distinct(rotated.real, tol) and _pairwise_distinct(rotated.imag, tol)
    if not unique:
        warnings.warn(
            f"rotation by {math.degrees(theta):.3f} deg leaves colliding components",
            DegenerateAngleWarning, stacklevel=2,
        )
    return RotatedConstellation(base, float(theta), rotated, np.asarray(bit_labels), unique)


@dataclass(frozen=True)
class TransmitPair:
    lambda_s: complex | np.ndarray
    lambda_r: complex | np.ndarray


def interleave(x1_rot, x2_rot) -> TransmitPair:
    x1_rot = np.asarray(x1_rot)
    x2_rot = np.asarray(x2_rot)
    return TransmitPair(
        lambda_s=x1_rot.real + 1j * x2_rot.imag,
        lambda_r=x2_rot.real + 1j * x1_rot.imag,
    )


def deinterleave(pair: TransmitPair):
    ls = np.asarray(pair.lambda_s)
    lr = np.asarray(pair.lambda_r)
    return ls.real + 1j * lr.imag, lr.real + 1j * ls.imag


def _nearest(values: np.ndarray, alphabet: np.ndarray) -> np.ndarray:
    # argmin picks the lowest index on ties
    return np.argmin((values[..., None] - alphabet) ** 2, axis=-1)


def relay_detect(y_sr, h_sr, p_s, constellation: RotatedConstellation):
    """Indices of X1 and X2 recovered from one source-to-relay observation.

    X1 comes from the real part alone, X2 from the imaginary part alone.
    """
    y_sr, h_sr = np.asarray(y_sr), np.asarray(h_sr)
    gain = np.sqrt(p_s) * np.abs(h_sr) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        est = np.conj(h_sr) * y_sr / gain
    est = np.where(gain > 0, est, 0.0)
    pts = constellation.rotated_points
    return _nearest(est.real, pts.real), _nearest(est.imag, pts.imag)


def relay_decode_reencode(y_sr, h_sr, p_s, constellation: RotatedConstellation):
    """Decode at the relay and form its transmit symbol Re X2 + j Im X1."""
    i1, i2 = relay_detect(y_sr, h_sr, p_s, constellation)
    pts = constellation.rotated_points
    return interleave(pts[i1], pts[i2]).lambda_r


@dataclass(frozen=True)
class ReorderedObservation:
    delta1: np.ndarray
    delta2: np.ndarray
    delta3: np.ndarray
    delta4: np.ndarray
    weight_sd: np.ndarray
    weight_rd: np.ndarray
    noisevar_sd: np.ndarray
    noisevar_rd: np.ndarray


def reorder(y_sd, y_rd, h_sd, h_rd, p_s, p_r) -> ReorderedObservation:
    """Matched-filter both branches and split them into real components."""
    z_sd = np.conj(h_sd) * np.asarray(y_sd)
    z_rd = np.conj(h_rd) * np.asarray(y_rd)
    g_sd = np.abs(h_sd) ** 2
    g_rd = np.abs(h_rd) ** 2
    return ReorderedObservation(
        delta1=z_sd.real,
        delta2=z_sd.imag,
        delta3=z_rd.real,
        delta4=z_rd.imag,
        weight_sd=np.sqrt(p_s) * g_sd,
        weight_rd=np.sqrt(p_r) * g_rd,
        # unit-variance complex noise through h*: |h|^2 / 2 per real dimension
        noisevar_sd=g_sd / 2.0,
        noisevar_rd=g_rd / 2.0,
    )


def _branch_metric(delta, weight, noisevar, components):
    delta = np.asarray(delta, dtype=float)[..., None]
    weight = np.asarray(weight, dtype=float)[..., None]
    noisevar = np.asarray(noisevar, dtype=float)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        m = (delta - weight * components) ** 2 / noisevar
    # a dead branch (zero gain) contributes nothing
    return np.where(noisevar > 0, m, 0.0)


def ml_detect(obs: ReorderedObservation, constellation: RotatedConstellation):
    """Per-symbol ML decisions (indices of X1, X2) from the reordered branches.

    X1 is seen through delta1 (real part, direct branch) and delta4
    (imaginary part, relayed branch); X2 through delta2 and delta3.
    """
    pts = constellation.rotated_points
    m1 = (_branch_metric(obs.delta1, obs.weight_sd, obs.noisevar_sd, pts.real)
          + _branch_metric(obs.delta4, obs.weight_rd, obs.noisevar_rd, pts.imag))
    m2 = (_branch_metric(obs.delta2, obs.weight_sd, obs.noisevar_sd, pts.imag)
          + _branch_metric(obs.delta3, obs.weight_rd, obs.noisevar_rd, pts.real))
    return np.argmin(m1, axis=-1), np.argmin(m2, axis=-1)
