"""Scenario configuration and derived analytical constants.

Every other module consumes :class:`SystemConfig` (validated) and, for the
closed forms, :class:`AnalysisParams`.  Powers are linear internally; dB
conversion happens at the edges (scenario files, sweep helpers).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

#: Rotation angle for QPSK used throughout the numerical examples.
QPSK_THETA_DEG = 26.6

#: Default gap between the peak power and the interference cap, in dB.
DEFAULT_PMAX_OFFSET_DB = 10.0


class ConfigError(ValueError):
    """Raised when a scenario violates one of its invariants.

    ``field`` names the offending SystemConfig attribute when there is one.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class Policy(str, enum.Enum):
    INSTANTANEOUS_CSI = "instantaneous"
    MEAN_VALUE = "mean_value"

    @classmethod
    def parse(cls, text: str) -> "Policy":
        key = text.strip().lower().replace("-", "_")
        aliases = {
            "instantaneous": cls.INSTANTANEOUS_CSI,
            "instantaneous_csi": cls.INSTANTANEOUS_CSI,
            "instantaneouscsi": cls.INSTANTANEOUS_CSI,
            "perfect": cls.INSTANTANEOUS_CSI,
            "mean_value": cls.MEAN_VALUE,
            "meanvalue": cls.MEAN_VALUE,
            "mv": cls.MEAN_VALUE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown policy {text!r}") from None


def db_to_linear(x_db):
    return np.power(10.0, np.divide(x_db, 10.0))


def linear_to_db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters of one underlay relaying link.

    ``pmax`` may be ``math.inf`` for terminals that are only interference
    limited.  ``noise_var`` is the per-complex-sample noise power and is
    fixed at one.
    """

    qp: float = 1.0
    pmax: float = 10.0
    n_relays: int = 1
    var_sd: float = 1.0
    var_sr: float = 1.0
    var_rd: float = 1.0
    var_p: float = 1.0
    theta: float = math.radians(QPSK_THETA_DEG)
    alpha: float = 1.0
    beta: float = 1.0
    policy: Policy = Policy.INSTANTANEOUS_CSI
    genie_relay: bool = False
    clustered: bool = False
    noise_var: float = 1.0

    @classmethod
    def from_db(cls, qp_db: float, pmax_offset_db: float = DEFAULT_PMAX_OFFSET_DB,
                theta_deg: float = QPSK_THETA_DEG, **kwargs) -> "SystemConfig":
        """Build a config from dB-valued powers; ``pmax_offset_db`` may be ``inf``."""
        qp = float(db_to_linear(qp_db))
        pmax = math.inf if math.isinf(pmax_offset_db) else qp * float(db_to_linear(pmax_offset_db))
        return validate_config(cls(qp=qp, pmax=pmax, theta=math.radians(theta_deg), **kwargs))

    @property
    def power_unbounded(self) -> bool:
        return math.isinf(self.pmax)

    def with_(self, **changes) -> "SystemConfig":
        return validate_config(replace(self, **changes))


def validate_config(cfg: SystemConfig, allow_degenerate_theta: bool = True) -> SystemConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError.

    ``theta = 0`` is accepted by default so degraded-mode experiments can be
    run; pass ``allow_degenerate_theta=False`` to demand a proper SSD angle.
    """
    if isinstance(cfg.n_relays, bool) or int(cfg.n_relays) != cfg.n_relays:
        raise ConfigError("n_relays must be an integer", "n_relays")
    if cfg.n_relays < 1:
        raise ConfigError("n_relays must be ≥ 1", "n_relays")
    if not cfg.qp > 0 or math.isnan(cfg.qp):
        raise ConfigError("qp must be positive", "qp")
    if not cfg.pmax > 0 or math.isnan(cfg.pmax):
        raise ConfigError("pmax must be positive or unbounded", "pmax")
    for name in ("var_sd", "var_sr", "var_rd", "var_p"):
        value = getattr(cfg, name)
        if not (value > 0 and math.isfinite(value)):
            raise ConfigError(f"{name}: variance must be positive", name)
    if not 0.0 <= cfg.theta < math.pi / 2 or (cfg.theta == 0.0 and not allow_degenerate_theta):
        raise ConfigError("theta must satisfy 0 < theta < pi/2", "theta")
    if cfg.noise_var != 1.0:
        raise ConfigError("noise_var is fixed at 1", "noise_var")
    if not (cfg.alpha > 0 and cfg.beta > 0):
        raise ConfigError("alpha and beta must be positive", "alpha" if not cfg.alpha > 0 else "beta")
    if cfg.clustered and cfg.var_sr != cfg.var_rd:
        raise ConfigError("clustered relays require var_sr == var_rd", "var_rd")
    if not isinstance(cfg.policy, Policy):
        raise ConfigError(f"policy must be a Policy, got {cfg.policy!r}", "policy")
    return cfg


def operating_point(cfg: SystemConfig, snr_db: float,
                    pmax_offset_db: float = DEFAULT_PMAX_OFFSET_DB) -> SystemConfig:
    """Place ``cfg`` at sweep coordinate ``snr_db`` = 10 log10(qp / var_p).

    The peak power tracks the cap at ``pmax_offset_db`` above it
    (``inf`` gives the interference-limited regime).
    """
    qp = cfg.var_p * float(db_to_linear(snr_db))
    pmax = math.inf if math.isinf(pmax_offset_db) else qp * float(db_to_linear(pmax_offset_db))
    return validate_config(replace(cfg, qp=qp, pmax=pmax))


@dataclass(frozen=True)
class AnalysisParams:
    eta_sd: float
    eta_sr: float
    eta_rd: float
    eta_r: float
    kappa1: float
    kappa2: float
    kappa3: float
    gamma_bar: float
    z: float
    g_d: int


def mean_value_power(cfg: SystemConfig) -> float:
    """Transmit power under mean-value feedback: min(qp / E|h_P|^2, pmax)."""
    return min(cfg.qp / cfg.var_p, cfg.pmax)


def derive_params(cfg: SystemConfig) -> AnalysisParams:
    """Closed-form constants for ``cfg`` using the kappa3 = 1 convention."""
    scale = cfg.qp / cfg.var_p
    eta_sd = cfg.var_sd * scale
    eta_sr = cfg.var_sr * scale
    eta_rd = cfg.var_rd * scale
    gamma_bar = eta_sd
    m = mean_value_power(cfg)
    a, b = m * cfg.var_sr, m * cfg.var_rd
    return AnalysisParams(
        eta_sd=eta_sd,
        eta_sr=eta_sr,
        eta_rd=eta_rd,
        eta_r=eta_sr if cfg.var_sr == cfg.var_rd else math.nan,
        kappa1=eta_sr / gamma_bar,
        kappa2=eta_rd / gamma_bar,
        kappa3=1.0,
        gamma_bar=gamma_bar,
        z=(a + b) / (a * b),
        g_d=cfg.n_relays + 1,
    )
