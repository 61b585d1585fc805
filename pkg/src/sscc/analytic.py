"""Distribution functions and error-probability evaluation.

Conventions
-----------
* Per-link SNR of an underlay hop with instantaneous feedback is
  ``min(qp / |h_P|^2, pmax) * |h|^2``.  Its CDF is evaluated in closed form
  (:func:`cdf_direct`) and can be cross-checked by integrating over the
  interference gain (:func:`cdf_direct_quadrature`).
* The relayed branch is the max over relays of the weaker hop; its CDF is
  the product of per-relay CDFs (relays treated as independent).
* ``pdf_upper`` is the pointwise product of the two branch densities, a
  tractable stand-in for their convolution.  Whether it actually bounds the
  convolution is measured (see :func:`bound_violations`), not assumed.
* Printed closed forms that disagree with their own derivations are kept as
  ``*_printed`` functions and audited against quadrature.

Everything here is pure and accepts scalar or array ``gamma``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import comb

from .model import (
    DEFAULT_PMAX_OFFSET_DB,
    Policy,
    SystemConfig,
    derive_params,
    mean_value_power,
    operating_point,
)
from .specialfn import PoleError, erfi, gamma_fn, hyper_pfq, q_function

QUAD_EPSREL = 1e-10
BER_RTOL = 1e-8


class Method(str, enum.Enum):
    QUADRATURE_UPPER = "quadrature_upper"
    CLOSED_FORM_15 = "closed_form_15"
    MV_CLOSED_FORM_17 = "mv_closed_form_17"
    MV_QUADRATURE = "mv_quadrature"
    ASYMPTOTIC_19 = "asymptotic_19"
    EXACT_CONVOLUTION_QUADRATURE = "exact_convolution_quadrature"


class QuadratureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DistributionGrid:
    gamma_points: np.ndarray
    values: np.ndarray
    kind: str  # "cdf" or "pdf"


@dataclass(frozen=True)
class BerCurve:
    snr_points: np.ndarray
    values: np.ndarray
    method: Method


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


# -- per-hop statistics -------------------------------------------------------

def _hop_cdf(g, cfg: SystemConfig, var: float):
    g = np.asarray(g, dtype=float)
    if cfg.policy is Policy.MEAN_VALUE:
        return -np.expm1(-g / (mean_value_power(cfg) * var))
    eta = var * cfg.qp / cfg.var_p
    u = (g / eta) / (1.0 + g / eta)
    if cfg.power_unbounded:
        return u
    leak = math.exp(-cfg.qp / (cfg.pmax * cfg.var_p))
    return 1.0 - np.exp(-g / (cfg.pmax * var)) * (1.0 - leak * u)


def _hop_pdf(g, cfg: SystemConfig, var: float):
    g = np.asarray(g, dtype=float)
    if cfg.policy is Policy.MEAN_VALUE:
        mean = mean_value_power(cfg) * var
        return np.exp(-g / mean) / mean
    eta = var * cfg.qp / cfg.var_p
    du = 1.0 / (eta * (1.0 + g / eta) ** 2)
    if cfg.power_unbounded:
        return du
    u = (g / eta) / (1.0 + g / eta)
    leak = math.exp(-cfg.qp / (cfg.pmax * cfg.var_p))
    a = cfg.pmax * var
    return np.exp(-g / a) * ((1.0 - leak * u) / a + leak * du)


def cdf_direct(gamma, cfg: SystemConfig):
    """CDF of the source-destination SNR."""
    return _out(_hop_cdf(gamma, cfg, cfg.var_sd))


def pdf_direct(gamma, cfg: SystemConfig):
    return _out(_hop_pdf(gamma, cfg, cfg.var_sd))


def cdf_direct_printed(gamma, cfg: SystemConfig):
    """Direct-link CDF in the form 1 + e^{-g/P}(e^{-Qp/P}(1 - e^{-g/eta}/(1+g/eta)) - 1).

    Kept for auditing only: the extra e^{-g/eta} factor does not follow
    from integrating over the interference gain, and the result does not
    match simulation.  Assumes unit variances, as printed.
    """
    g = np.asarray(gamma, dtype=float)
    eta = derive_params(cfg).eta_sd
    p = cfg.pmax
    a = np.exp(-g / eta) / (1.0 + g / eta)
    if cfg.power_unbounded:
        return _out(1.0 - a)
    return _out(1.0 + np.exp(-g / p) * (math.exp(-cfg.qp / p) * (1.0 - a) - 1.0))


def cdf_direct_quadrature(gamma: float, cfg: SystemConfig, var: float | None = None) -> float:
    """Direct-link CDF by integrating over the interference gain |h_P|^2.

    Instantaneous-feedback policy only.  ``var`` selects another hop's
    variance (default: source-destination).
    """
    var = cfg.var_sd if var is None else var
    g = float(gamma)
    if g <= 0:
        return 0.0
    vp = cfg.var_p
    x0 = 0.0 if cfg.power_unbounded else cfg.qp / cfg.pmax
    # survival conditioned on the interference gain x: the peak cap binds below x0
    capped = 0.0
    if x0 > 0:
        capped = -math.expm1(-x0 / vp) * math.exp(-g / (cfg.pmax * var))

    def integrand(x):
        return math.exp(-g * x / (cfg.qp * var) - x / vp) / vp

    width = 1.0 / (g / (cfg.qp * var) + 1.0 / vp)
    total, lo = 0.0, x0
    for hi in (x0 + width, x0 + 10 * width, x0 + 50 * width):
        total += integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        lo = hi
    total += integrate.quad(integrand, lo, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return 1.0 - capped - total


# -- relayed branch -----------------------------------------------------------

def cdf_relayed(gamma, cfg: SystemConfig):
    """CDF of max over relays of min(source-relay, relay-destination) SNR."""
    s_sr = 1.0 - _hop_cdf(gamma, cfg, cfg.var_sr)
    s_rd = 1.0 - _hop_cdf(gamma, cfg, cfg.var_rd)
    return _out((1.0 - s_sr * s_rd) ** cfg.n_relays)


def pdf_relayed(gamma, cfg: SystemConfig):
    """Closed-form derivative of :func:`cdf_relayed`."""
    s_sr = 1.0 - _hop_cdf(gamma, cfg, cfg.var_sr)
    s_rd = 1.0 - _hop_cdf(gamma, cfg, cfg.var_rd)
    f_min = _hop_pdf(gamma, cfg, cfg.var_sr) * s_rd + s_sr * _hop_pdf(gamma, cfg, cfg.var_rd)
    r = cfg.n_relays
    return _out(r * (1.0 - s_sr * s_rd) ** (r - 1) * f_min)


def pdf_relayed_printed(gamma, cfg: SystemConfig):
    """Relayed-branch density exactly as displayed in closed form.

    Differs from :func:`pdf_relayed` in two places: the hop survival
    functions carry the same extra e^{-g/eta} factor as
    :func:`cdf_direct_printed`, and the leading factor raises
    (1-F_sr)(1-F_rd) rather than 1-(1-F_sr)(1-F_rd) to the power R-1.
    Audit use only.
    """
    g = np.asarray(gamma, dtype=float)
    prm = derive_params(cfg)
    p = cfg.pmax
    e2 = np.exp(-2.0 * g / p) if not cfg.power_unbounded else np.ones_like(g)
    ec = math.exp(-cfg.qp / p) if not cfg.power_unbounded else 1.0

    def b(eta):
        return ec * (1.0 - np.exp(-g / eta) / (1.0 + g / eta)) - 1.0

    def d(eta):
        e = np.exp(-g / eta)
        return e / ((1.0 + g / eta) ** 2 * eta) + e / ((1.0 + g / eta) * eta)

    b_sr, b_rd = b(prm.eta_sr), b(prm.eta_rd)
    lead = 2.0 * e2 * b_sr * b_rd / p if not cfg.power_unbounded else 0.0
    bracket = lead - e2 * ec * d(prm.eta_rd) * b_sr - e2 * ec * d(prm.eta_sr) * b_rd
    r = cfg.n_relays
    return _out(r * (e2 * b_sr * b_rd) ** (r - 1) * bracket)


def cdf_relayed_shared_source(gamma: float, cfg: SystemConfig) -> float:
    """Relayed-branch CDF when every source-relay hop shares one source power.

    In the physical link all candidate relays hear the same source, so the
    source-relay SNRs are coupled through |h_SP|^2.  Conditioning on it
    restores independence; the remaining expectation is done numerically.
    Coincides with :func:`cdf_relayed` for one relay or mean-value feedback.
    """
    g = float(gamma)
    r = cfg.n_relays
    if g <= 0:
        return 0.0
    if cfg.policy is Policy.MEAN_VALUE or r == 1:
        return float(cdf_relayed(g, cfg))
    s_rd = 1.0 - float(_hop_cdf(g, cfg, cfg.var_rd))

    def conditional(p_s):
        return (1.0 - math.exp(-g / (p_s * cfg.var_sr)) * s_rd) ** r

    vp = cfg.var_p
    x0 = 0.0 if cfg.power_unbounded else cfg.qp / cfg.pmax
    head = 0.0
    if x0 > 0:
        head = -math.expm1(-x0 / vp) * conditional(cfg.pmax)

    def integrand(x):
        return conditional(cfg.qp / x) * math.exp(-x / vp) / vp

    bounds = sorted(b for b in (cfg.qp * cfg.var_sr / g, x0 + vp, x0 + 10 * vp, x0 + 50 * vp)
                    if b > x0)
    total, lo = 0.0, x0
    for hi in bounds:
        total += integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        lo = hi
    total += integrate.quad(integrand, lo, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return head + total


# -- end-to-end densities -----------------------------------------------------

def pdf_upper(gamma, cfg: SystemConfig):
    """Product of the relayed and direct branch densities."""
    return _out(np.asarray(pdf_relayed(gamma, cfg)) * np.asarray(pdf_direct(gamma, cfg)))


def _scale(cfg: SystemConfig) -> float:
    eta = min(cfg.var_sd, cfg.var_sr, cfg.var_rd) * cfg.qp / cfg.var_p
    if cfg.policy is Policy.MEAN_VALUE:
        eta = min(cfg.var_sd, cfg.var_sr, cfg.var_rd) * mean_value_power(cfg)
    return eta


def pdf_exact_conv(gamma, cfg: SystemConfig):
    """Density of the sum of the two branch SNRs by numerical convolution."""
    def one(g):
        if g <= 0:
            return 0.0
        val, err = integrate.quad(
            lambda x: float(pdf_relayed(x, cfg)) * float(pdf_direct(g - x, cfg)),
            0.0, g, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200,
        )
        if err > 1e-6 * max(abs(val), 1e-300):
            warnings.warn(f"convolution at gamma={g}: error estimate {err:.3g}", QuadratureWarning)
        return val

    g = np.asarray(gamma, dtype=float)
    if g.ndim == 0:
        return one(float(g))
    return np.array([one(float(v)) for v in g.ravel()]).reshape(g.shape)


def pdf_mv(gamma, cfg: SystemConfig):
    """Product density under mean-value feedback, as a binomial sum of exponentials."""
    g = np.asarray(gamma, dtype=float)
    r_k = cfg.n_relays
    m = min(cfg.qp / cfg.var_p, cfg.pmax)
    z = derive_params(cfg).z
    msd = m * cfg.var_sd
    total = np.zeros_like(g)
    for r in range(r_k):
        rate = ((r + 1) * z * msd + 1.0) / msd
        total = total + comb(r_k - 1, r, exact=True) * (-1) ** r * np.exp(-g * rate)
    return _out(r_k * z / msd * total)


# -- error probability --------------------------------------------------------

def ber_quadrature(pdf: Callable, alpha: float = 1.0, beta: float = 1.0,
                   scale: float = 1.0, gamma_cut: float | None = None) -> float:
    """alpha * integral of Q(sqrt(beta g)) pdf(g) over g >= 0.

    The range is cut where Q(sqrt(beta g)) < 1e-16; ``scale`` hints at where
    the density changes shape so the adaptive rule places breakpoints there.
    """
    cut = 80.0 / beta if gamma_cut is None else gamma_cut
    pts = sorted({p for p in scale * np.array([1e-3, 1e-2, 1e-1, 1.0, 10.0]) if 0 < p < cut})

    def integrand(g):
        return q_function(math.sqrt(beta * g)) * float(pdf(g))

    val, err = integrate.quad(integrand, 0.0, cut, points=pts or None,
                              epsabs=0.0, epsrel=QUAD_EPSREL, limit=500)
    if err > BER_RTOL * abs(val) and err > 1e-300:
        warnings.warn(f"BER quadrature error estimate {err:.3g} for value {val:.3g}",
                      QuadratureWarning)
    return alpha * val


def ber_upper(cfg: SystemConfig) -> float:
    return ber_quadrature(lambda g: pdf_upper(g, cfg), cfg.alpha, cfg.beta, _scale(cfg))


def ber_exact(cfg: SystemConfig) -> float:
    return ber_quadrature(lambda g: pdf_exact_conv(g, cfg), cfg.alpha, cfg.beta, _scale(cfg))


def ber_mv_quadrature(cfg: SystemConfig) -> float:
    return ber_quadrature(lambda g: pdf_mv(g, cfg), cfg.alpha, cfg.beta, _scale(cfg))


def ber_mv_closed_form(cfg: SystemConfig) -> float:
    """Mean-value-feedback error probability as printed.

    Note the printed form carries no alpha factor.
    """
    r_k = cfg.n_relays
    beta = cfg.beta
    m = min(cfg.qp / cfg.var_p, cfg.pmax)
    msd = m * cfg.var_sd
    z = derive_params(cfg).z
    total = 0.0
    for r in range(r_k):
        c = ((r + 1) * z * msd + 1.0) / msd
        total += comb(r_k - 1, r, exact=True) * (-1) ** r / (
            2.0 * c + beta * (1.0 + math.sqrt((beta + 2.0 * c) / beta)))
    return r_k * z / msd * total


def ber_asymptotic(cfg: SystemConfig) -> float:
    """High-SNR power law with slope -(n_relays + 1)."""
    p = derive_params(cfg)
    r_k = cfg.n_relays
    k1, k2, k3 = p.kappa1, p.kappa2, p.kappa3
    return (cfg.alpha * 2.0 ** (r_k - 1) * gamma_fn(r_k + 0.5) / (math.sqrt(math.pi) * k3)
            * ((k1 + k2) / (cfg.beta * k1 * k2)) ** r_k * p.gamma_bar ** -(r_k + 1))


# -- audits of printed closed forms --------------------------------------------

@dataclass(frozen=True)
class SingularTerm:
    r: int
    t: int
    kind: str


@dataclass(frozen=True)
class ClosedForm15Result:
    value: float
    terms_used: int
    last_term: float
    converged: bool
    singular_terms: tuple[SingularTerm, ...]
    quadrature: float
    deviation: float
    hypergeometric: str = "2F2"

    @property
    def valid(self) -> bool:
        return self.converged and not self.singular_terms


def _eq15_term(r: int, t: int, r_k: int, eta_r: float, eta_sd: float,
               alpha: float, beta: float) -> float:
    s = 2 * r - t
    z = beta * eta_sd / 2.0
    # the printed sign exponent uses an undefined index; r is assumed
    coef = (alpha * comb(r_k, r, exact=True) * comb(2 * r + t + 2, t, exact=True)
            * (-1) ** (r + t) * eta_r ** (2 * r + t + 2))
    if s + 2 == 0:
        raise ZeroDivisionError("factor (2r - t + 2) vanishes")
    sin_arg = math.sin(2 * math.pi * r - t)
    if abs(sin_arg) < 1e-9:
        raise PoleError("csc(2 pi r - t) is singular")
    csc = 1.0 / sin_arg
    sec = 1.0 / math.cos(2 * math.pi * r - math.pi * t)
    series = hyper_pfq([2.0, -2.0 - 2 * r + t], [-2 * r + t - 1.5, t - 2 * r - 1.0], z)
    if not series.converged:
        raise ArithmeticError("hypergeometric series did not converge")
    part1 = (eta_sd ** 2 * gamma_fn(s + 2.5) * series.value
             / (math.sqrt(math.pi) * (s + 2) * (beta / 2.0) ** (s + 2)))
    part2 = math.exp(z) * math.sqrt(2 * math.pi * beta) * eta_sd ** (s + 4.5) * sec
    part3 = -2 * math.pi * eta_sd ** (s + 4) * (3 + s) * (csc - erfi(math.sqrt(z)) * sec)
    out = coef * (part1 + part2 + part3)
    if not math.isfinite(out):
        raise OverflowError("term overflows")
    return out


def ber_closed_form_15(cfg: SystemConfig, truncation: int = 50,
                       tol: float = 1e-10) -> ClosedForm15Result:
    """Evaluate the clustered-relay, power-unbounded double series as printed.

    Terms that hit a pole, a zero denominator or an overflow are skipped
    and listed in ``singular_terms``; the upper-bound quadrature on the same
    parameters is returned alongside and is the number to trust.
    """
    if not cfg.power_unbounded:
        raise ValueError("closed form requires pmax = inf")
    if cfg.var_sr != cfg.var_rd:
        raise ValueError("closed form requires clustered relays (var_sr == var_rd)")
    p = derive_params(cfg)
    singular: list[SingularTerm] = []
    total, last, used, converged = 0.0, math.inf, 0, False
    for t in range(truncation):
        t_sum = 0.0
        clean = True
        for r in range(cfg.n_relays + 1):
            try:
                t_sum += _eq15_term(r, t, cfg.n_relays, p.eta_r, p.eta_sd, cfg.alpha, cfg.beta)
            except ArithmeticError as exc:
                clean = False
                singular.append(SingularTerm(r, t, f"{type(exc).__name__}: {exc}"))
        total += t_sum
        last = abs(t_sum)
        used = t + 1
        # only a fully evaluated column can certify convergence
        if clean and total != 0.0 and last <= tol * abs(total):
            converged = True
            break
    quad = ber_upper(cfg)
    return ClosedForm15Result(total, used, last, converged, tuple(singular), quad, abs(total - quad))


@dataclass(frozen=True)
class ClosedFormAudit:
    closed_form: float
    quadrature: float
    rel_deviation: float
    agrees: bool
    note: str = ""


def audit_mv_closed_form(cfg: SystemConfig, rtol: float = 1e-6) -> ClosedFormAudit:
    cf = ber_mv_closed_form(cfg)
    quad = ber_mv_quadrature(cfg)
    rel = abs(cf - quad) / abs(quad)
    note = "" if cfg.alpha == 1.0 else "printed form omits the alpha factor"
    return ClosedFormAudit(cf, quad, rel, rel < rtol, note)


# -- curves ---------------------------------------------------------------------

def _eval_method(cfg: SystemConfig, method: Method) -> float:
    if method is Method.QUADRATURE_UPPER:
        return ber_upper(cfg)
    if method is Method.EXACT_CONVOLUTION_QUADRATURE:
        return ber_exact(cfg)
    if method is Method.MV_QUADRATURE:
        return ber_mv_quadrature(cfg)
    if method is Method.MV_CLOSED_FORM_17:
        return ber_mv_closed_form(cfg)
    if method is Method.ASYMPTOTIC_19:
        return ber_asymptotic(cfg)
    if method is Method.CLOSED_FORM_15:
        return ber_closed_form_15(cfg).value
    raise ValueError(f"unknown method {method!r}")


def ber_curve(cfg: SystemConfig, snr_grid: Sequence[float], method: Method | str,
              pmax_offset_db: float = DEFAULT_PMAX_OFFSET_DB) -> BerCurve:
    """Analytical BER at each sweep point.

    The closed form for clustered relays is evaluated with pmax = inf
    regardless of ``pmax_offset_db``; the mean-value methods force the
    mean-value policy.
    """
    method = Method(method)
    if method is Method.CLOSED_FORM_15:
        pmax_offset_db = math.inf
    if method in (Method.MV_CLOSED_FORM_17, Method.MV_QUADRATURE):
        cfg = cfg.with_(policy=Policy.MEAN_VALUE)
    values = [_eval_method(operating_point(cfg, s, pmax_offset_db), method) for s in snr_grid]
    return BerCurve(np.asarray(snr_grid, dtype=float), np.asarray(values), method)


def fit_diversity_order(curve: BerCurve | tuple, decade_db: float = 10.0) -> float:
    """Negated least-squares slope of log10 BER against log10 SNR over the top decade."""
    if isinstance(curve, BerCurve):
        snr, ber = curve.snr_points, curve.values
    else:
        snr, ber = curve
    snr = np.asarray(snr, dtype=float)
    ber = np.asarray(ber, dtype=float)
    keep = (snr >= snr.max() - decade_db) & (ber > 0)
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least two positive points in the top decade")
    slope = np.polyfit(snr[keep] / 10.0, np.log10(ber[keep]), 1)[0]
    return float(-slope)


def bound_violations(cfg: SystemConfig, gamma_grid, atol: float = 1e-9) -> np.ndarray:
    """Grid points where pdf_upper falls below the convolution density by more than ``atol``."""
    g = np.asarray(gamma_grid, dtype=float)
    up = np.asarray(pdf_upper(g, cfg))
    ex = np.asarray(pdf_exact_conv(g, cfg))
    return g[up < ex - atol]
