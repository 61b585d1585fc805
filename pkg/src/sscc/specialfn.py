"""Special functions used by the error-probability closed forms.

Q, erfi and Gamma are thin guards over scipy/math; the generalized
hypergeometric series is summed here directly so that terminating series,
parameter poles and non-convergence are all visible to the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

# e**(x*x) overflows a double beyond this
ERFI_OVERFLOW = math.sqrt(math.log(np.finfo(float).max))

DEFAULT_TOL = 1e-12
DEFAULT_MAX_TERMS = 10_000


class PoleError(ArithmeticError):
    """Function evaluated at one of its poles."""


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms_used: int
    converged: bool


def q_function(x):
    """Gaussian tail probability P[N(0, 1) > x]; accepts scalars or arrays."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def erfi(x):
    """Imaginary error function -i erf(ix) for real ``x``."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > ERFI_OVERFLOW):
        raise OverflowError(f"erfi argument beyond {ERFI_OVERFLOW:.3f}: exp(x^2) overflows")
    out = special.erfi(arr)
    return float(out) if np.ndim(out) == 0 else out


def gamma_fn(x: float) -> float:
    if x <= 0 and float(x).is_integer():
        raise PoleError(f"Gamma has a pole at {x}")
    return math.gamma(x)


def hyper_pfq(a: Sequence[float], b: Sequence[float], z: float,
              tol: float = DEFAULT_TOL, max_terms: int = DEFAULT_MAX_TERMS) -> SeriesResult:
    """Sum pFq(a; b; z) term by term with a Pochhammer ratio recurrence.

    A nonpositive integer among ``a`` truncates the series; the finite sum is
    exact.  Hitting a nonpositive integer among ``b`` before truncation
    raises :class:`PoleError`.  If ``max_terms`` is exhausted the partial sum
    is returned with ``converged=False``.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    z = float(z)
    if z == 0.0:
        return SeriesResult(1.0, 1, True)

    term = 1.0
    total = 1.0
    for k in range(max_terms):
        num = 1.0
        for ai in a:
            num *= ai + k
        if num == 0.0:
            # an upper parameter reached zero: every further term vanishes
            return SeriesResult(total, k + 1, True)
        den = 1.0
        for bj in b:
            if bj + k == 0.0:
                raise PoleError(f"lower parameter {bj} reaches a pole at term {k + 1}")
            den *= bj + k
        ratio = num / den * z / (k + 1)
        term *= ratio
        total += term
        if not math.isfinite(total):
            return SeriesResult(total, k + 2, False)
        small = abs(term) < tol * abs(total) if total != 0.0 else abs(term) < tol
        if small and abs(ratio) < 1.0:
            return SeriesResult(total, k + 2, True)
    return SeriesResult(total, max_terms + 1, False)
