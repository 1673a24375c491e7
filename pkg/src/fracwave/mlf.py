"""Two-parameter Mittag-Leffler function on the real axis.

``E_{a,b}(z) = sum_k z**k / Gamma(a*k + b)``

The production evaluator :func:`mittag_leffler` picks between three routes
for negative arguments:

* power series summed with ``math.fsum``, accepted only when the measured
  cancellation (``sum |terms| / |result|``) is small;
* the algebraic asymptotic series plus the exact residue contribution of the
  two complex poles ``s**a = z`` (present for ``1 < a <= 2``);
* the real-line Laplace inversion integral plus the same residues.

:func:`mlf_oracle` sums the power series in arbitrary precision and is meant
for tests.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import integrate

__all__ = ["MlfParams", "mittag_leffler", "mlf_oracle", "rgamma"]

_EPS = np.finfo(float).eps
# max allowed sum|terms| / |E| for the double-precision power series
_TAYLOR_MAX_CANCELLATION = 2.0e3
# beyond this |z|**(1/alpha) the series is never tried
_TAYLOR_MAX_ROOT = 12.0
_ASYMPTOTIC_MAX_TERMS = 80


@dataclass(frozen=True)
class MlfParams:
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)

    def __call__(self, z):
        return mittag_leffler(self.alpha, self.beta, z)


def _check_alpha(alpha):
    if not (0.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (0, 2], got {alpha!r}")


def rgamma(x: float) -> float:
    """Reciprocal gamma function, exactly zero at the poles."""
    if x <= 0.0 and x == math.floor(x):
        return 0.0
    if x > 171.6:
        return math.exp(-math.lgamma(x))
    if x < -170.0:
        # reflection: 1/Gamma(x) = Gamma(1-x) sin(pi x) / pi
        s = math.sin(math.pi * x)
        return math.copysign(math.exp(math.lgamma(1.0 - x)), s) * abs(s) / math.pi
    return 1.0 / math.gamma(x)


def _taylor(alpha, beta, z):
    """Power series in double precision; returns (value, sum of |terms|)."""
    terms = []
    k_peak = abs(z) ** (1.0 / alpha) if z != 0.0 else 0.0
    k = 0
    while True:
        arg = alpha * k + beta
        if arg > 171.0:
            lt = k * math.log(abs(z)) - math.lgamma(arg)
            if lt > 700.0:
                raise OverflowError("Mittag-Leffler series term overflows")
            t = math.copysign(math.exp(lt), z) if k % 2 else math.exp(lt)
        else:
            t = z**k * rgamma(arg)
        terms.append(t)
        if alpha * k > k_peak + 2 and abs(t) <= 1e-18 * abs(math.fsum(terms)):
            break
        if k > 5 and t == 0.0 and terms[-2] == 0.0:
            break
        k += 1
        if k > 20000:
            raise ArithmeticError("power series did not converge")
    value = math.fsum(terms)
    return value, math.fsum(abs(t) for t in terms)


def _residues(alpha, beta, x):
    """Contribution of the poles s = x**(1/alpha) exp(+-i pi/alpha)."""
    if alpha <= 1.0:
        return 0.0
    s = x ** (1.0 / alpha) * cmath.exp(1j * math.pi / alpha)
    if s.real < -745.0:
        return 0.0
    return 2.0 / alpha * (s ** (1.0 - beta) * cmath.exp(s)).real


def _asymptotic(alpha, beta, x):
    """Algebraic part -sum_k z**-k / Gamma(beta - alpha k) for z = -x.

    Returns None when the series has not settled to double precision before
    its terms start to grow.
    """
    z = -x
    log_x = math.log(x)
    total = 0.0
    scale = 0.0
    previous = math.inf
    for k in range(1, _ASYMPTOTIC_MAX_TERMS + 1):
        # |1/Gamma(y)| <= Gamma(1-y)/pi; the bound is smooth in k, unlike the
        # terms themselves which dip near the poles of Gamma
        envelope = math.exp(math.lgamma(1.0 + alpha * k - beta) - k * log_x) / math.pi
        scale = max(scale, envelope)
        if envelope <= 0.25 * _EPS * scale:
            return total
        if envelope > previous:
            return None
        total -= z ** (-k) * rgamma(beta - alpha * k)
        previous = envelope
    return None


def _laplace_integral(alpha, beta, x):
    """Branch-cut integral of the Laplace inversion for z = -x < 0.

    (1/pi) int_0^inf e^-r r^(a-b) [r^a sin(pi b) - x sin(pi (a-b))]
                               / (r^2a + 2 r^a x cos(pi a) + x^2) dr
    """
    sb = math.sin(math.pi * beta)
    sab = math.sin(math.pi * (alpha - beta))
    ca = math.cos(math.pi * alpha)

    def smooth(r):
        ra = r**alpha
        return math.exp(-r) * (ra * sb - x * sab) / (ra * ra + 2.0 * ra * x * ca + x * x)

    def full(r):
        return r ** (alpha - beta) * smooth(r) if r > 0.0 else 0.0

    r_star = x ** (1.0 / alpha)
    r0 = min(0.5, 0.5 * r_star)
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    # algebraic endpoint behaviour r**(a-b) handled by the weight
    head, _ = integrate.quad(smooth, 0.0, r0, weight="alg", wvar=(alpha - beta, 0.0), **opts)
    upper = max(r_star * 4.0, 60.0)
    pts = [p for p in (0.5 * r_star, r_star, 1.5 * r_star) if r0 < p < upper]
    mid, _ = integrate.quad(full, r0, upper, points=pts or None, **opts)
    tail, _ = integrate.quad(full, upper, np.inf, **opts)
    return (head + mid + tail) / math.pi


def _high_precision_series(alpha, beta, z):
    return mlf_oracle(alpha, beta, z, digits=30)


def _mlf_scalar(alpha, beta, z):
    z = float(z)
    if z == 0.0:
        return rgamma(beta)
    if abs(z) <= 1.0 or z > 0.0:
        return _taylor(alpha, beta, z)[0]
    x = -z
    root = x ** (1.0 / alpha)
    if root <= _TAYLOR_MAX_ROOT:
        value, mag = _taylor(alpha, beta, z)
        if mag <= _TAYLOR_MAX_CANCELLATION * abs(value):
            return value
    if alpha <= 1.0:
        return _high_precision_series(alpha, beta, z)
    res = _residues(alpha, beta, x)
    alg = _asymptotic(alpha, beta, x)
    if alg is not None:
        return alg + res
    return _laplace_integral(alpha, beta, x) + res


def mittag_leffler(alpha: float, beta: float, z):
    """Evaluate ``E_{alpha,beta}(z)`` for real ``z`` (scalar or array).

    Parameters
    ----------
    alpha : float
        Order in ``(0, 2]``.
    beta : float
        Second parameter, any real.
    z : float or array_like
        Real argument. Non-positive values are the supported range; positive
        values use the power series directly and may overflow.

    Returns
    -------
    float or ndarray
    """
    _check_alpha(alpha)
    if np.ndim(z) == 0:
        return _mlf_scalar(alpha, beta, z)
    zz = np.asarray(z, dtype=float)
    out = np.empty_like(zz)
    flat = out.reshape(-1)
    for i, zi in enumerate(zz.reshape(-1)):
        flat[i] = _mlf_scalar(alpha, beta, zi)
    return out


def mlf_oracle(alpha: float, beta: float, z: float, digits: int = 40) -> float:
    """Power series summed with ``mpmath`` at enough precision for ``digits``.

    Working precision is raised by the decimal size of the largest term so
    the cancellation on the negative axis does not eat into the result.
    """
    _check_alpha(alpha)
    if digits < 30:
        raise ValueError("digits must be >= 30")
    if abs(z) > 1e3:
        raise ValueError("oracle supports |z| <= 1e3")
    root = abs(z) ** (1.0 / alpha)
    extra = int(root / math.log(10.0)) + 10
    with mpmath.workdps(digits + extra):
        a = mpmath.mpf(alpha)
        b = mpmath.mpf(beta)
        zz = mpmath.mpf(z)
        total = mpmath.mpf(0)
        tol = mpmath.mpf(10) ** (-(digits + 5))
        for k in range(100000):
            t = zz**k * mpmath.rgamma(a * k + b)
            total += t
            if a * k > root + 2 and abs(t) < tol:
                return float(total)
    raise ArithmeticError("oracle series did not converge within 1e5 terms")
