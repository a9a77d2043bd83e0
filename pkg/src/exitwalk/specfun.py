"""Real-valued special functions shared by every other module.

Provides log-gamma, Bessel functions of the first kind J_nu, modified
Bessel functions I_nu (plus an exponentially scaled variant for large
arguments), and the positive zeros j_{nu,k} of J_nu.  Function values are
delegated to scipy's cephes/amos routines; the zero finder is our own
(McMahon bracket + bisection + Newton polish) because scipy only tabulates
zeros for integer order and the half-integer orders nu = delta/2 - 1 occur
for every odd dimension.

Zeros are memoized per index in a table grown on demand; the cache is safe
for concurrent read and grow-on-miss.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

__all__ = [
    "BesselIndex",
    "log_gamma",
    "bessel_j",
    "bessel_i",
    "bessel_zero",
]


@dataclass(frozen=True)
class BesselIndex:
    """Index nu = delta/2 - 1 of the radial (Bessel) process in dimension delta.

    nu is an integer for even delta and a half-integer for odd delta; only
    those two cases are admitted because the product-of-uniforms hitting
    time composition is distribution-exact only there.
    """

    delta: int

    def __post_init__(self) -> None:
        if not isinstance(self.delta, (int, np.integer)) or isinstance(self.delta, bool):
            raise ValueError(f"dimension must be an integer >= 2, got {self.delta!r}")
        if self.delta < 2:
            raise ValueError(f"dimension must be >= 2, got {self.delta}")

    @property
    def nu(self) -> float:
        return self.delta / 2.0 - 1.0

    @property
    def frac(self) -> float:
        """Fractional part of nu: 0.0 for even delta, 0.5 for odd delta."""
        return self.nu - math.floor(self.nu)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if not x > 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    return float(_sp.gammaln(x))


def bessel_j(index: float, x) -> float | np.ndarray:
    """Bessel function of the first kind J_index(x), index >= 0, x >= 0."""
    if index < 0:
        raise ValueError(f"bessel_j requires index >= 0, got {index}")
    if np.any(np.asarray(x) < 0):
        raise ValueError("bessel_j requires x >= 0")
    out = _sp.jv(index, x)
    return float(out) if np.isscalar(x) else out


def bessel_i(index: float, x, scaled: bool = False) -> float | np.ndarray:
    """Modified Bessel function I_index(x) for index >= 0, x >= 0.

    With ``scaled=True`` returns exp(-x) * I_index(x), which stays bounded
    for large x; the unscaled form raises OverflowError once it leaves the
    representable range (roughly x > 713).
    """
    if index < 0:
        raise ValueError(f"bessel_i requires index >= 0, got {index}")
    if np.any(np.asarray(x) < 0):
        raise ValueError("bessel_i requires x >= 0")
    if scaled:
        out = _sp.ive(index, x)
    else:
        out = _sp.iv(index, x)
        if np.any(np.isinf(out)):
            raise OverflowError(
                f"I_{index}(x) overflows for x={x}; use scaled=True"
            )
    return float(out) if np.isscalar(x) else out


# ---------------------------------------------------------------------------
# Zeros of J_nu

_zero_cache: dict[float, list[float]] = {}
_zero_lock = threading.Lock()


def _jprime(nu: float, x: float) -> float:
    # J'_nu(x) = J_{nu-1}(x) - (nu/x) J_nu(x); valid for x > 0.
    return float(_sp.jv(nu - 1.0, x) - (nu / x) * _sp.jv(nu, x))


def _mcmahon_estimate(nu: float, k: int) -> float:
    beta = (k + 0.5 * nu - 0.25) * math.pi
    mu = 4.0 * nu * nu
    return beta - (mu - 1.0) / (8.0 * beta)


def _refine_zero(nu: float, lo: float, hi: float) -> float:
    f_lo = float(_sp.jv(nu, lo))
    f_hi = float(_sp.jv(nu, hi))
    # Widen until the bracket straddles a sign change (McMahon can be off
    # by a few tenths for small k and large nu).
    width = 0.25 * math.pi
    while f_lo * f_hi > 0.0:
        lo = max(lo - width, 1e-9)
        hi = hi + width
        f_lo = float(_sp.jv(nu, lo))
        f_hi = float(_sp.jv(nu, hi))
        width *= 1.5
        if hi - lo > 50.0:
            raise RuntimeError(f"failed to bracket zero of J_{nu} near [{lo}, {hi}]")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f_mid = float(_sp.jv(nu, mid))
        if f_lo * f_mid <= 0.0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo < 1e-9:
            break
    x = 0.5 * (lo + hi)
    for _ in range(8):
        fx = float(_sp.jv(nu, x))
        dfx = _jprime(nu, x)
        if dfx == 0.0:
            break
        step = fx / dfx
        x_new = x - step
        if not (lo - 1.0 <= x_new <= hi + 1.0):
            break
        x = x_new
        if abs(step) < 1e-15 * max(1.0, x):
            break
    return x


def bessel_zero(index: float, k: int) -> float:
    """k-th positive zero j_{index,k} of J_index (k >= 1), cached per index."""
    if index < 0:
        raise ValueError(f"bessel_zero requires index >= 0, got {index}")
    if k < 1:
        raise ValueError(f"bessel_zero requires k >= 1, got {k}")
    key = float(index)
    table = _zero_cache.get(key)
    if table is not None and len(table) >= k:
        return table[k - 1]
    with _zero_lock:
        table = _zero_cache.get(key)
        if table is None:
            table = []
        else:
            table = list(table)  # grow a copy; readers keep a stable view
        while len(table) < k:
            n = len(table) + 1
            est = _mcmahon_estimate(key, n)
            lo = est - 0.5 * math.pi
            if table:
                lo = max(lo, table[-1] + 1e-6)
            lo = max(lo, 1e-6)
            hi = est + 0.5 * math.pi
            table.append(_refine_zero(key, lo, hi))
        _zero_cache[key] = table
    return table[k - 1]
