"""Hitting-time mathematics for the radial part of Brownian motion.

Everything here concerns the first time the Euclidean norm of a
delta-dimensional Brownian motion reaches a boundary:

* ``MovingBoundary`` / ``psi`` / ``hitting_pdf``: the shrinking boundary
  psi(t) = sqrt(2 t ln(a / (Gamma(nu+1) t^(nu+1) 2^nu))) obtained from the
  method of images with image measure y^(2nu+1) dy, whose hitting law has
  the closed-form density psi(t)^(2nu+2) / (2 a t) on (0, t_max].
* ``moving_sphere_param_a``: the per-step choice of a that keeps the
  moving sphere inside the gamma-shrunk safety ball of radius gamma * d.
* ``SpectralSeriesCache`` / ``tail_spectral``: the spectral series for
  P_0(tau_L > t) with rates j_{nu,k}^2 / (2 L^2).
* ``laplace_transform``: E_x[exp(-lambda tau_L)] via scaled modified
  Bessel functions.
* ``invert_cdf``: numerical inversion of F(t) = P(tau_L <= t) by
  safeguarded Newton on the series, with a small-time fallback below the
  series' validity floor.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

from .specfun import BesselIndex, bessel_j, bessel_i, bessel_zero, log_gamma
from .samplers import tau_psi_upper_bound

__all__ = [
    "MovingBoundary",
    "psi",
    "hitting_pdf",
    "moving_sphere_param_a",
    "SpectralSeriesCache",
    "tail_spectral",
    "laplace_transform",
    "InversionConfig",
    "InversionError",
    "SeriesTruncationError",
    "invert_cdf",
    "invert_cdf_batch",
]

TERM_FLOOR = 1e-14  # series truncated once the next term magnitude drops below this


@dataclass(frozen=True)
class MovingBoundary:
    """The pair (a, nu) parameterizing the shrinking boundary psi.

    t_max = (a / (Gamma(nu+1) 2^nu))^(1/(nu+1)) is the right end of the
    support: psi is real and nonnegative exactly on (0, t_max] and
    psi(t_max) = 0.  The maximum of psi sits at t_max / e and equals
    sqrt(2 (nu+1) t_max / e).
    """

    a: float
    index: BesselIndex
    t_max: float = field(init=False)

    def __post_init__(self) -> None:
        if self.a <= 0:
            raise ValueError(f"a must be positive, got {self.a}")
        object.__setattr__(self, "t_max", tau_psi_upper_bound(self.a, self.index))


def psi(t, boundary: MovingBoundary):
    """Boundary radius psi(t) = sqrt(2 (nu+1) t ln(t_max / t)) on (0, t_max]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0.0) or np.any(t_arr > boundary.t_max):
        raise ValueError(f"t must lie in (0, t_max={boundary.t_max}], got {t}")
    nu = boundary.index.nu
    out = np.sqrt(2.0 * (nu + 1.0) * t_arr * np.log(boundary.t_max / t_arr))
    return float(out) if np.isscalar(t) else out


def hitting_pdf(t, boundary: MovingBoundary):
    """Density psi(t)^(2nu+2) / (2 a t) of the boundary hitting time.

    Evaluated in the equivalent overflow-free form
    ((nu+1) (t/t_max) ln(t_max/t))^(nu+1) / (t Gamma(nu+1)).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0.0) or np.any(t_arr > boundary.t_max):
        raise ValueError(f"t must lie in (0, t_max={boundary.t_max}], got {t}")
    nu = boundary.index.nu
    ratio = t_arr / boundary.t_max
    core = (nu + 1.0) * ratio * np.log(boundary.t_max / t_arr)
    out = core ** (nu + 1.0) / (t_arr * math.gamma(nu + 1.0))
    return float(out) if np.isscalar(t) else out


def moving_sphere_param_a(d: float, gamma: float, index: BesselIndex) -> float:
    """Image parameter a = (gamma^2 d^2 e / (nu+1))^(nu+1) Gamma(nu+1) / 2.

    With this choice sup_t psi(t) = gamma * d, so a step of the walk never
    leaves the ball of radius gamma * d around the current position.
    """
    if d <= 0:
        raise ValueError(f"distance to boundary must be positive, got {d}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    nu = index.nu
    a = (gamma * gamma * d * d * math.e / (nu + 1.0)) ** (nu + 1.0) * math.gamma(nu + 1.0) / 2.0
    if not math.isfinite(a):
        raise OverflowError(f"parameter a overflows for d={d}, nu={nu}")
    return a


# ---------------------------------------------------------------------------
# Spectral series for the fixed-level hitting time from the center


class SeriesTruncationError(RuntimeError):
    """The term bound was not met within the truncation cap."""


class SpectralSeriesCache:
    """Zeros and coefficients of the tail series for tau_L, start at 0.

    Terms are c_k exp(-j_{nu,k}^2 t / (2 L^2)) with
    c_k = j_{nu,k}^(nu-1) / J_{nu+1}(j_{nu,k}) scaled by
    1 / (2^(nu-1) Gamma(nu+1)).  The table grows on demand and is safe to
    share across threads; readers always observe a complete prefix.

    The series needs O(L/sqrt(t)) terms as t -> 0, so evaluation is
    refused below t_min = 0.02 L^2; that keeps the truncation under the
    k_max cap in double precision.
    """

    def __init__(self, index: BesselIndex, radius: float = 1.0, k_max: int = 512):
        if radius <= 0:
            raise ValueError(f"radius must be positive, got {radius}")
        self.index = index
        self.radius = float(radius)
        self.k_max = int(k_max)
        self.t_min = 0.02 * radius * radius
        self.clamp_count = 0
        self._lock = threading.Lock()
        self._zeros = np.empty(0)
        self._coeffs = np.empty(0)
        self._cdf_floor: float | None = None

    def _ensure_terms(self, k: int) -> None:
        if len(self._zeros) >= k:
            return
        with self._lock:
            if len(self._zeros) >= k:
                return
            nu = self.index.nu
            prefactor = math.exp(-(nu - 1.0) * math.log(2.0) - log_gamma(nu + 1.0))
            zeros = [bessel_zero(nu, i + 1) for i in range(k)]
            coeffs = [prefactor * z ** (nu - 1.0) / bessel_j(nu + 1.0, z) for z in zeros]
            # Replace the arrays wholesale so concurrent readers never see
            # a partially written table.
            self._zeros = np.asarray(zeros)
            self._coeffs = np.asarray(coeffs)

    def terms_needed(self, t: float) -> int:
        """Smallest K whose K-th term magnitude is below TERM_FLOOR at t."""
        rate = t / (2.0 * self.radius**2)
        k = 8
        while True:
            self._ensure_terms(min(k, self.k_max))
            zeros, coeffs = self._zeros, self._coeffs
            mags = np.abs(coeffs[: len(zeros)]) * np.exp(-(zeros**2) * rate)
            below = np.nonzero(mags < TERM_FLOOR)[0]
            if below.size:
                return int(below[0]) + 1
            if k >= self.k_max:
                raise SeriesTruncationError(
                    f"term bound {TERM_FLOOR} not met within k_max={self.k_max} at t={t}"
                )
            k = min(2 * k, self.k_max)

    def series_eval(self, t, k: int):
        """(tail, pdf) partial sums with k terms; no clamping, no guards."""
        self._ensure_terms(k)
        zeros = self._zeros[:k]
        coeffs = self._coeffs[:k]
        rates = zeros**2 / (2.0 * self.radius**2)
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        e = coeffs * np.exp(-np.outer(t_arr, rates))
        tail = e.sum(axis=1)
        pdf = (e * rates).sum(axis=1)
        return tail, pdf

    def cdf_floor(self) -> float:
        """F(t_min): draws below this quantile fall back to the small-time law."""
        if self._cdf_floor is None:
            k = self.terms_needed(self.t_min)
            tail, _ = self.series_eval(self.t_min, k)
            self._cdf_floor = max(0.0, 1.0 - float(tail[0]))
        return self._cdf_floor


def tail_spectral(t: float, cache: SpectralSeriesCache) -> float:
    """Survival probability P_0(tau_L > t), clamped to [0, 1].

    Refuses t below the cache's validity floor t_min, where the truncated
    series is unreliable.
    """
    if t < cache.t_min:
        raise ValueError(
            f"t={t} below series validity floor t_min={cache.t_min}"
        )
    k = cache.terms_needed(t)
    tail, _ = cache.series_eval(t, k)
    value = float(tail[0])
    if value < 0.0 or value > 1.0:
        cache.clamp_count += 1
        value = min(1.0, max(0.0, value))
    return value


def laplace_transform(lam: float, x: float, L: float, index: BesselIndex) -> float:
    """E_x[exp(-lambda tau_L)] for the radial process started at x in [0, L].

    Uses exponentially scaled I_nu throughout, so large lambda cannot
    overflow: the x > 0 form is (L/x)^nu I_nu(x s) / I_nu(L s) and the
    x = 0 form is (L s)^nu / (2^nu Gamma(nu+1) I_nu(L s)), s = sqrt(2 lambda).
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    if not 0.0 <= x <= L:
        raise ValueError(f"x must lie in [0, L], got {x}")
    if x == L:
        return 1.0
    nu = index.nu
    s = math.sqrt(2.0 * lam)
    z_L = L * s
    i_L = bessel_i(nu, z_L, scaled=True)
    if x > 0.0:
        z_x = x * s
        i_x = bessel_i(nu, z_x, scaled=True)
        log_value = nu * math.log(L / x) + math.log(i_x) + z_x - math.log(i_L) - z_L
    else:
        log_value = (
            nu * math.log(z_L)
            - nu * math.log(2.0)
            - log_gamma(nu + 1.0)
            - math.log(i_L)
            - z_L
        )
    return min(1.0, math.exp(log_value))


# ---------------------------------------------------------------------------
# CDF inversion


@dataclass(frozen=True)
class InversionConfig:
    tol: float = 1e-12          # |F(t) - u| target (spec requires <= 1e-10)
    max_iter: int = 100
    max_bracket_growth: int = 200


class InversionError(RuntimeError):
    """Newton/bisection failed to converge; carries the final bracket."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (final bracket {bracket})")
        self.bracket = bracket


def _small_time_quantile(u, L: float):
    # One-sided level-hitting approximation of the tiny left tail:
    # P(tau <= t) ~ 2 (1 - Phi(L / sqrt(t)))  =>  t = L^2 / ndtri(1 - u/2)^2.
    z = _sp.ndtri(1.0 - 0.5 * np.asarray(u, dtype=float))
    return L * L / (z * z)


def invert_cdf(u: float, cache: SpectralSeriesCache, config: InversionConfig | None = None) -> float:
    """Quantile t with |F(t) - u| below tolerance, F(t) = 1 - tail_spectral(t)."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u}")
    out = invert_cdf_batch(np.array([u]), cache, config)
    return float(out[0])


def invert_cdf_batch(
    u: np.ndarray, cache: SpectralSeriesCache, config: InversionConfig | None = None
) -> np.ndarray:
    """Vectorized quantile inversion; same contract as invert_cdf per entry.

    Safeguarded Newton on the series with its term-by-term derivative,
    falling back to bisection whenever a Newton step leaves the bracket.
    Quantiles below F(t_min) (an event of probability ~1e-11 for the unit
    disk) are resolved with the small-time one-sided approximation because
    the series itself is refused there.
    """
    cfg = config or InversionConfig()
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("all quantiles must lie in (0, 1)")
    L = cache.radius
    out = np.empty_like(u)

    floor = cache.cdf_floor()
    tiny = u <= floor
    if np.any(tiny):
        out[tiny] = _small_time_quantile(u[tiny], L)
    work = np.nonzero(~tiny)[0]
    if work.size == 0:
        return out

    uw = u[work]
    k = cache.terms_needed(cache.t_min)
    j1 = bessel_zero(cache.index.nu, 1)
    cache._ensure_terms(1)
    c1 = float(cache._coeffs[0])

    def f_df(t):
        tail, pdf = cache.series_eval(t, k)
        return 1.0 - tail, pdf

    # Per-element bracket [lo, hi] with F(lo) <= u <= F(hi).
    lo = np.full(uw.shape, cache.t_min)
    one_term = (2.0 * L * L / (j1 * j1)) * np.log(np.maximum(c1, 1.0 + 1e-9) / (1.0 - uw))
    hi = np.maximum(one_term, 2.0 * cache.t_min)
    for _ in range(cfg.max_bracket_growth):
        f_hi, _ = f_df(hi)
        short = f_hi < uw
        if not np.any(short):
            break
        hi[short] *= 2.0
    else:
        bad = int(np.nonzero(short)[0][0])
        raise InversionError(
            "failed to bracket quantile", (float(lo[bad]), float(hi[bad]))
        )

    # Start Newton from the one-term median approximation above the median,
    # from the bracket midpoint below it (the left flank needs the
    # safeguard more than a sharp start).
    x = np.where(uw >= 0.5, np.clip(one_term, lo, hi), 0.5 * (lo + hi))

    active = np.arange(uw.size)
    t_val = x.copy()
    for _ in range(cfg.max_iter):
        f, df = f_df(t_val[active])
        resid = f - uw[active]
        done = np.abs(resid) <= cfg.tol
        if np.any(done):
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            resid = resid[keep]
            f = f[keep]
            df = df[keep]
        above = resid > 0.0
        hi[active[above]] = t_val[active[above]]
        lo[active[~above]] = t_val[active[~above]]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = resid / df
        cand = t_val[active] - step
        ok = np.isfinite(cand) & (cand > lo[active]) & (cand < hi[active])
        t_val[active] = np.where(ok, cand, 0.5 * (lo[active] + hi[active]))
    if active.size:
        bad = int(active[0])
        raise InversionError(
            f"no convergence after {cfg.max_iter} iterations",
            (float(lo[bad]), float(hi[bad])),
        )
    out[work] = t_val
    return out
