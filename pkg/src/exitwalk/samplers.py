"""Random-variate generation with reproducible parallel streams.

RNG contract: a stream is identified by a (seed, stream_id) pair and feeds
a counter-based philox4x64 generator, so identical pairs replay the exact
same variate sequence on every run and platform, and distinct stream ids
give statistically independent streams with no coordination.  Gaussians
come from numpy's ziggurat; the algorithm name recorded in result files is
``philox4x64-numpy``.

Uniform draws used inside log() transforms are taken in (0, 1] so the
downstream boundary function sqrt(2t ln(t_max/t)) never sees log(0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .specfun import BesselIndex, log_gamma

__all__ = [
    "RNG_ALGORITHM",
    "RngStream",
    "sample_gaussian",
    "sample_unit_direction",
    "sample_tau_psi",
    "sample_inverse_gaussian",
    "tau_psi_upper_bound",
]

RNG_ALGORITHM = "philox4x64-numpy"


@dataclass
class RngStream:
    """One reproducible variate stream, exclusively owned by one worker.

    Cloning a stream for another worker means constructing a new RngStream
    with the same seed and a fresh stream_id.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not (0 <= int(value) < 2**64):
                raise ValueError(f"{name} must fit in 64 bits, got {value}")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def uniform_oc(self, size=None):
        """Uniform draws on (0, 1]."""
        return 1.0 - self.generator.random(size)


def sample_gaussian(rng: RngStream, size=None):
    """Standard normal variate(s)."""
    out = rng.generator.standard_normal(size)
    return float(out) if size is None else out


def sample_unit_direction(delta: int, rng: RngStream, size: int | None = None):
    """Uniform direction(s) on the unit sphere in dimension delta >= 2.

    In dimension 2 this is literally (cos 2*pi*W, sin 2*pi*W) for a single
    uniform W; higher dimensions normalize a Gaussian vector.  Returns
    shape (delta,) for size=None, else (size, delta).
    """
    if delta < 2:
        raise ValueError(f"delta must be >= 2, got {delta}")
    n = 1 if size is None else size
    if delta == 2:
        w = rng.generator.random(n)
        ang = 2.0 * math.pi * w
        v = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        g = rng.generator.standard_normal((n, delta))
        norms = np.linalg.norm(g, axis=-1, keepdims=True)
        # A zero Gaussian vector has probability 0; redraw defensively.
        while np.any(norms == 0.0):
            bad = norms[:, 0] == 0.0
            g[bad] = rng.generator.standard_normal((int(bad.sum()), delta))
            norms = np.linalg.norm(g, axis=-1, keepdims=True)
        v = g / norms
    return v[0] if size is None else v


def tau_psi_upper_bound(a: float, index: BesselIndex) -> float:
    """t_max = (a / (Gamma(nu+1) 2^nu))^(1/(nu+1)), the support endpoint.

    Computed directly while the intermediate stays finite, in log space
    otherwise (large nu).
    """
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    nu = index.nu
    base = a / (math.gamma(nu + 1.0) * 2.0**nu)
    if math.isfinite(base) and base > 0.0:
        return base ** (1.0 / (nu + 1.0))
    return math.exp((math.log(a) - log_gamma(nu + 1.0) - nu * math.log(2.0)) / (nu + 1.0))


def sample_tau_psi(a: float, index: BesselIndex, rng: RngStream, size=None):
    """Hitting time of the shrinking boundary psi for image parameter a.

    Draws floor(nu)+2 uniforms on (0,1], plus one squared Gaussian when nu
    is a half-integer, and composes

        R = t_max * (U_1 ... U_m)^(1/(nu+1)) * exp(-(nu-floor(nu))/(nu+1) G^2),

    which for dimension 2 reduces to R = a * U_1 * U_2.  Every draw lies in
    (0, t_max].
    """
    t_max = tau_psi_upper_bound(a, index)
    nu = index.nu
    m = int(math.floor(nu)) + 2
    n = 1 if size is None else size
    u = rng.uniform_oc((n, m))
    r = t_max * np.prod(u, axis=-1) ** (1.0 / (nu + 1.0))
    if index.frac != 0.0:
        g = rng.generator.standard_normal(n)
        r = r * np.exp(-(index.frac / (nu + 1.0)) * g * g)
    return float(r[0]) if size is None else r


def sample_inverse_gaussian(mu: float, lam: float, rng: RngStream, size=None):
    """Inverse Gaussian variate(s) with mean mu and shape lam.

    One Gaussian and one uniform per draw: the transformation-with-roots
    generator (Michael, Schucany, Haas).
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    n = 1 if size is None else size
    g = rng.generator.standard_normal(n)
    v = g * g
    w = mu * v
    x1 = mu + (mu / (2.0 * lam)) * (w - np.sqrt(w * (4.0 * lam + w)))
    u = rng.generator.random(n)
    take_x1 = u <= mu / (mu + x1)
    out = np.where(take_x1, x1, mu * mu / x1)
    return float(out[0]) if size is None else out
