"""Contraction-rate machinery derived from a dissipativity profile.

Brownian side.  Given the envelope rate(r) of a profile, the dispersion
constant ``hs`` and the diffusion ``beta``, the effective rate is
rate(r) + hs * r and the concave distance transform f solves

    f'(r) = exp(-I(r) / (2 beta)) * int_r^inf s exp(I(s) / (2 beta)) ds,
    I(s)  = int_0^s (rate(v) + hs * v) dv,

so that f'' = -(rate + hs id) f' / (2 beta) - id.  The transform is linear
in the purely dissipative case, f'(0) = 2 beta / (contraction - hs), and in
general (2 beta / (contraction - hs)) r <= f(r) <= f'(0) r.  The coupled
contraction rate is

    rate = 2 beta / f'(0) - f'(0) (contraction - hs) lipschitz / beta,

positive exactly when the interaction Lipschitz constant sits below the
admissibility threshold 2 beta^2 / ((contraction - hs) f'(0)^2).

Heavy-tailed side.  The rotationally invariant alpha-stable drive has Levy
density levy_constant(d, alpha) |z|^(-d-alpha) under the convention
E exp(i<xi, Z_t>) = exp(-t |xi|^alpha).  The overlap mass

    J(s) = inf_{|x| <= s} int min-kernel nu(dz)
         = int levy_constant / (|z| v |z - x|)^(d+alpha) dz  at |x| = s

is bounded below by overlap_lower_constant(d, alpha) s^(-alpha).  A power
minorant coeff * r^eta of the truncated overlap feeds the concave transform
psi built from tail_weight c1 = exp(-2 contraction g(2 radius)); psi has
slope 1 + c1 at zero, slope 2 c1 past twice the transition radius, and
2 c1 r <= psi(r) <= (1 + c1) r.  The resulting contraction rate is

    2 c1 contraction / (1 + c1) - lipschitz (1 + c1) / c1,

positive exactly below the threshold 2 c1^2 contraction / (1 + c1)^2.

All quadratures target 1e-10 absolute accuracy; Gaussian tails and the
overlap tails are attached in closed form (exact where the integrands are
exactly of the assumed shape), so the numeric segments do real work and the
closed-form cross-checks in the test suite remain independent.
"""

from dataclasses import dataclass
from math import exp, gamma as gamma_fn, inf, pi, sqrt

import numpy as np
from scipy import integrate, special

__all__ = [
    "effective_rate", "transform_slope", "transform_value",
    "brownian_contraction_rate", "brownian_admissibility",
    "levy_constant", "ball_volume", "sphere_surface",
    "jump_overlap_exact", "jump_overlap_lower", "overlap_lower_constant",
    "minorant_coefficient", "minorant_value", "minorant_primitive",
    "tail_weight", "stable_transform_slope", "stable_transform_value",
    "stable_contraction_rate", "stable_admissibility", "best_eta",
    "linear_model_variance",
    "Admissibility", "RateConstants", "rate_constants",
]

_QUAD = dict(epsabs=1e-12, epsrel=1e-11, limit=200)


def effective_rate(profile, hs, v):
    """Dispersion-adjusted envelope rate(v) + hs * v."""
    return profile.rate_at(v) + hs * np.asarray(v, dtype=float)


def linear_model_variance(slope, diffusion, t):
    """Variance at time t of dX = -slope X dt + sqrt(diffusion) dW, X_0 = 0.

    Closed form of the second-moment ODE v' = -2 slope v + diffusion;
    slope 0 degenerates to diffusion * t.
    """
    if t < 0 or diffusion < 0:
        raise ValueError("time and diffusion must be nonnegative")
    if slope == 0.0:
        return diffusion * t
    return -diffusion / (2.0 * slope) * np.expm1(-2.0 * slope * t)


def _rate_integral(profile, hs, s):
    """Closed-form primitive of the effective rate from 0 to s."""
    a = profile.radius
    e = profile.expansion + hs
    if a == 0.0:
        return -0.5 * (profile.contraction - hs) * s * s
    if s <= a:
        return 0.5 * e * s * s
    g = 0.5 * e * a * a
    m = (profile.expansion + profile.contraction) / a
    top = min(s, 2 * a)
    # integrand on (a, 2a] is -m v^2 + (m a + e) v
    g += (-m * (top ** 3 - a ** 3) / 3.0
          + (m * a + e) * (top ** 2 - a ** 2) / 2.0)
    if s > 2 * a:
        g -= 0.5 * (profile.contraction - hs) * (s * s - 4 * a * a)
    return g


def _require_contractive(profile, hs):
    if profile.contraction <= hs:
        raise ValueError("dispersion bound must stay below the contraction "
                         "rate for the distance transform to exist")


def transform_slope(profile, hs, r):
    """Slope f'(r) of the Brownian distance transform.

    The outer integral runs numerically up to eight Gaussian tail scales past
    max(r, 2 radius) and closes with the exact linear-regime tail.
    """
    _require_contractive(profile, hs)
    if r < 0:
        raise ValueError("r must be non-negative")
    beta = profile.diffusion
    q = profile.contraction - hs
    two_b = 2.0 * beta
    a0 = profile.radius
    scale = sqrt(two_b / q)
    start = max(r, 2 * a0)
    cut = start + 8.0 * scale
    # keep the outer exp(-I(r)/2b) inside the integrand, otherwise the two
    # factors overflow/underflow separately once r passes a few noise scales
    shift = _rate_integral(profile, hs, r)

    def weighted(s):
        return s * exp((_rate_integral(profile, hs, s) - shift) / two_b)

    total, _ = integrate.quad(weighted, r, cut,
                              points=[p for p in (a0, 2 * a0)
                                      if r < p < cut] or None, **_QUAD)
    # exact tail: past 2*radius the effective rate is exactly -q v, so
    # int_cut^inf s exp(I(s)/2b) ds has a Gaussian closed form
    tail = (two_b / q) * exp(
        (_rate_integral(profile, hs, 2 * a0) - shift) / two_b
        + q * a0 * a0 / beta - q * cut * cut / (2.0 * two_b))
    return total + tail


def transform_value(profile, hs, r):
    """Distance transform f(r) = int_0^r f'(u) du."""
    if r == 0:
        return 0.0
    val, _ = integrate.quad(lambda u: transform_slope(profile, hs, u), 0.0, r,
                            epsabs=1e-10, epsrel=1e-9, limit=100)
    return val


def brownian_contraction_rate(profile, hs, lipschitz):
    """Contraction rate of the reflection-coupled Brownian pair system."""
    s0 = transform_slope(profile, hs, 0.0)
    beta = profile.diffusion
    return 2.0 * beta / s0 - s0 * (profile.contraction - hs) * lipschitz / beta


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    threshold: float
    margin: float


def brownian_admissibility(profile, hs, lipschitz):
    """Interaction-strength gate for a positive Brownian contraction rate.

    The threshold never exceeds (contraction - hs) / 2 because f'(0) is at
    least 2 beta / (contraction - hs).
    """
    s0 = transform_slope(profile, hs, 0.0)
    beta = profile.diffusion
    threshold = 2.0 * beta * beta / ((profile.contraction - hs) * s0 * s0)
    return Admissibility(lipschitz < threshold, threshold,
                         threshold - lipschitz)


# --- heavy-tailed constants --------------------------------------------------

def levy_constant(d, alpha):
    """Levy density constant matching E exp(i<xi,Z_t>) = exp(-t|xi|^alpha)."""
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    return (alpha * 2.0 ** (alpha - 1) * gamma_fn((d + alpha) / 2.0)
            / (pi ** (d / 2.0) * gamma_fn(1.0 - alpha / 2.0)))


def ball_volume(d):
    return pi ** (d / 2.0) / gamma_fn(d / 2.0 + 1.0)


def sphere_surface(d):
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * pi ** (d / 2.0) / gamma_fn(d / 2.0)


def overlap_lower_constant(d, alpha):
    """Constant in the s^(-alpha) lower bound on the overlap mass."""
    return (levy_constant(d, alpha) * (2.0 / 3.0) ** (d + alpha)
            * 2.0 ** (-d) * ball_volume(d))


def jump_overlap_exact(s, d, alpha, constant=None):
    """Overlap mass of the Levy measure and its shift by a vector of norm s.

    Computes int c / (|z| v |z - x|)^(d+alpha) dz at |x| = s by numerical
    quadrature; the mass is decreasing in |x|, so this value is also the
    infimum over |x| <= s.  One-dimensional integrands are integrated
    directly with exact power-law tails; higher dimensions reduce to a
    radial integral against the spherical-cap fraction.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    c = levy_constant(d, alpha) if constant is None else constant
    if d == 1:
        # kernel max(|z|, |z-s|) switches branch at z = s/2
        out = max(4.0 * s, 2.0)
        kern = lambda z: c * max(abs(z), abs(z - s)) ** (-1.0 - alpha)
        core = (integrate.quad(kern, -out, 0.5 * s, **_QUAD)[0]
                + integrate.quad(kern, 0.5 * s, out, **_QUAD)[0])
        tails = (c * out ** (-alpha) / alpha
                 + c * (s + out) ** (-alpha) / alpha)
        return core + tails
    # the two half-spaces split by the bisector contribute equally; on the
    # far one the kernel is |z|^(-d-alpha), leaving a radial integral against
    # the fraction of the sphere with first coordinate above s / (2 r)
    surf = sphere_surface(d)

    def cap_fraction(u):
        if u >= 1.0:
            return 0.0
        return 0.5 * special.betainc((d - 1) / 2.0, 0.5, 1.0 - u * u)

    out = max(50.0 * s, 50.0)
    radial = lambda r: r ** (-1.0 - alpha) * cap_fraction(0.5 * s / r)
    core = integrate.quad(radial, 0.5 * s, out, **_QUAD)[0]
    # tail expands the cap fraction to first order, 1/2 - k_d u + O(u^3),
    # with k_d the density of one sphere coordinate at zero
    k_d = gamma_fn(d / 2.0) / (sqrt(pi) * gamma_fn((d - 1) / 2.0))
    tail = (0.5 * out ** (-alpha) / alpha
            - 0.5 * s * k_d * out ** (-alpha - 1.0) / (alpha + 1.0))
    return 2.0 * c * surf * (core + tail)


def jump_overlap_lower(s, d, alpha):
    if s <= 0:
        raise ValueError("s must be positive")
    return overlap_lower_constant(d, alpha) * s ** (-alpha)


def _require_stable(profile, kappa, eta):
    if not 1.0 < profile.alpha < 2.0:
        raise ValueError("heavy-tailed constants need alpha in (1, 2)")
    if profile.radius <= 0:
        raise ValueError("heavy-tailed constants need a positive transition "
                         "radius")
    if kappa <= 0:
        raise ValueError("coupling cap radius must be positive")
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1)")


def minorant_coefficient(profile, kappa, eta, d):
    """Coefficient of the power minorant coeff * r^eta of the capped overlap.

    coeff * r^eta stays below (kappa ^ r)-capped overlap activity
    (1 / (2 r)) * lower-bound(kappa ^ r) * (kappa ^ r)^2 on (0, 2 radius],
    with equality at r = 2 radius.
    """
    _require_stable(profile, kappa, eta)
    two_r = 2.0 * profile.radius
    ct = overlap_lower_constant(d, profile.alpha)
    return (ct * min(kappa, two_r) ** (2.0 - profile.alpha)
            / (2.0 * two_r ** (1.0 + eta)))


def minorant_value(profile, kappa, eta, d, r):
    return minorant_coefficient(profile, kappa, eta, d) * np.asarray(
        r, dtype=float) ** eta


def minorant_primitive(profile, kappa, eta, d, r):
    """g(r) = (1 + expansion / contraction) int_0^r ds / minorant(s)."""
    coeff = minorant_coefficient(profile, kappa, eta, d)
    lift = 1.0 + profile.expansion / profile.contraction
    return lift * np.asarray(r, dtype=float) ** (1.0 - eta) / ((1.0 - eta)
                                                               * coeff)


def tail_weight(profile, kappa, eta, d):
    """c1 = exp(-2 contraction g(2 radius)), the terminal slope is 2 c1.

    Depends on eta only through the factor 1 / (1 - eta) in g, hence is
    strictly decreasing in eta.
    """
    g = minorant_primitive(profile, kappa, eta, d, 2.0 * profile.radius)
    return exp(-2.0 * profile.contraction * g)


def _decay_power(profile, kappa, eta, d):
    # 2 contraction g(s) = A s^(1 - eta)
    coeff = minorant_coefficient(profile, kappa, eta, d)
    return 2.0 * (profile.contraction + profile.expansion) / ((1.0 - eta)
                                                              * coeff)


def stable_transform_slope(profile, kappa, eta, d, r):
    """Slope of the concave transform psi; 1 + c1 at zero, 2 c1 at the end."""
    _require_stable(profile, kappa, eta)
    c1 = tail_weight(profile, kappa, eta, d)
    r = float(r)
    if r >= 2.0 * profile.radius:
        return 2.0 * c1
    a = _decay_power(profile, kappa, eta, d)
    return c1 + exp(-a * r ** (1.0 - eta))


def stable_transform_value(profile, kappa, eta, d, r):
    """psi(r) = c1 r + int_0^r exp(-2 contraction g(s)) ds, linear past
    twice the transition radius."""
    _require_stable(profile, kappa, eta)
    c1 = tail_weight(profile, kappa, eta, d)
    a = _decay_power(profile, kappa, eta, d)
    p = 1.0 - eta
    two_r = 2.0 * profile.radius

    def primitive(r):
        # int_0^r exp(-a s^p) ds via the lower incomplete gamma
        x = a * r ** p
        return (gamma_fn(1.0 / p) * special.gammainc(1.0 / p, x)
                / (p * a ** (1.0 / p)))

    r = float(r)
    if r <= two_r:
        return c1 * r + primitive(r)
    return c1 * two_r + primitive(two_r) + 2.0 * c1 * (r - two_r)


def stable_contraction_rate(profile, kappa, eta, d, lipschitz):
    """Contraction rate of the refined-basic-coupled heavy-tailed system."""
    c1 = tail_weight(profile, kappa, eta, d)
    return (2.0 * c1 * profile.contraction / (1.0 + c1)
            - lipschitz * (1.0 + c1) / c1)


def stable_admissibility(profile, kappa, eta, d, lipschitz):
    c1 = tail_weight(profile, kappa, eta, d)
    threshold = 2.0 * c1 * c1 * profile.contraction / (1.0 + c1) ** 2
    return Admissibility(lipschitz < threshold, threshold,
                         threshold - lipschitz)


def best_eta(profile, kappa, d, lipschitz, lo=1e-3, hi=1.0 - 1e-3,
             tol=1e-6):
    """Golden-section maximizer of the heavy-tailed rate over eta.

    The rate is strictly decreasing in eta (eta enters only through
    1 / (1 - eta) in g), so the maximizer sits at the lower end of the
    search interval; the search is kept for robustness against future
    minorant variants.

    Returns (eta, rate).
    """
    gr = (sqrt(5.0) - 1.0) / 2.0

    def rate(e):
        return stable_contraction_rate(profile, kappa, e, d, lipschitz)

    a, b = lo, hi
    c, d_ = b - gr * (b - a), a + gr * (b - a)
    fc, fd = rate(c), rate(d_)
    while b - a > tol:
        if fc > fd:
            b, d_, fd = d_, c, fc
            c = b - gr * (b - a)
            fc = rate(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + gr * (b - a)
            fd = rate(d_)
    e = 0.5 * (a + b)
    return e, rate(e)


@dataclass
class RateConstants:
    """Certified constants for a model; fields are None when inapplicable."""

    slope_at_zero: float | None = None          # Brownian transform slope f'(0)
    brownian_rate: float | None = None
    brownian_admissible: bool | None = None
    brownian_threshold: float | None = None
    brownian_margin: float | None = None
    levy: float | None = None
    overlap_constant: float | None = None
    minorant: float | None = None               # coefficient of coeff * r^eta
    primitive_at_transition: float | None = None
    tail: float | None = None                   # c1
    stable_slope_at_zero: float | None = None   # psi'(0) = 1 + c1
    stable_rate: float | None = None
    stable_admissible: bool | None = None
    stable_threshold: float | None = None
    stable_margin: float | None = None
    eta: float | None = None
    best_eta: float | None = None
    best_eta_rate: float | None = None
    kappa: float | None = None
    prefactor: float | None = None              # initial-to-floor ratio bound

    def as_dict(self):
        return dict(self.__dict__)


def rate_constants(model, kappa=None, eta=0.5, search_eta=True):
    """Assemble every applicable constant for a model in one pass."""
    profile = model.profile
    hs = model.dispersion_bound
    lip = model.interaction_lipschitz
    out = RateConstants()
    if profile.alpha == 2.0:
        s0 = transform_slope(profile, hs, 0.0)
        adm = brownian_admissibility(profile, hs, lip)
        out.slope_at_zero = s0
        out.brownian_rate = brownian_contraction_rate(profile, hs, lip)
        out.brownian_admissible = adm.ok
        out.brownian_threshold = adm.threshold
        out.brownian_margin = adm.margin
        out.prefactor = s0 * (profile.contraction - hs) / (2.0
                                                           * profile.diffusion)
        return out
    d = model.dim
    kappa = profile.radius if kappa is None else kappa
    c1 = tail_weight(profile, kappa, eta, d)
    adm = stable_admissibility(profile, kappa, eta, d, lip)
    out.levy = levy_constant(d, profile.alpha)
    out.overlap_constant = overlap_lower_constant(d, profile.alpha)
    out.minorant = minorant_coefficient(profile, kappa, eta, d)
    out.primitive_at_transition = minorant_primitive(profile, kappa, eta, d,
                                                     2.0 * profile.radius)
    out.tail = c1
    out.stable_slope_at_zero = 1.0 + c1
    out.stable_rate = stable_contraction_rate(profile, kappa, eta, d, lip)
    out.stable_admissible = adm.ok
    out.stable_threshold = adm.threshold
    out.stable_margin = adm.margin
    out.eta = eta
    out.kappa = kappa
    out.prefactor = (1.0 + c1) / (2.0 * c1)
    if search_eta:
        out.best_eta, out.best_eta_rate = best_eta(profile, kappa, d, lip)
    return out
