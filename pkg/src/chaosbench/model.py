"""Model catalog: confined drifts, interaction kernels, dispersion fields.

A model is assembled from named catalog entries rather than runtime-parsed
expressions.  Each drift entry ships a certified dissipativity profile: a
piecewise-linear envelope rate(r) with

    rate(r) = expansion * r                        r <= radius
              interpolating line * r               radius < r <= 2 * radius
              -contraction * r                     r > 2 * radius

such that <x - y, drift(x) - drift(y)> <= rate(|x - y|) * |x - y| for all
pairs.  ``radius == 0`` (allowed only with ``expansion == 0``) encodes the
purely dissipative envelope rate(r) = -contraction * r.  Interactions carry
their Lipschitz constant in the split form |b(x,y) - b(x',y')| <=
lipschitz * (|x - x'| + |y - y'|), dispersions the constant ``hs_bound`` with
0.5 * ||sigma(x) - sigma(y)||_HS^2 <= hs_bound * |x - y|^2.

``audit_model`` re-checks all three certificates by randomized search and is
run by the harness before any experiment.

Extension point: register new entries in DRIFTS / INTERACTIONS / DISPERSIONS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DissipativityProfile",
    "ModelSpec",
    "AuditReport",
    "audit_model",
    "make_model",
    "catalog_names",
    "DRIFTS",
    "INTERACTIONS",
    "DISPERSIONS",
]


@dataclass(frozen=True)
class DissipativityProfile:
    """Piecewise-linear envelope of the pairwise drift alignment.

    Attributes:
        expansion: max expansion rate near the diagonal (>= 0).
        contraction: asymptotic contraction rate at large separation (> 0).
        radius: end of the expansion regime; the envelope is -contraction*r
            beyond twice this value.  In the heavy-tailed case this same
            radius is the transition scale of the two-regime bound.
        alpha: noise exponent in (1, 2]; 2 means Brownian driving noise.
        diffusion: squared intensity of the isotropic Brownian drive
            (unused when alpha < 2).
    """

    expansion: float
    contraction: float
    radius: float
    alpha: float = 2.0
    diffusion: float = 1.0

    def __post_init__(self):
        if self.contraction <= 0:
            raise ValueError("contraction rate must be positive")
        if self.expansion < 0:
            raise ValueError("expansion rate must be non-negative")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        if self.radius == 0 and self.expansion != 0:
            raise ValueError("radius 0 encodes the purely dissipative "
                             "envelope and requires expansion 0")
        if not 1.0 < self.alpha <= 2.0:
            raise ValueError("noise exponent must lie in (1, 2]")
        if self.alpha == 2.0 and self.diffusion <= 0:
            raise ValueError("Brownian models need positive diffusion")

    def rate_at(self, r):
        """Envelope rate(r); vectorized over r >= 0."""
        r = np.asarray(r, dtype=float)
        if self.radius == 0.0:
            return -self.contraction * r
        mid_slope = (self.expansion + self.contraction) / self.radius
        mid = (-mid_slope * (r - self.radius) + self.expansion) * r
        out = np.where(r <= self.radius, self.expansion * r,
                       np.where(r <= 2 * self.radius, mid,
                                -self.contraction * r))
        return out if out.ndim else float(out)


# --- drift catalog -----------------------------------------------------------

def _linear_drift(params):
    slope = params["slope"]
    return lambda x: -slope * x


def _cubic_drift(params):
    return lambda x: x - x ** 3


def _radial_cubic_drift(params):
    def fn(x):
        sq = np.sum(x * x, axis=-1, keepdims=True)
        return x * (1.0 - sq)
    return fn


@dataclass(frozen=True)
class _DriftEntry:
    make: callable
    # certified (expansion, contraction, radius) given params
    profile: callable
    params: tuple = ()
    dims: str = "any"


DRIFTS = {
    "linear": _DriftEntry(
        make=_linear_drift,
        profile=lambda p: (0.0, p["slope"], 0.0),
        params=("slope",),
    ),
    # x - x^3 in one dimension: alignment is r^2 (1 - (x^2 + x y + y^2)) and
    # x^2 + x y + y^2 >= r^2 / 4 at distance r, so rate(r) = r (1 - r^2/4).
    # The envelope (1, 3, 2) touches it at r = 4 and dominates elsewhere.
    "cubic": _DriftEntry(
        make=_cubic_drift,
        profile=lambda p: (1.0, 3.0, 2.0),
        dims="1",
    ),
    # x (1 - |x|^2): <x-y, x|x|^2 - y|y|^2> >= |x-y|^4 / 4 in every
    # dimension (minimum at x = -y), giving the same envelope as "cubic".
    "radial-cubic": _DriftEntry(
        make=_radial_cubic_drift,
        profile=lambda p: (1.0, 3.0, 2.0),
    ),
}


# --- interaction catalog -----------------------------------------------------

@dataclass(frozen=True)
class _InteractionEntry:
    make: callable          # params -> pairwise kernel b(x, y)
    lipschitz: callable     # params -> split Lipschitz constant
    params: tuple = ()
    separable: bool = False


def _zero_kernel(params):
    return lambda x, y: np.zeros(np.broadcast_shapes(x.shape, y.shape))


def _curie_weiss_kernel(params):
    s = params["strength"]
    return lambda x, y: -s * (x - y)


def _bounded_tanh_kernel(params):
    s = params["strength"]
    return lambda x, y: -s * np.tanh(x - y)


INTERACTIONS = {
    "zero": _InteractionEntry(
        make=_zero_kernel,
        lipschitz=lambda p: 0.0,
    ),
    "curie-weiss": _InteractionEntry(
        make=_curie_weiss_kernel,
        lipschitz=lambda p: p["strength"],
        params=("strength",),
        separable=True,
    ),
    "bounded-tanh": _InteractionEntry(
        make=_bounded_tanh_kernel,
        lipschitz=lambda p: p["strength"],
        params=("strength",),
    ),
}


# --- dispersion catalog ------------------------------------------------------

@dataclass(frozen=True)
class _DispersionEntry:
    apply: callable         # params -> (x, dw) -> sigma(x) dw
    hs_bound: callable      # params -> constant in the HS square bound
    matrix: callable        # params -> x -> explicit (d, d) matrix
    params: tuple = ()


def _zero_apply(params):
    return lambda x, dw: np.zeros_like(dw)


def _constant_apply(params):
    c = params["scale"]
    return lambda x, dw: c * dw


def _tanh_diag_apply(params):
    c = params["scale"]
    return lambda x, dw: c * np.tanh(x) * dw


DISPERSIONS = {
    "zero": _DispersionEntry(
        apply=_zero_apply,
        hs_bound=lambda p: 0.0,
        matrix=lambda p: lambda x: np.zeros((x.shape[-1], x.shape[-1])),
    ),
    "constant": _DispersionEntry(
        apply=_constant_apply,
        hs_bound=lambda p: 0.0,
        matrix=lambda p: lambda x: p["scale"] * np.eye(x.shape[-1]),
        params=("scale",),
    ),
    # componentwise scale * tanh(x_i) on the diagonal; the HS square of a
    # difference is at most scale^2 |x - y|^2, so the bound constant is
    # scale^2 / 2.
    "tanh-diag": _DispersionEntry(
        apply=_tanh_diag_apply,
        hs_bound=lambda p: 0.5 * p["scale"] ** 2,
        matrix=lambda p: lambda x: p["scale"] * np.diag(np.tanh(x)),
        params=("scale",),
    ),
}


def _check_params(kind, name, entry, params):
    missing = [k for k in entry.params if k not in params]
    extra = [k for k in params if k not in entry.params]
    if missing or extra:
        raise ValueError(f"{kind} '{name}' expects params {entry.params}, "
                         f"got {tuple(params)}")


@dataclass
class ModelSpec:
    """A fully assembled mean-field model.

    Built by ``make_model``; holds the catalog names and parameters plus the
    resolved callables and certified constants.  ``dim`` is the state
    dimension; the Brownian drive and the dispersion input share it.
    """

    dim: int
    drift_name: str
    drift_params: dict
    interaction_name: str
    interaction_params: dict
    dispersion_name: str
    dispersion_params: dict
    profile: DissipativityProfile
    interaction_lipschitz: float = field(init=False)
    dispersion_bound: float = field(init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        drift = DRIFTS[self.drift_name]
        if drift.dims == "1" and self.dim != 1:
            raise ValueError(f"drift '{self.drift_name}' is one-dimensional")
        self._drift = drift.make(self.drift_params)
        inter = INTERACTIONS[self.interaction_name]
        self._kernel = inter.make(self.interaction_params)
        self._separable = inter.separable
        self.interaction_lipschitz = float(
            inter.lipschitz(self.interaction_params))
        disp = DISPERSIONS[self.dispersion_name]
        self._disp_apply = disp.apply(self.dispersion_params)
        self._disp_matrix = disp.matrix(self.dispersion_params)
        self.dispersion_bound = float(disp.hs_bound(self.dispersion_params))

    def drift(self, x):
        """Confinement drift at x, shape (..., dim) -> (..., dim)."""
        return self._drift(np.asarray(x, dtype=float))

    def kernel(self, x, y):
        """Pairwise interaction b(x, y); broadcasts over leading axes."""
        return self._kernel(np.asarray(x, dtype=float),
                            np.asarray(y, dtype=float))

    def mean_field(self, x, sample, chunk=256):
        """Average of kernel(x_i, y_j) over the rows y_j of ``sample``.

        The self term j with y_j == x_i is included when ``sample`` is the
        ensemble itself, matching the empirical-measure drift.  Separable
        kernels use an O(n + m) path; generic kernels fall back to chunked
        pairwise evaluation.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sample = np.atleast_2d(np.asarray(sample, dtype=float))
        if self.interaction_name == "zero":
            return np.zeros_like(x)
        if self._separable:
            return self._kernel(x, sample.mean(axis=0))
        out = np.empty_like(x)
        for lo in range(0, x.shape[0], chunk):
            hi = min(lo + chunk, x.shape[0])
            block = self._kernel(x[lo:hi, None, :], sample[None, :, :])
            out[lo:hi] = block.mean(axis=1)
        return out

    def dispersion_apply(self, x, dw):
        """sigma(x) applied to an increment dw, both shaped (..., dim)."""
        return self._disp_apply(np.asarray(x, dtype=float),
                                np.asarray(dw, dtype=float))

    def dispersion_matrix(self, x):
        return self._disp_matrix(np.asarray(x, dtype=float))

    @property
    def has_dispersion(self):
        return self.dispersion_name != "zero"


def make_model(dim, drift, interaction=("zero", None), dispersion=("zero", None),
               profile=None):
    """Assemble a ModelSpec from catalog names.

    Args:
        dim: state dimension.
        drift / interaction / dispersion: either a name or a (name, params)
            pair; params may be None for entries without parameters.
        profile: optional DissipativityProfile overriding the certified one
            (useful to declare a positive transition radius for heavy-tailed
            runs; the audit still has to pass for it).
    """
    def unpack(item):
        if isinstance(item, str):
            return item, {}
        name, params = item
        return name, dict(params or {})

    d_name, d_params = unpack(drift)
    i_name, i_params = unpack(interaction)
    s_name, s_params = unpack(dispersion)
    for kind, name, table, params in (
            ("drift", d_name, DRIFTS, d_params),
            ("interaction", i_name, INTERACTIONS, i_params),
            ("dispersion", s_name, DISPERSIONS, s_params)):
        if name not in table:
            raise KeyError(f"unknown {kind} '{name}'; see catalog_names()")
        _check_params(kind, name, table[name], params)
    if profile is None:
        exp, con, rad = DRIFTS[d_name].profile(d_params)
        profile = DissipativityProfile(exp, con, rad)
    return ModelSpec(dim=dim, drift_name=d_name, drift_params=d_params,
                     interaction_name=i_name, interaction_params=i_params,
                     dispersion_name=s_name, dispersion_params=s_params,
                     profile=profile)


def catalog_names():
    return {"drifts": sorted(DRIFTS), "interactions": sorted(INTERACTIONS),
            "dispersions": sorted(DISPERSIONS)}


# --- audit -------------------------------------------------------------------

@dataclass
class AuditReport:
    checked_pairs: int
    worst_violation: float
    lipschitz_estimate: float
    dispersion_violation: float
    passed: bool


def audit_model(model, rng, box_radius=6.0, n_pairs=20000, tol=1e-9):
    """Randomized re-check of the model's certified constants.

    Samples pairs uniformly in a box plus near-diagonal perturbations and
    verifies the profile envelope, the split Lipschitz bound of the
    interaction, and the dispersion HS bound.  Non-finite drift values fail
    the audit outright.

    Returns an AuditReport; ``passed`` means every violation is within tol.
    """
    d = model.dim
    half = n_pairs // 2
    x = rng.uniform(-box_radius, box_radius, size=(n_pairs, d))
    y = np.empty_like(x)
    y[:half] = rng.uniform(-box_radius, box_radius, size=(half, d))
    # near-diagonal pairs probe the expansion regime
    scales = 10.0 ** rng.uniform(-4, 0, size=(n_pairs - half, 1))
    direction = rng.normal(size=(n_pairs - half, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    y[half:] = x[half:] + scales * direction

    bx, by = model.drift(x), model.drift(y)
    if not (np.all(np.isfinite(bx)) and np.all(np.isfinite(by))):
        return AuditReport(n_pairs, np.inf, np.inf, np.inf, False)
    diff = x - y
    r = np.linalg.norm(diff, axis=1)
    align = np.sum(diff * (bx - by), axis=1)
    violation = align - model.profile.rate_at(r) * r
    worst = float(violation.max())

    # split Lipschitz estimate for the interaction kernel
    xp = rng.uniform(-box_radius, box_radius, size=(n_pairs, d))
    yp = rng.uniform(-box_radius, box_radius, size=(n_pairs, d))
    num = np.linalg.norm(model.kernel(x, y) - model.kernel(xp, yp), axis=1)
    den = (np.linalg.norm(x - xp, axis=1) + np.linalg.norm(y - yp, axis=1))
    ok = den > 1e-12
    lip = float((num[ok] / den[ok]).max()) if ok.any() else 0.0

    # dispersion HS bound via explicit matrices on a subsample
    sub = min(n_pairs, 2000)
    disp_worst = 0.0
    if model.has_dispersion:
        for i in range(sub):
            hs = np.sum((model.dispersion_matrix(x[i])
                         - model.dispersion_matrix(y[i])) ** 2)
            gap = 0.5 * hs - model.dispersion_bound * r[i] ** 2
            disp_worst = max(disp_worst, gap)
    disp_worst = float(disp_worst)

    passed = (worst <= tol and disp_worst <= tol
              and lip <= model.interaction_lipschitz + tol)
    return AuditReport(n_pairs, worst, lip, disp_worst, passed)
