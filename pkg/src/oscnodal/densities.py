"""Kac-Rice nodal densities in every regime around the caustic.

For a centered Gaussian field with covariance kernel Pi, the expected nodal
hypersurface density at x is

    F(x) = (2 pi)^(-(d+1)/2) int_{R^d} |Omega(x)^(1/2) xi| e^(-|xi|^2/2) d xi
         = (2 pi)^(-1/2) E || Omega^(1/2) xi ||,

with Omega = d_x d_y log Pi on the diagonal.  The expectation factorizes into
the chi-distribution mean E[chi_d] = sqrt(2) Gamma((d+1)/2)/Gamma(d/2) times a
sphere average of ||Omega^(1/2) omega||, evaluated by deterministic quadrature
for d <= 3 and Monte Carlo beyond.

Regimes (E = 1/2, caustic = unit sphere, s measured by |x|^2 = 1 -+ hbar^a s):

  allowed bulk       F = hbar^-1 c_d sqrt(1-|x|^2)
  allowed annulus    Omega = (s/d) hbar^(a-2) I          -> slope -(1-3a/2) rescaled
  caustic tube       Omega = hbar^(-4/3) * Omega0(u)     -> hbar-free rescaled F(u)
  forbidden annulus  Omega = hbar^(-1-a/2) (I - x x^T)/(2 sqrt(s))
  forbidden bulk     F = hbar^(-1/2) C_d sqrt(E) / (sqrt(|x|) (|x|^2-1)^(1/4))

with c_d = Gamma((d+1)/2)/(sqrt(d pi) Gamma(d/2)) and
C_d = Gamma((d+1)/2)/(sqrt(pi) Gamma(d/2)).  Annulus densities are *computed*
from their Omega matrices through the same Kac-Rice reduction (the allowed
constant then reproduces c_d identically; the forbidden one comes out as
Gamma(d/2)/(sqrt(2 pi) Gamma((d-1)/2)), which is reported, not assumed equal
to C_d).  Rescaled (zoomed) densities carry the extra hbar^(2a) factor on
Omega from the coordinate dilation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import airy, projector
from .scaled_kernel import CausticFrame
from .semiclassical import TrackedReal

_LOG2 = math.log(2.0)

#: eigenvalues in [-tol * lambda_max, 0) are clipped to zero (roundoff from
#: the tracked-float boundary); anything more negative is an error
PSD_CLIP_TOL = 1e-8


class Region(enum.Enum):
    ALLOWED_BULK = "allowed_bulk"
    ALLOWED_ANNULUS = "allowed_annulus"
    CAUSTIC_TUBE = "caustic_tube"
    FORBIDDEN_ANNULUS = "forbidden_annulus"
    FORBIDDEN_BULK = "forbidden_bulk"


@dataclass(frozen=True)
class KacRiceMatrix:
    """Symmetric PSD matrix Omega with a tracked scale: Omega_full = omega * e**scale."""

    omega: np.ndarray
    scale_exponent: int = 0

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("omega must be a square matrix")
        scale = np.max(np.abs(w))
        if scale > 0 and np.max(np.abs(w - w.T)) > 1e-10 * scale:
            raise ValueError("omega must be symmetric")


@dataclass(frozen=True)
class RegimeQuery:
    """A point description selecting which asymptotic density applies.

    The physical point is frame.x0 + hbar^alpha * u; region tags must be
    consistent: bulk <=> alpha = 0, tube <=> alpha = 2/3, annulus for
    0 < alpha < 2/3 with sign(<u, x0>) matching the side of the caustic.
    """

    frame: CausticFrame
    u: np.ndarray
    alpha: float
    region: Region

    def __post_init__(self):
        a = self.alpha
        if not 0.0 <= a <= 2.0 / 3.0:
            raise ValueError("alpha must lie in [0, 2/3]")
        if self.region is Region.CAUSTIC_TUBE and a != 2.0 / 3.0:
            raise ValueError("caustic_tube requires alpha = 2/3")
        if self.region in (Region.ALLOWED_BULK, Region.FORBIDDEN_BULK) and a != 0.0:
            raise ValueError("bulk regions require alpha = 0")
        if self.region in (Region.ALLOWED_ANNULUS, Region.FORBIDDEN_ANNULUS) \
                and not 0.0 < a < 2.0 / 3.0:
            raise ValueError("annulus regions require 0 < alpha < 2/3")


def c_d(d):
    """Allowed-bulk constant Gamma((d+1)/2) / (sqrt(d pi) Gamma(d/2))."""
    return math.gamma((d + 1) / 2.0) / (math.sqrt(d * math.pi) * math.gamma(d / 2.0))


def C_d(d):
    """Forbidden-bulk constant Gamma((d+1)/2) / (sqrt(pi) Gamma(d/2))."""
    return math.gamma((d + 1) / 2.0) / (math.sqrt(math.pi) * math.gamma(d / 2.0))


def chi_mean(d):
    """E[chi_d] = sqrt(2) Gamma((d+1)/2) / Gamma(d/2)."""
    return math.sqrt(2.0) * math.gamma((d + 1) / 2.0) / math.gamma(d / 2.0)


def _clipped_eigenvalues(kr):
    lam = np.linalg.eigvalsh(np.asarray(kr.omega, dtype=float))
    lam_max = float(lam[-1])
    if lam_max < 0:
        raise ValueError("omega is negative definite")
    floor = -PSD_CLIP_TOL * max(lam_max, 0.0)
    if np.any(lam < floor):
        raise ValueError(
            f"omega has eigenvalue {lam.min():.3e} below the PSD clip tolerance")
    return np.clip(lam, 0.0, None), lam_max


def _sphere_average_norm(lam, d, mc_seed=0, mc_samples=10**6):
    """Mean of sqrt(sum lam_i w_i^2) over the unit sphere.

    d = 2 has the exact closed form (2/pi) sqrt(lam_max) E(1 - lam_min/lam_max)
    with E the complete elliptic integral of the second kind (angle quadrature
    loses ~1e-4 at the rank-deficient matrices the forbidden regimes produce);
    d = 3 uses a 64 x 128 product Gauss rule, d >= 4 Monte Carlo with a
    reported standard error.
    """
    if d == 1:
        return math.sqrt(lam[0]), 0.0
    if d == 2:
        hi = float(lam[1])
        lo = float(lam[0])
        if hi == 0.0:
            return 0.0, 0.0
        from scipy.special import ellipe
        return 2.0 / math.pi * math.sqrt(hi) * float(ellipe(1.0 - lo / hi)), 0.0
    if d == 3:
        cx, cw = np.polynomial.legendre.leggauss(64)
        theta = np.linspace(0.0, 2.0 * math.pi, 128, endpoint=False)
        sin_phi_sq = 1.0 - cx[:, None] ** 2
        vals = np.sqrt(lam[0] * sin_phi_sq * np.cos(theta)[None, :] ** 2
                       + lam[1] * sin_phi_sq * np.sin(theta)[None, :] ** 2
                       + lam[2] * cx[:, None] ** 2)
        return float(np.sum(cw[:, None] * vals) / (2.0 * 128)), 0.0
    rng = np.random.Generator(np.random.Philox(mc_seed))
    w = rng.standard_normal((mc_samples, d))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    vals = np.sqrt(w * w @ lam)
    return float(np.mean(vals)), float(np.std(vals) / math.sqrt(mc_samples))


def kac_rice_density(kr, d, mc_seed=0, mc_samples=10**6, return_stderr=False):
    """Expected nodal density (2 pi)^(-1/2) E||Omega^(1/2) xi|| as a TrackedReal.

    Omega is eigendecomposed, tiny negative eigenvalues are clipped (see
    PSD_CLIP_TOL), and E||.|| factorizes into E[chi_d] times a sphere average.
    For d >= 4 the sphere average is Monte Carlo; pass return_stderr=True to
    get (density, standard_error_of_the_mantissa).
    """
    if kr.omega.shape != (d, d):
        raise ValueError(f"omega must be {d}x{d}")
    lam, lam_max = _clipped_eigenvalues(kr)
    if lam_max == 0.0:
        out = TrackedReal(0.0, 0)
        return (out, 0.0) if return_stderr else out
    avg, stderr = _sphere_average_norm(lam, d, mc_seed=mc_seed, mc_samples=mc_samples)
    mantissa = avg * chi_mean(d) / math.sqrt(2.0 * math.pi)
    half, rem = divmod(kr.scale_exponent, 2)
    out = TrackedReal(mantissa * math.exp(rem / 2.0), half).normalized()
    if return_stderr:
        return out, stderr * chi_mean(d) / math.sqrt(2.0 * math.pi)
    return out


def omega_exact(level, x):
    """Exact Kac-Rice matrix (Pi d2Pi - dPi dPi)/Pi^2 from the covariance jet.

    Omega is a ratio of kernels, so the huge tracked exponents cancel; the
    entries land comfortably inside float range even deep in the forbidden
    region.  x = 0 is rejected (the 1-jet map degenerates there for odd N).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.linalg.norm(x) == 0.0:
        raise ValueError("omega_exact requires x != 0")
    jet = projector.covariance_jet(level, x)
    d = level.d
    ratio_grad = np.array([(g / jet.pi).to_float() for g in jet.grad])
    omega = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            omega[i, j] = (jet.hess[i][j] / jet.pi).to_float() \
                - ratio_grad[i] * ratio_grad[j]
    omega = 0.5 * (omega + omega.T)
    return KacRiceMatrix(omega=omega, scale_exponent=0)


def omega_caustic_scaled(frame, u):
    """Dimensionless caustic-tube Kac-Rice matrix Omega0(u), s = 2<u, x0>.

    Omega0_ij = x0_i x0_j [ Ai_{2-d/2}(s)/Ai_{-d/2}(s)
                            - (Ai_{1-d/2}(s)/Ai_{-d/2}(s))^2 ]
                + (delta_ij/2) Ai_{-1-d/2}(s)/Ai_{-d/2}(s).

    The physical matrix at x0 + hbar^(2/3) u is hbar^(-4/3) Omega0(u).
    Ai_{-d/2} > 0 for every integer d >= 2, so the ratios are well defined.
    """
    d = frame.d
    if d < 2:
        raise ValueError("the caustic matrix needs d >= 2")
    u = np.asarray(u, dtype=float)
    s = 2.0 * frame.normal_component(u)
    base = airy.ai_k(-d / 2.0, s)
    assert base > 0.0, "Ai_{-d/2} must be positive"
    radial = airy.ai_k(2.0 - d / 2.0, s) / base - (airy.ai_k(1.0 - d / 2.0, s) / base) ** 2
    tangential = 0.5 * airy.ai_k(-1.0 - d / 2.0, s) / base
    omega = radial * np.outer(frame.x0, frame.x0) + tangential * np.eye(d)
    return KacRiceMatrix(omega=omega, scale_exponent=0)


def _hbar_power(hbar, power):
    """hbar**power as a TrackedReal (power may make it huge or tiny)."""
    return TrackedReal.from_log(power * math.log(hbar))


def density_regime(query, level):
    """Leading-order density for the query's regime, as a TrackedReal.

    Bulk regions return the unscaled density F(x) at x = x0 + u; annuli and
    the tube return the rescaled density of the zoomed field at offset u
    (annulus Omegas carry the hbar^(2 alpha) dilation factor; the tube value
    is hbar-independent).
    """
    frame, u, alpha, region = query.frame, np.asarray(query.u, float), query.alpha, query.region
    d = level.d
    if d != frame.d:
        raise ValueError("level and frame dimensions differ")
    hbar = level.hbar
    u1 = frame.normal_component(u)
    if region is Region.ALLOWED_BULK:
        x = frame.x0 + u
        r_sq = float(x @ x)
        if not 0.0 < r_sq < 1.0:
            raise ValueError("allowed_bulk point must satisfy 0 < |x| < 1")
        return _hbar_power(hbar, -1.0) * (c_d(d) * math.sqrt(1.0 - r_sq))
    if region is Region.FORBIDDEN_BULK:
        x = frame.x0 + u
        r_sq = float(x @ x)
        if r_sq <= 1.0:
            raise ValueError("forbidden_bulk point must satisfy |x| > 1")
        val = C_d(d) * math.sqrt(level.energy) / (r_sq ** 0.25 * (r_sq - 1.0) ** 0.25)
        return _hbar_power(hbar, -0.5) * val
    if region is Region.CAUSTIC_TUBE:
        return kac_rice_density(omega_caustic_scaled(frame, u), d)
    # annuli: |x|^2 = 1 -+ hbar^alpha s with s > 0 on the matching side
    if region is Region.ALLOWED_ANNULUS:
        s = -2.0 * u1
        if s <= 0.0:
            raise ValueError("allowed annulus requires <u, x0> < 0")
        omega, log_sigma_sq = omega_allowed_annulus(level, frame, alpha, s)
    else:
        s = 2.0 * u1
        if s <= 0.0:
            raise ValueError("forbidden annulus requires <u, x0> > 0")
        omega, log_sigma_sq = omega_forbidden_annulus(level, frame, alpha, s)
    base = kac_rice_density(omega, d)
    # the density is 1-homogeneous under Omega -> c^2 Omega
    return base * TrackedReal.from_log(0.5 * log_sigma_sq)


def omega_allowed_annulus(level, frame, alpha, s):
    """Rescaled allowed-annulus matrix (s/d) hbar^(3 alpha - 2) * identity.

    Returned as (unit-scale KacRiceMatrix, log of the scalar factor); the
    hbar^(2 alpha) dilation factor of the zoomed coordinates is included.
    """
    if s <= 0.0:
        raise ValueError("annulus offset s must be positive")
    log_sigma_sq = math.log(s / level.d) + (3.0 * alpha - 2.0) * math.log(level.hbar)
    return KacRiceMatrix(np.eye(level.d), 0), log_sigma_sq


def omega_forbidden_annulus(level, frame, alpha, s):
    """Rescaled forbidden-annulus matrix hbar^(3a/2 - 1)(I - x0 x0^T)/(2 sqrt(s)).

    The radial direction x0 is an exact null eigenvector of the returned
    shape matrix; the tangential block is isotropic.
    """
    if s <= 0.0:
        raise ValueError("annulus offset s must be positive")
    log_sigma_sq = (1.5 * alpha - 1.0) * math.log(level.hbar) \
        - math.log(2.0 * math.sqrt(s))
    shape = np.eye(level.d) - np.outer(frame.x0, frame.x0)
    return KacRiceMatrix(shape, 0), log_sigma_sq


def density_grid(level, xs, ys):
    """Exact Kac-Rice density on a d = 2 tensor grid, shape (len(ys), len(xs)).

    Vectorizes the d = 2 reduction with analytic 2x2 eigenvalues; meant for
    hbar-resolving averages (the exact bulk density carries oscillatory
    corrections of relative size ~sqrt(hbar) on scale hbar, which coarse
    quadrature aliases).
    """
    jets = projector.jet_grid(level, xs, ys)
    pi = jets["Pi"]
    o11 = jets["H11"] / pi - (jets["G1"] / pi) ** 2
    o22 = jets["H22"] / pi - (jets["G2"] / pi) ** 2
    o12 = jets["H12"] / pi - (jets["G1"] / pi) * (jets["G2"] / pi)
    half_tr = 0.5 * (o11 + o22)
    gap = np.sqrt(np.maximum(0.25 * (o11 - o22) ** 2 + o12 ** 2, 0.0))
    lam1 = np.maximum(half_tr + gap, 0.0)
    lam2 = np.maximum(half_tr - gap, 0.0)
    theta = np.linspace(0.0, 2.0 * math.pi, 256, endpoint=False)
    cos_sq = np.cos(theta) ** 2
    sin_sq = np.sin(theta) ** 2
    avg = np.mean(np.sqrt(lam1[..., None] * cos_sq + lam2[..., None] * sin_sq),
                  axis=-1)
    return avg * chi_mean(2) / math.sqrt(2.0 * math.pi)


def mean_density_box(level, box, step=None):
    """Box average of the exact nodal density on an hbar-resolving grid."""
    if step is None:
        step = level.hbar / 6.0
    (x0, x1), (y0, y1) = box
    xs = np.linspace(x0, x1, max(2, int(math.ceil((x1 - x0) / step)) + 1))
    ys = np.linspace(y0, y1, max(2, int(math.ceil((y1 - y0) / step)) + 1))
    f = density_grid(level, xs, ys)
    inner = np.trapezoid(f, xs, axis=1)
    return float(np.trapezoid(inner, ys) / ((x1 - x0) * (y1 - y0)))


def caustic_intersection_density(d):
    """Density constant for nodal-set intersections with the caustic.

    F_{C,d} = Gamma(d/2)/(sqrt(2 pi) Gamma((d-1)/2)) *
              sqrt(Ai_{-1-d/2}(0) / Ai_{-d/2}(0));
    the expected (d-2)-volume of the intersection inside B subset C is
    hbar^(-2/3) F_{C,d} Vol(B).
    """
    if d < 2:
        raise ValueError("intersection density needs d >= 2")
    ratio = airy.ai_k(-1.0 - d / 2.0, 0.0) / airy.ai_k(-d / 2.0, 0.0)
    return math.gamma(d / 2.0) / (math.sqrt(2.0 * math.pi) * math.gamma((d - 1) / 2.0)) \
        * math.sqrt(ratio)


def caustic_crossing_constant():
    """C0 = 2 pi F_{C,2} = sqrt(2) sqrt(Ai_{-2}(0)/Ai_{-1}(0)): the d = 2
    expected crossing count is C0 hbar^(-2/3)."""
    return 2.0 * math.pi * caustic_intersection_density(2)


def tube_mass(level, kappa, n_nodes=96):
    """Expected L2 mass of a normalized eigenfunction in the kappa hbar^(2/3) tube.

    Returns (exact, asymptotic):
      exact      = int over the metric tube of Pi(x,x) dx / dim V, reduced by
                   rotational invariance to a radial quadrature;
      asymptotic = (Gamma(d)/Gamma(d/2)) hbar^(d/3)
                   int_{-2 kappa}^{2 kappa} Ai_{-d/2}(s) ds,
                   using int_0^inf Ai(s+rho) rho^(d/2-1) drho
                       = Gamma(d/2) Ai_{-d/2}(s).
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    from .semiclassical import eigenspace_dim
    d = level.d
    hbar = level.hbar
    delta = kappa * hbar ** (2.0 / 3.0)
    gx, gw = np.polynomial.legendre.leggauss(n_nodes)
    r = 1.0 + delta * gx
    w = delta * gw
    vals = np.empty(n_nodes)
    for i, ri in enumerate(r):
        point = np.zeros(d)
        point[0] = ri
        vals[i] = projector.pi_exact(level, point).to_float()
    sphere_area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    exact = sphere_area * float(np.sum(w * vals * r ** (d - 1))) / eigenspace_dim(level)

    s_nodes, s_weights = np.polynomial.legendre.leggauss(max(n_nodes, 64))
    s = 2.0 * kappa * s_nodes
    ws = 2.0 * kappa * s_weights
    ai_vals = airy.ai_k(-d / 2.0, s)
    asymptotic = math.gamma(d) / math.gamma(d / 2.0) * hbar ** (d / 3.0) \
        * float(np.sum(ws * ai_vals))
    return exact, asymptotic
