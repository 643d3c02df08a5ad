"""Eigenvalue curves gamma_n(lambda) and the dispersion roots gamma_n = lambda/(g k^2).

The reduced problem at fixed lambda is the symmetric-definite pencil
M_rho c = gamma K c; its positive eigenvalues gamma_1 >= gamma_2 >= ... play
the role of the compact-operator spectrum, and a growth rate is any lambda
with gamma_n(lambda) = lambda / (g k^2).  For compact-gradient profiles each
curve is strictly decreasing so f_n = g k^2 gamma_n - lambda has exactly one
root and plain bisection is safe; for strictly increasing profiles the
curves are only continuous, so a scan-then-bisect strategy returns every
root it can bracket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .assembly import assemble_forms, coercivity_check
from .errors import BracketError, RankError, SolverError, StepSizeError
from .outer_compact import compact_bc_coeffs, compact_outer_basis
from .outer_general import boundary_coeffs_general
from .profiles import COMPACT

DEFAULT_TOL = 1e-8
SCAN_POINTS = 64


@dataclass
class SpectrumSlice:
    """Largest pencil eigenvalues at one lambda, vectors M_rho-orthonormal."""

    lam: float
    gammas: np.ndarray            # descending, length n_max
    vectors: np.ndarray           # (n_dofs, n_max)
    margin: float = math.nan      # coercivity margin, if requested
    forms: object = field(default=None, repr=False)


@dataclass
class DispersionPoint:
    n: int
    lam: float
    residual: float
    dofs: np.ndarray
    gamma: float
    margin: float = math.nan


@dataclass
class ModeCount:
    eps_star: float
    b: np.ndarray      # b_n = grid-infimum of gamma_n
    N: int


def gamma_spectrum(forms, n_max, want_margin=False, params=None, rank=None):
    """n_max largest eigenpairs of M_rho c = gamma K c.

    Solved through the symmetric-definite reduction (Cholesky of K) done by
    LAPACK; returned vectors are renormalized to c^T M_rho c = 1, which is
    the natural scaling for the compact-operator eigenfunctions.  Passing
    the (lambda-independent) rank of M_rho lets the solver extract only the
    top eigenpairs.
    """
    n = forms.K.shape[0]
    if rank is None:
        w, v = eigh(forms.M_rho, forms.K)
        gam = w[::-1]
        vec = v[:, ::-1]
        rank = int(np.count_nonzero(gam > max(gam[0], 0.0) * 1e-12))
        if n_max > rank:
            raise RankError(f"requested {n_max} eigenpairs but the weighted "
                            f"mass matrix has numerical rank {rank}")
        gam = gam[:n_max].copy()
        vec = vec[:, :n_max].copy()
    else:
        if n_max > rank:
            raise RankError(f"requested {n_max} eigenpairs but the weighted "
                            f"mass matrix has numerical rank {rank}")
        w, v = eigh(forms.M_rho, forms.K, subset_by_index=[n - n_max, n - 1])
        gam = w[::-1].copy()
        vec = v[:, ::-1].copy()
    # eigh returns K-orthonormal vectors; c^T M_rho c = gamma then
    vec /= np.sqrt(gam)[None, :]
    margin = math.nan
    if want_margin:
        margin = coercivity_check(forms, params)
    return SpectrumSlice(lam=forms.lam, gammas=gam, vectors=vec,
                         margin=margin, forms=forms)


class SliceBuilder:
    """Callable lambda -> SpectrumSlice with caching; owns the bc source."""

    def __init__(self, profile, params, space, n_max, bc_factory,
                 check_coercivity=True):
        self.profile = profile
        self.params = params
        self.space = space
        self.n_max = n_max
        self.bc_factory = bc_factory
        self.check_coercivity = check_coercivity
        self.margins = {}
        self._cache = {}
        self._rank = None

    def __call__(self, lam):
        key = float(lam)
        if key not in self._cache:
            if len(self._cache) > 512:
                self._cache.clear()
            bc = self.bc_factory(key)
            forms = assemble_forms(self.profile, self.params, key, bc, self.space)
            if self._rank is None:
                # rank of the weighted mass matrix is lambda-independent
                wm = np.linalg.eigvalsh(forms.M_rho)
                self._rank = int(np.count_nonzero(wm > max(wm[-1], 0.0) * 1e-12))
            sl = gamma_spectrum(forms, self.n_max,
                                want_margin=self.check_coercivity,
                                params=self.params, rank=self._rank)
            self.margins[key] = sl.margin
            self._cache[key] = sl
        return self._cache[key]

    def gamma(self, lam, n):
        return float(self(lam).gammas[n - 1])


def compact_builder(profile, params, space, n_max, check_coercivity=True):
    """Slice builder closing the window at +-a with the exact tail rates."""

    def factory(lam):
        basis = compact_outer_basis(profile, params, lam)
        return compact_bc_coeffs(basis)

    return SliceBuilder(profile, params, space, n_max, factory,
                        check_coercivity)


def general_builder(profile, params, space, n_max, engine, x_minus, x_plus,
                    check_coercivity=True):
    """Slice builder recomputing n_ij at every lambda the root-finder visits."""

    def factory(lam):
        sols = engine.solve(lam)
        left = boundary_coeffs_general(sols["left"], x_minus, "left")
        right = boundary_coeffs_general(sols["right"], x_plus, "right")
        return left, right

    return SliceBuilder(profile, params, space, n_max, factory,
                        check_coercivity)


def _bisect_root(f, lo, hi, flo, fhi, tol_x, tol_f):
    # f(lo) > 0 > f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol_f and (hi - lo) <= 4.0 * tol_x:
            return mid, fm
        if fm > 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        if hi - lo <= tol_x:
            break
    mid = 0.5 * (lo + hi)
    return mid, f(mid)


def solve_dispersion(builder, kind, n, bracket, tol=DEFAULT_TOL, n_scan=SCAN_POINTS):
    """Roots of f_n(lambda) = g k^2 gamma_n(lambda) - lambda inside `bracket`.

    kind == COMPACT: f_n is strictly decreasing, returns the single
    DispersionPoint.  Otherwise: scans n_scan points, bisects every sign
    change, returns the list of DispersionPoint (>= 1 expected for
    n <= N(eps_star)).
    """
    params = builder.params
    gk2 = params.g * params.k**2
    lo, hi = bracket
    if not 0.0 < lo < hi:
        raise BracketError("bracket must satisfy 0 < lambda_lo < lambda_hi")

    def f(lam):
        return gk2 * builder.gamma(lam, n) - lam

    tol_x = tol * hi
    tol_f = tol * gk2

    def finish(lam_root, fval):
        sl = builder(lam_root)
        return DispersionPoint(n=n, lam=float(lam_root),
                               residual=abs(float(fval)),
                               dofs=sl.vectors[:, n - 1].copy(),
                               gamma=float(sl.gammas[n - 1]),
                               margin=sl.margin)

    if kind == COMPACT:
        flo, fhi = f(lo), f(hi)
        if flo <= 0:
            raise BracketError(
                f"f_{n}(lambda_lo={lo:.3e}) = {flo:.3e} <= 0; lower the bracket floor")
        if fhi >= 0:
            raise BracketError(
                f"f_{n}(lambda_hi={hi:.3e}) = {fhi:.3e} >= 0; widen toward sqrt(g/L0)")
        lam, fv = _bisect_root(f, lo, hi, flo, fhi, tol_x, tol_f)
        return finish(lam, fv)

    grid = np.linspace(lo, hi, n_scan)
    vals = np.array([f(x) for x in grid])
    roots = []
    for i in range(n_scan - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(finish(a, 0.0))
        elif fa > 0 > fb:
            lam, fv = _bisect_root(f, a, b, fa, fb, tol_x, tol_f)
            roots.append(finish(lam, fv))
        elif fa < 0 < fb:
            lam, fv = _bisect_root(lambda x: -f(x), a, b, -fa, -fb, tol_x, tol_f)
            roots.append(finish(lam, -fv))
    if not roots:
        raise BracketError(
            f"no sign change of f_{n} on [{lo:.4g}, {hi:.4g}] with {n_scan} "
            "scan points; refine the scan grid")
    return roots


def mode_count(builder, eps_star, lambda_grid):
    """N(eps_star) = largest n whose curve infimum stays above eps_star/(g k^2)."""
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if lambda_grid.size < 16:
        raise SolverError("mode counting needs at least 16 grid points")
    gk2 = builder.params.g * builder.params.k**2
    gam = np.stack([builder(lam).gammas for lam in lambda_grid])
    b = gam.min(axis=0)
    above = b > eps_star / gk2
    N = int(np.max(np.nonzero(above)[0]) + 1) if above.any() else 0
    return ModeCount(eps_star=float(eps_star), b=b, N=N)


def gamma_derivative_check(builder, profile, params, n, lam, h):
    """Compare d(1/gamma_n)/dlambda against the boundary-energy identity.

    The analytic side (compact-gradient profiles) is
      [ int rho0 (k^2 phi^2 + phi'^2)
        + k rho_- phi(-a)^2 + rho_-/(2 tau_-) (phi'(-a) - k phi(-a))^2
        + k rho_+ phi(a)^2  + rho_+/(2 tau_+) (phi'(a) + k phi(a))^2 ]
      / int rho0' phi^2 ,
    the last square carrying +k phi(a) because the right tail differentiates
    to phi' = -k phi on the pure slow branch.  Returns the relative error of
    the centered difference at step h.
    """
    if profile.kind != COMPACT:
        raise SolverError("the derivative identity applies to compact-gradient profiles")
    sl = builder(lam)
    idx = n - 1
    inv_p = 1.0 / builder.gamma(lam + h, n)
    inv_m = 1.0 / builder.gamma(lam - h, n)
    fd = (inv_p - inv_m) / (2.0 * h)
    if abs(inv_p - inv_m) < 1e-9 * abs(inv_p):
        raise StepSizeError("step too small: difference below eigensolve noise")

    space = builder.space
    c = sl.vectors[:, idx]
    xq = space.quad_x
    N0, N1, _, _ = space.tables()
    wq = space.mesh.widths[:, None] * (np.polynomial.legendre.leggauss(5)[1] * 0.5)[None, :]
    idx_map = np.arange(space.mesh.n_elements)[:, None] * 2 + np.arange(4)[None, :]
    ce = c[idx_map]
    phi_q = np.einsum("ei,eiq->eq", ce, N0)
    dphi_q = np.einsum("ei,eiq->eq", ce, N1)
    rho_q = np.asarray(profile.rho(xq))
    drho_q = np.asarray(profile.drho(xq))
    k = params.k
    vol = float((wq * rho_q * (k**2 * phi_q**2 + dphi_q**2)).sum())
    mass = float((wq * drho_q * phi_q**2).sum())

    basis = compact_outer_basis(profile, params, lam)
    phi_l, dphi_l = c[0], c[1]
    phi_r, dphi_r = c[-2], c[-1]
    analytic = (vol
                + k * profile.rho_minus * phi_l**2
                + profile.rho_minus / (2 * basis.tau_minus) * (dphi_l - k * phi_l)**2
                + k * profile.rho_plus * phi_r**2
                + profile.rho_plus / (2 * basis.tau_plus) * (dphi_r + k * phi_r)**2
                ) / mass
    return abs(fd - analytic) / abs(analytic)
