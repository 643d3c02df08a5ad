"""Independent growth-rate finder by compound-matrix shooting.

A growth rate is a lambda at which the plane of solutions decaying at +inf
meets the plane decaying at -inf.  Both planes are integrated toward a
matching point as 2-vectors in wedge coordinates (the standard stiffness
cure: raw columns collapse onto the dominant direction, the wedge of the
pair does not), and the Evans value is their 4-form pairing there.  This
path shares nothing with the Galerkin machinery: it builds the companion
system directly from the mode equation and integrates it with an adaptive
Runge-Kutta pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import SolverError, StiffnessError
from .profiles import COMPACT

# wedge basis ordering
_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_RENORM_AT = 1e6


@dataclass(frozen=True)
class EvansSample:
    lam: float
    value: float            # signed, rescaled pairing at the matching point
    scale_exponent: float   # log of the positive factor removed from value

    @property
    def sign(self):
        return math.copysign(1.0, self.value) if self.value != 0 else 0.0

    @property
    def log_magnitude(self):
        return math.log(abs(self.value)) + self.scale_exponent \
            if self.value != 0 else -math.inf


def _companion(profile, params, lam, x):
    """A(x) of U' = A U for U = (phi, phi', phi'', phi''')."""
    k, mu, g = params.k, params.mu, params.g
    rho = float(profile.rho(x))
    drho = float(profile.drho(x))
    A = np.zeros((4, 4))
    A[0, 1] = A[1, 2] = A[2, 3] = 1.0
    A[3, 0] = -lam * k**2 * rho / mu - k**4 + drho * g * k**2 / (lam * mu)
    A[3, 1] = drho * lam / mu
    A[3, 2] = lam * rho / mu + 2.0 * k**2
    return A


def _wedge_index_tables():
    # B[(i,j),(k,l)] = A[i,k] d_jl - A[i,l] d_jk - A[j,k] d_il + A[j,l] d_ik
    rows, cols, src_i, src_j, sgn = [], [], [], [], []
    for r, (i, j) in enumerate(_PAIRS):
        for c, (k, l) in enumerate(_PAIRS):
            for s, (a, b, d1, d2) in enumerate(((i, k, j, l), (i, l, j, k),
                                                (j, k, i, l), (j, l, i, k))):
                if d1 == d2:
                    rows.append(r)
                    cols.append(c)
                    src_i.append(a)
                    src_j.append(b)
                    sgn.append(1.0 if s in (0, 3) else -1.0)
    return (np.array(rows), np.array(cols), np.array(src_i),
            np.array(src_j), np.array(sgn))


_W_ROWS, _W_COLS, _W_I, _W_J, _W_SGN = _wedge_index_tables()


def _wedge_matrix(A):
    """Induced action on 2-vectors: d(u ^ v) = Au ^ v + u ^ Av."""
    B = np.zeros((6, 6))
    np.add.at(B, (_W_ROWS, _W_COLS), _W_SGN * A[_W_I, _W_J])
    return B


def _wedge_of(u, v):
    return np.array([u[i] * v[j] - u[j] * v[i] for i, j in _PAIRS])


def _pairing(a, b):
    """Coefficient of e0^e1^e2^e3 in a ^ b."""
    return (a[0] * b[5] - a[1] * b[4] + a[2] * b[3]
            + a[3] * b[2] - a[4] * b[1] + a[5] * b[0])


def _decay_rates(profile, params, lam, side):
    k, mu = params.k, params.mu
    rho = profile.rho_plus if side == "right" else profile.rho_minus
    sig = math.sqrt(k * k + lam * rho / mu)
    return k, sig


def _initial_plane(profile, params, lam, side):
    k, sig = _decay_rates(profile, params, lam, side)
    if side == "right":
        u = np.array([1.0, -k, k * k, -k**3])
        v = np.array([1.0, -sig, sig * sig, -sig**3])
    else:
        u = np.array([1.0, k, k * k, k**3])
        v = np.array([1.0, sig, sig * sig, sig**3])
    w = _wedge_of(u, v)
    nrm = np.linalg.norm(w)
    return w / nrm, math.log(nrm)


def _integrate(profile, params, lam, x_from, x_to, w0, rtol):
    """Shifted wedge integration with running renormalization.

    The growth-dominant rate of the target plane is +-(k + sigma0), which is
    removed as a running shift so the state stays O(1); the accumulated
    shift plus renormalizations is returned as a log scale.
    """
    k, mu = params.k, params.mu
    direction = 1.0 if x_to > x_from else -1.0

    def shift(x):
        return k + math.sqrt(k * k + lam * float(profile.rho(x)) / mu)

    def rhs(x, w):
        B = _wedge_matrix(_companion(profile, params, lam, x))
        return (B - direction * shift(x) * np.eye(6)) @ w

    n_seg = max(2, int(abs(x_to - x_from) / 8.0))
    xs = np.linspace(x_from, x_to, n_seg + 1)
    w = w0.copy()
    log_scale = 0.0
    for a, b in zip(xs[:-1], xs[1:]):
        sol = solve_ivp(rhs, (a, b), w, method="RK45",
                        rtol=rtol, atol=rtol * 1e-2, dense_output=False)
        if not sol.success:
            raise StiffnessError(f"wedge integration failed on [{a:.3g}, {b:.3g}]: "
                                 f"{sol.message}; reduce the step / tolerance")
        w = sol.y[:, -1]
        nrm = np.linalg.norm(w)
        if nrm > _RENORM_AT or nrm < 1.0 / _RENORM_AT:
            w /= nrm
            log_scale += math.log(nrm)
    # account for the removed shift (a positive factor, sign-neutral)
    return w, log_scale


def _matching_bounds(profile, params, lam_ref=None):
    if profile.kind == COMPACT:
        pad = 1e-3 * profile.a
        return -profile.a - pad, profile.a + pad
    from .profiles import limit_box
    lo, hi = limit_box(profile, rel_tol=1e-10)
    return lo, hi


def evans_function(profile, params, lam, x_minus=None, x_plus=None,
                   match_x=None, rtol=1e-10):
    """Signed Evans value at one lambda.

    Integrates the decaying 2-plane from x_plus backward and from x_minus
    forward to the matching point (midpoint by default) and pairs them.
    Zero exactly at growth rates; the sign is continuous along lambda scans.
    """
    if lam <= 0:
        raise SolverError("Evans function needs lambda > 0")
    lo, hi = _matching_bounds(profile, params)
    x_minus = lo if x_minus is None else x_minus
    x_plus = hi if x_plus is None else x_plus
    if x_minus > lo + 1e-12 or x_plus < hi - 1e-12:
        raise SolverError("endpoints must sit at or beyond the truncation points")
    m = 0.5 * (x_minus + x_plus) if match_x is None else float(match_x)

    w_r, log_r0 = _initial_plane(profile, params, lam, "right")
    w_l, log_l0 = _initial_plane(profile, params, lam, "left")
    w_r, log_r = _integrate(profile, params, lam, x_plus, m, w_r, rtol)
    w_l, log_l = _integrate(profile, params, lam, x_minus, m, w_l, rtol)
    raw = _pairing(w_l, w_r)
    return EvansSample(lam=float(lam), value=float(raw),
                       scale_exponent=log_r + log_l + log_r0 + log_l0)


def find_roots(profile, params, scan_grid, tol=1e-10, rtol=1e-10):
    """Bisect every sign change of the Evans value over `scan_grid`."""
    grid = np.sort(np.asarray(scan_grid, dtype=float))
    vals = [evans_function(profile, params, lam, rtol=rtol).value for lam in grid]
    roots = []
    for i in range(len(grid) - 1):
        va, vb = vals[i], vals[i + 1]
        if va == 0.0:
            roots.append(float(grid[i]))
            continue
        if va * vb < 0:
            a, b = grid[i], grid[i + 1]
            fa = va
            while b - a > tol:
                mid = 0.5 * (a + b)
                fm = evans_function(profile, params, mid, rtol=rtol).value
                if fm == 0.0:
                    a = b = mid
                    break
                if fa * fm < 0:
                    b = mid
                else:
                    a, fa = mid, fm
            roots.append(0.5 * (a + b))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots
