"""Global modes: inner Galerkin solution glued to decaying tails.

A dispersion root gives the inner coefficients on the window; the tails are
pinned by matching (phi, phi') at the endpoints, which is exact by
construction, while the continuity of phi'' and phi''' across the endpoints
is then a consequence of the boundary closure and converges with the mesh.
Modes are normalized to sup |phi| = 1 with the sign fixed at the density-
gradient maximizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExtrapolationError, GluingError
from .outer_compact import (compact_outer_basis, eval_outer, extension_coeffs,
                            outer_fourth_derivative)
from .profiles import COMPACT


@dataclass
class GlobalMode:
    """A characteristic pair (lambda_n, phi_n) evaluable on the whole line."""

    lam: float
    n: int
    kind: str
    space: object
    dofs: np.ndarray
    bc: tuple                      # (left, right) BoundaryCoeffs
    outer_left: tuple              # compact: ("compact", A1, A2, basis)
    outer_right: tuple             # general: ("general", B1, B2, sol_a, sol_b)
    x_minus: float
    x_plus: float
    x_mid: float
    norm_scale: float = 1.0

    def eval(self, x):
        """(phi, phi', phi'', phi''') at x, piecewise inner/outer."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xv = np.atleast_1d(x).astype(float)
        out = np.zeros((4, xv.size))
        inner = (xv >= self.x_minus) & (xv <= self.x_plus)
        if inner.any():
            for j in range(4):
                out[j, inner] = self.space.evaluate(self.dofs, xv[inner], j)
        for side, mask in (("right", xv > self.x_plus), ("left", xv < self.x_minus)):
            if mask.any():
                vals = _eval_tail(self, side, xv[mask])
                for j in range(4):
                    out[j, mask] = vals[j]
        if scalar:
            return tuple(float(out[j, 0]) for j in range(4))
        return tuple(out[j] for j in range(4))

    def fourth_derivative_outer(self, x, side):
        return _tail_fourth_derivative(self, side, np.asarray(x, dtype=float))


def eval_mode(mode, x):
    """(phi, phi', phi'', phi''') of a glued mode at x; functional form."""
    return mode.eval(x)


def _eval_tail(mode, side, x):
    data = mode.outer_right if side == "right" else mode.outer_left
    if data[0] == "compact":
        _, a1, a2, basis = data
        return eval_outer(a1, a2, basis, side, x)
    _, b1, b2, sol_a, sol_b, ph_a0, ph_b0 = data
    hi = sol_a.xs[-1] if side == "right" else math.inf
    lo = -math.inf if side == "right" else sol_a.xs[0]
    if np.any(x > hi) or np.any(x < lo):
        raise ExtrapolationError(
            "evaluation beyond the truncated outer grid; enlarge X_max")
    ua = sol_a.normalized_at(x) * np.exp(-(sol_a.phase_at(x) - ph_a0))[..., None]
    ub = sol_b.normalized_at(x) * np.exp(-(sol_b.phase_at(x) - ph_b0))[..., None]
    vals = b1 * ua + b2 * ub
    return tuple(vals[..., j] for j in range(4))


def _tail_fourth_derivative(mode, side, x):
    data = mode.outer_right if side == "right" else mode.outer_left
    if data[0] == "compact":
        _, a1, a2, basis = data
        return outer_fourth_derivative(a1, a2, basis, side, x)
    _, b1, b2, sol_a, sol_b, ph_a0, ph_b0 = data
    out = 0.0
    for bcoef, sol, ph0 in ((b1, sol_a, ph_a0), (b2, sol_b, ph_b0)):
        sol._ensure_splines()
        u4 = sol._splines[3](x)
        du4 = sol._splines[3](x, 1)
        dph = sol._phase_spline(x, 1)
        out = out + bcoef * np.exp(-(sol.phase_at(x) - ph0)) * (du4 - dph * u4)
    return out


def glue_mode(point, profile, params, space, bc, outer=None, x_mid=0.0):
    """Extend a dispersion eigenvector by decaying tails into a global mode.

    outer: None for compact-gradient profiles (closed forms), or the
    per-lambda dict of decaying solutions from the outer engine.  The tail
    amplitudes match (phi, phi') at the endpoints exactly; the mode is then
    normalized to sup |phi| = 1 with phi(x_mid) >= 0 (falling back to the
    slope when the mode vanishes at x_mid).
    """
    dofs = np.asarray(point.dofs, dtype=float).copy()
    if not np.any(np.abs(dofs) > 0):
        raise GluingError("trivial inner solution cannot be glued into a mode")
    lam = point.lam
    x_minus, x_plus = space.mesh.x_minus, space.mesh.x_plus
    phi_l, dphi_l = dofs[0], dofs[1]
    phi_r, dphi_r = dofs[-2], dofs[-1]

    if profile.kind == COMPACT and outer is None:
        basis = compact_outer_basis(profile, params, lam)
        a1r, a2r = extension_coeffs(phi_r, dphi_r, basis, "right")
        a1l, a2l = extension_coeffs(phi_l, dphi_l, basis, "left")
        outer_right = ("compact", a1r, a2r, basis)
        outer_left = ("compact", a1l, a2l, basis)
    else:
        sols_r = outer["right"]
        sols_l = outer["left"]
        outer_right = _general_tail(sols_r["U1+"], sols_r["U2+"], x_plus,
                                    phi_r, dphi_r)
        outer_left = _general_tail(sols_l["U3-"], sols_l["U4-"], x_minus,
                                   phi_l, dphi_l)

    mode = GlobalMode(lam=lam, n=point.n, kind=profile.kind, space=space,
                      dofs=dofs, bc=bc, outer_left=outer_left,
                      outer_right=outer_right, x_minus=x_minus, x_plus=x_plus,
                      x_mid=x_mid)
    _normalize(mode, profile)
    return mode


def _general_tail(sol_a, sol_b, x_end, phi_end, dphi_end):
    ph_a0 = float(sol_a.phase_at(x_end))
    ph_b0 = float(sol_b.phase_at(x_end))
    ua = sol_a.normalized_at(x_end)
    ub = sol_b.normalized_at(x_end)
    A = np.array([[ua[0], ub[0]], [ua[1], ub[1]]])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-10 * (np.linalg.norm(A[0]) * np.linalg.norm(A[1]) + 1e-300):
        raise GluingError(f"gluing system singular at x={x_end:.4g}")
    b1, b2 = np.linalg.solve(A, np.array([phi_end, dphi_end]))
    return ("general", float(b1), float(b2), sol_a, sol_b, ph_a0, ph_b0)


def _normalize(mode, profile):
    xs_in = np.unique(np.concatenate(
        [mode.space.mesh.nodes,
         mode.space.quad_x.ravel()]))
    phi_in = mode.space.evaluate(mode.dofs, xs_in, 0)
    peak = float(np.max(np.abs(phi_in)))
    for side, x0, x1 in (("right", mode.x_plus, _tail_reach(mode, "right")),
                         ("left", _tail_reach(mode, "left"), mode.x_minus)):
        xs = np.linspace(x0, x1, 200)
        vals = _eval_tail(mode, side, xs)[0]
        peak = max(peak, float(np.max(np.abs(vals))))
    if peak == 0.0:
        raise GluingError("mode vanishes identically")
    sign_ref = float(mode.space.evaluate(mode.dofs, mode.x_mid, 0))
    if abs(sign_ref) < 1e-8 * peak:
        sign_ref = float(mode.space.evaluate(mode.dofs, mode.x_mid, 1))
    s = -1.0 if sign_ref < 0 else 1.0
    scale = s / peak
    mode.dofs *= scale
    mode.norm_scale = scale
    for attr in ("outer_left", "outer_right"):
        data = getattr(mode, attr)
        if data[0] == "compact":
            setattr(mode, attr, ("compact", data[1] * scale, data[2] * scale,
                                 data[3]))
        else:
            setattr(mode, attr, ("general", data[1] * scale, data[2] * scale,
                                 *data[3:]))


def _tail_reach(mode, side):
    data = mode.outer_right if side == "right" else mode.outer_left
    if data[0] == "compact":
        k = data[3].k
        reach = 12.0 / k
        return mode.x_plus + reach if side == "right" else mode.x_minus - reach
    sol = data[3]
    return sol.xs[-1] if side == "right" else sol.xs[0]


def gluing_jumps(mode):
    """Relative jumps of phi..phi''' across both endpoints (inner vs tail).

    phi and phi' are nodal unknowns, compared raw.  The inner phi'' and
    phi''' at the junction are the variationally consistent fluxes of the C1
    discretization, recovered through the boundary closure from the
    superconvergent endpoint pair (raw cubic traces of second and third
    derivatives converge only at O(h^2) and O(h) and would mask the gluing
    quality entirely).
    """
    out = {}
    left, right = mode.bc
    for side, x_e, coeffs in (("left", mode.x_minus, left),
                              ("right", mode.x_plus, right)):
        p = float(mode.space.evaluate(mode.dofs, x_e, 0))
        dp = float(mode.space.evaluate(mode.dofs, x_e, 1))
        inner = [p, dp,
                 -coeffs.n11 * p - coeffs.n12 * dp,
                 -coeffs.n21 * p - coeffs.n22 * dp]
        tail = [float(v[0]) for v in _eval_tail(mode, side, np.array([x_e]))]
        for j in range(4):
            scale = max(abs(inner[j]), abs(tail[j]), 1e-300)
            out[(side, j)] = abs(inner[j] - tail[j]) / scale
    return out


def raw_trace_defects(mode):
    """Boundary-closure residual of the raw cubic traces (mesh diagnostic).

    |n11 phi + n12 phi' + phi''| and |n21 phi + n22 phi' + phi'''| with all
    quantities read directly off the end elements; decreases like O(h^2) and
    O(h) under refinement.
    """
    out = {}
    left, right = mode.bc
    for side, x_e, c in (("left", mode.x_minus, left),
                         ("right", mode.x_plus, right)):
        vals = [float(mode.space.evaluate(mode.dofs, x_e, j)) for j in range(4)]
        r1 = c.n11 * vals[0] + c.n12 * vals[1] + vals[2]
        r2 = c.n21 * vals[0] + c.n22 * vals[1] + vals[3]
        out[(side, 2)] = abs(r1) / max(abs(vals[2]), 1e-300)
        out[(side, 3)] = abs(r2) / max(abs(vals[3]), 1e-300)
    return out


def _window_test(c, w):
    """C1 window sin^2(pi (x - c + w) / (2w)) on [c-w, c+w] and derivatives."""
    f = math.pi / (2.0 * w)

    def th(x):
        u = np.clip((np.asarray(x) - c + w) * f, 0.0, math.pi)
        return np.sin(u) ** 2

    def dth(x):
        u = np.clip((np.asarray(x) - c + w) * f, 0.0, math.pi)
        return f * np.sin(2.0 * u)

    def d2th(x):
        u = np.clip((np.asarray(x) - c + w) * f, 0.0, math.pi)
        return 2.0 * f * f * np.cos(2.0 * u)

    return th, dth, d2th


def ode_residual(mode, profile, params, rho_m, n_outer=200, n_stations=24):
    """Scaled sup-norm defect of the mode equation.

    Inside (and straddling) the window the equation is tested in weak form
    against a battery of smooth C1 window functions, which are not in the
    trial space: each station reports
      | lam^2 int rho0 (k^2 phi th + phi' th')
        + lam mu int (phi'' th'' + 2k^2 phi' th' + k^4 phi th)
        - g k^2 int rho0' phi th | / (g k^2 rho_m sup|phi| int th).
    Smooth tests pair with the L2 error of the Galerkin solution, so this
    defect shrinks far faster than pointwise derivative errors (a pointwise
    fourth derivative of a cubic is meaningless).  Outside the window the
    strong residual is evaluated directly: closed tails are exact, sampled
    tails differentiate their splines.  Returns (total, inner, outer).
    """
    lam, k, mu, g = mode.lam, params.k, params.mu, params.g
    scale = g * k**2 * rho_m
    span = mode.x_plus - mode.x_minus
    w = span / 16.0
    reach_r = _tail_reach(mode, "right")
    reach_l = _tail_reach(mode, "left")
    centers = np.linspace(max(mode.x_minus - 0.5 * w, reach_l + 1.01 * w),
                          min(mode.x_plus + 0.5 * w, reach_r - 1.01 * w),
                          n_stations)
    gl_x, gl_w = np.polynomial.legendre.leggauss(10)
    nodes = mode.space.mesh.nodes
    inner_res = 0.0
    for c in centers:
        th, dth, d2th = _window_test(c, w)
        breaks = [c - w, c + w]
        breaks += [t for t in nodes if c - w < t < c + w]
        breaks += [e for e in (mode.x_minus, mode.x_plus) if c - w < e < c + w]
        breaks = np.array(sorted(breaks))
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        halves = 0.5 * np.diff(breaks)
        xq = (mids[:, None] + halves[:, None] * gl_x[None, :]).ravel()
        wq = (halves[:, None] * gl_w[None, :]).ravel()
        phi, dphi, d2phi, _ = mode.eval(xq)
        rho = np.asarray(profile.rho(xq))
        drho = np.asarray(profile.drho(xq))
        r = float((wq * (lam**2 * rho * (k**2 * phi * th(xq) + dphi * dth(xq))
                         + lam * mu * (d2phi * d2th(xq)
                                       + 2 * k**2 * dphi * dth(xq)
                                       + k**4 * phi * th(xq))
                         - g * k**2 * drho * phi * th(xq))).sum())
        mass = float((wq * th(xq)).sum())
        inner_res = max(inner_res, abs(r) / (scale * mass))

    outer_res = 0.0
    for side in ("left", "right"):
        x0 = mode.x_plus if side == "right" else reach_l
        x1 = reach_r if side == "right" else mode.x_minus
        pad = 1e-6 * (x1 - x0)
        xs = np.linspace(x0 + pad, x1 - pad, n_outer)
        p, dp, d2p, d3p = _eval_tail(mode, side, xs)
        d4p = _tail_fourth_derivative(mode, side, xs)
        rr = np.asarray(profile.rho(xs))
        dr = np.asarray(profile.drho(xs))
        res = (-lam**2 * (rr * k**2 * p - dr * dp - rr * d2p)
               - lam * mu * (d4p - 2 * k**2 * d2p + k**4 * p)
               + g * k**2 * dr * p)
        outer_res = max(outer_res, float(np.max(np.abs(res)) / scale))
    return max(inner_res, outer_res), inner_res, outer_res


@dataclass
class PerturbationField:
    """Velocity, density and pressure amplitudes of one normal mode."""

    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    d3phi: np.ndarray
    zeta: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    P0: np.ndarray | None = None


def reconstruct_fields(mode, profile, params, grid, with_background=False):
    """Linearized perturbation amplitudes along `grid`.

    zeta = -rho0' phi / lam; the horizontal velocities eliminate the
    pressure through psi = -k1 phi'/k^2, theta = -k2 phi'/k^2, and
    q = (mu phi''' - (lam rho0 + mu k^2) phi') / k^2.  These satisfy the
    divergence-free relation k1 psi + k2 theta + phi' = 0 identically.
    """
    lam, k = mode.lam, params.k
    grid = np.asarray(grid, dtype=float)
    phi, dphi, d2phi, d3phi = mode.eval(grid)
    rho = np.asarray(profile.rho(grid))
    drho = np.asarray(profile.drho(grid))
    zeta = -drho * phi / lam
    psi = -params.k1 * dphi / k**2
    theta = -params.k2 * dphi / k**2
    q = (params.mu * d3phi - (lam * rho + params.mu * k**2) * dphi) / k**2
    P0 = None
    if with_background:
        # P0' = -g rho0, anchored at P0(0) = 0
        xs = np.sort(np.unique(np.concatenate([[0.0], grid])))
        fine = np.linspace(xs[0], xs[-1], 4097)
        vals = np.asarray(profile.rho(fine))
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (vals[1:] + vals[:-1]) * np.diff(fine))])
        base = np.interp(0.0, fine, cum)
        P0 = -params.g * (np.interp(grid, fine, cum) - base)
    return PerturbationField(x=grid, phi=phi, dphi=dphi, d2phi=d2phi,
                             d3phi=d3phi, zeta=zeta, psi=psi, theta=theta,
                             q=q, P0=P0)
