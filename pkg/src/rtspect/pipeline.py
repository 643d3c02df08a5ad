"""End-to-end orchestration: profile + parameters -> roots and global modes.

Wraps the per-module machinery with the default numerical policy: the
reduction window, mesh and builders are set up once per (profile, k) and the
root search walks mode indices with an adaptive bracket floor (deep modes of
compact-gradient profiles sit orders of magnitude below the first one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import HermiteSpace, build_mesh
from .errors import BracketError
from .modes import glue_mode
from .outer_compact import compact_bc_coeffs, compact_outer_basis
from .outer_general import (OuterSolutions, boundary_coeffs_general,
                            coercive_window, gamma_bounds, truncation_points)
from .profiles import COMPACT, profile_bounds
from .spectrum import (ModeCount, compact_builder, general_builder,
                       mode_count, solve_dispersion)

LAMBDA_FLOOR_FACTOR = 1e-4     # default bracket floor, fraction of sqrt(g/L0)


@dataclass
class SolverOptions:
    n_elements: int = 256
    grading: str = "center:4"
    tol: float = 1e-8
    eps_star: float | None = None       # default 0.01 * sqrt(g/L0)
    n_modes: int = 8
    lambda_grid_points: int = 16
    picard_margin: float = 0.3
    picard_panels: int = 160


class Pipeline:
    """Stateful solver context for one (profile, params) pair."""

    def __init__(self, profile, params, opts=None):
        self.profile = profile
        self.params = params
        self.opts = opts or SolverOptions()
        self.bounds = profile_bounds(profile, params)
        self.eps_star = (self.opts.eps_star if self.opts.eps_star
                         else 0.01 * self.bounds.lambda_max)
        self.x_mid = self._gradient_peak()
        self._built = False

    def _gradient_peak(self):
        xs = np.linspace(self.bounds.x_lo, self.bounds.x_hi, 2001)
        return float(xs[np.argmax(self.profile.drho(xs))])

    def build(self):
        if self._built:
            return self
        opts = self.opts
        if self.profile.kind == COMPACT:
            self.engine = None
            self.setup = None
            self.window = (-self.profile.a, self.profile.a)
        else:
            self.gbounds = gamma_bounds(self.profile, self.params,
                                        self.eps_star, self.bounds)
            self.setup = truncation_points(self.profile, self.params,
                                           self.gbounds,
                                           margin=opts.picard_margin,
                                           n_panels=opts.picard_panels)
            self.engine = OuterSolutions(self.profile, self.params, self.setup)
            grid = np.linspace(self.eps_star, self.bounds.lambda_max,
                               opts.lambda_grid_points)
            x_minus, x_plus, self.window_report = coercive_window(
                self.profile, self.params, self.eps_star, grid,
                self.setup, self.engine, self.gbounds)
            self.window = (x_minus, x_plus)
        mesh = build_mesh(self.window[0], self.window[1], opts.n_elements,
                          opts.grading)
        self.space = HermiteSpace(mesh)
        n_max = max(opts.n_modes, 8)
        if self.profile.kind == COMPACT:
            self.builder = compact_builder(self.profile, self.params,
                                           self.space, n_max)
        else:
            self.builder = general_builder(self.profile, self.params,
                                           self.space, n_max, self.engine,
                                           *self.window)
        self._built = True
        return self

    def solve_mode_index(self, n):
        """Dispersion root(s) for curve n; compact kinds walk the floor down."""
        self.build()
        lmax = self.bounds.lambda_max
        if self.profile.kind == COMPACT:
            lo = LAMBDA_FLOOR_FACTOR * lmax
            floor = 4e-8 * self.params.k**2 * self.params.mu / self.profile.rho_plus
            while True:
                try:
                    pt = solve_dispersion(self.builder, COMPACT, n, (lo, lmax),
                                          tol=self.opts.tol)
                    return [pt]
                except BracketError:
                    if lo <= floor:
                        raise
                    lo = max(lo / 100.0, floor)
        return solve_dispersion(self.builder, self.profile.kind, n,
                                (self.eps_star, lmax), tol=self.opts.tol)

    def dispersion(self, n_modes=None):
        """Points for n = 1..n_modes, flattened, with duplicates merged."""
        self.build()
        n_modes = n_modes or self.opts.n_modes
        out = []
        for n in range(1, n_modes + 1):
            out.extend(self.solve_mode_index(n))
        return out

    def count_modes(self) -> ModeCount:
        self.build()
        grid = np.linspace(self.eps_star, self.bounds.lambda_max,
                           max(16, self.opts.lambda_grid_points))
        return mode_count(self.builder, self.eps_star, grid)

    def mode(self, point):
        self.build()
        if self.profile.kind == COMPACT:
            outer = None
        else:
            outer = self.engine.solve(point.lam)
        bc = self.builder.bc_factory(point.lam)
        return glue_mode(point, self.profile, self.params, self.space, bc,
                         outer=outer, x_mid=self.x_mid)

    def boundary_coeffs(self, lam):
        self.build()
        if self.profile.kind == COMPACT:
            return compact_bc_coeffs(
                compact_outer_basis(self.profile, self.params, lam))
        sols = self.engine.solve(lam)
        return (boundary_coeffs_general(sols["left"], self.window[0], "left"),
                boundary_coeffs_general(sols["right"], self.window[1], "right"))
