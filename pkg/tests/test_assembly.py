import copy
import math

import numpy as np
import pytest

from rtspect.assembly import (HermiteSpace, assemble_forms, build_mesh,
                              coercivity_check, endpoint_block,
                              whole_line_identity_check)
from rtspect.errors import SolverError
from rtspect.outer_compact import (BoundaryCoeffs, compact_bc_coeffs,
                                   compact_outer_basis)
from rtspect.profiles import COMPACT, DensityProfile, PhysicalParams, \
    make_profile


def constant_profile(value=1.0, a=1.0):
    # degenerate stub: rho0 = const, rho0' = 0 (only for assembly algebra)
    return DensityProfile(
        kind=COMPACT,
        rho=lambda x, v=value: np.full_like(np.asarray(x, dtype=float), v),
        drho=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        rho_minus=value, rho_plus=value, a=a)


def poly_profile(c0=2.0, c1=0.3, c2=0.1, a=1.0):
    return DensityProfile(
        kind=COMPACT,
        rho=lambda x: c0 + c1 * np.asarray(x, dtype=float)
        + c2 * np.asarray(x, dtype=float)**2,
        drho=lambda x: c1 + 2 * c2 * np.asarray(x, dtype=float),
        rho_minus=c0 - c1 + c2, rho_plus=c0 + c1 + c2, a=a)


def zero_bc(x_minus, x_plus):
    return (BoundaryCoeffs("left", x_minus, 0.0, 0.0, 0.0, 0.0),
            BoundaryCoeffs("right", x_plus, 0.0, 0.0, 0.0, 0.0))


def test_build_mesh_uniform():
    m = build_mesh(-1.0, 1.0, 4, "uniform")
    assert m.nodes == pytest.approx([-1.0, -0.5, 0.0, 0.5, 1.0])
    assert m.widths.sum() == pytest.approx(2.0)


def test_build_mesh_geometric():
    # successive widths in ratio 2, summing to the interval length
    m = build_mesh(0.0, 15.0, 4, "geometric:2")
    assert m.widths == pytest.approx([1.0, 2.0, 4.0, 8.0])


def test_build_mesh_center_ratio():
    m = build_mesh(-1.0, 1.0, 64, "center:4")
    assert m.widths.max() / m.widths.min() <= 4.0 + 1e-12
    assert m.widths.sum() == pytest.approx(2.0)
    # finest at the middle
    assert m.widths[31] < m.widths[0]


def test_build_mesh_errors():
    with pytest.raises(SolverError):
        build_mesh(1.0, -1.0, 8)
    with pytest.raises(SolverError):
        build_mesh(-1.0, 1.0, 2)
    with pytest.raises(SolverError):
        build_mesh(-1.0, 1.0, 8, "spectral")


def test_hermite_reproduces_cubics():
    space = HermiteSpace(build_mesh(-1.0, 2.0, 7, "geometric:1.3"))
    f = lambda x: 0.3 * x**3 - x**2 + 0.5 * x - 2.0
    df = lambda x: 0.9 * x**2 - 2 * x + 0.5
    dofs = space.interpolate(f, df)
    xs = np.linspace(-1.0, 2.0, 113)
    assert space.evaluate(dofs, xs, 0) == pytest.approx(f(xs), abs=1e-12)
    assert space.evaluate(dofs, xs, 1) == pytest.approx(df(xs), abs=1e-11)
    assert space.evaluate(dofs, xs, 2) == pytest.approx(1.8 * xs - 2, abs=1e-10)
    assert space.evaluate(dofs, xs, 3) == pytest.approx(
        np.full_like(xs, 1.8), abs=1e-9)


def test_constant_mode_volume_term():
    # rho0 = 1 stub, theta = c: the lambda-volume term is lam k^2 c^2 (x+ - x-)
    prof = constant_profile(1.0)
    par = PhysicalParams(g=1.0, mu=1.0, k=1.3)
    space = HermiteSpace(build_mesh(-1.0, 1.0, 8, "uniform"))
    lam = 0.7
    forms = assemble_forms(prof, par, lam, zero_bc(-1.0, 1.0), space)
    c = 2.4
    dofs = space.interpolate(lambda x: np.full_like(np.asarray(x, float), c),
                             lambda x: np.zeros_like(np.asarray(x, float)))
    total = float(dofs @ forms.K @ dofs)
    expect = lam * par.k**2 * c**2 * 2.0 + par.mu * par.k**4 * c**2 * 2.0
    assert total == pytest.approx(expect, rel=1e-12)


def test_quadrature_exact_for_quadratic_density():
    # with rho0 a degree-2 polynomial all volume integrands are polynomials
    # of degree <= 8, integrated exactly by the 5-point rule: halving the
    # mesh must reproduce the same forms applied to the same function
    prof = poly_profile()
    par = PhysicalParams(g=1.0, mu=0.8, k=1.1)
    lam = 0.5
    f = lambda x: np.sin(0.0 * x) + 0.25 * x**3 - 0.1 * x + 1.0
    df = lambda x: 0.75 * x**2 - 0.1
    vals = []
    for ne in (6, 12):
        space = HermiteSpace(build_mesh(-1.0, 1.0, ne, "uniform"))
        forms = assemble_forms(prof, par, lam, zero_bc(-1, 1), space)
        dofs = space.interpolate(f, df)
        vals.append((float(dofs @ forms.K @ dofs),
                     float(dofs @ forms.M_rho @ dofs),
                     float(dofs @ forms.G @ dofs)))
    assert vals[0] == pytest.approx(vals[1], rel=5e-12)


def test_compact_endpoint_block_sum_of_squares(bump_profile, params):
    lam = 0.4
    basis = compact_outer_basis(bump_profile, params, lam)
    left, right = compact_bc_coeffs(basis)
    blk = endpoint_block(right, params, bump_profile.rho_plus, lam)
    k, tau = params.k, basis.tau_plus
    for th, dth in ((1.0, 0.0), (0.2, -1.1), (-0.5, 0.9)):
        v = np.array([th, dth])
        got = float(v @ blk @ v)
        sos = params.mu * (k * tau * (k + tau) * (th + dth / (k + tau))**2
                           + (k**2 + k * tau + tau**2) / (k + tau) * dth**2)
        assert got == pytest.approx(sos, rel=1e-12)
    assert np.abs(blk - blk.T).max() <= 1e-12 * np.abs(blk).max()


def test_general_block_symmetric_at_limit_coeffs(params):
    # n11 + n22 + sigma0^2 + k^2 = 0 at the limits kills the defect
    from rtspect.outer_general import limit_boundary_coeffs
    sig = 2.0
    lam = (sig**2 - params.k**2) * params.mu / 3.0  # rho_end = 3
    c = limit_boundary_coeffs(params, sig, "right")
    blk = endpoint_block(c, params, 3.0, lam)
    assert abs(blk[0, 1] - blk[1, 0]) <= 1e-12 * np.abs(blk).max()


def test_forms_symmetry_and_psd(bump_profile, params, bump_pipe):
    sl = bump_pipe.builder(0.3)
    forms = sl.forms
    assert np.array_equal(forms.K, forms.K.T)
    assert forms.asymmetry_norm <= 1e-12 * np.linalg.norm(forms.K, "fro")
    w = np.linalg.eigvalsh(forms.M_rho)
    assert w.min() >= -1e-12 * max(w.max(), 1e-300)
    # numerical rank bounded by the dofs supported where rho0' > 0
    rank = int(np.count_nonzero(w > w.max() * 1e-12))
    nodes = forms.space.mesh.nodes
    supported = int(2 * np.count_nonzero(
        np.asarray(bump_profile.drho(nodes)) > 0) + 4)
    assert rank <= supported


def test_coercivity_margins(bump_profile, params, bump_pipe, bump_bounds):
    # frozen regression: margins at {0.1, 0.5, 1.0} lambda_max stay tiny but
    # nonnegative (the continuum bound is nearly attained)
    expect = {0.1: 2.72e-07, 0.5: 4.53e-07, 1.0: 6.80e-07}
    for frac, ref in expect.items():
        sl = bump_pipe.builder(frac * bump_bounds.lambda_max)
        assert sl.margin >= 0.0
        assert sl.margin <= 1e-5


def test_threshold_values():
    prof = constant_profile()
    space = HermiteSpace(build_mesh(-1, 1, 8, "uniform"))
    f1 = assemble_forms(prof, PhysicalParams(g=1, mu=1.0, k=1.0), 0.1,
                        zero_bc(-1, 1), space)
    assert f1.threshold == pytest.approx(1.0)
    f2 = assemble_forms(prof, PhysicalParams(g=1, mu=0.5, k=2.0), 0.1,
                        zero_bc(-1, 1), space)
    assert f2.threshold == pytest.approx(0.5)


def test_coercivity_check_constant_coefficients():
    # constant density with its exact tail closures: the discrete bound
    # K >= mu min(k^4, 2k^2, 1) G holds with nonnegative margin
    import dataclasses
    from rtspect.outer_general import limit_boundary_coeffs
    prof = constant_profile()
    par = PhysicalParams(g=1, mu=1.0, k=1.0)
    lam = 0.2
    tau = math.sqrt(par.k**2 + lam * 1.0 / par.mu)
    left = dataclasses.replace(limit_boundary_coeffs(par, tau, "left"), x=-1.0)
    right = dataclasses.replace(limit_boundary_coeffs(par, tau, "right"), x=1.0)
    space = HermiteSpace(build_mesh(-1, 1, 16, "uniform"))
    forms = assemble_forms(prof, par, lam, (left, right), space)
    assert forms.asymmetry_norm <= 1e-12 * np.linalg.norm(forms.K, "fro")
    assert coercivity_check(forms, par) >= -1e-10


def test_bc_endpoint_mismatch_rejected(bump_profile, params):
    basis = compact_outer_basis(bump_profile, params, 0.3)
    bc = compact_bc_coeffs(basis)
    space = HermiteSpace(build_mesh(-2.0, 2.0, 8, "uniform"))
    with pytest.raises(SolverError):
        assemble_forms(bump_profile, params, 0.3, bc, space)


@pytest.fixture(scope="module")
def bump_mode(bump_pipe, bump_profile, params):
    pt = bump_pipe.solve_mode_index(1)[0]
    return bump_pipe.mode(pt)


def window_test_dofs(x_lo, x_hi, n=48):
    space = HermiteSpace(build_mesh(x_lo, x_hi, n, "uniform"))
    L = x_hi - x_lo
    dofs = space.interpolate(
        lambda x: np.sin(np.pi * (x - x_lo) / L)**2,
        lambda x: (np.pi / L) * np.sin(2 * np.pi * (x - x_lo) / L))
    return space, dofs


def test_identity_interior_support_trivial(bump_mode, bump_profile, params):
    # test function supported inside the window: the outer correction is 0
    # and both sides are the same integral
    space, dofs = window_test_dofs(-0.8, 0.8)
    defect = whole_line_identity_check(bump_mode, bump_profile, params,
                                       space, dofs)
    assert defect <= 1e-12


def test_identity_straddling_compact(bump_mode, bump_profile, params):
    # straddles both endpoints; for compact profiles the gravity correction
    # vanishes identically outside [-a, a]
    space, dofs = window_test_dofs(-1.9, 1.9)
    defect = whole_line_identity_check(bump_mode, bump_profile, params,
                                       space, dofs)
    assert defect <= 1e-10
    xs = np.linspace(1.0 + 1e-9, 1.9, 100)
    assert np.all(np.asarray(bump_profile.drho(xs)) == 0.0)


def test_identity_detects_broken_closure(bump_mode, bump_profile, params):
    space, dofs = window_test_dofs(-1.9, 1.9)
    import dataclasses
    left, right = bump_mode.bc
    broken = copy.copy(bump_mode)
    broken.bc = (left, dataclasses.replace(right, n12=right.n12 * 1.02))
    defect = whole_line_identity_check(broken, bump_profile, params,
                                       space, dofs)
    assert defect > 1e-8
