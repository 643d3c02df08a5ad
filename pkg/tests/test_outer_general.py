import math

import numpy as np
import pytest

from rtspect import outer_general as og
from rtspect.errors import SolverError
from rtspect.outer_compact import compact_bc_coeffs, compact_outer_basis
from rtspect.profiles import PhysicalParams, make_profile, profile_bounds

# frozen regression values (tanh 1..3, ell=1, g=mu=k=1)
GAMMA_M_EPS001 = 15360.215415
WINDOW_X_EPS001 = 5.768323
WINDOW_X_EPS01 = 3.468928


@pytest.fixture(scope="module")
def ctx(tanh_profile, params, tanh_bounds):
    eps = 0.01 * tanh_bounds.lambda_max
    gb = og.gamma_bounds(tanh_profile, params, eps, tanh_bounds)
    setup = og.truncation_points(tanh_profile, params, gb)
    eng = og.OuterSolutions(tanh_profile, params, setup)
    return tanh_profile, params, tanh_bounds, eps, gb, setup, eng


def test_eigenvalues_of_L(ctx):
    prof, par, *_ = ctx
    sm = og.system_matrices(prof, par, 0.4, 0.6)
    ev = np.sort(np.linalg.eigvals(sm.L).real)
    expect = np.sort([-par.k, -sm.sigma0, par.k, sm.sigma0])
    assert ev == pytest.approx(expect, rel=1e-10)


def test_P_inverse_identity():
    prof = make_profile("tanh", rho_minus=1.5, rho_plus=2.5, ell=1.0)
    par = PhysicalParams(g=1.0, mu=1.0, k=1.0)
    x = float(np.arctanh(0.0))  # rho0 = 2 at the center
    sm = og.system_matrices(prof, par, x, 1.0)
    assert sm.sigma0 == pytest.approx(math.sqrt(3.0), rel=1e-14)
    assert np.abs(sm.P @ sm.Pinv - np.eye(4)).max() <= 1e-12


def test_R_single_row(ctx):
    prof, par, *_ = ctx
    sm = og.system_matrices(prof, par, 0.0, 0.5)
    R = sm.R
    assert R[3, 0] == pytest.approx(par.g * par.k**2 / (0.5 * par.mu))
    assert R[3, 1] == pytest.approx(0.5 / par.mu)
    R2 = R.copy()
    R2[3] = 0.0
    assert np.all(R2 == 0.0)


def test_diagonalization_identity(ctx):
    prof, par, *_ = ctx
    for x in (-2.0, 0.0, 1.5):
        for lam in (0.01, 0.3, 0.7):
            sm = og.system_matrices(prof, par, x, lam)
            err = np.linalg.norm(sm.L - sm.P @ sm.D @ sm.Pinv, "fro")
            assert err <= 1e-10 * np.linalg.norm(sm.L, "fro")


def test_coupling_matrix_against_brute_force(ctx):
    # V' = (D + rho0' M) V must match P^-1 (L + rho0' R) P - P^-1 P' - D
    prof, par, *_ = ctx
    x, lam, h = 0.3, 0.45, 1e-6
    sm = og.system_matrices(prof, par, x, lam)
    drho = float(prof.drho(x))
    Pp = (og.system_matrices(prof, par, x + h, lam).P
          - og.system_matrices(prof, par, x - h, lam).P) / (2 * h)
    brute = sm.Pinv @ (sm.L + drho * sm.R) @ sm.P - sm.Pinv @ Pp - sm.D
    assert np.abs(brute - drho * sm.M).max() <= 1e-8


def test_transformed_gravity_block_structure(ctx):
    # P^-1 R P entries follow (gk +- lam^2), (gk^2/sigma +- lam^2) scalings
    prof, par, *_ = ctx
    x, lam = 0.2, 0.5
    sm = og.system_matrices(prof, par, x, lam)
    rho = float(prof.rho(x))
    sig = sm.sigma0
    core = sm.Pinv @ sm.R @ sm.P
    a_m = par.g * par.k - lam**2
    a_p = par.g * par.k + lam**2
    b_m = par.g * par.k**2 / sig - lam**2
    pref = 1.0 / (2 * lam**2 * rho)
    assert core[0, 0] == pytest.approx(pref * a_m, rel=1e-12)
    assert core[0, 2] == pytest.approx(-pref * a_p, rel=1e-12)
    assert core[0, 1] == pytest.approx(pref * par.k**2 * b_m / sig**2, rel=1e-12)
    assert core[2, 0] == pytest.approx(core[0, 0], rel=1e-12)  # rows repeat
    assert core[1, 1] == pytest.approx(-pref * b_m, rel=1e-12)


def test_gamma_p_values(tanh_profile, tanh_bounds):
    gb1 = og.gamma_bounds(tanh_profile, PhysicalParams(g=1, mu=1, k=1.0), 0.01)
    assert gb1.Gamma_p == 1.0
    gbh = og.gamma_bounds(tanh_profile, PhysicalParams(g=1, mu=1, k=0.5), 0.01)
    assert gbh.Gamma_p == 8.0


def test_gamma_m_regression(tanh_profile, params, tanh_bounds):
    gb = og.gamma_bounds(tanh_profile, params, 0.01, tanh_bounds)
    assert gb.Gamma_m == pytest.approx(GAMMA_M_EPS001, rel=1e-6)
    assert gb.delta_eps < gb.delta_s
    with pytest.raises(SolverError):
        og.gamma_bounds(tanh_profile, params, 2 * tanh_bounds.lambda_max)


def test_truncation_points_tanh_inversion(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    # rho_plus - rho0(x) = (rho_plus - rho_minus)(1 - tanh x)/2 inverts in
    # closed form at the margin level
    margin = setup.margin
    target = 1.0 - 2.0 * margin / (gb.Gamma_m * (prof.rho_plus - prof.rho_minus))
    assert 0 < target < 1
    assert setup.x_tilde_plus == pytest.approx(np.arctanh(target), rel=1e-6)
    assert gb.Gamma_m * (prof.rho_plus - prof.rho(setup.x_tilde_plus)) <= margin * (1 + 1e-9)
    assert gb.Gamma_m * (prof.rho_plus - prof.rho(setup.X_max)) <= 1.1e-10


def test_truncation_moves_out_with_gamma_m(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    import dataclasses
    gb2 = dataclasses.replace(gb, Gamma_m=2 * gb.Gamma_m)
    setup2 = og.truncation_points(prof, par, gb2)
    assert setup2.x_tilde_plus > setup.x_tilde_plus


def test_margin_must_stay_below_half(ctx):
    prof, par, pb, eps, gb, *_ = ctx
    with pytest.raises(SolverError):
        og.truncation_points(prof, par, gb, margin=0.6)
    og.truncation_points(prof, par, gb, margin=0.49, n_panels=24)


def test_picard_contraction_and_updates(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    for lam in (eps, pb.lambda_max):
        sols = eng.solve(lam)
        for side in ("right", "left"):
            for s in sols[side].values():
                u = s.updates
                assert u[0] <= 1.0 + 1e-12
                for j in range(1, len(u)):
                    if u[j - 1] > 1e-10:
                        assert u[j] <= (0.5 + 1e-6) * u[j - 1]
                # cumulative halving of the update norms
                for j, uj in enumerate(u[:-1]):
                    assert uj <= 0.5**(j - 1) * (1 + 1e-9)


def test_limits_and_wronskian(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    lam = 0.3
    sols = eng.solve(lam)
    u1, u2 = sols["right"]["U1+"], sols["right"]["U2+"]
    k, mu = par.k, par.mu
    sig_p = math.sqrt(k**2 + lam * prof.rho_plus / mu)
    det = (u1.normalized[:, 0] * u2.normalized[:, 1]
           - u1.normalized[:, 1] * u2.normalized[:, 0])
    target = -lam * prof.rho_plus / (mu * k**3 * sig_p**3 * (k + sig_p))
    assert det[-1] == pytest.approx(target, rel=1e-9)
    # phase-normalized samples approach the documented limit 4-vectors
    assert u2.normalized[-1] == pytest.approx(u2.limit, abs=1e-12)
    u3, u4 = sols["left"]["U3-"], sols["left"]["U4-"]
    assert u4.normalized[0] == pytest.approx(u4.limit, abs=1e-12)
    assert np.abs(u3.normalized[0] - u3.limit).max() <= 0.2  # in-span drift only


def test_solutions_satisfy_the_system(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    lam = 0.3
    sols = eng.solve(lam)
    h = 1e-5
    for s in (sols["right"]["U1+"], sols["left"]["U4-"]):
        xs = (np.linspace(setup.x_tilde_plus + 0.5, setup.x_tilde_plus + 3, 5)
              if s.side == "right"
              else np.linspace(setup.x_tilde_minus - 3, setup.x_tilde_minus - 0.5, 5))
        for x in xs:
            U = s.raw_at(x)
            dU = (s.raw_at(x + h) - s.raw_at(x - h)) / (2 * h)
            sm = og.system_matrices(prof, par, x, lam)
            rhs = (sm.L + float(prof.drho(x)) * sm.R) @ U
            assert np.abs(dU - rhs).max() <= 1e-8 * max(np.abs(rhs).max(), 1e-30)


def test_boundary_coeff_limits(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    lam = 0.4
    sols = eng.solve(lam)
    sig_m, sig_p = eng.sigma_limits(lam)
    right = og.boundary_coeffs_general(sols["right"], setup.right_edges[-1], "right")
    lim_r = og.limit_boundary_coeffs(par, sig_p, "right")
    assert right.as_tuple() == pytest.approx(lim_r.as_tuple(), abs=1e-9)
    left = og.boundary_coeffs_general(sols["left"], setup.left_edges[0], "left")
    lim_l = og.limit_boundary_coeffs(par, sig_m, "left")
    assert left.as_tuple() == pytest.approx(lim_l.as_tuple(), abs=1e-9)


def test_limit_discriminant_closed_form():
    # k=1, sigma+=2: (n11 - n22 - k^2 - sigma^2)^2 + 4 n12 n21 = -56
    par = PhysicalParams(g=1.0, mu=1.0, k=1.0)
    c = og.limit_boundary_coeffs(par, 2.0, "right")
    disc = (c.n11 - c.n22 - 1.0 - 4.0)**2 + 4 * c.n12 * c.n21
    assert disc == pytest.approx(-56.0)
    assert disc == pytest.approx(-4 * 1.0 * 2.0 * (1 + 2 + 4))
    margins = og.endpoint_psd_margins(c, 1.0, 2.0)
    assert min(margins) > 0


def test_left_end_sign_pattern_mirrors():
    par = PhysicalParams(g=1.0, mu=1.0, k=1.0)
    c = og.limit_boundary_coeffs(par, 2.0, "left")
    assert c.n12 < 0 < c.n21
    margins = og.endpoint_psd_margins(c, 1.0, 2.0)
    assert min(margins) > 0
    # direct positive semidefiniteness probes (1,0) and (0,1) plus the
    # discriminant agree with the margin tests
    A, C, neg_disc = margins
    for th, dth in ((1.0, 0.0), (0.0, 1.0), (0.7, -1.3)):
        bv = A * th**2 + C * dth**2
        bv_cross = (c.n22 - c.n11 + 1.0 + 4.0) * th * dth
        assert bv + bv_cross >= -1e-12 or neg_disc < 0  # PSD certificate


def test_general_matches_compact_formulas_far_out(ctx):
    # at an endpoint where the profile sits within 1e-9 of its limits the
    # general coefficients agree with the closed compact formulas evaluated
    # with tau from rho0(x_end)
    prof, par, pb, eps, gb, setup, eng = ctx
    lam = 0.25
    sols = eng.solve(lam)
    x_end = setup.right_edges[-1]
    assert prof.rho_plus - float(prof.rho(x_end)) < 1e-9
    right = og.boundary_coeffs_general(sols["right"], x_end, "right")
    tau = math.sqrt(par.k**2 + lam * float(prof.rho(x_end)) / par.mu)
    ref = og.limit_boundary_coeffs(par, tau, "right")
    for a, b in zip(right.as_tuple(), ref.as_tuple()):
        assert abs(a - b) <= 1e-6 * max(abs(b), 1.0)


def test_decay_envelopes(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    env = og.decay_envelopes(prof, par, setup, gb)
    xs = np.linspace(setup.x_tilde_plus, setup.X_max, 50)
    z = env.z_plus(xs)
    # monotone decrease; the slow exponential dies on the 1/(delta - k)
    # scale, so only the fast component is near zero by X_max
    assert np.all(np.diff(z) <= 1e-9 * z[0])
    assert z[-1] < z[0]
    assert env.env_u2(setup.X_max) <= 1e-9 * env.env_u2(setup.x_tilde_plus)
    # the fast envelope is proportional to (rho_plus - rho0)
    gaps = prof.rho_plus - np.asarray(prof.rho(xs[:-1]))
    ratio = env.env_u2(xs[:-1]) / gaps
    assert np.ptp(ratio) <= 1e-9 * ratio[0]
    # at x_tilde the slow envelope carries the rho0(x_tilde) e^0 term
    e1 = env.env_u1(setup.x_tilde_plus)
    base = 2 * gb.Gamma_p * gb.Gamma_m
    assert e1 >= base * float(prof.rho(setup.x_tilde_plus))
    # every solution stays within its printed envelope at every grid point
    for lam in (eps, pb.lambda_max):
        sols = eng.solve(lam)
        for name, key, side in (("env_u1", "U1+", "right"),
                                ("env_u2", "U2+", "right"),
                                ("env_u3", "U3-", "left"),
                                ("env_u4", "U4-", "left")):
            s = sols[side][key]
            dev = np.linalg.norm(s.normalized - s.limit[None, :], axis=1)
            assert np.all(dev <= getattr(env, name)(s.xs) + 1e-30)


def test_coercive_window_shrinks_with_eps(tanh_profile, params, tanh_bounds):
    xs = {}
    for eps in (0.01, 0.1):
        gb = og.gamma_bounds(tanh_profile, params, eps, tanh_bounds)
        setup = og.truncation_points(tanh_profile, params, gb)
        eng = og.OuterSolutions(tanh_profile, params, setup)
        grid = np.linspace(eps, tanh_bounds.lambda_max, 16)
        xm, xp, _ = og.coercive_window(tanh_profile, params, eps, grid,
                                       setup, eng, gb)
        xs[eps] = xp
        assert xm == pytest.approx(-xp, rel=1e-9)  # symmetric profile
    assert xs[0.1] < xs[0.01]
    assert xs[0.01] == pytest.approx(WINDOW_X_EPS001, abs=2e-4)
    assert xs[0.1] == pytest.approx(WINDOW_X_EPS01, abs=2e-4)


def test_rejects_lambda_grid_outside_range(ctx):
    prof, par, pb, eps, gb, setup, eng = ctx
    with pytest.raises(SolverError):
        og.coercive_window(prof, par, eps, [eps / 2, pb.lambda_max],
                           setup, eng, gb)
