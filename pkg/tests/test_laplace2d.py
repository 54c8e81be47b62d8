import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isospec import laplace2d as l2
from isospec.framework import InadmissibleModelError, density_check, spectra_match
from isospec.numcore import norm2

CENTER = l2.ZeroSet(((0.5 + 0.5j, 1),))
ONE = l2.HarmonicWeight("constant")


def test_grid_layout():
    g = l2.RectGrid(3)
    assert g.h == 0.25
    pts = g.points()
    assert pts[0] == 0.25 + 0.25j and pts[1] == 0.25 + 0.5j and pts[3] == 0.5 + 0.25j
    with pytest.raises(ValueError):
        l2.RectGrid(1)


def test_stencil_n2_by_hand():
    g = l2.RectGrid(2)
    a = l2.assemble_dirichlet_fd(g) * g.h**2
    expected = np.array([[4, -1, -1, 0], [-1, 4, 0, -1], [-1, 0, 4, -1], [0, -1, -1, 4]], float)
    assert np.array_equal(a, expected)


def test_stencil_closed_form_spectrum():
    g = l2.RectGrid(12)
    a = l2.assemble_dirichlet_fd(g)
    assert np.array_equal(a, a.T)
    got = np.linalg.eigvalsh(a)
    ref = np.sort(l2.dirichlet_eigenvalues(g))
    assert np.max(np.abs(got - ref) / ref) <= 1e-9
    assert got[0] > 0


def test_closed_form_eigenvectors():
    g = l2.RectGrid(10)
    a = l2.assemble_dirichlet_fd(g)
    lam, vecs = l2.dirichlet_modes(g, 6)
    assert np.max(np.abs(a @ vecs - vecs * lam)) <= 1e-10 * lam.max()


def test_smallest_eigenvalue_continuum_limit():
    g = l2.RectGrid(40)
    assert l2.dirichlet_eigenvalues(g).min() == pytest.approx(2 * math.pi**2, rel=1e-2)


def test_poisson_solve_matches_dense(rng):
    g = l2.RectGrid(9)
    f = rng.standard_normal(g.size)
    u = l2.poisson_solve(g, f)
    assert np.max(np.abs(l2.assemble_dirichlet_fd(g) @ u - f)) <= 1e-11 * np.max(np.abs(f)) * 400


def test_apply_dirichlet_matches_matrix(rng):
    g = l2.RectGrid(7)
    u = rng.standard_normal(g.size)
    assert np.allclose(l2.apply_dirichlet(g, u), l2.assemble_dirichlet_fd(g) @ u, rtol=0, atol=1e-10)


def test_log_abs_f_examples():
    z1 = 0.3 + 0.4j
    one = l2.ZeroSet(((z1, 1),))
    assert l2.log_abs_F(np.array([z1 + 1]), one)[0] == 0.0
    two = l2.ZeroSet(((z1, 1), (0.6 + 0.7j, 1)))
    p = np.array([0.1 + 0.9j, 0.77 + 0.12j])
    expected = np.log(np.abs(p - z1)) + np.log(np.abs(p - (0.6 + 0.7j)))
    assert np.allclose(l2.log_abs_F(p, two), expected, rtol=0, atol=1e-15)
    double = l2.ZeroSet(((z1, 2),))
    assert np.allclose(l2.log_abs_F(p, double), 2 * np.log(np.abs(p - z1)), atol=1e-15)


def test_log_abs_f_mean_value_on_circle():
    z1 = 0.5 + 0.5j
    r = 0.2
    theta = 2 * np.pi * np.arange(360) / 360
    pts = z1 + 0.05 + r * np.exp(1j * theta)  # circle centred off z1 but enclosing it
    mean = l2.log_abs_F(pts, l2.ZeroSet(((z1, 1),))).mean()
    assert mean == pytest.approx(math.log(r), abs=1e-3)


def test_gradient_of_log_abs_f():
    zs = l2.ZeroSet(((0.3 + 0.6j, 2),))
    p = np.array([0.8 + 0.1j])
    gx, gy = l2.grad_log_abs_F(p, zs)
    eps = 1e-6
    fx = (l2.log_abs_F(p + eps, zs) - l2.log_abs_F(p - eps, zs)) / (2 * eps)
    fy = (l2.log_abs_F(p + 1j * eps, zs) - l2.log_abs_F(p - 1j * eps, zs)) / (2 * eps)
    assert gx[0] == pytest.approx(fx[0], rel=1e-8) and gy[0] == pytest.approx(fy[0], rel=1e-8)


def test_eval_refuses_zero_on_node():
    g = l2.RectGrid(31)  # (0.5, 0.5) is a node
    with pytest.raises(l2.ZeroPlacementError, match="h/4"):
        l2.eval_log_abs_F(g, CENTER)


def test_zero_set_validation():
    g = l2.RectGrid(32)
    CENTER.validate(g)
    assert CENTER.margin(g) == pytest.approx(g.h / math.sqrt(2))
    with pytest.raises(l2.ZeroPlacementError, match="boundary"):
        l2.ZeroSet(((0.05 + 0.5j, 1),)).validate(g)
    with pytest.raises(l2.ZeroPlacementError, match="not inside"):
        l2.ZeroSet(((1.5 + 0.5j, 1),))
    with pytest.raises(ValueError, match="multiplicity"):
        l2.ZeroSet(((0.5 + 0.5j, 0),))


def test_poisson_logf_empty():
    g = l2.RectGrid(8)
    kernel = l2.solve_poisson_logF(g, l2.ZeroSet())
    assert not np.any(kernel.values) and kernel.source == "poisson_logF"


def test_poisson_logf_dihedral_symmetry():
    g = l2.RectGrid(32)
    gv = l2.solve_poisson_logF(g, CENTER).values.reshape(32, 32)
    for t in (gv.T, gv[::-1, :], gv[:, ::-1], np.rot90(gv)):
        assert np.max(np.abs(t - gv)) <= 1e-10


def test_poisson_logf_residual():
    g = l2.RectGrid(24)
    zeros = l2.ZeroSet(((0.31 + 0.47j, 1), (0.66 + 0.62j, 2)))
    kernel = l2.solve_poisson_logF(g, zeros)
    lnf = l2.eval_log_abs_F(g, zeros)
    res = l2.assemble_dirichlet_fd(g) @ kernel.values - lnf
    assert np.max(np.abs(res)) <= 1e-9 * np.max(np.abs(lnf))
    assert np.array_equal(kernel.laplacian_values, -lnf)
    assert l2.poisson_residual(g, kernel) <= 1e-12


def test_harmonic_weight_defect():
    assert ONE.harmonic_defect(l2.RectGrid(16)) == 0.0
    for p in (1, 2, 3):
        assert l2.HarmonicWeight("re_power", p).harmonic_defect(l2.RectGrid(16)) <= 1e-9
    w = l2.HarmonicWeight("re_power", 4)
    for n in (16, 32):
        g = l2.RectGrid(n)
        assert w.harmonic_defect(g) <= 4.0 * (1 + 1e-6) * g.h**2
    with pytest.raises(ValueError):
        l2.HarmonicWeight("exp_power", 2)
    with pytest.raises(ValueError):
        l2.HarmonicWeight("im_power", 0)


def test_build_k_examples(rng):
    g = l2.RectGrid(8)
    zero = l2.KernelG(np.zeros(g.size), np.zeros(g.size), "explicit")
    assert not np.any(l2.build_k_2d(g, ONE, zero))
    bump = l2.sine_bump_kernel(g)
    k = l2.build_k_2d(g, ONE, bump)
    f = rng.standard_normal(g.size)
    assert np.allclose(k @ f, g.h**2 * np.sum(f * bump.values), rtol=1e-14)
    assert l2.numerical_rank(k) == 1


def test_closure_matches_product():
    g = l2.RectGrid(8)
    kernel = l2.solve_poisson_logF(g, l2.ZeroSet(((0.41 + 0.53j, 1),)))
    w = l2.HarmonicWeight("im_power", 2)
    kl = l2.closure_kl_2d(g, w, kernel)
    direct = l2.build_k_2d(g, w, kernel) @ l2.assemble_dirichlet_fd(g)
    assert norm2(kl - direct) <= 1e-12 * norm2(kl)


def test_admissibility_zero_kernel():
    g = l2.RectGrid(8)
    adm = l2.admissibility_2d(g, ONE, l2.solve_poisson_logF(g, l2.ZeroSet()))
    assert adm.admissible and adm.s_general == 0


def test_admissibility_regression_n32():
    g = l2.RectGrid(32)
    adm = l2.admissibility_2d(g, ONE, l2.solve_poisson_logF(g, CENTER))
    assert adm.admissible
    # frozen at bring-up
    assert adm.s_general.real == pytest.approx(1.026693329636946, rel=1e-12)
    assert adm.s_log == -adm.s_general


def test_admissibility_scalar_matches_determinant():
    g = l2.RectGrid(12)
    kernel = l2.solve_poisson_logF(g, CENTER)
    adm = l2.admissibility_2d(g, ONE, kernel)
    det = np.linalg.det(np.eye(g.size) + l2.closure_kl_2d(g, ONE, kernel))
    assert det == pytest.approx(1 - adm.s_general, rel=1e-10)


def test_critical_scaling_flips_density():
    g = l2.RectGrid(12)
    kernel = l2.solve_poisson_logF(g, CENTER)
    crit = l2.critical_scaling_2d(g, ONE, kernel)
    assert crit.density_lo.ok and crit.density_hi.ok and not crit.density_at_critical.ok
    assert crit.t_lo < crit.t_critical < crit.t_hi
    s = l2.admissibility_2d(g, ONE, kernel).s_general.real
    assert crit.t_critical == pytest.approx(1 / s, rel=1e-8)
    with pytest.raises(InadmissibleModelError):
        l2.build_laplace_model(g, ONE, kernel.scaled(crit.t_critical))


def test_zero_kernel_gives_stencil_exactly():
    g = l2.RectGrid(8)
    pair = l2.laplace_pair(g, ONE, l2.solve_poisson_logF(g, l2.ZeroSet()))
    assert np.array_equal(pair.bk, l2.assemble_dirichlet_fd(g))


def test_isospectral_n24_single_zero():
    g = l2.RectGrid(24)
    pair = l2.laplace_pair(g, ONE, l2.solve_poisson_logF(g, CENTER))
    assert spectra_match(pair.reference_l, pair.bk).passed
    assert l2.closed_form_spectrum_error(g, pair.bk) <= 1e-8


def test_model_carries_weight_and_density():
    g = l2.RectGrid(8)
    model = l2.build_laplace_model(g, ONE, l2.solve_poisson_logF(g, CENTER))
    assert model.weight == g.h**2 and density_check(model).ok


def test_sign_resolution_transfer_and_forward():
    g = l2.RectGrid(16)
    kernel = l2.solve_poisson_logF(g, l2.ZeroSet(((0.43 + 0.52j, 1),)))
    for w in (ONE, l2.HarmonicWeight("re_power", 2)):
        pair = l2.laplace_pair(g, w, kernel)
        tr = l2.transfer_sign_check(g, w, kernel, pair, 20)
        assert l2.resolved_sign(tr) == -1 and tr[-1] <= 1e-8 and tr[1] > 1e-3
        fwd = l2.forward_action_check(g, w, kernel, pair, np.cos(np.arange(g.size)))
        assert l2.resolved_sign(fwd) == 1 and fwd[1] <= 1e-8 and fwd[-1] > 1e-3


def test_transfer_with_explicit_kernel():
    # analytic Delta g differs from the discrete one by O(h^2)
    g = l2.RectGrid(16)
    kernel = l2.sine_bump_kernel(g, 0.1)
    pair = l2.laplace_pair(g, ONE, kernel)
    tr = l2.transfer_sign_check(g, ONE, kernel, pair, 10)
    assert l2.resolved_sign(tr) == -1 and tr[-1] <= 1e-2 * tr[1]


def test_boundary_t_examples():
    g = l2.RectGrid(16)
    assert not np.any(l2.build_boundary_T(g, ONE, l2.ZeroSet()))
    t = l2.build_boundary_T(g, ONE, CENTER)
    assert l2.numerical_rank(t) == 1
    # zero on the two outermost interior rings: trace and normal derivative vanish
    u = np.zeros((16, 16))
    u[3:-3, 3:-3] = 1.0
    assert np.max(np.abs(t @ u.ravel())) == 0.0


def test_boundary_functional_against_quadrature():
    # u = sin(pi x) sin(pi y) has inward normal derivative pi sin(pi s) on every edge
    zeros = l2.ZeroSet(((0.5 + 0.5j, 1),))
    ss = np.linspace(0, 1, 200001)
    vals = np.log(np.abs(1j * ss - (0.5 + 0.5j))) * np.pi * np.sin(np.pi * ss)
    exact = 4 * np.sum((vals[1:] + vals[:-1]) / 2) * (ss[1] - ss[0])
    errs = []
    for n in (32, 64):
        g = l2.RectGrid(n)
        u = l2.sine_mode(*g.mesh())
        errs.append(abs(l2.boundary_functional(g, zeros) @ u.ravel() - exact))
    assert errs[1] <= 0.3 * errs[0] and errs[1] <= 1e-2 * abs(exact)


def test_bilinear_interpolation():
    g = l2.RectGrid(8)
    u = g.sample(lambda x, y: 2 * x + 3 * y + x * y)
    z = 0.37 + 0.61j
    assert l2.bilinear_interpolate(g, u, z) == pytest.approx(2 * 0.37 + 3 * 0.61 + 0.37 * 0.61, rel=1e-12)
    with pytest.raises(ValueError):
        l2.bilinear_interpolate(g, u, 1.2 + 0.5j)


def test_greens_split_empty():
    g = l2.RectGrid(16)
    split = l2.greens_split(g, l2.ZeroSet(), l2.sine_mode, l2.sine_mode_laplacian)
    assert split.volume == 0 and split.point_sum == 0 and split.boundary == 0


def test_greens_split_refinement():
    d = [l2.greens_split_check(l2.RectGrid(n), CENTER, l2.sine_mode, l2.sine_mode_laplacian) for n in (32, 64, 128)]
    assert d[1] <= 0.67 * d[0] and d[2] <= 0.67 * d[1]
    g = l2.RectGrid(128)
    split = l2.greens_split(g, CENTER, l2.sine_mode, l2.sine_mode_laplacian)
    assert split.point_sum == pytest.approx(2 * math.pi, rel=1e-3)  # u(z1) = 1


def test_greens_split_off_center_two_zeros():
    zeros = l2.ZeroSet(((0.37 + 0.42j, 1), (0.61 + 0.66j, 2)))

    def u(x, y):
        return x * (1 - x) * np.sin(2 * np.pi * y)

    def lap(x, y):
        return -2 * np.sin(2 * np.pi * y) - 4 * np.pi**2 * x * (1 - x) * np.sin(2 * np.pi * y)

    d = [l2.greens_split_check(l2.RectGrid(n), zeros, u, lap) for n in (32, 64, 128)]
    assert d[0] > d[1] > d[2]


@settings(max_examples=8, deadline=None)
@given(
    n=st.integers(6, 14),
    kind=st.sampled_from(["constant", "re_power", "im_power"]),
    degree=st.integers(1, 3),
    zx=st.floats(0.35, 0.65),
    zy=st.floats(0.35, 0.65),
)
def test_isospectrality_property(n, kind, degree, zx, zy):
    g = l2.RectGrid(n)
    zeros = l2.ZeroSet(((complex(zx, zy), 1),))
    try:
        zeros.validate(g)
    except l2.ZeroPlacementError:
        return
    w = l2.HarmonicWeight(kind, degree)
    kernel = l2.solve_poisson_logF(g, zeros)
    if not l2.admissibility_2d(g, w, kernel).admissible:
        return
    pair = l2.laplace_pair(g, w, kernel)
    assert spectra_match(pair.reference_l, pair.bk).passed
    assert l2.transfer_sign_check(g, w, kernel, pair, 5)[-1] <= 1e-8
