import numpy as np
import pytest
import scipy.sparse as sp

from oscillat.errors import (
    ResolutionViolation,
    NotPositiveDefinite,
    MarginTooSmall,
    NearSpectrumShift,
)
from oscillat.lattice import unit_lattice
from oscillat.coefficients import catalog
from oscillat.cell import solve_cell
from oscillat.dirichlet import (
    make_mesh,
    mesh_for,
    h1_norm,
    assemble_b_eps,
    assemble_b0,
    choose_lambda,
    smallest_eigenvalue,
    build_extension,
    extend,
    steklov,
    Corrector,
    corrector_apply,
    resolvent,
)

LAT1 = unit_lattice(1)
LAT2 = unit_lattice(2)


def tridiag_laplacian(M, h):
    return sp.diags([np.full(M - 1, -1.0), np.full(M, 2.0),
                     np.full(M - 1, -1.0)], [-1, 0, 1]) / h ** 2


def dirichlet_laplacian_eigs(M, h, L):
    k = np.arange(1, M + 1)
    return (4.0 / h ** 2) * np.sin(k * np.pi * h / (2 * L)) ** 2


# ---------------------------------------------------------------------------
# assembly


def test_unit_coefficient_gives_standard_stencil():
    mesh = make_mesh([1.0], [31])
    op = assemble_b_eps(mesh, catalog("const", {"g": 1.0, "d": 1}), 1.0)
    ref = tridiag_laplacian(31, mesh.h[0])
    assert np.abs((op.matrix - ref).toarray()).max() == 0.0


def test_constant_coefficient_scales_linearly():
    mesh = make_mesh([1.0], [31])
    op = assemble_b_eps(mesh, catalog("const", {"g": 2.5, "d": 1}), 1.0)
    ref = 2.5 * tridiag_laplacian(31, mesh.h[0])
    assert np.abs((op.matrix - ref).toarray()).max() < 1e-12


def test_oscillating_probe_vs_dense_oracle():
    cs = catalog("sine1d")
    eps = 0.25
    mesh = mesh_for([1.0], eps / 16)
    op = assemble_b_eps(mesh, cs, eps, LAT1)
    dense_min = np.linalg.eigvalsh(op.matrix.toarray().real)[0]
    assert op.smallest_eig == pytest.approx(dense_min, rel=1e-10)
    g_min = 1.0
    assert op.smallest_eig >= g_min * np.pi ** 2 * 0.95


def test_assembly_is_hermitian_with_lower_order_terms():
    cs = catalog("sine1d", {"a_amp": 0.2, "q_amp": 0.3, "q_const": 0.1})
    mesh = mesh_for([1.0], 0.25 / 16)
    op = assemble_b_eps(mesh, cs, 0.25, LAT1)
    assert np.abs((op.matrix - op.matrix.conj().T).toarray()).max() == 0.0


def test_resolution_policy_enforced():
    cs = catalog("sine1d")
    mesh = make_mesh([1.0], [15])
    with pytest.raises(ResolutionViolation):
        assemble_b_eps(mesh, cs, 0.125, LAT1)


def test_2d_constant_positive_definite():
    cs = catalog("const", {"g": 1.0, "d": 2})
    mesh = make_mesh([1.0, 1.0], [15, 15])
    op = assemble_b_eps(mesh, cs, 1.0, LAT2)
    # Q1 Laplacian on the unit square: lowest eigenvalue near 2 pi^2
    assert op.smallest_eig == pytest.approx(2 * np.pi ** 2, rel=0.02)
    assert np.abs((op.matrix - op.matrix.conj().T).toarray()).max() < 1e-14


def test_b0_identity_and_sine_fixture():
    cs = catalog("sine1d")
    sol = solve_cell(cs, LAT1, 256)
    mesh = make_mesh([1.0], [63])
    op0 = assemble_b0(mesh, sol, cs)
    ref = np.sqrt(3.0) * tridiag_laplacian(63, mesh.h[0])
    assert np.abs((op0.matrix - ref).toarray()).max() < 1e-12

    csc = catalog("const", {"g": 1.0, "d": 1})
    solc = solve_cell(csc, LAT1, 32)
    opc = assemble_b0(mesh, solc, csc)
    assert np.abs((opc.matrix - tridiag_laplacian(63, mesh.h[0])).toarray()
                  ).max() < 1e-12


def test_b0_with_constant_a_hermitian():
    cs = catalog("sine1d", {"a_amp": 0.3})
    sol = solve_cell(cs, LAT1, 128)
    mesh = make_mesh([1.0], [63])
    # graft a constant lower-order block: mean(a) + mean(a)* enters B0
    op0 = assemble_b0(mesh, sol, cs)
    assert np.abs((op0.matrix - op0.matrix.conj().T).toarray()).max() == 0.0


def test_choose_lambda_zero_when_unneeded():
    cs = catalog("sine1d")
    mesh = mesh_for([1.0], 0.125 / 16)
    assert choose_lambda(mesh, cs, [0.25, 0.125], LAT1) == 0.0


def test_choose_lambda_negative_potential_oracle():
    # g = 1, Q = -q: spectrum k^2 pi^2 / L^2 - q, so the shift must beat
    # q - pi^2 plus the demanded margin
    q = 30.0
    cs = catalog("sine1d", {"base": 1.0, "amp": 0.0, "q_const": -q})
    mesh = mesh_for([1.0], 0.25 / 16)
    lam = choose_lambda(mesh, cs, [0.25], LAT1)
    eigs = dirichlet_laplacian_eigs(mesh.m_int[0], mesh.h[0], 1.0)
    margin = 0.25 * 0.25 * np.pi ** 2
    needed = margin - (eigs[0] - q)
    grid = [0.0] + [2.0 ** k for k in range(17)]
    expected = min(v for v in grid if v >= needed)
    assert lam == expected
    op = assemble_b_eps(mesh, cs.with_lambda(lam), 0.25, LAT1)
    assert op.smallest_eig > 0


def test_choose_lambda_small_perturbation():
    cs = catalog("sine1d", {"a_amp": 0.1})
    sol = solve_cell(cs, LAT1, 128)
    mesh = mesh_for([1.0], 0.125 / 16)
    lam = choose_lambda(mesh, cs, [0.25, 0.125], LAT1, cell=sol)
    for eps in (0.25, 0.125):
        op = assemble_b_eps(mesh, cs.with_lambda(lam), eps, LAT1)
        assert op.smallest_eig > 0
    op0 = assemble_b0(mesh, sol, cs.with_lambda(lam))
    assert op0.smallest_eig > 0


def test_not_positive_definite_raises():
    cs = catalog("sine1d", {"base": 1.0, "amp": 0.0, "q_const": -50.0})
    mesh = mesh_for([1.0], 0.25 / 16)
    with pytest.raises(NotPositiveDefinite):
        assemble_b_eps(mesh, cs, 0.25, LAT1)


def test_lambda_search_failed_beyond_grid():
    from oscillat.errors import LambdaSearchFailed

    cs = catalog("sine1d", {"base": 1.0, "amp": 0.0, "q_const": -2.0 ** 18})
    mesh = mesh_for([1.0], 0.25 / 16)
    with pytest.raises(LambdaSearchFailed):
        choose_lambda(mesh, cs, [0.25], LAT1)


# ---------------------------------------------------------------------------
# extension


def test_extension_zero_and_identity():
    mesh = make_mesh([1.0], [63])
    ext = build_extension(mesh, 0.15)
    assert np.abs(extend(np.zeros(63), ext)).max() == 0.0
    u = np.sin(np.pi * mesh.axes()[0])
    assert np.abs(ext.restrict(extend(u, ext)) - u).max() == 0.0


def test_extension_reproduces_quadratics():
    # order-3 reflection continues any quadratic exactly (pre-cutoff)
    mesh = make_mesh([1.0], [63])
    ext = build_extension(mesh, 0.1)
    x = mesh.axes()[0]
    u = x * (1.0 - x)
    vals = extend(u, ext, apply_cutoff=False)[:, 0]
    ax = ext.axes_ext()[0]
    assert np.abs(vals - ax * (1.0 - ax)).max() < 1e-12


def test_extension_h1_bound_on_eigenvectors():
    cs = catalog("sine1d")
    eps = 0.125
    mesh = mesh_for([1.0], eps / 16)
    ext = build_extension(mesh, 2 * LAT1.r1 * eps)
    op = assemble_b_eps(mesh, cs, eps, LAT1)
    dense = op.matrix.toarray().real
    _, vecs = np.linalg.eigh(dense)
    ext_mesh = make_mesh([ext.axes_ext()[0][-1] - ext.axes_ext()[0][0]],
                         [ext.shape_ext[0] - 2])
    worst = 0.0
    for k in (0, 3, 10, 40):
        u = vecs[:, k]
        ue = extend(u, ext)[1:-1, :]
        ratio = h1_norm(ext_mesh, ue.ravel(), 1) / h1_norm(mesh, u, 1)
        worst = max(worst, ratio)
    assert worst <= 10.0


def test_extension_margin_too_small():
    mesh = make_mesh([1.0], [7])
    with pytest.raises(MarginTooSmall):
        build_extension(mesh, 0.9)


# ---------------------------------------------------------------------------
# steklov smoothing


def test_steklov_constant_unchanged():
    u = np.ones(128)
    out = steklov(u, LAT1, 0.25, 1.0 / 128, periodic=True)
    assert np.abs(out - 1.0).max() < 1e-12


def test_steklov_linear_unchanged():
    # odd integrand over a symmetric cell cancels; multilinear interpolation
    # is exact on linear data, so interior values match exactly
    grid = np.linspace(-1.0, 1.0, 257)
    u = grid.copy()
    out = steklov(u, LAT1, 0.25, grid[1] - grid[0])
    reach = int(np.ceil(0.25 * LAT1.r1 / (grid[1] - grid[0]))) + 1
    inner = slice(reach, -reach)
    assert np.abs(out[inner] - u[inner]).max() < 1e-12


def test_steklov_character_annihilated():
    N = 256
    x = np.arange(N) / N
    u = np.exp(2j * np.pi * x)
    out = steklov(u, LAT1, 1.0, 1.0 / N, periodic=True)
    assert np.abs(out).max() < 1e-4


def test_steklov_contraction_bound():
    # |S_eps u - u| <= 1.1 eps r1 |Du| on band-limited periodic samples
    rng = np.random.default_rng(0)
    N = 256
    x = np.arange(N) / N
    ks = np.arange(1, 9)
    for eps in (0.25, 0.0625):
        for _ in range(10):
            c = rng.standard_normal(8) + 1j * rng.standard_normal(8)
            u = (c * np.exp(2j * np.pi * np.outer(x, ks))).sum(axis=1)
            du = (c * 2j * np.pi * ks
                  * np.exp(2j * np.pi * np.outer(x, ks))).sum(axis=1)
            lhs = np.linalg.norm(steklov(u, LAT1, eps, 1 / N, periodic=True) - u)
            assert lhs <= 1.1 * eps * LAT1.r1 * np.linalg.norm(du)


def test_steklov_margin_check():
    u = np.ones(64)
    with pytest.raises(MarginTooSmall):
        steklov(u, LAT1, 0.5, 1.0 / 64, margin=0.1)


# ---------------------------------------------------------------------------
# corrector


def build_sine_fixture(eps=0.125, h_div=16):
    cs = catalog("sine1d")
    sol = solve_cell(cs, LAT1, 256)
    mesh = mesh_for([1.0], eps / h_div)
    ext = build_extension(mesh, 2 * LAT1.r1 * eps)
    return cs, sol, mesh, ext


def test_corrector_zero_when_correctors_vanish():
    cs = catalog("const", {"g": 2.0, "d": 1})
    sol = solve_cell(cs, LAT1, 32)
    mesh = mesh_for([1.0], 0.125 / 16)
    ext = build_extension(mesh, 2 * LAT1.r1 * 0.125)
    u_ext = extend(np.sin(np.pi * mesh.axes()[0]), ext)
    out = corrector_apply(sol, 0.125, cs.symbol, u_ext, True, ext, LAT1)
    assert np.abs(out).max() < 1e-14


def test_corrector_zero_on_constants():
    # constant extended data: b(D) term vanishes; LambdaTilde is zero
    cs, sol, mesh, ext = build_sine_fixture()
    u_ext = np.ones(ext.shape_ext + (1,))
    out = corrector_apply(sol, 0.125, cs.symbol, u_ext, False, ext, LAT1)
    assert np.abs(out).max() < 1e-12


def test_corrector_hand_composed_oracle():
    # h well below eps/16 so interpolation bias sits under the 1e-6 target
    eps = 0.125
    cs, sol, mesh, ext = build_sine_fixture(eps, h_div=128)
    x = mesh.axes()[0]
    u = np.sin(np.pi * x)
    cor = Corrector(sol, eps, cs.symbol, ext, LAT1, smoothed=True)
    val = cor.apply(u)
    # oracle: zero-mean antiderivative of sqrt(3)/g - 1 by fine quadrature,
    # times the centered difference of the exact smoothed field
    y = np.linspace(0.0, 1.0, 200001)
    chi_p = np.sqrt(3.0) / (2 + np.sin(2 * np.pi * y)) - 1.0
    X = np.concatenate([[0.0], np.cumsum((chi_p[1:] + chi_p[:-1]) / 2)
                        * (y[1] - y[0])])
    X -= np.trapezoid(X, y)
    kappa = np.sin(np.pi * eps / 2) / (np.pi * eps / 2)
    ax = ext.axes_ext()[0]
    smoothed_exact = kappa * np.sin(np.pi * ax)
    h = mesh.h[0]
    dsm = np.zeros_like(ax)
    dsm[1:-1] = (smoothed_exact[2:] - smoothed_exact[:-2]) / (2 * h)
    sl = ext.interior_slices()[0]
    oracle = np.interp((x / eps) % 1.0, y, X) * dsm[sl]
    inner = (x > eps * LAT1.r1 + 2 * h) & (x < 1 - eps * LAT1.r1 - 2 * h)
    assert np.abs((val - oracle))[inner].max() < 1e-6


def test_corrector_margin_guard():
    cs, sol, mesh, ext = build_sine_fixture(0.125)
    with pytest.raises(MarginTooSmall):
        Corrector(sol, 0.5, cs.symbol, ext, LAT1)


# ---------------------------------------------------------------------------
# resolvent


def test_resolvent_roundtrip():
    cs = catalog("sine1d")
    mesh = mesh_for([1.0], 0.125 / 16)
    op = assemble_b_eps(mesh, cs, 0.125, LAT1)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(op.size)
    f = op.matrix @ v
    assert np.abs(resolvent(op, 0.0, f) - v).max() < 1e-10


def test_resolvent_laplacian_eigen_oracle():
    csc = catalog("const", {"g": 1.0, "d": 1})
    mesh = make_mesh([1.0], [63])
    op = assemble_b_eps(mesh, csc, 1.0, LAT1)
    M, h = 63, mesh.h[0]
    x = mesh.axes()[0]
    mu = dirichlet_laplacian_eigs(M, h, 1.0)
    # build f with known discrete sine expansion, solve (A + I) u = f
    coeffs = np.array([1.0, -0.5, 0.25])
    modes = [np.sin((k + 1) * np.pi * x) for k in range(3)]
    f = sum(c * m for c, m in zip(coeffs, modes))
    u = resolvent(op, -1.0, f)
    expected = sum(c / (mu[k] + 1.0) * modes[k]
                   for k, c in enumerate(coeffs))
    assert np.abs(u - expected).max() < 1e-10


def test_resolvent_complex_shift_residual():
    cs = catalog("sine1d")
    mesh = mesh_for([1.0], 0.25 / 16)
    op = assemble_b_eps(mesh, cs, 0.25, LAT1)
    rng = np.random.default_rng(3)
    f = rng.standard_normal(op.size)
    zeta = 2.0 + 1.5j
    u = resolvent(op, zeta, f)
    res = op.matrix @ u - zeta * u - f
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(f)


def test_resolvent_real_for_real_shift():
    cs = catalog("sine1d")
    mesh = mesh_for([1.0], 0.25 / 16)
    op = assemble_b_eps(mesh, cs, 0.25, LAT1)
    rng = np.random.default_rng(4)
    f = rng.standard_normal(op.size)
    u = resolvent(op, -1.0, f)
    assert np.isrealobj(u)


def test_resolvent_near_spectrum_raises():
    csc = catalog("const", {"g": 1.0, "d": 1})
    mesh = make_mesh([1.0], [63])
    op = assemble_b_eps(mesh, csc, 1.0, LAT1)
    mu1 = dirichlet_laplacian_eigs(63, mesh.h[0], 1.0)[0]
    rng = np.random.default_rng(5)
    f = rng.standard_normal(op.size)
    with pytest.raises(NearSpectrumShift):
        resolvent(op, mu1 + 1e-14, f)


def test_smallest_eigenvalue_probe_matches_dense():
    cs = catalog("sine1d", {"a_amp": 0.2})
    mesh = mesh_for([1.0], 0.25 / 16)
    op = assemble_b_eps(mesh, cs, 0.25, LAT1)
    dense = np.linalg.eigvalsh(op.matrix.toarray())[0]
    assert smallest_eigenvalue(op.matrix) == pytest.approx(dense, rel=1e-8)
