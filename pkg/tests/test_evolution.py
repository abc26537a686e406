import numpy as np
import pytest
import scipy.sparse as sp

from oscillat.errors import CFLViolation, ForcingGridTooCoarse, EigSolverFailure
from oscillat.lattice import unit_lattice
from oscillat.coefficients import catalog
from oscillat.cell import solve_cell
from oscillat.dirichlet import (
    make_mesh,
    mesh_for,
    assemble_b_eps,
    assemble_b0,
    build_extension,
    l2_norm,
)
from oscillat.evolution import (
    spectral_decompose,
    op_cosine,
    op_sine_scaled,
    solve_ibvp,
    first_order_approx,
    flux,
    flux_approx,
    leapfrog_oracle,
    leapfrog_energy_drift,
    estimate_mu_max,
    _gauss_panels,
)

LAT1 = unit_lattice(1)


class _FakeOp:
    def __init__(self, matrix):
        self.matrix = sp.csr_matrix(matrix)
        self.size = matrix.shape[0]


def laplacian_op(M=63, L=1.0, g=1.0):
    mesh = make_mesh([L], [M])
    cs = catalog("const", {"g": g, "d": 1})
    return mesh, assemble_b_eps(mesh, cs, 1.0, LAT1)


def sine_fixture(eps=0.125):
    cs = catalog("sine1d")
    sol = solve_cell(cs, LAT1, 256)
    mesh = mesh_for([1.0], eps / 16)
    op_eps = assemble_b_eps(mesh, cs, eps, LAT1)
    op_0 = assemble_b0(mesh, sol, cs)
    ext = build_extension(mesh, 2 * LAT1.r1 * eps)
    return cs, sol, mesh, op_eps, op_0, ext


# ---------------------------------------------------------------------------
# eigendecomposition


def test_diagonal_matrix_eigens():
    eb = spectral_decompose(_FakeOp(np.diag([1.0, 4.0, 9.0])))
    assert np.allclose(eb.eigenvalues, [1.0, 4.0, 9.0])
    assert np.allclose(np.abs(eb.eigenvectors), np.eye(3))


def test_laplacian_eigenvalues_exact_formula():
    mesh, op = laplacian_op(63)
    eb = spectral_decompose(op)
    h = mesh.h[0]
    k = np.arange(1, 64)
    exact = (4.0 / h ** 2) * np.sin(k * np.pi * h / 2.0) ** 2
    assert np.allclose(eb.eigenvalues, exact, rtol=1e-12)
    # eigenvectors are discrete sines up to normalization
    x = mesh.axes()[0]
    v = eb.eigenvectors[:, 0]
    s = np.sin(np.pi * x)
    s /= np.linalg.norm(s)
    assert min(np.abs(v - s).max(), np.abs(v + s).max()) < 1e-10


def test_reconstruction_contract():
    cs = catalog("sine1d", {"a_amp": 0.2})
    mesh = mesh_for([1.0], 0.25 / 16)
    op = assemble_b_eps(mesh, cs, 0.25, LAT1)
    eb = spectral_decompose(op)
    rebuilt = (eb.eigenvectors * eb.eigenvalues) @ eb.eigenvectors.conj().T
    dense = op.matrix.toarray()
    assert np.linalg.norm(rebuilt - dense) <= 1e-8 * np.linalg.norm(dense)


def test_size_cap_raises():
    big = sp.identity(10000, format="csr")
    with pytest.raises(EigSolverFailure):
        spectral_decompose(_FakeOp(big.toarray() * 0 + sp.identity(10000)))


# ---------------------------------------------------------------------------
# operator functions


def test_cosine_identity_at_zero():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(op.size)
    assert np.abs(op_cosine(eb, 0.0, v) - v).max() < 1e-12


def test_cosine_on_eigenvector():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    q3, mu3 = eb.eigenvectors[:, 3], eb.eigenvalues[3]
    out = op_cosine(eb, 0.8, q3)
    assert np.allclose(out, np.cos(0.8 * np.sqrt(mu3)) * q3, atol=1e-12)


def test_cosine_effective_unit_on_pi_interval():
    # g0 = 1 on (0, pi): nodal sin(x) is the exact first discrete eigenvector
    mesh = make_mesh([np.pi], [127])
    cs = catalog("const", {"g": 1.0, "d": 1})
    op = assemble_b_eps(mesh, cs, 1.0, LAT1)
    eb = spectral_decompose(op)
    x = mesh.axes()[0]
    v = np.sin(x)
    h = mesh.h[0]
    mu1 = (4.0 / h ** 2) * np.sin(h / 2.0) ** 2
    out = op_cosine(eb, 1.0, v)
    assert np.abs(out - np.cos(np.sqrt(mu1)) * v).max() < 1e-10
    assert mu1 == pytest.approx(eb.eigenvalues[0], rel=1e-12)


def test_sine_scaled_basics():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(op.size)
    assert np.abs(op_sine_scaled(eb, 0.0, v)).max() == 0.0
    q2, mu2 = eb.eigenvectors[:, 2], eb.eigenvalues[2]
    out = op_sine_scaled(eb, 0.6, q2)
    assert np.allclose(out, np.sin(0.6 * np.sqrt(mu2)) / np.sqrt(mu2) * q2,
                       atol=1e-12)


def test_sine_equals_integral_of_cosine():
    _, _, mesh, op_eps, op_0, _ = sine_fixture()
    eb = spectral_decompose(op_0)
    rng = np.random.default_rng(2)
    f = op_0.solve_shifted(0.0, op_0.solve_shifted(
        0.0, rng.standard_normal(op_0.size)))
    f /= np.abs(f).max()
    t = 1.3
    nodes, weights = _gauss_panels(t, 0.2, order=32)
    quad = sum(w * op_cosine(eb, tq, f) for tq, w in zip(nodes, weights))
    assert np.abs(quad - op_sine_scaled(eb, t, f)).max() < 1e-8


def test_cosine_functional_equation():
    _, _, mesh, op_eps, _, _ = sine_fixture()
    eb = spectral_decompose(op_eps)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(op_eps.size)
    t, s = 0.9, 0.35
    lhs = op_cosine(eb, t + s, v)
    rhs = 2 * op_cosine(eb, t, op_cosine(eb, s, v)) - op_cosine(eb, t - s, v)
    assert np.abs(lhs - rhs).max() <= 1e-8 * np.abs(v).max()


def test_sine_derivative_consistency():
    # central difference of the scaled sine converges to the cosine at dt^2
    mesh, op = laplacian_op(31)
    eb = spectral_decompose(op)
    rng = np.random.default_rng(4)
    v = rng.standard_normal(op.size)
    v = op.solve_shifted(0.0, v)
    t = 0.8
    ref = op_cosine(eb, t, v)
    errs = []
    for delta in (1e-2, 5e-3, 2.5e-3):
        approx = (op_sine_scaled(eb, t + delta, v)
                  - op_sine_scaled(eb, t - delta, v)) / (2 * delta)
        errs.append(np.linalg.norm(approx - ref))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


# ---------------------------------------------------------------------------
# Duhamel evolution


def test_ibvp_zero_data():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    z = np.zeros(op.size)
    res = solve_ibvp(eb, z, z, None, [0.5, 1.0])
    assert np.abs(res.u).max() == 0.0
    assert np.abs(res.du_dt).max() == 0.0


def test_ibvp_single_mode_energy():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    q1, mu1 = eb.eigenvectors[:, 0], eb.eigenvalues[0]
    res = solve_ibvp(eb, q1, 0 * q1, None, np.linspace(0.2, 3.0, 8))
    for i, t in enumerate(res.times):
        assert np.allclose(res.u[i], np.cos(t * np.sqrt(mu1)) * q1, atol=1e-12)
    assert np.abs(res.energy / res.energy[0] - 1.0).max() < 1e-12


def test_ibvp_forced_mode_closed_form():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    q1, mu1 = eb.eigenvectors[:, 0], eb.eigenvalues[0]
    omega = 3.0
    t_grid = np.linspace(0.0, 2.0, 81)
    forcing = (t_grid, np.cos(omega * t_grid)[:, None] * q1)
    res = solve_ibvp(eb, 0 * q1, 0 * q1, forcing, [0.5, 1.0, 2.0])
    for i, t in enumerate(res.times):
        coef = (np.cos(omega * t) - np.cos(np.sqrt(mu1) * t)) / (mu1 - omega ** 2)
        assert np.abs(res.u[i] - coef * q1).max() < 1e-8


def test_ibvp_energy_conservation_unforced():
    _, _, mesh, op_eps, _, _ = sine_fixture()
    eb = spectral_decompose(op_eps)
    rng = np.random.default_rng(5)
    phi = op_eps.solve_shifted(0.0, rng.standard_normal(op_eps.size))
    psi = op_eps.solve_shifted(0.0, rng.standard_normal(op_eps.size))
    res = solve_ibvp(eb, phi, psi, None, np.linspace(0.1, 4.0, 12))
    assert np.abs(res.energy / res.energy[0] - 1.0).max() <= 1e-8


def test_forcing_grid_too_coarse():
    mesh, op = laplacian_op()
    eb = spectral_decompose(op)
    z = np.zeros(op.size)
    with pytest.raises(ForcingGridTooCoarse):
        solve_ibvp(eb, z, z, (np.array([0.0, 1.0]), np.zeros((2, op.size))),
                   [1.0])
    with pytest.raises(ForcingGridTooCoarse):
        solve_ibvp(eb, z, z,
                   (np.linspace(0, 0.5, 9), np.zeros((9, op.size))), [1.0])


# ---------------------------------------------------------------------------
# first-order approximation and fluxes


def test_first_order_approx_reduces_to_u0():
    cs = catalog("const", {"g": 2.0, "d": 1})
    sol = solve_cell(cs, LAT1, 32)
    mesh = mesh_for([1.0], 0.125 / 16)
    op0 = assemble_b0(mesh, sol, cs)
    eb = spectral_decompose(op0)
    ext = build_extension(mesh, 2 * LAT1.r1 * 0.125)
    phi = np.sin(np.pi * mesh.axes()[0])
    u0 = solve_ibvp(eb, phi, 0 * phi, None, [0.5, 1.0])
    v = first_order_approx(u0, sol, 0.125, True, cs.symbol, ext, LAT1)
    assert np.abs(v.u - u0.u).max() < 1e-14


def test_first_order_approx_hand_composed():
    eps = 0.125
    cs, sol, mesh, op_eps, op_0, ext = sine_fixture(eps)
    eb0 = spectral_decompose(op_0)
    phi = np.sin(np.pi * mesh.axes()[0])
    u0 = solve_ibvp(eb0, phi, 0 * phi, None, [0.7])
    v = first_order_approx(u0, sol, eps, True, cs.symbol, ext, LAT1)
    from oscillat.dirichlet import Corrector

    cor = Corrector(sol, eps, cs.symbol, ext, LAT1, smoothed=True)
    expected = u0.u[0] + eps * cor.apply(u0.u[0])
    assert np.abs(v.u[0] - expected).max() < 1e-12


def test_first_order_l2_distance_shrinks_linearly():
    cs = catalog("sine1d")
    sol = solve_cell(cs, LAT1, 256)
    dist = {}
    for eps in (0.125, 0.0625):
        mesh = mesh_for([1.0], eps / 16)
        op0 = assemble_b0(mesh, sol, cs)
        eb0 = spectral_decompose(op0)
        phi = np.sin(np.pi * mesh.axes()[0])
        u0 = solve_ibvp(eb0, phi, 0 * phi, None, [0.7])
        ext = build_extension(mesh, 2 * LAT1.r1 * eps)
        v = first_order_approx(u0, sol, eps, True, cs.symbol, ext, LAT1)
        dist[eps] = l2_norm(mesh, v.u[0] - u0.u[0])
    # the corrector term is O(eps) in L2
    assert dist[0.0625] == pytest.approx(dist[0.125] / 2.0, rel=0.15)


def test_flux_constant_coefficient_identity():
    cs = catalog("const", {"g": 2.0, "d": 1})
    sol = solve_cell(cs, LAT1, 32)
    mesh = mesh_for([1.0], 0.125 / 16)
    op0 = assemble_b0(mesh, sol, cs)
    eb = spectral_decompose(op0)
    phi = np.sin(np.pi * mesh.axes()[0])
    u0 = solve_ibvp(eb, phi, 0 * phi, None, [0.5])
    p = flux(u0, cs, 0.125, mesh, LAT1)
    ext = build_extension(mesh, 2 * LAT1.r1 * 0.125)
    pa = flux_approx(u0, sol, 0.125, False, cs, ext, LAT1)
    assert np.abs(p - pa).max() < 1e-12


def test_flux_special_case_constant_g_tilde():
    # m = n makes the flux matrix constant: approx = g0 * S_eps b(D) u0
    eps = 0.125
    cs, sol, mesh, op_eps, op_0, ext = sine_fixture(eps)
    assert np.abs(sol.g_tilde.samples - np.sqrt(3.0)).max() < 1e-8
    eb0 = spectral_decompose(op_0)
    phi = np.sin(np.pi * mesh.axes()[0])
    u0 = solve_ibvp(eb0, phi, 0 * phi, None, [0.6])
    pa = flux_approx(u0, sol, eps, True, cs, ext, LAT1)
    from oscillat.dirichlet import steklov, extend

    u_ext = extend(u0.u[0], ext, n=1)
    sm = steklov(u_ext, LAT1, eps, mesh.h, margin=ext.margin)
    h = mesh.h[0]
    dsm = np.zeros(sm.shape, dtype=complex)
    dsm[1:-1] = -1j * (sm[2:] - sm[:-2]) / (2 * h)
    expected = np.sqrt(3.0) * dsm[ext.interior_slices()[0]]
    assert np.abs(pa[0].ravel() - expected.ravel()).max() < 1e-7


def test_flux_error_decreases_with_eps():
    cs = catalog("sine1d")
    sol = solve_cell(cs, LAT1, 256)
    errs = {}
    for eps in (0.125, 0.03125):
        mesh = mesh_for([1.0], eps / 16)
        ope = assemble_b_eps(mesh, cs, eps, LAT1)
        op0 = assemble_b0(mesh, sol, cs)
        ebe, eb0 = spectral_decompose(ope), spectral_decompose(op0)
        rng = np.random.default_rng(6)
        psi = op0.solve_shifted(0.0, op0.solve_shifted(
            0.0, rng.standard_normal(op0.size)))
        ue = solve_ibvp(ebe, 0 * psi, psi, None, [1.0])
        u0 = solve_ibvp(eb0, 0 * psi, psi, None, [1.0])
        ext = build_extension(mesh, 2 * LAT1.r1 * eps)
        p = flux(ue, cs, eps, mesh, LAT1)
        pa = flux_approx(u0, sol, eps, True, cs, ext, LAT1)
        errs[eps] = l2_norm(mesh, (p[0] - pa[0]).ravel())
    assert errs[0.03125] < 0.6 * errs[0.125]


# ---------------------------------------------------------------------------
# leapfrog oracle


def test_leapfrog_single_mode_dt_squared():
    mesh, op = laplacian_op(31)
    eb = spectral_decompose(op)
    q1, mu1 = eb.eigenvectors[:, 0], eb.eigenvalues[0]
    t = 1.0
    exact = np.cos(t * np.sqrt(mu1)) * q1
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        u = leapfrog_oracle(op, q1, 0 * q1, None, t, dt)
        errs.append(np.linalg.norm(u - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)


def test_leapfrog_matches_spectral_evolution():
    _, _, mesh, op_eps, op_0, _ = sine_fixture()
    eb = spectral_decompose(op_eps)
    rng = np.random.default_rng(7)
    phi = op_0.solve_shifted(0.0, op_0.solve_shifted(
        0.0, rng.standard_normal(op_0.size)))
    phi /= l2_norm(mesh, phi)
    dt = 1e-3 * 1.9 / np.sqrt(estimate_mu_max(op_eps))
    u_lf = leapfrog_oracle(op_eps, phi, 0 * phi, None, 1.0, dt)
    ref = solve_ibvp(eb, phi, 0 * phi, None, [1.0]).u[0]
    assert l2_norm(mesh, u_lf - ref) <= 1e-4 * l2_norm(mesh, ref)


def test_leapfrog_energy_drift_bounded():
    _, _, mesh, op_eps, op_0, _ = sine_fixture()
    rng = np.random.default_rng(8)
    phi = op_0.solve_shifted(0.0, op_0.solve_shifted(
        0.0, rng.standard_normal(op_0.size)))
    phi /= l2_norm(mesh, phi)
    drift = leapfrog_energy_drift(op_eps, phi, 0 * phi, 10.0, 1e-3)
    assert drift <= 1e-3


def test_leapfrog_cfl_violation():
    mesh, op = laplacian_op(63)
    with pytest.raises(CFLViolation):
        leapfrog_oracle(op, np.zeros(op.size), np.zeros(op.size), None,
                        1.0, 1.0)


def test_leapfrog_forced_matches_duhamel():
    mesh, op = laplacian_op(31)
    eb = spectral_decompose(op)
    q1 = eb.eigenvectors[:, 0]
    omega = 2.0
    t_grid = np.linspace(0.0, 1.0, 65)
    res = solve_ibvp(eb, 0 * q1, 0 * q1,
                     (t_grid, np.cos(omega * t_grid)[:, None] * q1), [1.0])
    u_lf = leapfrog_oracle(op, 0 * q1, 0 * q1,
                           lambda t: np.cos(omega * t) * q1, 1.0, 2e-4)
    assert np.abs(u_lf - res.u[0]).max() < 1e-6
