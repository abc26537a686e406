"""Convergence-rate sweeps, slope fitting, reports, and the self test.

Each sweep builds the oscillating and effective operators across a list of
eps values (mesh spacing locked to eps by the h <= eps/16 policy), measures
the theory-backed error quantities in discrete norms, and fits log-log
slopes.  Verdict thresholds sit strictly below the theoretical rates
(0.9 for O(eps), 0.45 for O(sqrt(eps))) to absorb preasymptotic effects;
raw slopes and per-(eps, t) errors are always reported.
"""

from dataclasses import dataclass, field
import time

import numpy as np

from .errors import InsufficientPoints, ZeroError
from .lattice import Lattice, build_lattice, unit_lattice
from .coefficients import CoefficientSet, catalog
from .cell import CellSolution, solve_cell
from .dirichlet import (
    Mesh,
    mesh_for,
    assemble_b_eps,
    assemble_b0,
    choose_lambda,
    build_extension,
    Corrector,
    resolvent,
    l2_norm,
    h1_norm,
    H_OVER_EPS,
)
from .evolution import (
    spectral_decompose,
    solve_ibvp,
    first_order_approx,
    flux,
    flux_approx,
    op_cosine,
    op_inv_sqrt,
)

#: errors at or below this are reported as "exact" and excluded from fits
EXACT_TOL = 1e-9

#: verdict thresholds, strictly below the theoretical rates
SLOPE_FULL = 0.9      # O(eps) estimates
SLOPE_HALF = 0.45     # O(sqrt(eps)) estimates


def default_eps_list(d: int) -> list[float]:
    if d == 1:
        return [2.0 ** -k for k in range(3, 8)]
    return [2.0 ** -k for k in range(2, 6)]


@dataclass
class SweepConfig:
    """Everything one sweep needs; defaults follow the d=1 sine fixture."""

    fixture: str = "sine1d"
    fixture_params: dict = field(default_factory=dict)
    basis: object = None            # lattice basis rows; None = unit lattice
    box: tuple = (1.0,)
    eps_list: tuple = ()            # empty = dimension default
    t_list: tuple = (0.5, 1.0, 2.0)
    phi: str = "sinehump"
    psi: str = "sinemix"
    forcing: str = "none"
    forcing_omega: float = 1.5
    smoothed: bool = True
    seed: int = 7
    n_probe: int = 5
    zeta: float = -1.0
    cell_n: int = 0                 # 0 = dimension default (256 / 64)
    h_over_eps: float = H_OVER_EPS
    out_dir: str = "."
    evolve_eps: float = 0.125       # single-eps runs of the evolve command

    def resolved_eps(self, d: int) -> list[float]:
        eps = list(self.eps_list) or default_eps_list(d)
        if len(set(eps)) != len(eps):
            raise ValueError("eps values must be distinct")
        eps_max_allowed = min(self.box) / 4.0
        if max(eps) > eps_max_allowed + 1e-12:
            raise ValueError(
                f"eps={max(eps)} exceeds the surrogate bound min box side / 4")
        return sorted(eps, reverse=True)

    def resolved_cell_n(self, d: int) -> int:
        if self.cell_n:
            return int(self.cell_n)
        return 256 if d == 1 else 64


@dataclass(frozen=True)
class EstimateResult:
    tag: str
    norm: str
    rows: list            # (eps, t or None, error)
    slope: float
    intercept: float
    max_residual: float
    threshold: float
    verdict: str          # pass / fail / exact / reported

    def passed(self) -> bool:
        return self.verdict in ("pass", "exact", "reported")


@dataclass(frozen=True)
class RateReport:
    estimates: list
    wall_time: float
    meta: dict

    def all_passed(self) -> bool:
        return all(e.passed() for e in self.estimates)

    def by_tag(self, tag: str) -> EstimateResult:
        for e in self.estimates:
            if e.tag == tag:
                return e
        raise KeyError(tag)


# ---------------------------------------------------------------------------
# rate fitting


def fit_rate(points) -> tuple[float, float, float]:
    """Least-squares slope/intercept of log(err) against log(eps).

    Returns (slope, intercept, max_residual).  Raises ZeroError when an
    error is exactly zero (callers report those points as "exact" and drop
    them) and InsufficientPoints below two usable points.
    """
    pts = [(float(e), float(err)) for e, err in points]
    if len(pts) < 2:
        raise InsufficientPoints(f"need >= 2 points, got {len(pts)}")
    if len({e for e, _ in pts}) != len(pts):
        raise ValueError("eps values must be distinct")
    if any(err <= 0.0 for _, err in pts):
        raise ZeroError("zero error is exact: exclude it before fitting")
    x = np.log([e for e, _ in pts])
    y = np.log([err for _, err in pts])
    A = np.stack([x, np.ones_like(x)], axis=1)
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = float(sol[0]), float(sol[1])
    residual = float(np.abs(A @ sol - y).max())
    return slope, intercept, residual


def _judge(tag: str, norm: str, rows, threshold) -> EstimateResult:
    """Aggregate rows to per-eps errors, fit, and attach the verdict."""
    per_eps: dict[float, float] = {}
    for eps, _t, err in rows:
        per_eps[eps] = max(per_eps.get(eps, 0.0), float(err))
    usable = [(e, v) for e, v in sorted(per_eps.items()) if v > EXACT_TOL]
    if not usable:
        return EstimateResult(tag, norm, rows, float("nan"), float("nan"),
                              0.0, threshold if threshold else float("nan"),
                              "exact" if threshold else "reported")
    if threshold is None:
        slope, intercept, resid = (fit_rate(usable) if len(usable) >= 2
                                   else (float("nan"),) * 3)
        return EstimateResult(tag, norm, rows, slope, intercept, resid,
                              float("nan"), "reported")
    if len(usable) < 4:
        raise InsufficientPoints(
            f"{tag}: only {len(usable)} nonzero points; need >= 4 for a verdict")
    slope, intercept, resid = fit_rate(usable)
    verdict = "pass" if slope >= threshold else "fail"
    return EstimateResult(tag, norm, rows, slope, intercept, resid,
                          threshold, verdict)


# ---------------------------------------------------------------------------
# shared sweep scaffolding


_DATA_PROFILES = ("none", "sinehump", "sinemix", "poly", "offcenter")


def data_profile(name: str, mesh: Mesh, n: int) -> np.ndarray:
    """Smooth catalog data on interior nodes, unit discrete L2 norm."""
    axes = mesh.axes()
    grids = np.meshgrid(*axes, indexing="ij")
    L = mesh.box
    if name == "none":
        return np.zeros(mesh.n_nodes * n)
    if name == "sinehump":
        vals = np.ones_like(grids[0])
        for x, Lk in zip(grids, L):
            vals = vals * np.sin(np.pi * x / Lk)
    elif name == "sinemix":
        vals = np.ones_like(grids[0])
        for x, Lk in zip(grids, L):
            vals = vals * (np.sin(np.pi * x / Lk)
                           + 0.3 * np.sin(2.0 * np.pi * x / Lk))
    elif name == "poly":
        vals = np.ones_like(grids[0])
        for x, Lk in zip(grids, L):
            vals = vals * x * (Lk - x) * 4.0 / Lk ** 2
    elif name == "offcenter":
        vals = np.ones_like(grids[0])
        for x, Lk in zip(grids, L):
            vals = vals * np.sin(np.pi * x / Lk) * np.exp(x / Lk)
    else:
        raise ValueError(f"unknown data profile {name!r}; "
                         f"choose from {_DATA_PROFILES}")
    vec = np.repeat(vals.reshape(-1), n).astype(float)
    return vec / l2_norm(mesh, vec)


@dataclass
class Fixture:
    lat: Lattice
    coeffs: CoefficientSet
    cell: CellSolution


def fixture_coefficients(cfg: SweepConfig) -> CoefficientSet:
    """Coefficients from the catalog or from an external samples file."""
    if cfg.fixture == "samples_file":
        from .coefficients import (load_field_csv, make_symbol,
                                   gradient_symbol)

        g = load_field_csv(cfg.fixture_params["path"])
        sym = make_symbol([[[1.0]]]) if g.dim == 1 else gradient_symbol(g.dim)
        return CoefficientSet(symbol=sym, g=g).validate()
    return catalog(cfg.fixture, cfg.fixture_params)


def build_fixture(cfg: SweepConfig) -> Fixture:
    coeffs = fixture_coefficients(cfg)
    lat = (build_lattice(cfg.basis) if cfg.basis is not None
           else unit_lattice(coeffs.d))
    cell = solve_cell(coeffs, lat, cfg.resolved_cell_n(coeffs.d))
    return Fixture(lat=lat, coeffs=coeffs, cell=cell)


@dataclass
class Case:
    """One eps value of a sweep: mesh, operators, and extension machinery."""

    eps: float
    mesh: Mesh
    op_eps: object
    op_0: object
    ext: object


def extension_margin(lat: Lattice, eps_max: float, box) -> float:
    """Extension margin: twice the smoothing reach, clamped to what the
    reflection stencil can source from the box (an issue only when the
    cell radius is large relative to the domain, e.g. 2d unit boxes)."""
    margin = 2.0 * lat.r1 * eps_max
    feasible = min(box) / 3.5
    if margin > feasible:
        margin = max(feasible, 1.05 * lat.r1 * eps_max)
    return margin


def build_cases(fix: Fixture, cfg: SweepConfig, eps_list) -> list[Case]:
    box = tuple(float(L) for L in np.atleast_1d(cfg.box))
    finest = mesh_for(box, min(eps_list) * cfg.h_over_eps)
    lam = choose_lambda(finest, fix.coeffs, eps_list, fix.lat, cell=fix.cell)
    coeffs = fix.coeffs.with_lambda(lam)
    margin = extension_margin(fix.lat, max(eps_list), box)
    cases = []
    for eps in eps_list:
        mesh = mesh_for(box, eps * cfg.h_over_eps)
        op_eps = assemble_b_eps(mesh, coeffs, eps, fix.lat)
        op_0 = assemble_b0(mesh, fix.cell, coeffs)
        ext = build_extension(mesh, margin)
        cases.append(Case(eps=eps, mesh=mesh, op_eps=op_eps, op_0=op_0, ext=ext))
    return cases


def _seeded_probes(cfg: SweepConfig, case_idx: int, mesh: Mesh, n: int):
    rng = np.random.default_rng((cfg.seed, case_idx))
    out = []
    for _ in range(max(5, cfg.n_probe)):
        f = rng.standard_normal(mesh.n_nodes * n)
        out.append(f / l2_norm(mesh, f))
    return out


# ---------------------------------------------------------------------------
# the three sweeps


def convergence_sweep(cfg: SweepConfig) -> RateReport:
    """Hyperbolic solution errors: L2, H1 with corrector, and flux."""
    t0 = time.perf_counter()
    fix = build_fixture(cfg)
    sym, n = fix.coeffs.symbol, fix.coeffs.symbol.n
    eps_list = cfg.resolved_eps(fix.coeffs.d)
    cases = build_cases(fix, cfg, eps_list)
    t_list = list(cfg.t_list)
    t_max = max(t_list)

    rows_l2, rows_h1, rows_flux = [], [], []
    for case in cases:
        eb_eps = spectral_decompose(case.op_eps)
        eb_0 = spectral_decompose(case.op_0)
        phi = case.op_0.solve_shifted(0.0, case.op_0.solve_shifted(
            0.0, data_profile(cfg.phi, case.mesh, n)))
        psi = case.op_0.solve_shifted(0.0, case.op_0.solve_shifted(
            0.0, data_profile(cfg.psi, case.mesh, n)))
        forcing = None
        if cfg.forcing != "none":
            f_space = case.op_0.solve_shifted(0.0, case.op_0.solve_shifted(
                0.0, data_profile(cfg.forcing, case.mesh, n)))
            t_grid = np.linspace(0.0, t_max, max(9, int(33 * t_max) + 1))
            forcing = (t_grid,
                       np.cos(cfg.forcing_omega * t_grid)[:, None] * f_space)
        u_eps = solve_ibvp(eb_eps, phi, psi, forcing, t_list)
        u_0 = solve_ibvp(eb_0, phi, psi, forcing, t_list)
        # the energy-norm estimates hold only for vanishing initial
        # displacement, so corrector and flux comparisons use the
        # phi = 0 part of the solution
        if np.abs(phi).max() > 0:
            ue_en = solve_ibvp(eb_eps, 0 * phi, psi, forcing, t_list)
            u0_en = solve_ibvp(eb_0, 0 * phi, psi, forcing, t_list)
        else:
            ue_en, u0_en = u_eps, u_0
        v_eps = first_order_approx(u0_en, fix.cell, case.eps, cfg.smoothed,
                                   sym, case.ext, fix.lat)
        p_eps = flux(ue_en, fix.coeffs, case.eps, case.mesh, fix.lat)
        p_apx = flux_approx(u0_en, fix.cell, case.eps, cfg.smoothed,
                            fix.coeffs, case.ext, fix.lat)
        for i, t in enumerate(t_list):
            rows_l2.append((case.eps, t,
                            l2_norm(case.mesh, u_eps.u[i] - u_0.u[i])))
            rows_h1.append((case.eps, t,
                            h1_norm(case.mesh, ue_en.u[i] - v_eps.u[i], n)))
            rows_flux.append((case.eps, t, l2_norm(
                case.mesh, (p_eps[i] - p_apx[i]).reshape(-1))))

    estimates = [
        _judge("solution_l2", "L2", rows_l2, SLOPE_FULL),
        _judge("solution_h1_corrector", "H1", rows_h1, SLOPE_HALF),
        _judge("flux_l2", "L2", rows_flux, SLOPE_HALF),
    ]
    return RateReport(estimates=estimates, wall_time=time.perf_counter() - t0,
                      meta=_meta(cfg, fix, eps_list))


def resolvent_sweep(cfg: SweepConfig) -> RateReport:
    """Resolvent errors at fixed zeta: L2, H1 with corrector, inverse root."""
    t0 = time.perf_counter()
    fix = build_fixture(cfg)
    sym, n = fix.coeffs.symbol, fix.coeffs.symbol.n
    eps_list = cfg.resolved_eps(fix.coeffs.d)
    cases = build_cases(fix, cfg, eps_list)
    zeta = float(cfg.zeta)
    if zeta > 0:
        raise ValueError("resolvent sweep expects zeta <= 0")

    rows_l2, rows_h1, rows_sqrt = [], [], []
    for idx, case in enumerate(cases):
        cor = Corrector(fix.cell, case.eps, sym, case.ext, fix.lat,
                        smoothed=True)
        can_eig = case.op_eps.size <= 4096
        eb_eps = spectral_decompose(case.op_eps) if can_eig else None
        eb_0 = spectral_decompose(case.op_0) if can_eig else None
        e_l2 = e_h1 = e_sqrt = 0.0
        for f in _seeded_probes(cfg, idx, case.mesh, n):
            u_eps = resolvent(case.op_eps, zeta, f)
            u_0 = resolvent(case.op_0, zeta, f)
            e_l2 = max(e_l2, l2_norm(case.mesh, u_eps - u_0))
            corrected = u_0 + case.eps * cor.apply(u_0)
            e_h1 = max(e_h1, h1_norm(case.mesh, u_eps - corrected, n))
            if can_eig:
                diff = op_inv_sqrt(eb_eps, f) - op_inv_sqrt(eb_0, f)
                e_sqrt = max(e_sqrt, l2_norm(case.mesh, diff))
        rows_l2.append((case.eps, None, e_l2))
        rows_h1.append((case.eps, None, e_h1))
        if can_eig:
            rows_sqrt.append((case.eps, None, e_sqrt))

    estimates = [
        _judge("resolvent_l2", "L2", rows_l2, SLOPE_FULL),
        _judge("resolvent_h1_corrector", "H1", rows_h1, SLOPE_HALF),
    ]
    if rows_sqrt:
        estimates.append(_judge("inv_sqrt_l2", "L2", rows_sqrt, SLOPE_HALF))
    meta = _meta(cfg, fix, eps_list)
    meta["zeta"] = zeta
    return RateReport(estimates=estimates, wall_time=time.perf_counter() - t0,
                      meta=meta)


def cosine_corrector_sweep(cfg: SweepConfig) -> RateReport:
    """Smoothed-cosine corrector rate in H1 plus the no-verdict plain error."""
    t0 = time.perf_counter()
    fix = build_fixture(cfg)
    sym, n = fix.coeffs.symbol, fix.coeffs.symbol.n
    eps_list = cfg.resolved_eps(fix.coeffs.d)
    t_list = [t for t in cfg.t_list if t != 0.0]
    if not t_list:
        raise ValueError("cosine corrector sweep needs t != 0")
    cases = build_cases(fix, cfg, eps_list)

    rows_corr, rows_plain = [], []
    for idx, case in enumerate(cases):
        cor = Corrector(fix.cell, case.eps, sym, case.ext, fix.lat,
                        smoothed=True)
        eb_eps = spectral_decompose(case.op_eps)
        eb_0 = spectral_decompose(case.op_0)
        for f in _seeded_probes(cfg, idx, case.mesh, n):
            y0 = case.op_0.solve_shifted(0.0, f)        # (B0)^-1 f
            y00 = case.op_0.solve_shifted(0.0, y0)      # (B0)^-2 f
            for t in t_list:
                w_eps = op_cosine(eb_eps, t,
                                  case.op_eps.solve_shifted(0.0, y0))
                w_0 = op_cosine(eb_0, t, y00)
                corrected = w_0 + case.eps * cor.apply(w_0)
                err = h1_norm(case.mesh, w_eps - corrected, n)
                rows_corr.append((case.eps, t, err))
                plain = h1_norm(case.mesh,
                                op_cosine(eb_eps, t, y00)
                                - op_cosine(eb_0, t, y00), n)
                rows_plain.append((case.eps, t, plain))

    estimates = [
        _judge("cos_h1_corrector", "H1", rows_corr, SLOPE_HALF),
        _judge("cos_plain_h1", "H1", rows_plain, None),
    ]
    return RateReport(estimates=estimates, wall_time=time.perf_counter() - t0,
                      meta=_meta(cfg, fix, eps_list))


def _meta(cfg: SweepConfig, fix: Fixture, eps_list) -> dict:
    return {
        "fixture": cfg.fixture,
        "d": fix.coeffs.d,
        "eps": list(eps_list),
        "t": list(cfg.t_list),
        "smoothed": cfg.smoothed,
        "seed": cfg.seed,
        "corrector_norm": fix.cell.corrector_norm(),
    }


# ---------------------------------------------------------------------------
# report emission


def rates_csv_text(report: RateReport) -> str:
    lines = ["estimate,eps,t,error,norm"]
    for est in report.estimates:
        for eps, t, err in est.rows:
            t_txt = "" if t is None else f"{t:.17g}"
            lines.append(f"{est.tag},{eps:.17g},{t_txt},{err:.17g},{est.norm}")
    return "\n".join(lines) + "\n"


def report_txt_text(report: RateReport) -> str:
    lines = []
    for est in report.estimates:
        lines.append(f"{est.tag} {est.slope:.12g} {est.intercept:.12g} "
                     f"{est.verdict}")
    lines.append(f"# wall_time_s {report.wall_time:.3f}")
    return "\n".join(lines) + "\n"


def write_report(report: RateReport, out_dir: str):
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rates.csv").write_text(rates_csv_text(report))
    (out / "report.txt").write_text(report_txt_text(report))


def run_cli(argv=None) -> int:
    """Command-line entry; see oscillat.cli for the implementation."""
    from .cli import run_cli as _run

    return _run(argv)


# ---------------------------------------------------------------------------
# self test of the trivially-checkable fixtures


def selftest(verbose: bool = True) -> list[tuple[str, bool]]:
    """Run every cheap closed-form fixture; returns (name, ok) pairs."""
    from .lattice import frequencies
    from .coefficients import eval_scaled, symbol_bounds
    from .cell import solve_lambda, solve_lambda_tilde
    from .dirichlet import make_mesh, steklov, build_extension, extend
    from .evolution import op_sine_scaled
    import scipy.sparse as sp

    checks = []

    def check(name, fn):
        try:
            ok = bool(fn())
        except Exception:
            ok = False
        checks.append((name, ok))
        if verbose:
            print(f"{'ok  ' if ok else 'FAIL'} {name}")

    lat1 = unit_lattice(1)
    check("lattice.unit_duality",
          lambda: abs(lat1.dual_basis[0, 0] - 2 * np.pi) < 1e-12
          and abs(lat1.cell_volume - 1) < 1e-12
          and abs(2 * lat1.r1 - 1) < 1e-12 and abs(2 * lat1.r0 - 2 * np.pi) < 1e-12)
    check("lattice.frequencies_n2",
          lambda: len(frequencies(lat1, 2)) == 2
          and any(np.allclose(k, 0) for k in frequencies(lat1, 2)))
    check("symbol.scalar_bounds",
          lambda: symbol_bounds([[[1.0]]]) == (1.0, 1.0))
    cs_const = catalog("const", {"g": 3.0, "d": 1})
    check("coefficients.const_eval",
          lambda: abs(eval_scaled(cs_const.g, lat1, 0.3, [[0.2]])[0, 0, 0] - 3.0)
          < 1e-12)
    check("cell.lambda_zero_for_const",
          lambda: np.abs(solve_lambda(cs_const.symbol, cs_const.g, lat1, 16)
                         .samples).max() < 1e-12)
    check("cell.lambda_tilde_zero_without_a",
          lambda: np.abs(solve_lambda_tilde(cs_const.symbol, cs_const.g, (),
                                            lat1, 16).samples).max() == 0.0)
    mesh = make_mesh([1.0], [31])
    op = assemble_b_eps(mesh, catalog("const", {"g": 1.0, "d": 1}), 1.0)
    h = mesh.h[0]
    ref = sp.diags([np.full(30, -1.0), np.full(31, 2.0), np.full(30, -1.0)],
                   [-1, 0, 1]) / h ** 2
    check("dirichlet.unit_laplacian",
          lambda: np.abs((op.matrix - ref).toarray()).max() < 1e-10)
    check("dirichlet.steklov_constant",
          lambda: np.abs(steklov(np.ones(64), lat1, 0.25, 1.0 / 64,
                                 periodic=True) - 1.0).max() < 1e-12)
    x64 = np.arange(64) / 64
    check("dirichlet.steklov_character",
          lambda: np.abs(steklov(np.exp(2j * np.pi * x64), lat1, 1.0, 1.0 / 64,
                                 periodic=True)).max() < 1e-3)
    ext = build_extension(mesh, 0.2)
    u_test = np.sin(np.pi * mesh.axes()[0])
    check("dirichlet.extension_identity",
          lambda: np.abs(ext.restrict(extend(u_test, ext)) - u_test).max() == 0.0)
    eb = spectral_decompose(op)
    v = np.sin(np.pi * mesh.axes()[0])
    check("evolution.cos_t0_identity",
          lambda: np.abs(op_cosine(eb, 0.0, v) - v).max() < 1e-12)
    check("evolution.sine_t0_zero",
          lambda: np.abs(op_sine_scaled(eb, 0.0, v)).max() == 0.0)
    check("evolution.ibvp_zero_data",
          lambda: np.abs(solve_ibvp(eb, 0 * v, 0 * v, None, [0.5, 1.0]).u).max()
          == 0.0)
    check("study.fit_rate_exact",
          lambda: abs(fit_rate([(e, e) for e in (0.1, 0.05, 0.025, 0.0125)])[0]
                      - 1.0) < 1e-12)
    check("study.fit_rate_sqrt",
          lambda: abs(fit_rate([(e, np.sqrt(e)) for e in (0.1, 0.05, 0.025)])[0]
                      - 0.5) < 1e-12)
    return checks
