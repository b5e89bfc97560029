//! End-to-end driver pieces: the manufactured Poisson benchmark, condition
//! scaling sweeps, truncation/rank iteration grids, and spectrum dumps.
//!
//! The benchmark solves `laplacian u = F` with Dirichlet data taken from a
//! closed-form `u`. Under the half-Laplacian generator convention this is
//! assembled with unit diffusion and source `f = -F/2`, so trajectories are
//! standard Brownian motion and every closed-form exit-time oracle applies
//! unchanged. `F` comes from fourth-order central differences of `u`,
//! tabulated once on a fine grid and interpolated bilinearly inside the
//! stepping loop.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_system, BasisParams, StochasticSystem};
use crate::error::{Error, Result};
use crate::geometry::{build_discretization, DiscretizationConfig, Rect};
use crate::krylov::{cost_model, gmres, CostVerdict, SolveReport};
use crate::matrix_analysis::{
    condition_report, fet_inputs_series, inv_norm_inf, structure_check, ConditionReport,
    StructureReport,
};
use crate::preconditioning::{
    algorithm_a, apply_corrected, apply_neumann, build_arnoldi_correction, ArnoldiCorrection,
    NeumannPrecond, RecomputeContext,
};
use crate::stochastics::{McParams, Problem, UnitBrownian};

/// Closed-form benchmark solution.
pub fn manufactured_solution(x: f64, y: f64) -> f64 {
    3.0 + (1.0 + x * x / 100.0 + y * y / 50.0).sqrt().sin() / 3.0
        + ((3.0 * x / 25.0 + y / 20.0).sin() + (x / 20.0 - 3.0 * y / 25.0).sin()).tanh() / 3.0
}

/// Fourth-order central-difference Laplacian with step `step`.
pub fn fd4_laplacian(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, step: f64) -> f64 {
    let s = step;
    let dxx = (-f(x + 2.0 * s, y) + 16.0 * f(x + s, y) - 30.0 * f(x, y) + 16.0 * f(x - s, y)
        - f(x - 2.0 * s, y))
        / (12.0 * s * s);
    let dyy = (-f(x, y + 2.0 * s) + 16.0 * f(x, y + s) - 30.0 * f(x, y) + 16.0 * f(x, y - s)
        - f(x, y - 2.0 * s))
        / (12.0 * s * s);
    dxx + dyy
}

/// Scalar field tabulated on a uniform grid with bilinear interpolation.
#[derive(Debug, Clone)]
pub struct GriddedField {
    x0: f64,
    y0: f64,
    step: f64,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl GriddedField {
    pub fn tabulate(domain: Rect, step: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let nx = ((domain.width() / step).ceil() as usize) + 1;
        let ny = ((domain.height() / step).ceil() as usize) + 1;
        let mut values = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                values.push(f(domain.min[0] + ix as f64 * step, domain.min[1] + iy as f64 * step));
            }
        }
        GriddedField { x0: domain.min[0], y0: domain.min[1], step, nx, ny, values }
    }

    #[inline]
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let fx = ((p[0] - self.x0) / self.step).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((p[1] - self.y0) / self.step).clamp(0.0, (self.ny - 1) as f64);
        let ix = (fx as usize).min(self.nx - 2);
        let iy = (fy as usize).min(self.ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.values[iy * self.nx + ix];
        let v10 = self.values[iy * self.nx + ix + 1];
        let v01 = self.values[(iy + 1) * self.nx + ix];
        let v11 = self.values[(iy + 1) * self.nx + ix + 1];
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }
}

/// The manufactured Poisson problem: Brownian trajectories, tabulated
/// source `-F/2`, exact boundary data.
pub struct ManufacturedPoisson {
    source: GriddedField,
}

/// Finite-difference step for the source term.
pub const SOURCE_FD_STEP: f64 = 1e-3;

impl ManufacturedPoisson {
    /// Tabulation resolution: 1000 cells across the domain.
    pub fn new(domain: Rect) -> Self {
        let step = domain.width().max(domain.height()) / 1000.0;
        let source = GriddedField::tabulate(domain, step, |x, y| {
            -0.5 * fd4_laplacian(manufactured_solution, x, y, SOURCE_FD_STEP)
        });
        ManufacturedPoisson { source }
    }
}

impl Problem for ManufacturedPoisson {
    const PURE_BROWNIAN: bool = true;
    const ZERO_RATE: bool = true;

    fn source(&self, x: [f64; 2]) -> f64 {
        self.source.eval(x)
    }

    fn dirichlet(&self, x: [f64; 2]) -> f64 {
        manufactured_solution(x[0], x[1])
    }

    fn exact(&self, x: [f64; 2]) -> Option<f64> {
        Some(manufactured_solution(x[0], x[1]))
    }
}

/// Arnoldi/GMRES start coupling. `Uncoupled` is the all-ones start (the
/// parenthesised comparison mode); `Coupled` seeds the correction with the
/// initial residual `b - G x0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartMode {
    Coupled,
    Uncoupled,
    Ones,
}

impl StartMode {
    pub fn arnoldi_seed(self, rhs: &[f64]) -> Vec<f64> {
        match self {
            // x0 = 0, so the initial residual is the right-hand side.
            StartMode::Coupled => rhs.to_vec(),
            StartMode::Uncoupled | StartMode::Ones => vec![1.0; rhs.len()],
        }
    }
}

impl std::str::FromStr for StartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" => Ok(StartMode::Coupled),
            "uncoupled" => Ok(StartMode::Uncoupled),
            "ones" => Ok(StartMode::Ones),
            other => Err(Error::Parse(format!("unknown start mode {other:?}"))),
        }
    }
}

/// One preconditioned (or raw) solve of the assembled system.
pub fn solve_system(
    system: &StochasticSystem,
    precond: Option<(&NeumannPrecond, Option<&ArnoldiCorrection>)>,
    tol: f64,
    maxit: usize,
) -> SolveReport {
    let matvec = |x: &[f64], out: &mut [f64]| system.matrix.matvec(x, out);
    match precond {
        None => {
            let ident = |x: &[f64], out: &mut [f64]| out.copy_from_slice(x);
            gmres(&matvec, &ident, &system.rhs, None, tol, maxit)
        }
        Some((p, None)) => {
            let m = |x: &[f64], out: &mut [f64]| apply_neumann(p, x, out);
            gmres(&matvec, &m, &system.rhs, None, tol, maxit)
        }
        Some((p, Some(c))) => {
            let m = |x: &[f64], out: &mut [f64]| apply_corrected(p, c, x, out);
            gmres(&matvec, &m, &system.rhs, None, tol, maxit)
        }
    }
}

/// One (t, r, mode) cell of the iteration grid.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub truncation: usize,
    pub rank: usize,
    pub start_mode: StartMode,
    pub iterations: usize,
    pub converged: bool,
    pub rank_achieved: usize,
    pub breakdown: bool,
    pub build_matvecs: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub final_true_residual: f64,
    pub cost: CostVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableGridReport {
    pub schema_version: u32,
    pub order: usize,
    pub tol: f64,
    pub raw_iterations: usize,
    pub delta: f64,
    pub cells: Vec<GridCell>,
}

/// Run the (t, r) x start-mode grid. The `(0, 0)` cell is the raw solve and
/// is the baseline for every cost verdict.
pub fn run_table_grid(
    system: &mut StochasticSystem,
    truncations: &[usize],
    ranks: &[usize],
    modes: &[StartMode],
    tol: f64,
) -> Result<TableGridReport> {
    let n = system.order();
    let projection = algorithm_a::<UnitBrownian>(system, 0, None)?;

    let raw = solve_system(system, None, tol, n);
    let raw_it = raw.iterations;

    let mut cells = Vec::new();
    for &t in truncations {
        let precond = NeumannPrecond::new(&projection, t);
        for &r in ranks {
            if r == 0 {
                let rep = if t == 0 {
                    // Raw cell.
                    solve_system(system, None, tol, n)
                } else {
                    solve_system(system, Some((&precond, None)), tol, n)
                };
                cells.push(GridCell {
                    truncation: t,
                    rank: 0,
                    start_mode: StartMode::Coupled,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    rank_achieved: 0,
                    breakdown: false,
                    build_matvecs: 0,
                    build_seconds: 0.0,
                    solve_seconds: rep.solve_seconds,
                    final_true_residual: rep.final_true_residual,
                    cost: cost_model(t as u64, 0, rep.iterations as u64, raw_it as u64),
                });
                continue;
            }
            for &mode in modes {
                let y0 = mode.arnoldi_seed(&system.rhs);
                let corr = match build_arnoldi_correction(system, &precond, r, &y0) {
                    Ok(c) => c,
                    Err(e) => {
                        // Record the failure and keep the grid going.
                        cells.push(GridCell {
                            truncation: t,
                            rank: r,
                            start_mode: mode,
                            iterations: 0,
                            converged: false,
                            rank_achieved: 0,
                            breakdown: true,
                            build_matvecs: 0,
                            build_seconds: 0.0,
                            solve_seconds: 0.0,
                            final_true_residual: f64::NAN,
                            cost: CostVerdict { cost: 0, pays: false },
                        });
                        eprintln!("grid cell (t={t}, r={r}, {mode:?}) failed: {e}");
                        continue;
                    }
                };
                let rep = solve_system(system, Some((&precond, Some(&corr))), tol, n);
                cells.push(GridCell {
                    truncation: t,
                    rank: r,
                    start_mode: mode,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    rank_achieved: corr.rank,
                    breakdown: corr.breakdown,
                    build_matvecs: corr.build_matvecs,
                    build_seconds: corr.build_seconds,
                    solve_seconds: rep.solve_seconds,
                    final_true_residual: rep.final_true_residual,
                    cost: cost_model(t as u64, r as u64, rep.iterations as u64, raw_it as u64),
                });
            }
        }
    }

    Ok(TableGridReport {
        schema_version: 1,
        order: n,
        tol,
        raw_iterations: raw_it,
        delta: projection.delta,
        cells,
    })
}

/// Dense spectrum of the (optionally preconditioned) system operator,
/// sorted by real part then imaginary part.
///
/// Backed by the LAPACK nonsymmetric eigensolver: the corrected operator's
/// spectrum is a tight cluster around one, on which unblocked QR
/// implementations stall badly.
pub fn dump_spectrum(
    system: &StochasticSystem,
    precond: Option<(&NeumannPrecond, Option<&ArnoldiCorrection>)>,
    dense_cap: usize,
) -> Result<Vec<(f64, f64)>> {
    let n = system.order();
    if n > dense_cap {
        return Err(Error::Unsupported(format!(
            "order {n} exceeds the dense spectrum cap {dense_cap}"
        )));
    }
    let dense = system.matrix.to_dense();
    let op = match precond {
        None => dense,
        Some((p, corr)) => {
            let mut out = DMatrix::zeros(n, n);
            let mut col = vec![0.0; n];
            let mut res = vec![0.0; n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = dense[(i, j)];
                }
                match corr {
                    None => apply_neumann(p, &col, &mut res),
                    Some(c) => apply_corrected(p, c, &col, &mut res),
                }
                for i in 0..n {
                    out[(i, j)] = res[i];
                }
            }
            out
        }
    };
    let mut vals = dense_eigenvalues(&op)?;
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

/// All eigenvalues of a dense real matrix as (re, im) pairs.
///
/// Results are validated against the Gershgorin row discs: a kernel that
/// computes wrong values (seen with some vectorized BLAS builds) fails
/// loudly here instead of polluting downstream reports. If this errors,
/// set `OPENBLAS_CORETYPE=HASWELL` (cargo runs export it already).
pub fn dense_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    use ndarray_linalg::Eig;
    let n = m.nrows();
    let a = ndarray::Array2::from_shape_fn((n, n), |(i, j)| m[(i, j)]);
    let (vals, _) = a
        .eig()
        .map_err(|e| Error::NonConvergence(format!("eigenvalue computation failed: {e}")))?;
    let bound = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let max_mod = vals
        .iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(0.0f64, f64::max);
    if !max_mod.is_finite() || max_mod > bound * (1.0 + 1e-8) + 1e-300 {
        return Err(Error::Internal(format!(
            "eigenvalues violate the Gershgorin bound ({max_mod:.3e} > {bound:.3e}); \
             the linked BLAS kernels are producing corrupt results on this host \
             (try OPENBLAS_CORETYPE=HASWELL)"
        )));
    }
    Ok(vals.iter().map(|c| (c.re, c.im)).collect())
}

/// p-th percentile (0..=1) of |lambda - 1| over a spectrum.
pub fn spectrum_deviation_percentile(spectrum: &[(f64, f64)], p: f64) -> f64 {
    let mut devs: Vec<f64> = spectrum
        .iter()
        .map(|&(re, im)| ((re - 1.0) * (re - 1.0) + im * im).sqrt())
        .collect();
    devs.sort_by(f64::total_cmp);
    let idx = ((devs.len() as f64 - 1.0) * p).round() as usize;
    devs[idx]
}

/// Error budget for the benchmark: worst-row noise and consistency terms
/// propagated through the computed inverse norm.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBudget {
    pub inv_norm_inf: f64,
    /// max over rows of 3 (SE(b_i) + sum_j SE(G_ij) * u_scale).
    pub statistical_row_term: f64,
    /// Exit-location bias allowance: sqrt(h) times the solution gradient scale.
    pub timestep_bias_term: f64,
    /// Interpolation consistency allowance: unity defect times the solution scale.
    pub interpolation_term: f64,
    pub solution_scale: f64,
    pub gradient_scale: f64,
    pub unity_defect: f64,
    /// Total budget: inv_norm * (statistical + bias + interpolation terms).
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkConfig {
    pub disc: DiscretizationConfig,
    pub mc: McParams,
    pub basis: BasisParams,
    pub tol: f64,
    pub dense_cap: usize,
    pub series_terms: usize,
    pub truncations: Vec<usize>,
    pub ranks: Vec<usize>,
    pub recompute_budget: usize,
}

impl BenchmarkConfig {
    /// Reference desk configuration: 20x20 domain, 4x4 subdomains, four
    /// knots per unit length, three-knot elongation.
    pub fn reference(seed: u64) -> Self {
        BenchmarkConfig {
            disc: DiscretizationConfig::new(10.0, 4, 4.0, 3),
            mc: McParams::new(1e-4, 50_000, seed),
            basis: BasisParams::sinc(),
            tol: 1e-12,
            dense_cap: 5000,
            series_terms: 200,
            truncations: vec![0, 1],
            ranks: vec![0, 100],
            recompute_budget: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub order: usize,
    pub dirichlet_count: usize,
    pub max_nodal_error: f64,
    pub rms_nodal_error: f64,
    pub error_budget: ErrorBudget,
    pub structure: StructureReport,
    pub condition: ConditionReport,
    pub raw_iterations: usize,
    pub grid: TableGridReport,
    pub assemble_seconds: f64,
    pub analyze_seconds: f64,
    pub exact_at_origin: f64,
}

/// Full benchmark pipeline. Also returns the assembled system and the
/// nodal solution for artifact writing.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<(BenchmarkReport, StochasticSystem, Vec<f64>)> {
    let disc = build_discretization(&cfg.disc)?;
    let problem = ManufacturedPoisson::new(disc.domain());

    let t0 = std::time::Instant::now();
    let mut system = assemble_system(&disc, &problem, &cfg.mc, &cfg.basis)?;
    let assemble_seconds = t0.elapsed().as_secs_f64();

    let t1 = std::time::Instant::now();
    let structure = structure_check(&system)?;
    let fets = fet_inputs_series(&disc, cfg.series_terms);
    let condition = condition_report(&system, &disc, fets, cfg.dense_cap)?;
    let analyze_seconds = t1.elapsed().as_secs_f64();

    if cfg.recompute_budget > 0 {
        let ctx = RecomputeContext { disc: &disc, problem: &problem, params: &cfg.mc, basis: &cfg.basis };
        algorithm_a(&mut system, cfg.recompute_budget, Some(&ctx))?;
    }

    let grid = run_table_grid(&mut system, &cfg.truncations, &cfg.ranks, &[StartMode::Coupled], cfg.tol)?;

    // Nodal solution from the raw solve; Dirichlet values are data, not
    // unknowns, so they are taken from the right-hand side exactly.
    let raw = solve_system(&system, None, cfg.tol, system.order());
    let mut solution = raw.x.clone();
    for i in system.interior_count()..system.order() {
        solution[i] = system.rhs[i];
    }

    let mut max_err = 0.0f64;
    let mut sq_sum = 0.0f64;
    let mut u_scale = 0.0f64;
    for i in 0..system.order() {
        let p = disc.position_by_system(i);
        let exact = manufactured_solution(p[0], p[1]);
        u_scale = u_scale.max(exact.abs());
        let err = (solution[i] - exact).abs();
        max_err = max_err.max(err);
        sq_sum += err * err;
    }
    let rms = (sq_sum / system.order() as f64).sqrt();

    // Gradient scale for the bias term, sampled at the knots.
    let fd = |p: [f64; 2]| {
        let s = 1e-4;
        let gx = (manufactured_solution(p[0] + s, p[1]) - manufactured_solution(p[0] - s, p[1])) / (2.0 * s);
        let gy = (manufactured_solution(p[0], p[1] + s) - manufactured_solution(p[0], p[1] - s)) / (2.0 * s);
        (gx * gx + gy * gy).sqrt()
    };
    let grad_scale = (0..system.order())
        .step_by(7)
        .map(|i| fd(disc.position_by_system(i)))
        .fold(0.0f64, f64::max);

    // Unity defect: observed deviation of the row off-diagonal mass plus
    // Dirichlet mass from one, which folds in both the interpolation
    // partition defect and residual estimator noise.
    let mut unity_defect = 0.0f64;
    for i in 0..system.interior_count() {
        let (cols, vals) = system.matrix.row(i);
        let mut s = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c != i {
                s -= v;
            }
        }
        let d = &system.diagnostics[i];
        let defect = (s + d.dirichlet_hit_prob - 1.0).abs();
        let noise = 3.0 * d.offdiag_sum_std_err;
        unity_defect = unity_defect.max((defect - noise).max(0.0));
    }

    let mut stat_term = 0.0f64;
    for i in 0..system.interior_count() {
        let d = &system.diagnostics[i];
        let entry_sum: f64 = d.entry_std_err.iter().sum();
        stat_term = stat_term.max(3.0 * (d.rhs_std_err + entry_sum * u_scale));
    }
    let (inv_norm, _) = inv_norm_inf(&system)?;
    let bias_term = cfg.mc.timestep.sqrt() * grad_scale;
    let interp_term = unity_defect * u_scale;
    let budget = ErrorBudget {
        inv_norm_inf: inv_norm,
        statistical_row_term: stat_term,
        timestep_bias_term: bias_term,
        interpolation_term: interp_term,
        solution_scale: u_scale,
        gradient_scale: grad_scale,
        unity_defect,
        total: inv_norm * (stat_term + bias_term + interp_term),
    };

    let report = BenchmarkReport {
        schema_version: 1,
        order: system.order(),
        dirichlet_count: system.dirichlet_count,
        max_nodal_error: max_err,
        rms_nodal_error: rms,
        error_budget: budget,
        structure,
        condition,
        raw_iterations: grid.raw_iterations,
        grid,
        assemble_seconds,
        analyze_seconds,
        exact_at_origin: manufactured_solution(0.0, 0.0),
    };
    Ok((report, system, solution))
}

/// Which single discretization parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Domain grows; subdomain side and knot density fixed.
    GrowDomain,
    /// Knot density grows; domain and subdomain side fixed.
    RefineKnots,
    /// Subdomain count grows (subdomains shrink); domain and density fixed.
    ShrinkSubdomains,
}

impl ScenarioId {
    pub fn label(self) -> &'static str {
        match self {
            ScenarioId::GrowDomain => "grow-domain",
            ScenarioId::RefineKnots => "refine-knots",
            ScenarioId::ShrinkSubdomains => "shrink-subdomains",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" | "grow-domain" => Ok(ScenarioId::GrowDomain),
            "ii" | "refine-knots" => Ok(ScenarioId::RefineKnots),
            "iii" | "shrink-subdomains" => Ok(ScenarioId::ShrinkSubdomains),
            other => Err(Error::Parse(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub points: Vec<(DiscretizationConfig, McParams)>,
    pub basis: BasisParams,
    pub dense_cap: usize,
    pub series_terms: usize,
}

impl ScenarioSpec {
    /// Default desk-scale sweeps (at least four points each).
    pub fn standard(id: ScenarioId, seed: u64) -> Self {
        let mc = |samples: usize| McParams::new(1e-3, samples, seed);
        let points = match id {
            // Growing domain at fixed subdomain side and density; the last
            // point runs fewer trajectories to keep the sweep affordable.
            ScenarioId::GrowDomain => {
                [(4usize, 10.0, 4_000usize), (5, 12.5, 4_000), (6, 15.0, 4_000), (8, 20.0, 4_000), (10, 25.0, 4_000), (12, 30.0, 3_000)]
                    .iter()
                    .map(|&(m, half, s)| (DiscretizationConfig::new(half, m, 2.0, 3), mc(s)))
                    .collect()
            }
            ScenarioId::RefineKnots => [2.0, 3.0, 4.0, 6.0]
                .iter()
                .map(|&n| (DiscretizationConfig::new(10.0, 4, n, 3), mc(4_000)))
                .collect(),
            ScenarioId::ShrinkSubdomains => [4usize, 5, 8, 10]
                .iter()
                .map(|&m| (DiscretizationConfig::new(10.0, m, 2.0, 3), mc(4_000)))
                .collect(),
        };
        ScenarioSpec { id, points, basis: BasisParams::sinc(), dense_cap: 5000, series_terms: 120 }
    }

    /// Exactly one of domain size, knot density, subdomain count varies.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 4 {
            return Err(Error::Config(format!(
                "sweep needs at least 4 points, got {}",
                self.points.len()
            )));
        }
        let ok = match self.id {
            ScenarioId::GrowDomain => self.points.windows(2).all(|w| {
                let (a, b) = (&w[0].0, &w[1].0);
                b.half_side > a.half_side
                    && (a.subdomain_side() - b.subdomain_side()).abs() < 1e-12
                    && a.knot_density == b.knot_density
            }),
            ScenarioId::RefineKnots => self.points.windows(2).all(|w| {
                let (a, b) = (&w[0].0, &w[1].0);
                b.knot_density > a.knot_density
                    && a.half_side == b.half_side
                    && a.grid_count == b.grid_count
            }),
            ScenarioId::ShrinkSubdomains => self.points.windows(2).all(|w| {
                let (a, b) = (&w[0].0, &w[1].0);
                b.grid_count > a.grid_count
                    && a.half_side == b.half_side
                    && a.knot_density == b.knot_density
            }),
        };
        if !ok {
            return Err(Error::Config(format!(
                "sweep points do not follow the {:?} pattern",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioPointResult {
    pub order: usize,
    pub half_side: f64,
    pub grid_count: usize,
    pub knot_density: f64,
    pub condition: ConditionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub id: ScenarioId,
    pub points: Vec<ScenarioPointResult>,
    /// Least-squares fit of kappa_inf - 1 = beta N^alpha.
    pub fit_alpha: f64,
    pub fit_beta: f64,
}

/// Run a condition-scaling sweep. Trajectories only see the operator, so
/// the sweep assembles with zero data (the matrix is identical for any
/// right-hand side inputs).
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport> {
    spec.validate()?;
    let mut points = Vec::new();
    for (disc_cfg, mc) in &spec.points {
        let disc = build_discretization(disc_cfg)?;
        let system = assemble_system(&disc, &UnitBrownian, mc, &spec.basis)?;
        let fets = fet_inputs_series(&disc, spec.series_terms);
        let condition = condition_report(&system, &disc, fets, spec.dense_cap)?;
        points.push(ScenarioPointResult {
            order: system.order(),
            half_side: disc_cfg.half_side,
            grid_count: disc_cfg.grid_count,
            knot_density: disc_cfg.knot_density,
            condition,
        });
    }
    let samples: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.order as f64, (p.condition.kappa_inf - 1.0).max(1e-300)))
        .collect();
    let (alpha, beta) = fit_power_law(&samples);
    Ok(ScenarioReport { schema_version: 1, id: spec.id, points, fit_alpha: alpha, fit_beta: beta })
}

/// Least squares on log-log data: y = beta x^alpha.
pub fn fit_power_law(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in samples {
        let lx = x.ln();
        let ly = y.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let alpha = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let beta = ((sy - alpha * sx) / n).exp();
    (alpha, beta)
}
