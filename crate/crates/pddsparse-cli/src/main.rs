//! Command-line driver for the probabilistic domain-decomposition pipeline.
//!
//! All PDE-facing subcommands run the manufactured Poisson benchmark
//! problem (unit diffusion, zero drift and rate, source `-F/2` from the
//! closed-form solution's Laplacian), so the closed-form exit-time oracles
//! apply to every run. Artifacts are written under `--out-dir`: Matrix
//! Market for the system matrix, plain text for vectors, CSV for sweeps,
//! spectra and residual histories, JSON for reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pddsparse::assembly::{assemble_system, AssemblyReport, BasisParams, StochasticSystem};
use pddsparse::bench::{
    dump_spectrum, run_benchmark, run_scenario, run_table_grid, solve_system, BenchmarkConfig,
    ManufacturedPoisson, ScenarioId, ScenarioSpec, StartMode,
};
use pddsparse::error::{Error, Result};
use pddsparse::geometry::{build_discretization, is_valid_tessellation, Discretization, DiscretizationConfig};
use pddsparse::interp::BasisMode;
use pddsparse::matrix_analysis::{
    condition_report, fet_inputs_series, inv_norm_inf, structure_check,
};
use pddsparse::preconditioning::{
    algorithm_a, build_arnoldi_correction, precond_bounds, Histogram, NeumannPrecond,
    PrecondSummary, RecomputeContext,
};
use pddsparse::sparse::{write_vector};
use pddsparse::stochastics::{
    fet_circle, fet_rect_series, mean_fet_mc, McParams, Region, UnitBrownian,
};

/// Runtime configuration; JSON-loadable, overridable by flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct Config {
    schema_version: u32,
    /// Domain side length L (domain is [-L/2, L/2]^2).
    domain_side: f64,
    /// Subdomains per side.
    grid_count: usize,
    /// Knots per unit length.
    knot_density: f64,
    elongation: usize,
    /// "sinc" or "rbf".
    basis: String,
    /// Gaussian shape parameter (rbf mode); default 5/knot_density.
    shape_c: Option<f64>,
    samples: usize,
    timestep: f64,
    seed: u64,
    tol: f64,
    truncation: usize,
    rank: usize,
    start_mode: String,
    dense_cap: usize,
    series_terms: usize,
    recompute_budget: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema_version: 1,
            domain_side: 20.0,
            grid_count: 4,
            knot_density: 4.0,
            elongation: 3,
            basis: "sinc".into(),
            shape_c: None,
            samples: 50_000,
            timestep: 1e-4,
            seed: 20260809,
            tol: 1e-12,
            truncation: 1,
            rank: 100,
            start_mode: "coupled".into(),
            dense_cap: 5000,
            series_terms: 200,
            recompute_budget: 0,
        }
    }
}

impl Config {
    fn disc(&self) -> DiscretizationConfig {
        DiscretizationConfig::new(self.domain_side / 2.0, self.grid_count, self.knot_density, self.elongation)
    }

    fn mc(&self) -> McParams {
        McParams::new(self.timestep, self.samples, self.seed)
    }

    fn basis_params(&self) -> Result<BasisParams> {
        match self.basis.as_str() {
            "sinc" => Ok(BasisParams { mode: BasisMode::SincLimit, shape: self.shape_c }),
            "rbf" => Ok(BasisParams { mode: BasisMode::GaussianRbf, shape: self.shape_c }),
            other => Err(Error::Parse(format!("unknown basis {other:?} (expected sinc|rbf)"))),
        }
    }

    fn start_mode(&self) -> Result<StartMode> {
        self.start_mode.parse()
    }
}

#[derive(Debug, Args, Default)]
struct Overrides {
    /// Domain side length L.
    #[arg(long = "L")]
    domain_side: Option<f64>,
    /// Subdomains per side.
    #[arg(long)]
    m: Option<usize>,
    /// Knots per unit length.
    #[arg(long)]
    n: Option<f64>,
    /// Knots appended past each stencil corner.
    #[arg(long)]
    elongation: Option<usize>,
    /// Gaussian shape parameter.
    #[arg(long = "shape-c")]
    shape_c: Option<f64>,
    /// Trajectories per knot.
    #[arg(long)]
    samples: Option<usize>,
    /// Euler-Maruyama timestep.
    #[arg(long)]
    timestep: Option<f64>,
    /// Neumann truncation order t.
    #[arg(long = "t")]
    truncation: Option<usize>,
    /// Low-rank correction rank r.
    #[arg(long = "r")]
    rank: Option<usize>,
    /// GMRES relative tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// coupled | uncoupled | ones.
    #[arg(long = "start-mode")]
    start_mode: Option<String>,
    /// sinc | rbf.
    #[arg(long)]
    basis: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            };
        }
        if let Some(v) = self.domain_side {
            cfg.domain_side = v;
        }
        if let Some(v) = self.m {
            cfg.grid_count = v;
        }
        if let Some(v) = self.n {
            cfg.knot_density = v;
        }
        if let Some(v) = self.shape_c {
            cfg.shape_c = Some(v);
        }
        set!(elongation);
        set!(samples);
        set!(timestep);
        set!(truncation);
        set!(rank);
        set!(tol);
        set!(start_mode);
        set!(basis);
    }
}

#[derive(Debug, Parser)]
#[command(name = "pddsparse", about = "Probabilistic domain decomposition pipeline", version)]
struct Cli {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long = "out-dir", global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Build the tessellation and dump knots, patches and stencils.
    Geometry(Overrides),
    /// Monte Carlo assembly of the interface system.
    Assemble(Overrides),
    /// Structural census and condition diagnostics of the assembled system.
    Analyze(Overrides),
    /// Dominance projection, Neumann preconditioner and its bound report.
    Precondition(Overrides),
    /// Assemble and solve with the configured preconditioner.
    Solve(Overrides),
    /// Full benchmark: assemble, analyze, precondition, solve, compare to
    /// the closed-form solution.
    Benchmark(Overrides),
    /// Condition-number scaling sweep (i: grow domain, ii: refine knots,
    /// iii: shrink subdomains).
    Scenario {
        /// i | ii | iii (or grow-domain | refine-knots | shrink-subdomains).
        #[arg(long)]
        id: String,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Iteration counts over a (truncation, rank) grid, both start modes.
    TableGrid {
        /// Comma-separated truncation orders.
        #[arg(long = "t-list", default_value = "0,1,2,3")]
        t_list: String,
        /// Comma-separated correction ranks.
        #[arg(long = "r-list", default_value = "0,10,25,50,100")]
        r_list: String,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Dense spectrum of the raw or preconditioned operator.
    Spectrum {
        /// raw | neumann | neumann-arnoldi.
        #[arg(long, default_value = "raw")]
        operator: String,
        #[command(flatten)]
        ov: Overrides,
    },
    /// Exit-time oracle validation runs.
    FetValidate(Overrides),
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let outcome = pool.install(|| run(&cli));
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_config(cli: &Cli, ov: &Overrides) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("config: {e}")))?
        }
        None => Config::default(),
    };
    ov.apply(&mut cfg);
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(name))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Internal(format!("json: {e}")))?;
    writeln!(f)?;
    Ok(())
}

fn build(cfg: &Config) -> Result<(Discretization, ManufacturedPoisson, StochasticSystem)> {
    let disc = build_discretization(&cfg.disc())?;
    let problem = ManufacturedPoisson::new(disc.domain());
    let system = assemble_system(&disc, &problem, &cfg.mc(), &cfg.basis_params()?)?;
    Ok((disc, problem, system))
}

fn write_system(dir: &Path, system: &StochasticSystem) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut mf = fs::File::create(dir.join("matrix.mtx"))?;
    system.matrix.write_matrix_market(&mut mf)?;
    let mut vf = fs::File::create(dir.join("rhs.txt"))?;
    write_vector(&mut vf, &system.rhs)?;
    write_json(dir, "assembly.json", &AssemblyReport::new(system))?;
    // Per-row Monte Carlo statistics (entry standard errors follow the
    // matrix row pattern).
    write_json(dir, "diagnostics.json", &system.diagnostics)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Geometry(ov) => {
            let cfg = load_config(cli, ov)?;
            let check = is_valid_tessellation(&cfg.disc())?;
            let disc = build_discretization(&cfg.disc())?;
            println!(
                "knots: {} ({} Dirichlet), stencils: {}, valid tessellation: {}{}",
                disc.knot_count(),
                disc.dirichlet_count(),
                disc.stencils.len(),
                check.valid,
                check.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
            );
            write_json(&cli.out_dir, "geometry.json", &disc)?;
            write_json(&cli.out_dir, "tessellation_check.json", &check)?;
            println!("wrote {}", cli.out_dir.join("geometry.json").display());
            Ok(())
        }
        Cmd::Assemble(ov) => {
            let cfg = load_config(cli, ov)?;
            let t0 = std::time::Instant::now();
            let (_, _, system) = build(&cfg)?;
            println!(
                "assembled order {} ({} nonzeros) in {:.1} s",
                system.order(),
                system.matrix.nnz(),
                t0.elapsed().as_secs_f64()
            );
            write_system(&cli.out_dir, &system)?;
            println!("wrote matrix.mtx, rhs.txt, assembly.json to {}", cli.out_dir.display());
            Ok(())
        }
        Cmd::Analyze(ov) => {
            let cfg = load_config(cli, ov)?;
            let (disc, _, system) = build(&cfg)?;
            let structure = structure_check(&system)?;
            let fets = fet_inputs_series(&disc, cfg.series_terms);
            let condition = condition_report(&system, &disc, fets, cfg.dense_cap)?;
            println!(
                "kappa_inf = {:.3} (bound {:.3}), ||G^-1||_inf = {:.3} (bound {:.3})",
                condition.kappa_inf, condition.kappa_bound, condition.inv_infinity_norm, condition.inv_norm_bound
            );
            println!(
                "positive off-diagonals: {} of {} ({:.2}%), strongly connected: {}",
                structure.positive_offdiag.count,
                structure.positive_offdiag.offdiag_nonzeros,
                structure.positive_offdiag.fraction * 100.0,
                structure.interior_strongly_connected
            );
            write_json(&cli.out_dir, "structure.json", &structure)?;
            write_json(&cli.out_dir, "condition.json", &condition)?;
            Ok(())
        }
        Cmd::Precondition(ov) => {
            let cfg = load_config(cli, ov)?;
            let (disc, problem, mut system) = build(&cfg)?;
            let ctx = RecomputeContext {
                disc: &disc,
                problem: &problem,
                params: &cfg.mc(),
                basis: &cfg.basis_params()?,
            };
            let projection = algorithm_a(&mut system, cfg.recompute_budget, Some(&ctx))?;
            let precond = NeumannPrecond::new(&projection, cfg.truncation);
            let (g_inv, _) = inv_norm_inf(&system)?;
            let bounds = precond_bounds(&system, &precond, g_inv, cfg.dense_cap)?;
            let correction = if cfg.rank > 0 {
                let y0 = cfg.start_mode()?.arnoldi_seed(&system.rhs);
                Some(build_arnoldi_correction(&system, &precond, cfg.rank, &y0)?)
            } else {
                None
            };
            let summary = PrecondSummary {
                schema_version: 1,
                delta: projection.delta,
                truncation: cfg.truncation,
                row_delta_histogram: Histogram::of(&projection.row_deltas, 32),
                clipped_entries: projection.clip_report.entries.len(),
                recomputed_rows: projection.recomputed_rows.clone(),
                rank_achieved: correction.as_ref().map(|c| c.rank),
                breakdown: correction.as_ref().map(|c| c.breakdown),
            };
            println!(
                "delta = {:.4e}, clipped {} entries, truncated bound {:.3} (actual {:?})",
                projection.delta,
                projection.clip_report.entries.len(),
                bounds.truncated_precond_bound,
                bounds.actual_kappa_truncated
            );
            write_json(&cli.out_dir, "precond.json", &summary)?;
            write_json(&cli.out_dir, "precond_bounds.json", &bounds)?;
            Ok(())
        }
        Cmd::Solve(ov) => {
            let cfg = load_config(cli, ov)?;
            let (_, _, mut system) = build(&cfg)?;
            let projection = algorithm_a::<UnitBrownian>(&mut system, 0, None)?;
            let precond = NeumannPrecond::new(&projection, cfg.truncation);
            let correction = if cfg.rank > 0 {
                let y0 = cfg.start_mode()?.arnoldi_seed(&system.rhs);
                Some(build_arnoldi_correction(&system, &precond, cfg.rank, &y0)?)
            } else {
                None
            };
            let report = if cfg.truncation == 0 && cfg.rank == 0 {
                solve_system(&system, None, cfg.tol, system.order())
            } else {
                solve_system(&system, Some((&precond, correction.as_ref())), cfg.tol, system.order())
            };
            println!(
                "iterations: {}, converged: {}, true residual {:.3e}",
                report.iterations, report.converged, report.final_true_residual
            );
            fs::create_dir_all(&cli.out_dir)?;
            let mut sf = fs::File::create(cli.out_dir.join("solution.txt"))?;
            write_vector(&mut sf, &report.x)?;
            let mut rf = fs::File::create(cli.out_dir.join("residuals.csv"))?;
            writeln!(rf, "iteration,preconditioned_relative_residual")?;
            for (k, r) in report.residual_history.iter().enumerate() {
                writeln!(rf, "{k},{r:.16e}")?;
            }
            write_json(&cli.out_dir, "solve.json", &report)?;
            Ok(())
        }
        Cmd::Benchmark(ov) => {
            let cfg = load_config(cli, ov)?;
            let bench_cfg = BenchmarkConfig {
                disc: cfg.disc(),
                mc: cfg.mc(),
                basis: cfg.basis_params()?,
                tol: cfg.tol,
                dense_cap: cfg.dense_cap,
                series_terms: cfg.series_terms,
                truncations: vec![0, cfg.truncation.max(1)],
                ranks: vec![0, cfg.rank],
                recompute_budget: cfg.recompute_budget,
            };
            let (report, system, solution) = run_benchmark(&bench_cfg)?;
            println!(
                "order {}: max nodal error {:.4e} (budget {:.4e}), raw iterations {}",
                report.order, report.max_nodal_error, report.error_budget.total, report.raw_iterations
            );
            write_system(&cli.out_dir, &system)?;
            let mut sf = fs::File::create(cli.out_dir.join("solution.txt"))?;
            write_vector(&mut sf, &solution)?;
            write_json(&cli.out_dir, "benchmark.json", &report)?;
            Ok(())
        }
        Cmd::Scenario { id, ov } => {
            let cfg = load_config(cli, ov)?;
            let scenario_id: ScenarioId = id.parse()?;
            let spec = ScenarioSpec::standard(scenario_id, cfg.seed);
            let report = run_scenario(&spec)?;
            println!(
                "scenario {}: fitted alpha = {:.3}, beta = {:.3e}",
                scenario_id.label(),
                report.fit_alpha,
                report.fit_beta
            );
            fs::create_dir_all(&cli.out_dir)?;
            let name = format!("scenario_{}", scenario_id.label());
            let mut cf = fs::File::create(cli.out_dir.join(format!("{name}.csv")))?;
            writeln!(cf, "order,half_side,grid_count,knot_density,kappa_inf,kappa2,kappa_bound,inv_norm,inv_norm_bound")?;
            for p in &report.points {
                writeln!(
                    cf,
                    "{},{},{},{},{:.8e},{},{:.8e},{:.8e},{:.8e}",
                    p.order,
                    p.half_side,
                    p.grid_count,
                    p.knot_density,
                    p.condition.kappa_inf,
                    p.condition.kappa2.map(|v| format!("{v:.8e}")).unwrap_or_default(),
                    p.condition.kappa_bound,
                    p.condition.inv_infinity_norm,
                    p.condition.inv_norm_bound,
                )?;
            }
            write_json(&cli.out_dir, &format!("{name}.json"), &report)?;
            Ok(())
        }
        Cmd::TableGrid { t_list, r_list, ov } => {
            let cfg = load_config(cli, ov)?;
            let parse_list = |s: &str| -> Result<Vec<usize>> {
                s.split(',')
                    .map(|x| x.trim().parse().map_err(|_| Error::Parse(format!("bad list entry {x:?}"))))
                    .collect()
            };
            let ts = parse_list(t_list)?;
            let rs = parse_list(r_list)?;
            let (_, _, mut system) = build(&cfg)?;
            let report = run_table_grid(
                &mut system,
                &ts,
                &rs,
                &[StartMode::Coupled, StartMode::Uncoupled],
                cfg.tol,
            )?;
            println!("raw iterations: {}", report.raw_iterations);
            fs::create_dir_all(&cli.out_dir)?;
            let mut cf = fs::File::create(cli.out_dir.join("table_grid.csv"))?;
            writeln!(cf, "t,r,start_mode,iterations,converged,build_matvecs,build_seconds,solve_seconds,cost,pays")?;
            for c in &report.cells {
                writeln!(
                    cf,
                    "{},{},{:?},{},{},{},{:.3},{:.3},{},{}",
                    c.truncation,
                    c.rank,
                    c.start_mode,
                    c.iterations,
                    c.converged,
                    c.build_matvecs,
                    c.build_seconds,
                    c.solve_seconds,
                    c.cost.cost,
                    c.cost.pays
                )?;
            }
            write_json(&cli.out_dir, "table_grid.json", &report)?;
            Ok(())
        }
        Cmd::Spectrum { operator, ov } => {
            let cfg = load_config(cli, ov)?;
            let (_, _, mut system) = build(&cfg)?;
            let spectrum = match operator.as_str() {
                "raw" => dump_spectrum(&system, None, cfg.dense_cap)?,
                "neumann" => {
                    let projection = algorithm_a::<UnitBrownian>(&mut system, 0, None)?;
                    let precond = NeumannPrecond::new(&projection, cfg.truncation);
                    dump_spectrum(&system, Some((&precond, None)), cfg.dense_cap)?
                }
                "neumann-arnoldi" => {
                    let projection = algorithm_a::<UnitBrownian>(&mut system, 0, None)?;
                    let precond = NeumannPrecond::new(&projection, cfg.truncation);
                    let y0 = cfg.start_mode()?.arnoldi_seed(&system.rhs);
                    let corr = build_arnoldi_correction(&system, &precond, cfg.rank, &y0)?;
                    dump_spectrum(&system, Some((&precond, Some(&corr))), cfg.dense_cap)?
                }
                other => return Err(Error::Parse(format!("unknown operator {other:?}"))),
            };
            fs::create_dir_all(&cli.out_dir)?;
            let name = format!("spectrum_{operator}.csv");
            let mut f = fs::File::create(cli.out_dir.join(&name))?;
            writeln!(f, "re,im")?;
            for (re, im) in &spectrum {
                writeln!(f, "{re:.16e},{im:.16e}")?;
            }
            println!("wrote {} eigenvalues to {}", spectrum.len(), cli.out_dir.join(&name).display());
            Ok(())
        }
        Cmd::FetValidate(ov) => {
            let cfg = load_config(cli, ov)?;
            #[derive(Serialize)]
            struct FetValidation {
                schema_version: u32,
                disc_mean: f64,
                disc_std_err: f64,
                disc_expected: f64,
                disc_tolerance: f64,
                disc_ok: bool,
                square_mean: f64,
                square_std_err: f64,
                square_series: f64,
                square_tolerance: f64,
                square_ok: bool,
                scaling_exact: bool,
            }
            let disc_params = McParams::new(1e-4, 100_000, cfg.seed);
            let disc_est = mean_fet_mc(
                &Region::Disc { center: [0.0, 0.0], radius: 1.0 },
                [0.0, 0.0],
                &disc_params,
            )?;
            let disc_tol = 3.0 * disc_est.std_err + 2.0 * disc_params.timestep.sqrt();
            let disc_expected = fet_circle(1.0, 0.0)?;

            let sq_params = McParams::new(1e-5, 30_000, cfg.seed ^ 0x5157);
            let sq_est = mean_fet_mc(
                &Region::Rect(pddsparse::geometry::Rect::new([-0.5, -0.5], [0.5, 0.5])),
                [0.0, 0.0],
                &sq_params,
            )?;
            let series = fet_rect_series((0.5, 0.5), (0.0, 0.0), 200);
            let sq_tol = 3.0 * sq_est.std_err + 2.0 * sq_params.timestep.sqrt();

            // Path-by-path quadratic scaling under domain doubling.
            let scaling_exact = {
                use pddsparse::rng::{trajectory_rng, StreamKey};
                use pddsparse::stochastics::simulate_exit;
                let small = Region::Rect(pddsparse::geometry::Rect::new([-1.0, -0.5], [1.0, 0.5]));
                let big = Region::Rect(pddsparse::geometry::Rect::new([-2.0, -1.0], [2.0, 1.0]));
                let ps = McParams::new(1e-3, 1, cfg.seed);
                let pb = McParams::new(4e-3, 1, cfg.seed);
                (0..200u64).all(|t| {
                    let mut r1 = trajectory_rng(StreamKey::new(cfg.seed, 0, t, 0));
                    let mut r2 = trajectory_rng(StreamKey::new(cfg.seed, 0, t, 0));
                    let a = simulate_exit(&small, [0.25, 0.0], &UnitBrownian, &ps, &mut r1);
                    let b = simulate_exit(&big, [0.5, 0.0], &UnitBrownian, &pb, &mut r2);
                    b.tau == 4.0 * a.tau
                })
            };

            let report = FetValidation {
                schema_version: 1,
                disc_mean: disc_est.mean,
                disc_std_err: disc_est.std_err,
                disc_expected,
                disc_tolerance: disc_tol,
                disc_ok: (disc_est.mean - disc_expected).abs() < disc_tol,
                square_mean: sq_est.mean,
                square_std_err: sq_est.std_err,
                square_series: series,
                square_tolerance: sq_tol,
                square_ok: (sq_est.mean - series).abs() < sq_tol,
                scaling_exact,
            };
            println!(
                "disc: {:.5} vs {:.5} (tol {:.5}) -> {}",
                report.disc_mean, report.disc_expected, report.disc_tolerance, report.disc_ok
            );
            println!(
                "square: {:.5} vs series {:.5} (tol {:.5}) -> {}",
                report.square_mean, report.square_series, report.square_tolerance, report.square_ok
            );
            println!("quadratic scaling exact: {}", report.scaling_exact);
            write_json(&cli.out_dir, "fet_validate.json", &report)?;
            Ok(())
        }
    }
}
