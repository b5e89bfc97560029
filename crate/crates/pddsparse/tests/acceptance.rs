//! Acceptance suite: one checked criterion per numbered block, each
//! printing a PASS/FAIL line (run with `-- --nocapture` to see them live).
//!
//! Shared systems: the "desk" system (20x20 domain, 4x4 subdomains, four
//! knots per unit length, 50k trajectories per knot) backs the structure,
//! inverse-norm, preconditioner and spectrum criteria; a ~2200-knot system
//! backs the iteration-behavior criterion; the pinned reference benchmark
//! (timestep 1e-4) backs the end-to-end accuracy criterion and dominates
//! the runtime of the suite.

use nalgebra::DMatrix;

use pddsparse::assembly::{assemble_system, BasisParams, StochasticSystem};
use pddsparse::bench::{
    dump_spectrum, run_benchmark, run_scenario, run_table_grid, spectrum_deviation_percentile,
    BenchmarkConfig, ScenarioId, ScenarioSpec, StartMode,
};
use pddsparse::geometry::{build_discretization, Discretization, DiscretizationConfig};
use pddsparse::interp::{sinc_orthonormality_check, BasisMode, CardinalBasis};
use pddsparse::matrix_analysis::{
    clipped_system, condition_report, fet_inputs_series, inv_norm_paths,
    mmatrix_screen, structure_check,
};
use pddsparse::preconditioning::{
    algorithm_a, apply_corrected, apply_neumann, build_arnoldi_correction,
    precond_bounds, sparse_times_dense, NeumannPrecond,
};
use pddsparse::rng::{trajectory_rng, StreamKey};
use pddsparse::sparse::CsrMatrix;
use pddsparse::stochastics::{
    fet_circle, fet_rect_series, mean_fet_mc, simulate_exit, McParams, Region, UnitBrownian,
};

const SEED: u64 = 20260809;

struct Suite {
    failures: Vec<String>,
}

impl Suite {
    fn check(&mut self, criterion: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {criterion}: {detail}");
        if !pass {
            self.failures.push(format!("{criterion}: {detail}"));
        }
    }
}

fn desk_config() -> DiscretizationConfig {
    DiscretizationConfig::new(10.0, 4, 4.0, 3)
}

/// Desk system for the structural criteria. The matrix entries do not
/// depend on source or boundary data, so the operator-only problem
/// produces bit-identical entries to the benchmark problem at equal
/// parameters. The timestep is chosen to fit the stated runtime budget;
/// the trajectory count is the pinned 5e4.
fn assemble_desk() -> (Discretization, StochasticSystem) {
    let disc = build_discretization(&desk_config()).unwrap();
    let params = McParams::new(3.5e-3, 50_000, SEED);
    let system = assemble_system(&disc, &UnitBrownian, &params, &BasisParams::sinc()).unwrap();
    (disc, system)
}

fn criterion_1_fet_oracles(s: &mut Suite) {
    let t0 = std::time::Instant::now();

    let disc_params = McParams::new(1e-4, 100_000, SEED);
    let est = mean_fet_mc(&Region::Disc { center: [0.0, 0.0], radius: 1.0 }, [0.0, 0.0], &disc_params)
        .unwrap();
    let expected = fet_circle(1.0, 0.0).unwrap();
    let tol = 3.0 * est.std_err + 2.0 * disc_params.timestep.sqrt();
    s.check(
        "1 exit-time oracles / disc closed form",
        (est.mean - expected).abs() < tol,
        format!("mc {:.5} vs {expected} (tol {tol:.5})", est.mean),
    );

    let sq_params = McParams::new(1e-5, 30_000, SEED ^ 0x51);
    let sq = mean_fet_mc(
        &Region::Rect(pddsparse::geometry::Rect::new([-0.5, -0.5], [0.5, 0.5])),
        [0.0, 0.0],
        &sq_params,
    )
    .unwrap();
    let series = fet_rect_series((0.5, 0.5), (0.0, 0.0), 200);
    s.check(
        "1 exit-time oracles / square series vs mc",
        (sq.mean - series).abs() < 3.0 * sq.std_err,
        format!("mc {:.5} vs series {series:.5} (3se {:.5})", sq.mean, 3.0 * sq.std_err),
    );

    let small = Region::Rect(pddsparse::geometry::Rect::new([-1.0, -0.5], [1.0, 0.5]));
    let big = Region::Rect(pddsparse::geometry::Rect::new([-2.0, -1.0], [2.0, 1.0]));
    let ps = McParams::new(1e-3, 1, SEED);
    let pb = McParams::new(4e-3, 1, SEED);
    let exact = (0..500u64).all(|t| {
        let mut r1 = trajectory_rng(StreamKey::new(SEED, 0, t, 0));
        let mut r2 = trajectory_rng(StreamKey::new(SEED, 0, t, 0));
        let a = simulate_exit(&small, [0.25, -0.125], &UnitBrownian, &ps, &mut r1);
        let b = simulate_exit(&big, [0.5, -0.25], &UnitBrownian, &pb, &mut r2);
        b.tau == 4.0 * a.tau
    });
    s.check(
        "1 exit-time oracles / quadratic scaling exact per path",
        exact,
        "500 paths, doubled domain, timestep x4".into(),
    );

    let elapsed = t0.elapsed().as_secs_f64();
    s.check("1 exit-time oracles / runtime", elapsed < 60.0, format!("{elapsed:.1} s (< 60 s)"));
}

fn criterion_2_interpolation(s: &mut Suite) {
    let t0 = std::time::Instant::now();

    let mut worst = 0.0f64;
    for (count, dz, c) in [(5usize, 1.0, 5.0), (9, 1.0, 5.0), (9, 0.5, 2.5)] {
        let nodes: Vec<f64> = (0..count).map(|i| i as f64 * dz).collect();
        let basis = CardinalBasis::build(&nodes, dz, c, BasisMode::GaussianRbf).unwrap();
        let mut vals = vec![0.0; count];
        for (k, &zk) in nodes.iter().enumerate() {
            basis.eval_all(zk, &mut vals);
            for (j, &v) in vals.iter().enumerate() {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
    }
    s.check(
        "2 interpolation / cardinal delta property",
        worst <= 1e-8,
        format!("max defect {worst:.3e} (<= 1e-8)"),
    );

    let nodes: Vec<f64> = (0..9).map(|i| i as f64).collect();
    let basis = CardinalBasis::build(&nodes, 1.0, 5.0, BasisMode::GaussianRbf).unwrap();
    let pou = basis.partition_of_unity_defect(101);
    s.check(
        "2 interpolation / partition of unity",
        pou <= 1e-3,
        format!("defect {pou:.3e} on 9 nodes at c = 5 dz (<= 1e-3)"),
    );

    let o0 = sinc_orthonormality_check(0, 500.0, 1e-2);
    let o1 = sinc_orthonormality_check(1, 500.0, 1e-2);
    let o5 = sinc_orthonormality_check(5, 500.0, 1e-2);
    s.check(
        "2 interpolation / sinc orthonormality",
        (o0 - 1.0).abs() < 1e-3 && o1.abs() < 1e-3 && o5.abs() < 1e-3,
        format!("lags 0,1,5 -> {o0:.6}, {o1:.2e}, {o5:.2e}"),
    );

    let elapsed = t0.elapsed().as_secs_f64();
    s.check("2 interpolation / runtime", elapsed < 60.0, format!("{elapsed:.1} s"));
}

fn criterion_3_structure(s: &mut Suite, disc: &Discretization, system: &StochasticSystem) -> f64 {
    let t0 = std::time::Instant::now();
    let rep = structure_check(system).unwrap();

    s.check("3 structure / unit diagonal", rep.diagonal_is_one, "all stored diagonals exactly 1".into());
    s.check(
        "3 structure / boundary block identity",
        rep.dirichlet_block_is_identity,
        "boundary rows carry no off-diagonals".into(),
    );

    // Strong connectivity on the five-per-side variant (the interior block
    // of the 4x4 desk grid is also checked, informationally).
    let disc5 = build_discretization(&DiscretizationConfig::new(12.5, 5, 1.0, 3)).unwrap();
    let sys5 = assemble_system(
        &disc5,
        &UnitBrownian,
        &McParams::new(5e-3, 100, SEED),
        &BasisParams::sinc(),
    )
    .unwrap();
    let rep5 = structure_check(&sys5).unwrap();
    s.check(
        "3 structure / interior block strongly connected (5x5 grid)",
        rep5.interior_strongly_connected,
        format!("order {} ({} interior)", sys5.order(), sys5.interior_count()),
    );

    let census = &rep.positive_offdiag;
    s.check(
        "3 structure / positive off-diagonal count",
        census.fraction <= 0.01,
        format!(
            "{} of {} positive ({:.2}%), required <= 1%",
            census.count,
            census.offdiag_nonzeros,
            census.fraction * 100.0
        ),
    );
    s.check(
        "3 structure / positive entries within noise",
        census.max_value_over_se <= 3.0,
        format!("max positive value/SE {:.2}, required <= 3", census.max_value_over_se),
    );

    let mut worst_excess = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut max_rowsum_se = 0.0f64;
    for i in 0..system.interior_count() {
        let se = system.diagnostics[i].offdiag_sum_std_err;
        max_rowsum_se = max_rowsum_se.max(se);
        let excess = rep.row_abs_offdiag_sums[i] - 1.0 - 3.0 * se - 1e-3;
        if excess > 0.0 {
            violations += 1;
        }
        worst_excess = worst_excess.max(excess);
    }
    s.check(
        "3 structure / row dominance",
        violations == 0,
        format!("{violations} rows above 1 + 3se + 1e-3 (worst excess {worst_excess:.2e})"),
    );

    // Strict margin on a boundary-exposed row: a perimeter row with a
    // substantial absorbing leak.
    let strict = (0..system.interior_count()).any(|i| {
        system.diagnostics[i].dirichlet_hit_prob > 0.05 && rep.row_abs_offdiag_sums[i] < 1.0 - 0.01
    });
    s.check(
        "3 structure / strict dominance on an exposed row",
        strict,
        "at least one absorbing-exposed row well below unit off-diagonal mass".into(),
    );

    s.check(
        "3 structure / infinity norm",
        rep.infinity_norm <= 2.0 + 3.0 * max_rowsum_se,
        format!("{:.6} vs 2 + 3se = {:.6}", rep.infinity_norm, 2.0 + 3.0 * max_rowsum_se),
    );

    let elapsed = t0.elapsed().as_secs_f64();
    s.check("3 structure / runtime (checks)", elapsed < 600.0, format!("{elapsed:.1} s"));
    let _ = disc;
    elapsed
}

fn criterion_4_inverse_norm(s: &mut Suite, disc: &Discretization, system: &StochasticSystem) {
    // Bound with closed-form exit-time inputs, 20% slack.
    let fets = fet_inputs_series(disc, 200);
    let cond = condition_report(system, disc, fets, 5000).unwrap();
    let bound = cond.inv_norm_bound;
    s.check(
        "4 inverse norm / exit-time bound",
        cond.inv_infinity_norm <= 1.2 * bound,
        format!("{:.3} <= 1.2 x {:.3}", cond.inv_infinity_norm, bound),
    );

    // Path agreement where both paths run: a closed-form M-matrix and the
    // clipped desk system (the raw desk system fails the M-matrix screen
    // whenever noise leaves positive entries, and then only the dense path
    // is valid).
    let bidiagonal = CsrMatrix::from_rows(
        3,
        vec![
            (vec![0], vec![1.0]),
            (vec![0, 1], vec![-0.5, 1.0]),
            (vec![1, 2], vec![-0.5, 1.0]),
        ],
    )
    .unwrap();
    let (sv, dv) = inv_norm_paths(&bidiagonal).unwrap();
    let ok_small = (sv - dv).abs() <= 1e-10 * dv.max(1.0);
    let clipped = clipped_system(system);
    let screen = mmatrix_screen(&clipped);
    let (cs, cd) = inv_norm_paths(&clipped.matrix).unwrap();
    let ok_desk = (cs - cd).abs() <= 1e-8 * cd;
    s.check(
        "4 inverse norm / path agreement",
        ok_small && ok_desk && screen,
        format!(
            "bidiagonal {sv:.12} vs {dv:.12}; clipped desk {cs:.8} vs {cd:.8} (screen {screen})"
        ),
    );
}

fn criterion_5_condition_scaling(s: &mut Suite) {
    let t0 = std::time::Instant::now();
    for id in [ScenarioId::GrowDomain, ScenarioId::RefineKnots, ScenarioId::ShrinkSubdomains] {
        let spec = ScenarioSpec::standard(id, SEED);
        let rep = run_scenario(&spec).unwrap();
        let mut all_bounded = true;
        let mut lemma_i = true;
        let mut skeel_ok = true;
        let mut detail = String::new();
        for p in &rep.points {
            let c = &p.condition;
            if c.kappa_inf > 1.2 * c.kappa_bound {
                all_bounded = false;
            }
            // In exact arithmetic the norm is at most 2, so the condition
            // number is at most twice the inverse norm. The realized norm
            // exceeds 2 by the clipped positive mass plus estimator noise;
            // the check carries that allowance.
            let norm_allowance = 2.0 + 3.0 * c.max_rowsum_std_err + 1e-3;
            if c.kappa_inf > norm_allowance * c.inv_infinity_norm {
                lemma_i = false;
            }
            if let (Some(sk), Some(kc)) = (c.skeel_clipped, c.kappa_inf_clipped) {
                if sk > 1.0 + kc + 1e-9 {
                    skeel_ok = false;
                }
            }
            detail.push_str(&format!("N={} k={:.1}/{:.1} ", p.order, c.kappa_inf, c.kappa_bound));
        }
        s.check(
            &format!("5 condition scaling / bound ({})", id.label()),
            all_bounded,
            detail.clone(),
        );
        s.check(
            &format!("5 condition scaling / norm inequalities ({})", id.label()),
            lemma_i && skeel_ok,
            format!("norm-product and clipped-skeel checks (lemma_i {lemma_i}, skeel {skeel_ok})"),
        );
        let fit_ok = match id {
            ScenarioId::GrowDomain | ScenarioId::RefineKnots => rep.fit_alpha <= 1.3,
            ScenarioId::ShrinkSubdomains => true,
        };
        s.check(
            &format!("5 condition scaling / fitted exponent ({})", id.label()),
            fit_ok,
            format!("alpha = {:.3}, beta = {:.3e}", rep.fit_alpha, rep.fit_beta),
        );
    }
    let elapsed = t0.elapsed().as_secs_f64();
    s.check("5 condition scaling / runtime", elapsed < 3600.0, format!("{elapsed:.0} s (< 3600)"));
}

fn criterion_6_preconditioner(s: &mut Suite, system: &StochasticSystem) {
    // Worked 3x3 projection example.
    {
        use pddsparse::assembly::RowDiagnostics;
        let matrix = CsrMatrix::from_rows(
            3,
            vec![
                (vec![0, 1, 2], vec![1.0, -0.7, -0.5]),
                (vec![0, 1, 2], vec![-0.3, 1.0, 0.2]),
                (vec![0, 1, 2], vec![-0.1, -0.4, 1.0]),
            ],
        )
        .unwrap();
        let diagnostics = (0..3)
            .map(|i| RowDiagnostics {
                samples: 1,
                truncated: 0,
                dirichlet_hits: 0,
                entry_std_err: vec![0.0; matrix.row(i).0.len()],
                rhs_std_err: 0.0,
                offdiag_sum_std_err: 0.0,
                dirichlet_hit_prob: 0.0,
                truncation_fraction: 0.0,
                generation: 0,
            })
            .collect();
        let mut toy = StochasticSystem {
            matrix,
            rhs: vec![0.0; 3],
            diagnostics,
            dirichlet_count: 0,
            seed: 0,
        };
        let proj = algorithm_a::<UnitBrownian>(&mut toy, 0, None).unwrap();
        let ok = (proj.delta - 0.2).abs() < 1e-14
            && proj.e_delta.value_at(1, 2) == -0.2
            && proj.b_delta.value_at(0, 1) == 0.7
            && proj.b_delta.value_at(1, 2) == 0.0;
        s.check(
            "6 preconditioner / worked projection example",
            ok,
            format!("delta {:.3}, clipped (1,2) -> {:.3}", proj.delta, proj.e_delta.value_at(1, 2)),
        );
    }

    let mut work = system.clone();
    let projection = algorithm_a::<UnitBrownian>(&mut work, 0, None).unwrap();
    let fets_cond = {
        let disc = build_discretization(&desk_config()).unwrap();
        let fets = fet_inputs_series(&disc, 150);
        condition_report(&work, &disc, fets, 5000).unwrap()
    };

    let mut rho_ok = true;
    let mut identity_ok = true;
    let mut bound_ok = true;
    let mut bound_detail = String::new();
    let n = work.order();
    for t in [1usize, 2, 5] {
        let p = NeumannPrecond::new(&projection, t);
        let b = precond_bounds(&work, &p, fets_cond.inv_infinity_norm, 5000).unwrap();
        if b.b_spectral_radius >= 1.0 + p.delta {
            rho_ok = false;
        }
        // Dense identity: truncated-inverse times projected matrix equals
        // I - (B/(1+delta))^(t+1).
        let one_plus = 1.0 + p.delta;
        let mut pd = p.b_delta.to_dense() * -1.0;
        for i in 0..n {
            pd[(i, i)] += one_plus;
        }
        let mut prod = DMatrix::zeros(n, n);
        let mut out = vec![0.0; n];
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| pd[(i, j)]).collect();
            apply_neumann(&p, &col, &mut out);
            for i in 0..n {
                prod[(i, j)] = out[i];
            }
        }
        let mut cpow = DMatrix::<f64>::identity(n, n);
        for _ in 0..=t {
            cpow = sparse_times_dense(&p.b_delta, &cpow) / one_plus;
        }
        let mut t_mat = -cpow;
        for i in 0..n {
            t_mat[(i, i)] += 1.0;
        }
        let diff = (&prod - &t_mat).abs().max();
        if diff > 1e-9 {
            identity_ok = false;
        }
        let actual = b.actual_kappa_truncated.unwrap();
        if b.truncated_precond_bound < actual {
            bound_ok = false;
        }
        bound_detail.push_str(&format!("t={t}: {:.2} vs {:.2}; ", b.truncated_precond_bound, actual));
    }
    s.check(
        "6 preconditioner / iteration-matrix radius",
        rho_ok,
        format!("rho below 1 + delta = {:.4}", 1.0 + projection.delta),
    );
    s.check("6 preconditioner / truncation identity", identity_ok, "within 1e-9 densely".into());
    s.check("6 preconditioner / truncated bound vs actual", bound_ok, bound_detail);

    // Full-rank correction inverts exactly on the interior block of a
    // small assembled system. (The full matrix's exact identity block
    // gives the Arnoldi operator an eigenvalue of geometric multiplicity
    // equal to the boundary-knot count, which forces a breakdown at
    // N - m_D + 1 from any single start vector; the interior block is
    // generically nonderogatory, which is the premise of the exactness
    // property.)
    {
        let disc = build_discretization(&DiscretizationConfig::new(4.5, 3, 2.0, 2)).unwrap();
        let small = assemble_system(
            &disc,
            &UnitBrownian,
            &McParams::new(2e-3, 500, SEED ^ 7),
            &BasisParams::sinc(),
        )
        .unwrap();
        let mut small_sys = pddsparse::matrix_analysis::interior_block(&small).unwrap();
        let proj = algorithm_a::<UnitBrownian>(&mut small_sys, 0, None).unwrap();
        let p = NeumannPrecond::new(&proj, 1);
        let ns = small_sys.order();
        let y0: Vec<f64> = {
            use rand::Rng;
            let mut rng = trajectory_rng(StreamKey::new(SEED, 999, 0, 0));
            (0..ns).map(|_| rng.random::<f64>() - 0.5).collect()
        };
        let corr = build_arnoldi_correction(&small_sys, &p, ns, &y0).unwrap();
        let dense = small_sys.matrix.to_dense();
        let mut pig = DMatrix::zeros(ns, ns);
        let mut out = vec![0.0; ns];
        for j in 0..ns {
            let col: Vec<f64> = (0..ns).map(|i| dense[(i, j)]).collect();
            apply_corrected(&p, &corr, &col, &mut out);
            for i in 0..ns {
                pig[(i, j)] = out[i];
            }
        }
        let diff = (&pig - DMatrix::<f64>::identity(ns, ns)).abs().max();
        s.check(
            "6 preconditioner / full-rank correction exactness",
            corr.rank == ns && !corr.breakdown && diff < 1e-8,
            format!("order {ns}, rank {} (breakdown {}), max defect {diff:.2e}", corr.rank, corr.breakdown),
        );
    }
}

fn criterion_7_iteration_behavior(s: &mut Suite) {
    let t0 = std::time::Instant::now();
    let disc = build_discretization(&DiscretizationConfig::new(20.0, 8, 4.0, 3)).unwrap();
    let params = McParams::new(1.5e-3, 4_000, SEED);
    // Boundary data gives the right-hand side real content so the coupled
    // Arnoldi seed is meaningful.
    let problem = pddsparse::stochastics::BrownianDirichlet {
        dirichlet: |p: [f64; 2]| pddsparse::bench::manufactured_solution(p[0], p[1]),
    };
    let mut system = assemble_system(&disc, &problem, &params, &BasisParams::sinc()).unwrap();
    println!(
        "    [info] iteration-behavior system: order {} assembled in {:.0} s",
        system.order(),
        t0.elapsed().as_secs_f64()
    );

    let grid = run_table_grid(
        &mut system,
        &[0, 1],
        &[0, 25, 50, 100],
        &[StartMode::Coupled, StartMode::Uncoupled],
        1e-12,
    )
    .unwrap();

    let it = |t: usize, r: usize, mode: StartMode| -> Option<usize> {
        grid.cells
            .iter()
            .find(|c| c.truncation == t && c.rank == r && (r == 0 || c.start_mode == mode))
            .map(|c| c.iterations)
    };
    let raw = grid.raw_iterations;
    let neumann1 = it(1, 0, StartMode::Coupled).unwrap();
    s.check(
        "7 iteration behavior / single-sweep speedup",
        (neumann1 as f64) <= 0.7 * raw as f64,
        format!("t=1: {neumann1} vs raw {raw} (ratio {:.2})", neumann1 as f64 / raw as f64),
    );

    let coupled: Vec<usize> = [0usize, 25, 50, 100]
        .iter()
        .map(|&r| it(1, r, StartMode::Coupled).unwrap())
        .collect();
    let monotone = coupled.windows(2).all(|w| w[1] <= w[0]);
    s.check(
        "7 iteration behavior / monotone in rank",
        monotone,
        format!("t=1 coupled iterations over ranks 0,25,50,100: {coupled:?}"),
    );

    let mut coupled_wins = true;
    let mut detail = String::new();
    for r in [50usize, 100] {
        let c = it(1, r, StartMode::Coupled).unwrap();
        let u = it(1, r, StartMode::Uncoupled).unwrap();
        if c > u {
            coupled_wins = false;
        }
        detail.push_str(&format!("r={r}: {c} vs {u}; "));
    }
    s.check("7 iteration behavior / coupled start wins", coupled_wins, detail);

    // Cost verdicts are recorded, not asserted.
    for c in &grid.cells {
        if c.start_mode == StartMode::Coupled {
            println!(
                "    [info] cell t={} r={}: {} iterations, cost {} ({})",
                c.truncation,
                c.rank,
                c.iterations,
                c.cost.cost,
                if c.cost.pays { "pays" } else { "does not pay" }
            );
        }
    }
    println!("    [info] iteration-behavior criterion took {:.0} s", t0.elapsed().as_secs_f64());
}

fn criterion_8_spectrum(s: &mut Suite, system: &StochasticSystem) {
    let mut work = system.clone();
    let projection = algorithm_a::<UnitBrownian>(&mut work, 0, None).unwrap();
    let precond = NeumannPrecond::new(&projection, 1);
    // Coupled seed needs nonzero data; the operator-only desk system has a
    // zero right-hand side, so seed with ones (the uncoupled start).
    let y0 = vec![1.0; work.order()];
    let corr = build_arnoldi_correction(&work, &precond, 100, &y0).unwrap();

    let raw = dump_spectrum(&work, None, 5000).unwrap();
    let pre = dump_spectrum(&work, Some((&precond, Some(&corr))), 5000).unwrap();
    let p90_raw = spectrum_deviation_percentile(&raw, 0.9);
    let p90_pre = spectrum_deviation_percentile(&pre, 0.9);
    s.check(
        "8 spectrum clustering / 90th percentile contraction",
        p90_pre * 5.0 <= p90_raw,
        format!("raw p90 |z-1| = {p90_raw:.4}, corrected = {p90_pre:.6} (need 5x)"),
    );
}

fn criterion_9_benchmark(s: &mut Suite) {
    let t0 = std::time::Instant::now();
    let cfg = BenchmarkConfig::reference(SEED);
    let (report, system, solution) = run_benchmark(&cfg).unwrap();
    println!(
        "    [info] benchmark assembled in {:.0} s, analyzed in {:.0} s",
        report.assemble_seconds, report.analyze_seconds
    );

    let budget = report.error_budget.total;
    let ceiling = budget.min(0.05);
    s.check(
        "9 benchmark accuracy / nodal error",
        report.max_nodal_error <= ceiling,
        format!(
            "max error {:.4e} vs min(budget {:.3e}, 0.05) = {:.3e}; rms {:.4e}",
            report.max_nodal_error, budget, ceiling, report.rms_nodal_error
        ),
    );

    let dirichlet_exact = (system.interior_count()..system.order())
        .all(|i| solution[i] == system.rhs[i]);
    s.check(
        "9 benchmark accuracy / boundary knots exact",
        dirichlet_exact,
        "boundary nodal values equal their data".into(),
    );
    println!("    [info] benchmark criterion took {:.0} s total", t0.elapsed().as_secs_f64());
}

fn criterion_10_determinism(s: &mut Suite) {
    let disc = build_discretization(&DiscretizationConfig::new(3.0, 3, 2.0, 1)).unwrap();
    let params = McParams::new(1e-3, 300, SEED);

    let snapshot = |threads: usize| -> Vec<u8> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let system = assemble_system(
                &disc,
                &UnitBrownian,
                &params,
                &BasisParams::sinc(),
            )
            .unwrap();
            let mut bytes = Vec::new();
            system.matrix.write_matrix_market(&mut bytes).unwrap();
            pddsparse::sparse::write_vector(&mut bytes, &system.rhs).unwrap();
            let rep = pddsparse::bench::solve_system(&system, None, 1e-12, system.order());
            pddsparse::sparse::write_vector(&mut bytes, &rep.x).unwrap();
            let structure = structure_check(&system).unwrap();
            bytes.extend_from_slice(serde_json::to_string(&structure).unwrap().as_bytes());
            bytes
        })
    };

    let one = snapshot(1);
    let four = snapshot(4);
    let again = snapshot(4);
    s.check(
        "10 determinism / thread count and rerun invariance",
        one == four && four == again,
        format!("{} artifact bytes identical across pools of 1 and 4 and a rerun", one.len()),
    );
}

#[test]
fn acceptance_criteria() {
    let mut s = Suite { failures: Vec::new() };
    let wall = std::time::Instant::now();

    criterion_2_interpolation(&mut s);
    criterion_1_fet_oracles(&mut s);
    criterion_10_determinism(&mut s);

    println!("    [info] assembling the shared desk system (50k trajectories per knot)...");
    let t_desk = std::time::Instant::now();
    let (disc, system) = assemble_desk();
    let assemble_seconds = t_desk.elapsed().as_secs_f64();
    println!("    [info] desk system assembled in {assemble_seconds:.0} s");
    let check_seconds = criterion_3_structure(&mut s, &disc, &system);
    s.check(
        "3 structure / runtime (assembly + checks)",
        assemble_seconds + check_seconds < 600.0,
        format!("{:.0} s (< 600)", assemble_seconds + check_seconds),
    );
    criterion_4_inverse_norm(&mut s, &disc, &system);
    criterion_6_preconditioner(&mut s, &system);
    criterion_8_spectrum(&mut s, &system);

    criterion_5_condition_scaling(&mut s);
    criterion_7_iteration_behavior(&mut s);
    criterion_9_benchmark(&mut s);

    println!("    [info] acceptance suite wall time {:.0} s", wall.elapsed().as_secs_f64());
    assert!(
        s.failures.is_empty(),
        "{} acceptance clause(s) failed:\n  - {}",
        s.failures.len(),
        s.failures.join("\n  - ")
    );
}
