//! Desk-system probe: assemble the reference discretization and print the
//! structural census, norms, bound values, and preconditioner diagnostics.

use nalgebra::DMatrix;
use pddsparse::assembly::{assemble_system, BasisParams};
use pddsparse::geometry::{build_discretization, DiscretizationConfig};
use pddsparse::matrix_analysis::*;
use pddsparse::preconditioning::*;
use pddsparse::stochastics::{McParams, UnitBrownian};

fn main() {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let h: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let cfg = DiscretizationConfig::new(10.0, 4, 4.0, 3);
    let disc = build_discretization(&cfg).unwrap();
    println!("N = {}, dirichlet = {}", disc.knot_count(), disc.dirichlet_count());

    let t0 = std::time::Instant::now();
    let params = McParams::new(h, samples, 20260809);
    let mut system = assemble_system(&disc, &UnitBrownian, &params, &BasisParams::sinc()).unwrap();
    println!("assemble: {:.1} s (samples {samples}, h {h})", t0.elapsed().as_secs_f64());

    let rep = structure_check(&system).unwrap();
    println!(
        "positive offdiag: {} of {} ({:.3}%), max {:.3e}, max/se {:.2}",
        rep.positive_offdiag.count,
        rep.positive_offdiag.offdiag_nonzeros,
        rep.positive_offdiag.fraction * 100.0,
        rep.positive_offdiag.max_value,
        rep.positive_offdiag.max_value_over_se
    );
    println!("rho(B_clip) = {:.6}, ||G||_inf = {:.8}", rep.clipped_spectral_radius, rep.infinity_norm);

    let mut worst_excess = f64::NEG_INFINITY;
    let mut violations = 0;
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
    println!(
        "dominance violations: {violations}, worst excess {:.3e}, max rowsum SE {:.3e}",
        worst_excess, max_rowsum_se
    );
    println!(
        "norm check: ||G|| = {:.8} vs 2 + 3 max SE = {:.8}",
        rep.infinity_norm,
        2.0 + 3.0 * max_rowsum_se
    );

    let (_, clip) = clip_to_mmatrix(&system);
    let over3 = clip.entries.iter().filter(|e| e.value_over_se > 3.0).count();
    println!("clip entries {}, over 3 SE: {}", clip.entries.len(), over3);

    // Inverse norm both paths on the clipped system.
    let csys = clipped_system(&system);
    println!("clipped system passes screen: {}", mmatrix_screen(&csys));
    let (solve_v, dense_v) = inv_norm_paths(&csys.matrix).unwrap();
    println!(
        "clipped inv-norm: solve {:.10}, dense {:.10}, rel diff {:.2e}",
        solve_v,
        dense_v,
        (solve_v - dense_v).abs() / dense_v
    );

    let fets = fet_inputs_series(&disc, 150);
    let cond = condition_report(&system, &disc, fets, 5000).unwrap();
    println!(
        "kappa_inf {:.4} vs 2||G^-1|| = {:.4} (ratio {:.6}); inv {:.4} <= {:.4}; kappa {:.4} <= {:.4}",
        cond.kappa_inf,
        2.0 * cond.inv_infinity_norm,
        cond.kappa_inf / (2.0 * cond.inv_infinity_norm),
        cond.inv_infinity_norm,
        cond.inv_norm_bound,
        cond.kappa_inf,
        cond.kappa_bound
    );
    println!(
        "skeel clipped {:.4} <= 1 + kappa_clipped {:.4}",
        cond.skeel_clipped.unwrap(),
        1.0 + cond.kappa_inf_clipped.unwrap()
    );

    // Preconditioner bounds vs actual for t in {1, 2, 5}.
    let projection = algorithm_a::<UnitBrownian>(&mut system, 0, None).unwrap();
    println!("delta = {:.4e}, ||E|| = {:.4e}", projection.delta, projection.e_delta.infinity_norm());
    for t in [1usize, 2, 5] {
        let p = NeumannPrecond::new(&projection, t);
        let b = precond_bounds(&system, &p, cond.inv_infinity_norm, 5000).unwrap();
        // True inverse norm of T for comparison with the estimate.
        let n = system.order();
        let one_plus = 1.0 + p.delta;
        let mut cpow = DMatrix::<f64>::identity(n, n);
        for _ in 0..=t {
            cpow = sparse_times_dense(&p.b_delta, &cpow) / one_plus;
        }
        let mut t_mat = -cpow;
        for i in 0..n {
            t_mat[(i, i)] += 1.0;
        }
        let t_inv_true = inf_norm_dense(&t_mat.clone().try_inverse().unwrap());
        println!(
            "t={t}: bound {:.4} vs actual {:.4} -> {}; ||T|| {:.4}, est ||T^-1|| {:.4}, true {:.4}, rho(B) {:.4}",
            b.truncated_precond_bound,
            b.actual_kappa_truncated.unwrap(),
            b.truncated_precond_bound >= b.actual_kappa_truncated.unwrap(),
            b.t_norm_inf,
            b.t_inv_norm_estimate,
            t_inv_true,
            b.b_spectral_radius
        );
    }
}
