//! Projection of the realized matrix onto a diagonally dominant M-matrix,
//! the truncated Neumann-series left preconditioner built from it, and the
//! low-rank Arnoldi correction composed on top.
//!
//! The projection clips positive off-diagonals and inflates the diagonal by
//! the smallest `delta` that restores row dominance: with the clipped
//! off-diagonal absolute sums `s_i`, `delta = max_i max(0, s_i - 1)`, so
//! `P = (1+delta) I - B` with `B >= 0` has every row weakly dominant and
//! its inverse Neumann series converges. Applying the truncated series is
//! a short matvec recursion, which is all the Krylov solver needs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assembly::{recompute_row, BasisParams, StochasticSystem};
use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::krylov::{gmres, identity_precond};
use crate::matrix_analysis::{clip_to_mmatrix, power_iteration, ClipReport};
use crate::sparse::CsrMatrix;
use crate::stochastics::{McParams, Problem};

/// Largest admissible low-rank correction.
pub const MAX_CORRECTION_RANK: usize = 512;

/// Outcome of the dominance projection.
#[derive(Debug, Clone)]
pub struct DominanceProjection {
    /// The dominance shift.
    pub delta: f64,
    /// Per-row shifts `s_i - 1` (the histogram behind step III decisions).
    pub row_deltas: Vec<f64>,
    /// Nonnegative iteration matrix with zero diagonal.
    pub b_delta: CsrMatrix,
    /// The applied perturbation: clipped positives off the diagonal,
    /// `delta` on the diagonal.
    pub e_delta: CsrMatrix,
    pub clip_report: ClipReport,
    /// Rows re-sampled by the optional outlier step.
    pub recomputed_rows: Vec<usize>,
}

/// Assembly context needed when the outlier step is allowed to recompute
/// rows.
pub struct RecomputeContext<'a, P: Problem> {
    pub disc: &'a Discretization,
    pub problem: &'a P,
    pub params: &'a McParams,
    pub basis: &'a BasisParams,
}

fn projection_once(system: &StochasticSystem) -> DominanceProjection {
    let (clipped, clip_report) = clip_to_mmatrix(system);
    let n = clipped.n_rows;
    let mut row_deltas = vec![0.0f64; n];
    for i in 0..n {
        let (cols, vals) = clipped.row(i);
        let mut s = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c != i {
                s += v.abs();
            }
        }
        row_deltas[i] = s - 1.0;
    }
    let delta = row_deltas.iter().cloned().fold(0.0f64, f64::max);
    let b_delta = clipped.map_with_cols(|i, j, v| if i == j { 0.0 } else { -v });
    let e_delta = system.matrix.map_with_cols(|i, j, v| {
        if i == j {
            delta
        } else if v > 0.0 {
            -v
        } else {
            0.0
        }
    });
    DominanceProjection {
        delta,
        row_deltas,
        b_delta,
        e_delta,
        clip_report,
        recomputed_rows: Vec::new(),
    }
}

/// Robust outlier rule for the optional recompute step: the max row shift
/// is an outlier when it exceeds `median + 5 IQR` of the interior rows'
/// shifts.
fn max_is_outlier(row_deltas: &[f64], interior: usize) -> Option<usize> {
    let (argmax, &max) = row_deltas[..interior]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if max <= 0.0 {
        return None;
    }
    let mut sorted: Vec<f64> = row_deltas[..interior].to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| -> f64 {
        let idx = p * (sorted.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        let w = idx - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    let median = q(0.5);
    let iqr = q(0.75) - q(0.25);
    if max > median + 5.0 * iqr {
        Some(argmax)
    } else {
        None
    }
}

/// Dominance projection with the optional row-recompute step.
///
/// Up to `recompute_budget` outlier rows are re-sampled from fresh streams
/// (this mutates `system`), repeating the clip/shift steps each time.
/// Requesting a positive budget without an assembly context is an error
/// only if an outlier actually calls for a recompute.
pub fn algorithm_a<P: Problem>(
    system: &mut StochasticSystem,
    recompute_budget: usize,
    ctx: Option<&RecomputeContext<'_, P>>,
) -> Result<DominanceProjection> {
    let mut proj = projection_once(system);
    let interior = system.interior_count();
    let mut budget = recompute_budget;
    let mut recomputed = Vec::new();
    while budget > 0 {
        let Some(row) = max_is_outlier(&proj.row_deltas, interior) else {
            break;
        };
        let Some(ctx) = ctx else {
            return Err(Error::Unsupported(
                "row recompute requested but no assembly context supplied".into(),
            ));
        };
        let geo = ctx.disc.ordering.system_to_geometric[row];
        recompute_row(system, ctx.disc, ctx.problem, ctx.params, ctx.basis, geo)?;
        recomputed.push(row);
        budget -= 1;
        proj = projection_once(system);
    }
    proj.recomputed_rows = recomputed;
    Ok(proj)
}

/// Truncated Neumann-series preconditioner.
#[derive(Debug, Clone)]
pub struct NeumannPrecond {
    pub delta: f64,
    pub b_delta: CsrMatrix,
    pub e_delta: CsrMatrix,
    /// Truncation order `t` (number of recursion sweeps).
    pub truncation: usize,
    pub row_deltas: Vec<f64>,
}

impl NeumannPrecond {
    pub fn new(projection: &DominanceProjection, truncation: usize) -> Self {
        NeumannPrecond {
            delta: projection.delta,
            b_delta: projection.b_delta.clone(),
            e_delta: projection.e_delta.clone(),
            truncation,
            row_deltas: projection.row_deltas.clone(),
        }
    }

    pub fn order(&self) -> usize {
        self.b_delta.n_rows
    }

    /// With a different truncation order, sharing the projection.
    pub fn with_truncation(&self, truncation: usize) -> Self {
        let mut p = self.clone();
        p.truncation = truncation;
        p
    }
}

/// Apply the truncated inverse: `t` sweeps of
/// `x_k = x_0 + B x_{k-1} / (1+delta)` followed by division by `1+delta`.
pub fn apply_neumann(p: &NeumannPrecond, x: &[f64], out: &mut [f64]) {
    let scale = 1.0 / (1.0 + p.delta);
    if p.truncation == 0 {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi * scale;
        }
        return;
    }
    let n = x.len();
    let mut cur = x.to_vec();
    let mut tmp = vec![0.0; n];
    for _ in 0..p.truncation {
        p.b_delta.matvec(&cur, &mut tmp);
        for i in 0..n {
            cur[i] = x[i] + scale * tmp[i];
        }
    }
    for i in 0..n {
        out[i] = scale * cur[i];
    }
}

/// Low-rank correction from the incomplete Arnoldi factorisation of
/// `I - G P_t^-1`.
#[derive(Debug, Clone)]
pub struct ArnoldiCorrection {
    /// Achieved rank (may be below the request on breakdown).
    pub rank: usize,
    /// Orthonormal basis, order x rank.
    pub v: DMatrix<f64>,
    /// Square upper-Hessenberg block.
    pub h: DMatrix<f64>,
    /// Dense inverse of `I_r - H_r`.
    pub inv_i_minus_h: DMatrix<f64>,
    pub breakdown: bool,
    pub build_matvecs: usize,
    pub build_seconds: f64,
}

/// Run `rank` incomplete Arnoldi steps on `v -> v - G P_t^-1 v` from
/// `y0 / ||y0||`.
pub fn build_arnoldi_correction(
    system: &StochasticSystem,
    precond: &NeumannPrecond,
    rank: usize,
    y0: &[f64],
) -> Result<ArnoldiCorrection> {
    let start_time = std::time::Instant::now();
    let n = system.order();
    if rank == 0 || rank > MAX_CORRECTION_RANK.min(n) {
        return Err(Error::Parameter(format!(
            "correction rank must be in 1..={} (got {rank})",
            MAX_CORRECTION_RANK.min(n)
        )));
    }
    let y0_norm = y0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if y0_norm == 0.0 {
        return Err(Error::Parameter("Arnoldi start vector must be nonzero".into()));
    }

    let mut matvecs = 0usize;
    let apply_op = |v_in: &[f64], out: &mut [f64], scratch: &mut [f64], count: &mut usize| {
        apply_neumann(precond, v_in, scratch);
        system.matrix.matvec(scratch, out);
        *count += 1;
        for i in 0..v_in.len() {
            out[i] = v_in[i] - out[i];
        }
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    basis.push(y0.iter().map(|v| v / y0_norm).collect());
    let mut h = DMatrix::zeros(rank, rank);
    let mut scratch = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut breakdown = false;
    let mut achieved = rank;

    for k in 0..rank {
        apply_op(&basis[k].clone(), &mut w, &mut scratch, &mut matvecs);
        let before = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, vb) in basis.iter().enumerate() {
            let hik: f64 = vb.iter().zip(&w).map(|(a, b)| a * b).sum();
            h[(i, k)] += hik;
            for j in 0..n {
                w[j] -= hik * vb[j];
            }
        }
        let mut after = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if after < before / std::f64::consts::SQRT_2 {
            for (i, vb) in basis.iter().enumerate() {
                let corr: f64 = vb.iter().zip(&w).map(|(a, b)| a * b).sum();
                h[(i, k)] += corr;
                for j in 0..n {
                    w[j] -= corr * vb[j];
                }
            }
            after = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        if k + 1 < rank {
            if after < 1e-14 {
                breakdown = true;
                achieved = k + 1;
                break;
            }
            h[(k + 1, k)] = after;
            basis.push(w.iter().map(|v| v / after).collect());
        }
    }

    let r = achieved;
    let mut v = DMatrix::zeros(n, r);
    for (j, vb) in basis.iter().take(r).enumerate() {
        for i in 0..n {
            v[(i, j)] = vb[i];
        }
    }
    let h_r = h.view((0, 0), (r, r)).into_owned();
    let mut i_minus_h = -h_r.clone();
    for i in 0..r {
        i_minus_h[(i, i)] += 1.0;
    }
    let inv_i_minus_h = i_minus_h
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - H is singular; correction unusable at this rank".into()))?;

    Ok(ArnoldiCorrection {
        rank: r,
        v,
        h: h_r,
        inv_i_minus_h,
        breakdown,
        build_matvecs: matvecs,
        build_seconds: start_time.elapsed().as_secs_f64(),
    })
}

/// Apply the corrected preconditioner:
/// `P_t^-1 ( x + V [(I-H)^-1 - I] V^T x )`.
pub fn apply_corrected(
    precond: &NeumannPrecond,
    correction: &ArnoldiCorrection,
    x: &[f64],
    out: &mut [f64],
) {
    let xv = DVector::from_column_slice(x);
    let w = correction.v.transpose() * &xv;
    let y = &correction.inv_i_minus_h * &w - &w;
    let z = xv + &correction.v * y;
    apply_neumann(precond, z.as_slice(), out);
}

/// Norm diagnostics for the preconditioned system and the bound values the
/// truncated series satisfies.
#[derive(Debug, Clone, Serialize)]
pub struct PrecondBounds {
    pub schema_version: u32,
    pub truncation: usize,
    pub delta: f64,
    pub e_norm_inf: f64,
    /// `||P^-1||_inf` (exact inverse of the projected matrix).
    pub p_inv_norm_inf: f64,
    /// `||P_t^-1||_inf` of the truncated application.
    pub p_trunc_inv_norm_inf: f64,
    pub g_inv_norm_inf: f64,
    pub t_norm_inf: f64,
    /// First-order Neumann estimate of `||T^-1||_inf` (`||2I - T||`), which
    /// is only trustworthy when the scaled iteration matrix power is small
    /// (i.e. at sizable delta); reported for comparison.
    pub t_inv_norm_estimate: f64,
    /// Dense `||T^-1||_inf` (within the dense cap).
    pub t_inv_norm_dense: Option<f64>,
    /// Bound on the condition number of the exactly preconditioned system.
    pub exact_precond_bound: f64,
    /// Bound on the condition number of the truncated preconditioned
    /// system, using the dense truncated-inverse norm when available.
    pub truncated_precond_bound: f64,
    /// The same bound evaluated with the first-order estimate.
    pub truncated_precond_bound_first_order: f64,
    /// Dense actual condition number of `P_t^-1 G` (when within the cap).
    pub actual_kappa_truncated: Option<f64>,
    /// Spectral radius estimate of the nonnegative iteration matrix.
    pub b_spectral_radius: f64,
}

/// Evaluate the closed-form bound ingredients and, at desk scale, the
/// actual preconditioned condition number.
pub fn precond_bounds(
    system: &StochasticSystem,
    precond: &NeumannPrecond,
    g_inv_norm_inf: f64,
    dense_cap: usize,
) -> Result<PrecondBounds> {
    let n = system.order();
    let e_norm = precond.e_delta.infinity_norm();
    let one_plus = 1.0 + precond.delta;

    // ||P^-1||_inf via P w = 1 (P is an M-matrix, so its inverse is
    // nonnegative and the row sums are P^-1 applied to ones).
    let p_matvec = |x: &[f64], out: &mut [f64]| {
        precond.b_delta.matvec(x, out);
        for i in 0..x.len() {
            out[i] = one_plus * x[i] - out[i];
        }
    };
    let ones = vec![1.0; n];
    let rep = gmres(&p_matvec, &identity_precond(), &ones, None, 1e-13, n);
    if !rep.converged || rep.final_true_residual > 1e-9 {
        return Err(Error::NonConvergence("solve with the projected matrix stalled".into()));
    }
    let p_inv_norm = rep.x.iter().cloned().fold(0.0f64, f64::max);

    // ||P_t^-1||_inf: the truncated series is entrywise nonnegative, so its
    // norm is its action on the ones vector.
    let mut pt_ones = vec![0.0; n];
    apply_neumann(precond, &ones, &mut pt_ones);
    let p_trunc_inv_norm = pt_ones.iter().cloned().fold(0.0f64, f64::max);

    let (rho, _) = power_iteration(&precond.b_delta, 1e-8, 10_000)?;

    // T = I - (B/(1+delta))^(t+1), built densely through sparse products.
    let t_pow = precond.truncation + 1;
    let mut dense_pow = DMatrix::<f64>::identity(n, n);
    for _ in 0..t_pow {
        dense_pow = sparse_times_dense(&precond.b_delta, &dense_pow) / one_plus;
    }
    let mut t_mat = -dense_pow.clone();
    for i in 0..n {
        t_mat[(i, i)] += 1.0;
    }
    let t_norm = inf_norm_dense(&t_mat);
    // First-order Neumann estimate: T^-1 ~ 2I - T = I + C^(t+1).
    let mut two_i_minus_t = dense_pow;
    for i in 0..n {
        two_i_minus_t[(i, i)] += 1.0;
    }
    let t_inv_estimate = inf_norm_dense(&two_i_minus_t);

    let bracket_exact = 1.0 + (g_inv_norm_inf + p_inv_norm) * e_norm + g_inv_norm_inf * p_inv_norm * e_norm * e_norm;
    let bracket_trunc =
        1.0 + (g_inv_norm_inf + p_trunc_inv_norm) * e_norm + g_inv_norm_inf * p_trunc_inv_norm * e_norm * e_norm;

    let (actual, t_inv_dense) = if n <= dense_cap {
        let dense_g = system.matrix.to_dense();
        let mut pg = DMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        let mut out = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = dense_g[(i, j)];
            }
            apply_neumann(precond, &col, &mut out);
            for i in 0..n {
                pg[(i, j)] = out[i];
            }
        }
        let inv = pg
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("preconditioned matrix is singular".into()))?;
        let t_inv = t_mat
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("truncation factor is singular".into()))?;
        (
            Some(inf_norm_dense(&pg) * inf_norm_dense(&inv)),
            Some(inf_norm_dense(&t_inv)),
        )
    } else {
        (None, None)
    };

    Ok(PrecondBounds {
        schema_version: 1,
        truncation: precond.truncation,
        delta: precond.delta,
        e_norm_inf: e_norm,
        p_inv_norm_inf: p_inv_norm,
        p_trunc_inv_norm_inf: p_trunc_inv_norm,
        g_inv_norm_inf,
        t_norm_inf: t_norm,
        t_inv_norm_estimate: t_inv_estimate,
        t_inv_norm_dense: t_inv_dense,
        exact_precond_bound: bracket_exact,
        truncated_precond_bound: t_norm * t_inv_dense.unwrap_or(t_inv_estimate) * bracket_trunc,
        truncated_precond_bound_first_order: t_norm * t_inv_estimate * bracket_trunc,
        actual_kappa_truncated: actual,
        b_spectral_radius: rho,
    })
}

pub fn sparse_times_dense(a: &CsrMatrix, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.n_rows;
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, m);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            for j in 0..m {
                out[(i, j)] += v * b[(c, j)];
            }
        }
    }
    out
}

pub fn inf_norm_dense(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Summary for the preconditioner JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct PrecondSummary {
    pub schema_version: u32,
    pub delta: f64,
    pub truncation: usize,
    pub row_delta_histogram: Histogram,
    pub clipped_entries: usize,
    pub recomputed_rows: Vec<usize>,
    pub rank_achieved: Option<usize>,
    pub breakdown: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn of(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-300);
        let mut counts = vec![0u64; bins];
        for &v in values {
            let b = (((v - lo) / span) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let edges = (0..=bins).map(|k| lo + span * k as f64 / bins as f64).collect();
        Histogram { edges, counts }
    }
}
