//! Structural and conditioning diagnostics for assembled systems:
//! diagonal/dominance census, strong connectivity of the interior block,
//! spectral radius of the clipped iteration matrix, infinity-norm of the
//! inverse (solve path and dense path), condition numbers, and the
//! first-exit-time based bounds they are checked against.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Discretization;
use crate::krylov::{gmres, identity_precond};
use crate::sparse::CsrMatrix;
use crate::stochastics::fet_rect_series;
use crate::assembly::StochasticSystem;

/// Census of strictly positive off-diagonal entries.
#[derive(Debug, Clone, Serialize)]
pub struct PositiveCensus {
    pub count: usize,
    pub offdiag_nonzeros: usize,
    pub fraction: f64,
    pub max_value: f64,
    /// Largest value / own-standard-error ratio among positive entries.
    pub max_value_over_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub schema_version: u32,
    pub diagonal_is_one: bool,
    pub dirichlet_block_is_identity: bool,
    pub positive_offdiag: PositiveCensus,
    pub row_abs_offdiag_sums: Vec<f64>,
    pub strictly_dominant_rows: Vec<usize>,
    pub interior_strongly_connected: bool,
    /// Spectral radius estimate of the nonnegative clipped iteration matrix.
    pub clipped_spectral_radius: f64,
    pub power_iterations: usize,
    pub infinity_norm: f64,
}

/// One clipped (positive off-diagonal) entry.
#[derive(Debug, Clone, Serialize)]
pub struct ClippedEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub value_over_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClipReport {
    pub entries: Vec<ClippedEntry>,
}

/// Zero out strictly positive off-diagonal entries, reporting each one with
/// its value / standard-error ratio.
pub fn clip_to_mmatrix(system: &StochasticSystem) -> (CsrMatrix, ClipReport) {
    let mut entries = Vec::new();
    let clipped = system.matrix.map_with_cols(|i, j, v| {
        if i != j && v > 0.0 {
            let se = entry_std_err(system, i, j);
            entries.push(ClippedEntry {
                row: i,
                col: j,
                value: v,
                value_over_se: if se > 0.0 { v / se } else { f64::INFINITY },
            });
            0.0
        } else {
            v
        }
    });
    (clipped, ClipReport { entries })
}

fn entry_std_err(system: &StochasticSystem, i: usize, j: usize) -> f64 {
    let (cols, _) = system.matrix.row(i);
    match cols.binary_search(&j) {
        Ok(k) => system.diagnostics[i].entry_std_err[k],
        Err(_) => 0.0,
    }
}

/// Iteration matrix `B = I - G` restricted to off-diagonals, with negative
/// entries (i.e. positive G off-diagonals) clipped to zero. Nonnegative by
/// construction.
pub fn clipped_iteration_matrix(matrix: &CsrMatrix) -> CsrMatrix {
    matrix.map_with_cols(|i, j, v| if i == j { 0.0 } else { (-v).max(0.0) })
}

/// Tarjan strongly-connected components on an adjacency-list digraph.
pub fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0usize;
    // Iterative DFS: (node, next edge position).
    let mut call_stack: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        call_stack.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut ei)) = call_stack.last_mut() {
            if *ei < adj[v].len() {
                let w = adj[v][*ei];
                *ei += 1;
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call_stack.pop();
                if let Some(&(parent, _)) = call_stack.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Strong connectivity of the interior (non-Dirichlet) pattern digraph.
pub fn interior_strongly_connected(system: &StochasticSystem) -> bool {
    let interior = system.interior_count();
    if interior == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); interior];
    for i in 0..interior {
        let (cols, _) = system.matrix.row(i);
        for &c in cols {
            if c != i && c < interior {
                adj[i].push(c);
            }
        }
    }
    if interior == 1 {
        // A single knot with no self-loop counts as its own component; the
        // digraph is strongly connected only in the degenerate sense.
        return true;
    }
    let comps = strongly_connected_components(&adj);
    comps.len() == 1
}

/// Power iteration for the spectral radius of a nonnegative matrix.
pub fn power_iteration(matrix: &CsrMatrix, tol: f64, max_iters: usize) -> Result<(f64, usize)> {
    let n = matrix.n_rows;
    let mut v = vec![1.0f64; n];
    let mut w = vec![0.0f64; n];
    let mut lambda = 0.0f64;
    for it in 1..=max_iters {
        matrix.matvec(&v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok((0.0, it));
        }
        let new_lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            / v.iter().map(|a| a * a).sum::<f64>();
        for i in 0..n {
            v[i] = w[i] / norm;
        }
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1.0) {
            return Ok((new_lambda, it));
        }
        lambda = new_lambda;
    }
    Err(Error::NonConvergence(format!(
        "power iteration did not settle in {max_iters} iterations (last estimate {lambda})"
    )))
}

/// Full structural census.
pub fn structure_check(system: &StochasticSystem) -> Result<StructureReport> {
    let n = system.order();
    let interior = system.interior_count();
    let m = &system.matrix;

    let mut diagonal_is_one = true;
    let mut dirichlet_identity = true;
    let mut positive_count = 0usize;
    let mut offdiag_nonzeros = 0usize;
    let mut max_pos = 0.0f64;
    let mut max_ratio = 0.0f64;
    let mut row_sums = vec![0.0f64; n];
    let mut strictly_dominant = Vec::new();

    for i in 0..n {
        let (cols, vals) = m.row(i);
        let mut abs_sum = 0.0;
        for (k, (&c, &v)) in cols.iter().zip(vals).enumerate() {
            if c == i {
                if v != 1.0 {
                    diagonal_is_one = false;
                }
                continue;
            }
            if i >= interior {
                dirichlet_identity = false;
            }
            offdiag_nonzeros += 1;
            abs_sum += v.abs();
            if v > 0.0 {
                positive_count += 1;
                max_pos = max_pos.max(v);
                let se = system.diagnostics[i].entry_std_err[k];
                let ratio = if se > 0.0 { v / se } else { f64::INFINITY };
                max_ratio = max_ratio.max(ratio);
            }
        }
        row_sums[i] = abs_sum;
        if abs_sum < 1.0 - 1e-12 {
            strictly_dominant.push(i);
        }
    }

    let clipped = clipped_iteration_matrix(m);
    let (rho, iters) = power_iteration(&clipped, 1e-8, 10_000)?;

    Ok(StructureReport {
        schema_version: 1,
        diagonal_is_one,
        dirichlet_block_is_identity: dirichlet_identity,
        positive_offdiag: PositiveCensus {
            count: positive_count,
            offdiag_nonzeros,
            fraction: if offdiag_nonzeros > 0 {
                positive_count as f64 / offdiag_nonzeros as f64
            } else {
                0.0
            },
            max_value: max_pos,
            max_value_over_se: max_ratio,
        },
        row_abs_offdiag_sums: row_sums,
        strictly_dominant_rows: strictly_dominant,
        interior_strongly_connected: interior_strongly_connected(system),
        clipped_spectral_radius: rho,
        power_iterations: iters,
        infinity_norm: m.infinity_norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InvNormPath {
    /// `G w = 1` solve, valid because the clipped checks passed (G inverse
    /// is entrywise nonnegative for an M-matrix).
    MSolve,
    /// Dense inverse absolute row sums.
    Dense,
}

/// Whether the realized matrix passes the M-matrix screen: diagonal one,
/// positive off-diagonals only at noise level (each within 3 standard
/// errors), and no row absolute off-diagonal sum above one beyond noise.
pub fn mmatrix_screen(system: &StochasticSystem) -> bool {
    let n = system.order();
    for i in 0..n {
        let (cols, vals) = system.matrix.row(i);
        let mut abs_sum = 0.0;
        for (k, (&c, &v)) in cols.iter().zip(vals).enumerate() {
            if c == i {
                if v != 1.0 {
                    return false;
                }
                continue;
            }
            abs_sum += v.abs();
            if v > 0.0 {
                let se = system.diagnostics[i].entry_std_err[k];
                if v > 3.0 * se {
                    return false;
                }
            }
        }
        let slack = 3.0 * system.diagnostics[i].offdiag_sum_std_err + 1e-3;
        if abs_sum > 1.0 + slack {
            return false;
        }
    }
    true
}

/// Infinity norm of the inverse.
///
/// When the M-matrix screen passes, `||G^-1||_inf = max_i (G^-1 1)_i`, so a
/// single solve suffices; otherwise fall back to dense inverse row sums.
pub fn inv_norm_inf(system: &StochasticSystem) -> Result<(f64, InvNormPath)> {
    if mmatrix_screen(system) {
        let w = solve_with_ones(&system.matrix)?;
        Ok((w.iter().cloned().fold(f64::NEG_INFINITY, f64::max), InvNormPath::MSolve))
    } else {
        Ok((inv_norm_inf_dense(&system.matrix)?, InvNormPath::Dense))
    }
}

fn solve_with_ones(matrix: &CsrMatrix) -> Result<Vec<f64>> {
    let n = matrix.n_rows;
    let ones = vec![1.0; n];
    let op = |x: &[f64], out: &mut [f64]| matrix.matvec(x, out);
    let rep = gmres(&op, &identity_precond(), &ones, None, 1e-13, n);
    if !rep.converged || rep.final_true_residual > 1e-9 {
        return Err(Error::NonConvergence(format!(
            "solve for the inverse norm stalled (relative residual {:.3e})",
            rep.final_true_residual
        )));
    }
    Ok(rep.x)
}

/// Dense-path infinity norm of the inverse.
pub fn inv_norm_inf_dense(matrix: &CsrMatrix) -> Result<f64> {
    let inv = dense_inverse(matrix)?;
    Ok(abs_row_sum_max(&inv))
}

/// Both computation paths on a plain matrix: the `G w = 1` solve (valid
/// when the inverse is nonnegative) and the dense inverse row sums.
pub fn inv_norm_paths(matrix: &CsrMatrix) -> Result<(f64, f64)> {
    let w = solve_with_ones(matrix)?;
    let solve_value = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((solve_value, inv_norm_inf_dense(matrix)?))
}

/// The interior principal block (Dirichlet rows and columns removed) as a
/// standalone system. Unlike the full matrix, whose exact identity block
/// forces an Arnoldi breakdown from any single start vector, the interior
/// block is generically nonderogatory.
pub fn interior_block(system: &StochasticSystem) -> Result<StochasticSystem> {
    let interior = system.interior_count();
    let mut rows = Vec::with_capacity(interior);
    let mut diagnostics = Vec::with_capacity(interior);
    for i in 0..interior {
        let (cols, vals) = system.matrix.row(i);
        let d = &system.diagnostics[i];
        let mut kc = Vec::new();
        let mut kv = Vec::new();
        let mut ks = Vec::new();
        for (k, (&c, &v)) in cols.iter().zip(vals).enumerate() {
            if c < interior {
                kc.push(c);
                kv.push(v);
                ks.push(d.entry_std_err[k]);
            }
        }
        rows.push((kc, kv));
        let mut nd = d.clone();
        nd.entry_std_err = ks;
        diagnostics.push(nd);
    }
    Ok(StochasticSystem {
        matrix: CsrMatrix::from_rows(interior, rows)?,
        rhs: system.rhs[..interior].to_vec(),
        diagnostics,
        dirichlet_count: 0,
        seed: system.seed,
    })
}

/// The system with positive off-diagonals clipped, diagnostics carried
/// over; this matrix passes the M-matrix screen whenever dominance holds.
pub fn clipped_system(system: &StochasticSystem) -> StochasticSystem {
    let (clipped, _) = clip_to_mmatrix(system);
    StochasticSystem {
        matrix: clipped,
        rhs: system.rhs.clone(),
        diagnostics: system.diagnostics.clone(),
        dirichlet_count: system.dirichlet_count,
        seed: system.seed,
    }
}

pub fn dense_inverse(matrix: &CsrMatrix) -> Result<DMatrix<f64>> {
    matrix
        .to_dense()
        .try_inverse()
        .ok_or_else(|| Error::Singular("matrix is singular to working precision".into()))
}

fn abs_row_sum_max(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// First-exit-time inputs for the inverse-norm and condition bounds:
/// the largest whole-domain mean FET over interior knots and the smallest
/// patch mean FET over interior knots (Dirichlet knots excluded).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FetInputs {
    pub max_domain_fet: f64,
    pub min_patch_fet: f64,
    pub argmax_knot: usize,
    pub argmin_knot: usize,
}

/// Closed-form (cosine series) FET inputs for Brownian trajectories on the
/// square domain. `terms` is the series truncation per index.
pub fn fet_inputs_series(disc: &Discretization, terms: usize) -> FetInputs {
    let half = disc.config.half_side;
    let mut max_domain = f64::NEG_INFINITY;
    let mut min_patch = f64::INFINITY;
    let mut argmax = 0;
    let mut argmin = 0;
    for knot in &disc.knots {
        let Some(patch) = disc.patches[knot.index].as_ref() else {
            continue;
        };
        let p = knot.position;
        let domain_fet = fet_rect_series((half, half), (p[0], p[1]), terms);
        if domain_fet > max_domain {
            max_domain = domain_fet;
            argmax = knot.index;
        }
        let cx = 0.5 * (patch.rect.min[0] + patch.rect.max[0]);
        let cy = 0.5 * (patch.rect.min[1] + patch.rect.max[1]);
        let patch_fet = fet_rect_series(
            (0.5 * patch.rect.width(), 0.5 * patch.rect.height()),
            (p[0] - cx, p[1] - cy),
            terms,
        );
        if patch_fet < min_patch {
            min_patch = patch_fet;
            argmin = knot.index;
        }
    }
    FetInputs { max_domain_fet: max_domain, min_patch_fet: min_patch, argmax_knot: argmax, argmin_knot: argmin }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub schema_version: u32,
    pub order: usize,
    pub infinity_norm: f64,
    /// Largest per-row standard error of the off-diagonal row total; the
    /// noise allowance for checks against the noise-free norm bound of 2.
    pub max_rowsum_std_err: f64,
    pub inv_infinity_norm: f64,
    pub inv_norm_path: InvNormPath,
    pub kappa_inf: f64,
    /// Spectral condition number from the dense matrix; `None` above the
    /// dense cap.
    pub kappa2: Option<f64>,
    /// Skeel condition number of the raw matrix (dense path).
    pub skeel_raw: Option<f64>,
    /// Skeel condition number of the clipped matrix, where the sign
    /// structure makes the `1 + kappa_inf` bound exact.
    pub skeel_clipped: Option<f64>,
    pub kappa_inf_clipped: Option<f64>,
    /// Inverse-norm bound `1 + max FET(domain) / min FET(patch)`.
    pub inv_norm_bound: f64,
    /// Condition bound `2 + 2 max FET(domain) / (H dz)`.
    pub kappa_bound: f64,
    pub fets: FetInputs,
}

/// Assemble the full conditioning report. Dense quantities are computed
/// only when the order is at most `dense_cap`.
pub fn condition_report(
    system: &StochasticSystem,
    disc: &Discretization,
    fets: FetInputs,
    dense_cap: usize,
) -> Result<ConditionReport> {
    let n = system.order();
    let inf_norm = system.matrix.infinity_norm();
    let (inv_inf, path) = inv_norm_inf(system)?;
    let kappa_inf = inf_norm * inv_inf;

    let (kappa2, skeel_raw, skeel_clipped, kappa_inf_clipped) = if n <= dense_cap {
        let dense = system.matrix.to_dense();
        let inv = dense
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("matrix is singular to working precision".into()))?;
        let kappa2 = Some(spectral_condition(&dense, &inv));
        let skeel_raw = Some(skeel_from(&inv, &dense));

        let (clipped, _) = clip_to_mmatrix(system);
        let cd = clipped.to_dense();
        let cinv = cd
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("clipped matrix is singular".into()))?;
        let skeel_clipped = Some(skeel_from(&cinv, &cd));
        let kic = Some(clipped.infinity_norm() * abs_row_sum_max(&cinv));
        (kappa2, skeel_raw, skeel_clipped, kic)
    } else {
        (None, None, None, None)
    };

    let h = disc.config.subdomain_side();
    let dz = disc.config.knot_spacing();
    let max_rowsum_std_err = system
        .diagnostics
        .iter()
        .map(|d| d.offdiag_sum_std_err)
        .fold(0.0, f64::max);
    Ok(ConditionReport {
        schema_version: 1,
        order: n,
        infinity_norm: inf_norm,
        max_rowsum_std_err,
        inv_infinity_norm: inv_inf,
        inv_norm_path: path,
        kappa_inf,
        kappa2,
        skeel_raw,
        skeel_clipped,
        kappa_inf_clipped,
        inv_norm_bound: 1.0 + fets.max_domain_fet / fets.min_patch_fet,
        kappa_bound: 2.0 + 2.0 * fets.max_domain_fet / (h * dz),
        fets,
    })
}

/// `|| |A^-1| |A| ||_inf`. Since all entries are nonnegative after taking
/// absolute values, the row sums of the product collapse to
/// `sum_k |inv_ik| * (sum_j |a_kj|)`.
fn skeel_from(inv: &DMatrix<f64>, dense: &DMatrix<f64>) -> f64 {
    let n = dense.nrows();
    let abs_row_sums: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|j| dense[(k, j)].abs()).sum())
        .collect();
    (0..n)
        .map(|i| (0..n).map(|k| inv[(i, k)].abs() * abs_row_sums[k]).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral condition number of a dense matrix with known inverse: power
/// iteration on `A^T A` for the largest singular value and on
/// `A^-1 A^-T` for the reciprocal of the smallest.
fn spectral_condition(a: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let smax = largest_singular_value(a);
    let smin_inv = largest_singular_value(inv);
    smax * smin_inv
}

fn largest_singular_value(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0f64;
    for _ in 0..200 {
        let w = a * &v;
        let u = a.transpose() * w;
        let norm = u.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let new_sigma = norm.sqrt();
        let rel = (new_sigma - sigma).abs() / new_sigma.max(1e-300);
        v = u / norm;
        sigma = new_sigma;
        if rel < 1e-10 {
            break;
        }
    }
    sigma
}
