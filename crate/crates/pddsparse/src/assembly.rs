//! Monte Carlo assembly of the interface system.
//!
//! Each non-Dirichlet knot gets one trajectory set, confined to its patch.
//! A trajectory exiting through an interface side at arc coordinate `z`
//! contributes `-Y * H_j(z)` to the column of every stencil member `j` of
//! that side, and its source accumulator `Z` to the right-hand side. A
//! trajectory absorbed on the outer boundary contributes `Z + Y g(exit)`
//! to the right-hand side. Entries are sample means over the trajectory
//! set; the diagonal is exactly one; Dirichlet rows are exact identity
//! rows with `g` on the right-hand side.
//!
//! Rows are embarrassingly parallel; per-row accumulation is sequential in
//! trajectory index, so results are independent of thread count.

use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Discretization, KnotKind, Side};
use crate::interp::{BasisCache, BasisMode, CardinalBasis};
use crate::rng::{trajectory_rng, StreamKey};
use crate::sparse::CsrMatrix;
use crate::stochastics::{simulate_exit, ExitClass, McParams, Problem, Region};

/// Interpolation choices for assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BasisParams {
    pub mode: BasisMode,
    /// Gaussian shape parameter; `None` selects the default `5 dz`.
    pub shape: Option<f64>,
}

impl BasisParams {
    pub fn sinc() -> Self {
        BasisParams { mode: BasisMode::SincLimit, shape: None }
    }

    pub fn rbf(shape: Option<f64>) -> Self {
        BasisParams { mode: BasisMode::GaussianRbf, shape }
    }

    pub fn shape_for(&self, dz: f64) -> f64 {
        self.shape.unwrap_or(5.0 * dz)
    }
}

/// Per-row Monte Carlo diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct RowDiagnostics {
    pub samples: u64,
    pub truncated: u64,
    pub dirichlet_hits: u64,
    /// Standard error per stored entry, aligned with the CSR row slice
    /// (the diagonal slot reports 0).
    pub entry_std_err: Vec<f64>,
    pub rhs_std_err: f64,
    /// Standard error of the per-trajectory total interface score, i.e. of
    /// the signed off-diagonal row sum.
    pub offdiag_sum_std_err: f64,
    pub dirichlet_hit_prob: f64,
    pub truncation_fraction: f64,
    /// Stream generation this row was sampled with (bumped by recomputes).
    pub generation: u64,
}

impl RowDiagnostics {
    fn dirichlet_row() -> Self {
        RowDiagnostics {
            samples: 0,
            truncated: 0,
            dirichlet_hits: 0,
            entry_std_err: vec![0.0],
            rhs_std_err: 0.0,
            offdiag_sum_std_err: 0.0,
            dirichlet_hit_prob: 1.0,
            truncation_fraction: 0.0,
            generation: 0,
        }
    }
}

/// The assembled stochastic interface system.
#[derive(Debug, Clone)]
pub struct StochasticSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub diagnostics: Vec<RowDiagnostics>,
    pub dirichlet_count: usize,
    pub seed: u64,
}

impl StochasticSystem {
    pub fn order(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn interior_count(&self) -> usize {
        self.order() - self.dirichlet_count
    }

    pub fn is_dirichlet_row(&self, i: usize) -> bool {
        i >= self.interior_count()
    }
}

/// One side's binned first-exit points.
#[derive(Debug, Clone, Serialize)]
pub struct ExitHistogram {
    pub side: Side,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_trajectories: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitHistograms {
    pub per_side: Vec<ExitHistogram>,
    pub dirichlet_hits: u64,
    pub truncated: u64,
    pub total_trajectories: u64,
}

/// Pattern and basis data for one row, reusable across trajectory sets.
struct RowPlan {
    knot_geo: usize,
    row_sys: usize,
    /// Sorted system column indices (pattern of the row).
    cols: Vec<usize>,
    /// Slot of the diagonal inside `cols`.
    diag_slot: usize,
    /// Per interface side: (side, stencil id, basis, member slot indices).
    sides: Vec<SidePlan>,
}

struct SidePlan {
    side: Side,
    basis: Arc<CardinalBasis>,
    /// Arc origin coordinate along the stencil axis.
    origin_along: f64,
    axis_index: usize,
    /// Slot in `cols` of each stencil member.
    slots: Vec<usize>,
}

fn plan_row(
    disc: &Discretization,
    bases: &BasisCache,
    params: &BasisParams,
    knot_geo: usize,
) -> Result<RowPlan> {
    let row_sys = disc.ordering.geometric_to_system[knot_geo];
    let patch = disc.patches[knot_geo]
        .as_ref()
        .ok_or_else(|| Error::Internal(format!("knot {knot_geo} has no patch")))?;
    let dz = disc.config.knot_spacing();
    let shape = params.shape_for(dz);

    let mut cols: Vec<usize> = vec![row_sys];
    for (_, sid) in patch.interface_sides() {
        for &kg in &disc.stencils[sid].knots {
            cols.push(disc.ordering.geometric_to_system[kg]);
        }
    }
    cols.sort_unstable();
    cols.dedup();
    let diag_slot = cols.binary_search(&row_sys).expect("diagonal in pattern");

    let mut sides = Vec::new();
    for (side, sid) in patch.interface_sides() {
        let st = &disc.stencils[sid];
        let basis = bases.get(st, dz, shape, params.mode)?;
        let slots = st
            .knots
            .iter()
            .map(|&kg| {
                let sys = disc.ordering.geometric_to_system[kg];
                cols.binary_search(&sys).expect("member in pattern")
            })
            .collect();
        sides.push(SidePlan {
            side,
            basis,
            origin_along: st.origin[st.axis.index()],
            axis_index: st.axis.index(),
            slots,
        });
    }

    Ok(RowPlan { knot_geo, row_sys, cols, diag_slot, sides })
}

struct RowResult {
    row_sys: usize,
    cols: Vec<usize>,
    values: Vec<f64>,
    rhs: f64,
    diagnostics: RowDiagnostics,
}

/// Assemble one row from its own trajectory set.
fn run_row<P: Problem>(
    disc: &Discretization,
    problem: &P,
    params: &McParams,
    plan: &RowPlan,
    generation: u64,
) -> RowResult {
    let patch = disc.patches[plan.knot_geo].as_ref().unwrap();
    let region = Region::Rect(patch.rect);
    let start = disc.knots[plan.knot_geo].position;
    let n_slots = plan.cols.len();

    let mut sum = vec![0.0f64; n_slots];
    let mut sumsq = vec![0.0f64; n_slots];
    let mut rhs_sum = 0.0f64;
    let mut rhs_sumsq = 0.0f64;
    let mut total_sum = 0.0f64;
    let mut total_sumsq = 0.0f64;
    let mut truncated = 0u64;
    let mut dirichlet_hits = 0u64;

    let max_stencil = plan.sides.iter().map(|s| s.basis.len()).max().unwrap_or(0);
    let mut scratch = vec![0.0f64; max_stencil];

    for t in 0..params.samples {
        let mut rng = trajectory_rng(StreamKey::new(params.seed, plan.row_sys as u64, t as u64, generation));
        let rec = simulate_exit(&region, start, problem, params, &mut rng);
        let Some((point, class)) = rec.exit else {
            truncated += 1;
            continue;
        };
        let ExitClass::Side(side) = class else {
            unreachable!("rectangular patches classify exits by side");
        };
        let info = &patch.sides[side.index()];
        if info.dirichlet {
            dirichlet_hits += 1;
            let score = rec.accumulated + rec.discount * problem.dirichlet(point);
            rhs_sum += score;
            rhs_sumsq += score * score;
        } else {
            let sp = plan
                .sides
                .iter()
                .find(|s| s.side == side)
                .expect("interface side has a plan");
            let z = point[sp.axis_index] - sp.origin_along;
            let vals = &mut scratch[..sp.basis.len()];
            sp.basis.eval_all(z, vals);
            let mut total = 0.0;
            for (slot, v) in sp.slots.iter().zip(vals.iter()) {
                let contrib = -rec.discount * v;
                sum[*slot] += contrib;
                sumsq[*slot] += contrib * contrib;
                total += v;
            }
            let total_score = rec.discount * total;
            total_sum += total_score;
            total_sumsq += total_score * total_score;
            rhs_sum += rec.accumulated;
            rhs_sumsq += rec.accumulated * rec.accumulated;
        }
    }

    let n_eff = params.samples as u64 - truncated;
    let n = n_eff.max(1) as f64;
    let se = |s: f64, s2: f64| -> f64 {
        if n_eff < 2 {
            return 0.0;
        }
        let var = ((s2 - s * s / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    };

    let mut values = vec![0.0f64; n_slots];
    let mut entry_std_err = vec![0.0f64; n_slots];
    for k in 0..n_slots {
        values[k] = sum[k] / n;
        entry_std_err[k] = se(sum[k], sumsq[k]);
    }
    values[plan.diag_slot] = 1.0;
    entry_std_err[plan.diag_slot] = 0.0;

    RowResult {
        row_sys: plan.row_sys,
        cols: plan.cols.clone(),
        values,
        rhs: rhs_sum / n,
        diagnostics: RowDiagnostics {
            samples: params.samples as u64,
            truncated,
            dirichlet_hits,
            entry_std_err,
            rhs_std_err: se(rhs_sum, rhs_sumsq),
            offdiag_sum_std_err: se(total_sum, total_sumsq),
            dirichlet_hit_prob: dirichlet_hits as f64 / n,
            truncation_fraction: truncated as f64 / params.samples as f64,
            generation,
        },
    }
}

/// Assemble the full system. Deterministic for a fixed seed regardless of
/// thread count.
pub fn assemble_system<P: Problem>(
    disc: &Discretization,
    problem: &P,
    params: &McParams,
    basis: &BasisParams,
) -> Result<StochasticSystem> {
    params.validate()?;
    let n = disc.knot_count();
    let interior = disc.interior_count();
    let cache = BasisCache::new();

    // Plans are built serially: they warm the basis cache and surface
    // conditioning errors before any trajectory runs.
    let mut plans = Vec::with_capacity(interior);
    for sys in 0..interior {
        let geo = disc.ordering.system_to_geometric[sys];
        plans.push(plan_row(disc, &cache, basis, geo)?);
    }

    let results: Vec<RowResult> = plans
        .par_iter()
        .map(|plan| run_row(disc, problem, params, plan, 0))
        .collect();

    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    for r in results {
        debug_assert_eq!(r.row_sys, rows.len());
        rows.push((r.cols, r.values));
        rhs.push(r.rhs);
        diagnostics.push(r.diagnostics);
    }
    for sys in interior..n {
        let geo = disc.ordering.system_to_geometric[sys];
        debug_assert_eq!(disc.knots[geo].kind, KnotKind::BoundaryDirichlet);
        rows.push((vec![sys], vec![1.0]));
        rhs.push(problem.dirichlet(disc.knots[geo].position));
        diagnostics.push(RowDiagnostics::dirichlet_row());
    }

    Ok(StochasticSystem {
        matrix: CsrMatrix::from_rows(n, rows)?,
        rhs,
        diagnostics,
        dirichlet_count: disc.dirichlet_count(),
        seed: params.seed,
    })
}

/// Assemble a single row (fresh trajectory set at `generation`).
pub fn assemble_row<P: Problem>(
    disc: &Discretization,
    problem: &P,
    params: &McParams,
    basis: &BasisParams,
    knot_geo: usize,
    generation: u64,
) -> Result<(Vec<usize>, Vec<f64>, f64, RowDiagnostics)> {
    params.validate()?;
    if disc.knots[knot_geo].kind == KnotKind::BoundaryDirichlet {
        return Err(Error::Parameter(format!("knot {knot_geo} is a Dirichlet knot")));
    }
    let cache = BasisCache::new();
    let plan = plan_row(disc, &cache, basis, knot_geo)?;
    let r = run_row(disc, problem, params, &plan, generation);
    Ok((r.cols, r.values, r.rhs, r.diagnostics))
}

/// Replace row `knot_geo` with a fresh estimate from an independent stream
/// (generation bumped past the stored one).
pub fn recompute_row<P: Problem>(
    system: &mut StochasticSystem,
    disc: &Discretization,
    problem: &P,
    params: &McParams,
    basis: &BasisParams,
    knot_geo: usize,
) -> Result<()> {
    let row_sys = disc.ordering.geometric_to_system[knot_geo];
    if system.is_dirichlet_row(row_sys) {
        return Err(Error::Parameter(format!("row {row_sys} is a Dirichlet row")));
    }
    let generation = system.diagnostics[row_sys].generation + 1;
    let (cols, values, rhs, diag) = assemble_row(disc, problem, params, basis, knot_geo, generation)?;
    let (row_cols, row_vals) = system.matrix.row_mut(row_sys);
    if row_cols != cols.as_slice() {
        return Err(Error::Internal("row pattern changed during recompute".into()));
    }
    row_vals.copy_from_slice(&values);
    system.rhs[row_sys] = rhs;
    system.diagnostics[row_sys] = diag;
    Ok(())
}

/// Per-side exit histograms for one knot, using the same trajectory set as
/// the row assembly at the given generation.
pub fn exit_histogram<P: Problem>(
    disc: &Discretization,
    problem: &P,
    params: &McParams,
    knot_geo: usize,
    bins: usize,
    generation: u64,
) -> Result<ExitHistograms> {
    params.validate()?;
    if bins == 0 {
        return Err(Error::Parameter("need at least one bin".into()));
    }
    let patch = disc.patches[knot_geo]
        .as_ref()
        .ok_or_else(|| Error::Parameter(format!("knot {knot_geo} has no patch")))?;
    let row_sys = disc.ordering.geometric_to_system[knot_geo];
    let region = Region::Rect(patch.rect);
    let start = disc.knots[knot_geo].position;

    let mut hists: Vec<ExitHistogram> = Vec::new();
    let mut side_index = [usize::MAX; 4];
    for side in Side::ALL {
        if !patch.sides[side.index()].dirichlet {
            let (lo, hi) = patch.rect.side_span(side);
            let len = hi - lo;
            let edges = (0..=bins).map(|k| k as f64 * len / bins as f64).collect();
            side_index[side.index()] = hists.len();
            hists.push(ExitHistogram {
                side,
                bin_edges: edges,
                counts: vec![0; bins],
                total_trajectories: params.samples as u64,
            });
        }
    }

    let mut dirichlet_hits = 0u64;
    let mut truncated = 0u64;
    for t in 0..params.samples {
        let mut rng = trajectory_rng(StreamKey::new(params.seed, row_sys as u64, t as u64, generation));
        let rec = simulate_exit(&region, start, problem, params, &mut rng);
        let Some((point, ExitClass::Side(side))) = rec.exit else {
            truncated += 1;
            continue;
        };
        if patch.sides[side.index()].dirichlet {
            dirichlet_hits += 1;
            continue;
        }
        let h = &mut hists[side_index[side.index()]];
        let (lo, hi) = patch.rect.side_span(side);
        let z = point[side.along_axis().index()] - lo;
        let len = hi - lo;
        let bin = ((z / len * bins as f64) as usize).min(bins - 1);
        h.counts[bin] += 1;
    }

    Ok(ExitHistograms {
        per_side: hists,
        dirichlet_hits,
        truncated,
        total_trajectories: params.samples as u64,
    })
}

/// JSON-facing assembly diagnostics summary.
#[derive(Debug, Clone, Serialize)]
pub struct AssemblyReport {
    pub schema_version: u32,
    pub order: usize,
    pub dirichlet_count: usize,
    pub nnz: usize,
    pub seed: u64,
    pub max_rhs_std_err: f64,
    pub max_entry_std_err: f64,
    pub max_truncation_fraction: f64,
    pub positive_offdiagonal_count: usize,
    pub rows_recomputed: Vec<usize>,
}

impl AssemblyReport {
    pub fn new(system: &StochasticSystem) -> Self {
        let interior = system.interior_count();
        let mut positive = 0usize;
        for i in 0..interior {
            let (cols, vals) = system.matrix.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c != i && *v > 0.0 {
                    positive += 1;
                }
            }
        }
        AssemblyReport {
            schema_version: 1,
            order: system.order(),
            dirichlet_count: system.dirichlet_count,
            nnz: system.matrix.nnz(),
            seed: system.seed,
            max_rhs_std_err: system.diagnostics.iter().map(|d| d.rhs_std_err).fold(0.0, f64::max),
            max_entry_std_err: system
                .diagnostics
                .iter()
                .flat_map(|d| d.entry_std_err.iter().copied())
                .fold(0.0, f64::max),
            max_truncation_fraction: system
                .diagnostics
                .iter()
                .map(|d| d.truncation_fraction)
                .fold(0.0, f64::max),
            positive_offdiagonal_count: positive,
            rows_recomputed: system
                .diagnostics
                .iter()
                .enumerate()
                .filter(|(_, d)| d.generation > 0)
                .map(|(i, _)| i)
                .collect(),
        }
    }
}
