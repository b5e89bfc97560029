//! One-dimensional cardinal interpolation over stencils.
//!
//! Two modes: Gaussian radial basis functions with shape parameter `c`
//! (cardinals obtained by solving the symmetric interpolation system), and
//! the flat-kernel limit where the cardinal of node `j` is
//! `sinc((z - z_j)/dz)`.
//!
//! The Gaussian interpolation matrix becomes extremely ill-conditioned as
//! `c/dz` grows (flat-kernel regime). The solve therefore runs iterative
//! refinement with compensated (error-free transformation) residuals, which
//! keeps the cardinal delta property near machine precision while the
//! condition number stays below ~1e12. Past that a ridge is applied; if the
//! cardinal property cannot be restored the build fails with a conditioning
//! error rather than silently returning garbage.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Stencil;

/// Gaussian kernel `exp(-z^2/c^2)`.
pub fn gaussian_rbf(z: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Parameter(format!("shape parameter must be positive, got {c}")));
    }
    Ok((-(z * z) / (c * c)).exp())
}

/// Normalised sinc: `sin(pi x)/(pi x)`, with `sinc(0) = 1`.
///
/// Exactly the Kronecker delta at integers: arguments within 1e-12 of an
/// integer are snapped so nodal values come out exact.
pub fn sinc(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-12 {
        return if r == 0.0 { 1.0 } else { 0.0 };
    }
    let px = std::f64::consts::PI * x;
    px.sin() / px
}

/// Quadrature check of the integer-translate orthonormality of sinc:
/// approximates the lag-`n_shift` inner product over `[-range, range]`
/// by the midpoint rule. Test oracle only.
pub fn sinc_orthonormality_check(n_shift: i64, range: f64, step: f64) -> f64 {
    let n = n_shift as f64;
    let count = (2.0 * range / step).ceil() as usize;
    let mut acc = 0.0;
    for i in 0..count {
        let z = -range + (i as f64 + 0.5) * step;
        acc += sinc(z) * sinc(z - n);
    }
    acc * step
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
pub enum BasisMode {
    GaussianRbf,
    SincLimit,
}

/// Ridge is applied once the 1-norm condition estimate exceeds this.
const RIDGE_TRIGGER: f64 = 1e12;
/// Relative ridge magnitude applied to the diagonal.
const RIDGE_SCALE: f64 = 1e-12;
/// Cardinal delta property enforced on every Gaussian basis at build time.
const DELTA_TOL: f64 = 1e-8;
/// Refinement steps for every solve (compensated residuals).
const REFINE_STEPS: usize = 2;

/// Cardinal basis over an equispaced stencil.
///
/// All geometry is relative: nodes are stored as arc-length coordinates, so
/// bases can be shared between congruent stencils.
#[derive(Debug)]
pub struct CardinalBasis {
    mode: BasisMode,
    nodes: Vec<f64>,
    spacing: f64,
    shape: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    matrix: Option<DMatrix<f64>>,
    pub ridge: f64,
    pub condition_estimate: f64,
}

impl CardinalBasis {
    /// Build a basis on explicit node coordinates. `spacing` is the
    /// internodal distance (used by the sinc mode), `shape` the Gaussian
    /// shape parameter.
    pub fn build(nodes: &[f64], spacing: f64, shape: f64, mode: BasisMode) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Parameter(format!(
                "stencil needs at least 2 members, got {}",
                nodes.len()
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::Parameter(format!("node spacing must be positive, got {spacing}")));
        }
        match mode {
            BasisMode::SincLimit => Ok(CardinalBasis {
                mode,
                nodes: nodes.to_vec(),
                spacing,
                shape,
                chol: None,
                matrix: None,
                ridge: 0.0,
                condition_estimate: 1.0,
            }),
            BasisMode::GaussianRbf => {
                if !(shape > 0.0) {
                    return Err(Error::Parameter(format!(
                        "shape parameter must be positive, got {shape}"
                    )));
                }
                let s = nodes.len();
                let mut phi = DMatrix::zeros(s, s);
                for i in 0..s {
                    for j in 0..s {
                        phi[(i, j)] = gaussian_rbf(nodes[i] - nodes[j], shape)?;
                    }
                }
                let factor_of = |m: &DMatrix<f64>| -> Result<Cholesky<f64, Dyn>> {
                    Cholesky::new(m.clone()).ok_or(Error::Conditioning { cond: f64::INFINITY })
                };

                let mut matrix = phi.clone();
                let mut ridge = 0.0;
                let mut chol = factor_of(&matrix);
                let mut cond = match &chol {
                    Ok(f) => condition_estimate_1norm(&matrix, f),
                    Err(_) => f64::INFINITY,
                };
                if cond > RIDGE_TRIGGER {
                    let max_diag = (0..s).map(|i| phi[(i, i)]).fold(0.0f64, f64::max);
                    ridge = RIDGE_SCALE * max_diag;
                    matrix = phi.clone();
                    for i in 0..s {
                        matrix[(i, i)] += ridge;
                    }
                    chol = factor_of(&matrix);
                    cond = match &chol {
                        Ok(f) => condition_estimate_1norm(&matrix, f),
                        Err(_) => f64::INFINITY,
                    };
                }
                let chol = chol.map_err(|_| Error::Conditioning { cond })?;
                let basis = CardinalBasis {
                    mode,
                    nodes: nodes.to_vec(),
                    spacing,
                    shape,
                    chol: Some(chol),
                    matrix: Some(matrix),
                    ridge,
                    condition_estimate: cond,
                };
                // Enforce the cardinal delta property (post-ridge if applied).
                let mut worst = 0.0f64;
                let mut vals = vec![0.0; s];
                for (k, &zk) in basis.nodes.iter().enumerate() {
                    basis.eval_all(zk, &mut vals);
                    for (j, &v) in vals.iter().enumerate() {
                        let target = if j == k { 1.0 } else { 0.0 };
                        worst = worst.max((v - target).abs());
                    }
                }
                if worst > DELTA_TOL {
                    return Err(Error::Conditioning { cond });
                }
                Ok(basis)
            }
        }
    }

    /// Build from a stencil's arc coordinates.
    pub fn from_stencil(stencil: &Stencil, spacing: f64, shape: f64, mode: BasisMode) -> Result<Self> {
        Self::build(&stencil.arc, spacing, shape, mode)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mode(&self) -> BasisMode {
        self.mode
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Evaluate the j-th cardinal at arc coordinate `z`.
    pub fn eval(&self, j: usize, z: f64) -> f64 {
        match self.mode {
            BasisMode::SincLimit => sinc((z - self.nodes[j]) / self.spacing),
            BasisMode::GaussianRbf => {
                let mut out = vec![0.0; self.len()];
                self.eval_all(z, &mut out);
                out[j]
            }
        }
    }

    /// Evaluate all cardinals at `z` into `out` (length = stencil size).
    ///
    /// Sinc mode exploits `sin(pi(u - j)) = (-1)^j sin(pi u)` so a single
    /// sine evaluation serves the whole stencil.
    pub fn eval_all(&self, z: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        match self.mode {
            BasisMode::SincLimit => {
                let u = (z - self.nodes[0]) / self.spacing;
                let r = u.round();
                if (u - r).abs() < 1e-12 {
                    // On a node: exact Kronecker column.
                    for v in out.iter_mut() {
                        *v = 0.0;
                    }
                    let k = r as i64;
                    if k >= 0 && (k as usize) < self.len() {
                        out[k as usize] = 1.0;
                    }
                    return;
                }
                let spu = (std::f64::consts::PI * u).sin();
                let mut sign = 1.0;
                for (j, v) in out.iter_mut().enumerate() {
                    *v = sign * spu / (std::f64::consts::PI * (u - j as f64));
                    sign = -sign;
                }
            }
            BasisMode::GaussianRbf => {
                let s = self.len();
                let mut rhs = DVector::zeros(s);
                for (k, &zk) in self.nodes.iter().enumerate() {
                    rhs[k] = (-((z - zk) * (z - zk)) / (self.shape * self.shape)).exp();
                }
                let x = self.solve_refined(&rhs);
                out.copy_from_slice(x.as_slice());
            }
        }
    }

    /// Cholesky solve with compensated-residual iterative refinement.
    fn solve_refined(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let chol = self.chol.as_ref().expect("gaussian mode");
        let a = self.matrix.as_ref().expect("gaussian mode");
        let mut x = chol.solve(rhs);
        for _ in 0..REFINE_STEPS {
            let r = residual_compensated(a, &x, rhs);
            let dx = chol.solve(&r);
            x += dx;
        }
        x
    }

    /// Dump one cardinal profile as CSV rows `z,H_j(z)` for plotting.
    pub fn write_profile_csv<W: std::io::Write>(
        &self,
        j: usize,
        samples: usize,
        w: &mut W,
    ) -> std::io::Result<()> {
        writeln!(w, "z,cardinal")?;
        let lo = self.nodes[0];
        let hi = *self.nodes.last().unwrap();
        for i in 0..=samples {
            let z = lo + (hi - lo) * i as f64 / samples as f64;
            writeln!(w, "{:.16e},{:.16e}", z, self.eval(j, z))?;
        }
        Ok(())
    }

    /// Partition-of-unity defect: max |sum_j H_j(z) - 1| over `samples`
    /// points strictly inside the node span.
    pub fn partition_of_unity_defect(&self, samples: usize) -> f64 {
        let lo = self.nodes[0];
        let hi = *self.nodes.last().unwrap();
        let mut vals = vec![0.0; self.len()];
        let mut worst = 0.0f64;
        for i in 0..samples {
            let t = (i as f64 + 1.0) / (samples as f64 + 1.0);
            let z = lo + t * (hi - lo);
            self.eval_all(z, &mut vals);
            let s: f64 = vals.iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }
}

/// Residual `b - A x` with error-free product/sum compensation, giving
/// roughly doubled working precision for the refinement step.
fn residual_compensated(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut r = DVector::zeros(n);
    for i in 0..n {
        // Accumulate b_i - sum_j a_ij x_j with a running compensation term.
        let mut sum = b[i];
        let mut comp = 0.0;
        for j in 0..n {
            let p = -a[(i, j)] * x[j];
            let perr = (-a[(i, j)]).mul_add(x[j], -p); // exact product error
            let t = sum + p;
            let serr = if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
            sum = t;
            comp += perr + serr;
        }
        r[i] = sum + comp;
    }
    r
}

/// 1-norm condition estimate via the explicit inverse (stencils are small).
fn condition_estimate_1norm(a: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>) -> f64 {
    let n = a.nrows();
    let norm_a = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let inv = chol.inverse();
    let norm_inv = (0..n)
        .map(|j| (0..n).map(|i| inv[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    norm_a * norm_inv
}

/// Key identifying a basis up to congruence: stencils with the same member
/// count, the same offset of the first node from the arc origin, and the
/// same (spacing, shape, mode) share cardinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct BasisKey {
    len: usize,
    first_offset_steps: i64,
    spacing_bits: u64,
    shape_bits: u64,
    mode: BasisMode,
}

/// Concurrent cache of factorized bases. Stencil geometries repeat heavily
/// across knots, so each distinct geometry is factorized once.
#[derive(Debug, Default)]
pub struct BasisCache {
    map: Mutex<HashMap<BasisKey, Arc<CardinalBasis>>>,
}

impl BasisCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(
        &self,
        stencil: &Stencil,
        spacing: f64,
        shape: f64,
        mode: BasisMode,
    ) -> Result<Arc<CardinalBasis>> {
        let key = BasisKey {
            len: stencil.arc.len(),
            first_offset_steps: (stencil.arc[0] / spacing).round() as i64,
            spacing_bits: spacing.to_bits(),
            shape_bits: shape.to_bits(),
            mode,
        };
        if let Some(b) = self.map.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        // Build on relative coordinates so congruent stencils share exactly.
        let rel: Vec<f64> = (0..stencil.arc.len())
            .map(|i| (key.first_offset_steps + i as i64) as f64 * spacing)
            .collect();
        let basis = Arc::new(CardinalBasis::build(&rel, spacing, shape, mode)?);
        let mut map = self.map.lock().unwrap();
        Ok(map.entry(key).or_insert(basis).clone())
    }
}
