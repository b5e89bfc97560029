//! Patch-confined Euler-Maruyama simulation with first-exit detection and
//! the discounted/source-accumulating trajectory functionals, plus closed
//! forms and Monte Carlo estimators for mean first-exit times.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rect, Side};
use crate::rng::{trajectory_rng, StreamKey};

/// Coefficients of the elliptic problem driving the trajectories.
///
/// The generator convention is `L = 1/2 sum a_ij d^2/dx_i dx_j + b . grad`
/// with `a = sigma sigma^T`, so unit diffusion means standard Brownian
/// motion. The associated consts let the stepper drop work that a concrete
/// problem statically does not need (the compiler removes the branches).
pub trait Problem: Sync {
    /// Drift `b(x)` is identically zero and `sigma(x)` is the identity.
    const PURE_BROWNIAN: bool = false;
    /// Zeroth-order coefficient `c(x)` is identically zero.
    const ZERO_RATE: bool = false;
    /// Source `f(x)` is identically zero.
    const ZERO_SOURCE: bool = false;

    fn drift(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Diffusion factor `sigma(x)`; `a = sigma sigma^T` must be positive
    /// definite wherever trajectories go.
    fn diffusion(&self, _x: [f64; 2]) -> [[f64; 2]; 2] {
        [[1.0, 0.0], [0.0, 1.0]]
    }

    /// Zeroth-order coefficient `c(x) <= 0`.
    fn rate(&self, _x: [f64; 2]) -> f64 {
        0.0
    }

    /// Source term `f(x)`.
    fn source(&self, _x: [f64; 2]) -> f64 {
        0.0
    }

    /// Dirichlet data `g(x)` on the absorbing boundary.
    fn dirichlet(&self, x: [f64; 2]) -> f64;

    /// Exact solution hook for benchmarking.
    fn exact(&self, _x: [f64; 2]) -> Option<f64> {
        None
    }
}

/// Standard Brownian motion with zero boundary data (mean-FET runs).
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitBrownian;

impl Problem for UnitBrownian {
    const PURE_BROWNIAN: bool = true;
    const ZERO_RATE: bool = true;
    const ZERO_SOURCE: bool = true;

    fn dirichlet(&self, _x: [f64; 2]) -> f64 {
        0.0
    }
}

/// Laplace problem: Brownian trajectories, boundary data only.
#[derive(Debug, Clone, Copy)]
pub struct BrownianDirichlet<G: Fn([f64; 2]) -> f64 + Sync> {
    pub dirichlet: G,
}

impl<G: Fn([f64; 2]) -> f64 + Sync> Problem for BrownianDirichlet<G> {
    const PURE_BROWNIAN: bool = true;
    const ZERO_RATE: bool = true;
    const ZERO_SOURCE: bool = true;

    fn dirichlet(&self, x: [f64; 2]) -> f64 {
        (self.dirichlet)(x)
    }
}

/// Poisson problem: Brownian trajectories, source and boundary data.
#[derive(Debug, Clone, Copy)]
pub struct BrownianPoisson<F, G>
where
    F: Fn([f64; 2]) -> f64 + Sync,
    G: Fn([f64; 2]) -> f64 + Sync,
{
    pub source: F,
    pub dirichlet: G,
}

impl<F, G> Problem for BrownianPoisson<F, G>
where
    F: Fn([f64; 2]) -> f64 + Sync,
    G: Fn([f64; 2]) -> f64 + Sync,
{
    const PURE_BROWNIAN: bool = true;
    const ZERO_RATE: bool = true;

    fn source(&self, x: [f64; 2]) -> f64 {
        (self.source)(x)
    }

    fn dirichlet(&self, x: [f64; 2]) -> f64 {
        (self.dirichlet)(x)
    }
}

/// Fully general closure-backed problem.
pub struct GeneralProblem<B, S, C, F, G>
where
    B: Fn([f64; 2]) -> [f64; 2] + Sync,
    S: Fn([f64; 2]) -> [[f64; 2]; 2] + Sync,
    C: Fn([f64; 2]) -> f64 + Sync,
    F: Fn([f64; 2]) -> f64 + Sync,
    G: Fn([f64; 2]) -> f64 + Sync,
{
    pub drift: B,
    pub diffusion: S,
    pub rate: C,
    pub source: F,
    pub dirichlet: G,
}

impl<B, S, C, F, G> Problem for GeneralProblem<B, S, C, F, G>
where
    B: Fn([f64; 2]) -> [f64; 2] + Sync,
    S: Fn([f64; 2]) -> [[f64; 2]; 2] + Sync,
    C: Fn([f64; 2]) -> f64 + Sync,
    F: Fn([f64; 2]) -> f64 + Sync,
    G: Fn([f64; 2]) -> f64 + Sync,
{
    fn drift(&self, x: [f64; 2]) -> [f64; 2] {
        (self.drift)(x)
    }

    fn diffusion(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        (self.diffusion)(x)
    }

    fn rate(&self, x: [f64; 2]) -> f64 {
        (self.rate)(x)
    }

    fn source(&self, x: [f64; 2]) -> f64 {
        (self.source)(x)
    }

    fn dirichlet(&self, x: [f64; 2]) -> f64 {
        (self.dirichlet)(x)
    }
}

/// Monte Carlo parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    /// Euler-Maruyama timestep `h`.
    pub timestep: f64,
    /// Trajectories per expectation.
    pub samples: usize,
    /// Global seed all streams derive from.
    pub seed: u64,
    /// Per-trajectory step cap; exceeding it truncates the trajectory.
    pub max_steps: u64,
}

impl McParams {
    pub fn new(timestep: f64, samples: usize, seed: u64) -> Self {
        McParams { timestep, samples, seed, max_steps: 100_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timestep > 0.0) {
            return Err(Error::Parameter(format!("timestep must be positive, got {}", self.timestep)));
        }
        if self.samples == 0 {
            return Err(Error::Parameter("sample count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Region a trajectory is confined to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Rect(Rect),
    Disc { center: [f64; 2], radius: f64 },
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Region::Rect(r) => r.contains(p),
            Region::Disc { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy < radius * radius
            }
        }
    }

    /// First crossing of the segment `from -> to` with the region boundary.
    /// Returns the segment fraction, the exit point projected onto the
    /// boundary, and its classification. `None` when `to` is still inside.
    ///
    /// Exact parameter ties between two rectangle sides break toward the
    /// lower compass ordinal (E < N < W < S).
    #[inline]
    pub fn first_crossing(&self, from: [f64; 2], to: [f64; 2]) -> Option<(f64, [f64; 2], ExitClass)> {
        match self {
            Region::Rect(r) => {
                if r.contains(to) {
                    return None;
                }
                let mut best: Option<(f64, Side)> = None;
                let mut consider = |s: f64, side: Side| {
                    if s >= 0.0 && best.map_or(true, |(bs, _)| s < bs) {
                        best = Some((s, side));
                    }
                };
                if to[0] >= r.max[0] {
                    consider((r.max[0] - from[0]) / (to[0] - from[0]), Side::East);
                }
                if to[1] >= r.max[1] {
                    consider((r.max[1] - from[1]) / (to[1] - from[1]), Side::North);
                }
                if to[0] <= r.min[0] {
                    consider((r.min[0] - from[0]) / (to[0] - from[0]), Side::West);
                }
                if to[1] <= r.min[1] {
                    consider((r.min[1] - from[1]) / (to[1] - from[1]), Side::South);
                }
                let (s, side) = best?;
                let mut p = [from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1])];
                // Project exactly onto the crossed side.
                match side {
                    Side::East => p[0] = r.max[0],
                    Side::West => p[0] = r.min[0],
                    Side::North => p[1] = r.max[1],
                    Side::South => p[1] = r.min[1],
                }
                p[0] = p[0].clamp(r.min[0], r.max[0]);
                p[1] = p[1].clamp(r.min[1], r.max[1]);
                Some((s, p, ExitClass::Side(side)))
            }
            Region::Disc { center, radius } => {
                if self.contains(to) {
                    return None;
                }
                let d = [to[0] - from[0], to[1] - from[1]];
                let e = [from[0] - center[0], from[1] - center[1]];
                let a = d[0] * d[0] + d[1] * d[1];
                let b = 2.0 * (d[0] * e[0] + d[1] * e[1]);
                let c = e[0] * e[0] + e[1] * e[1] - radius * radius;
                let disc = (b * b - 4.0 * a * c).max(0.0);
                let s = ((-b + disc.sqrt()) / (2.0 * a)).clamp(0.0, 1.0);
                let mut p = [from[0] + s * d[0], from[1] + s * d[1]];
                // Project radially onto the circle.
                let pr = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                if pr > 0.0 {
                    let scale = radius / pr;
                    p = [center[0] + (p[0] - center[0]) * scale, center[1] + (p[1] - center[1]) * scale];
                }
                Some((s, p, ExitClass::Boundary))
            }
        }
    }
}

/// Exit classification: a rectangle side, or the (absorbing) boundary of a
/// non-rectangular region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Side(Side),
    Boundary,
}

/// Outcome of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    /// Exit point and classification; `None` when the step cap was hit.
    pub exit: Option<([f64; 2], ExitClass)>,
    /// Elapsed time including the fractional final step.
    pub tau: f64,
    /// Multiplicative discount `Y` accumulated from the rate coefficient.
    pub discount: f64,
    /// Source accumulator `Z`.
    pub accumulated: f64,
    /// Full steps taken before the exit step.
    pub steps: u64,
}

impl ExitRecord {
    pub fn truncated(&self) -> bool {
        self.exit.is_none()
    }
}

/// Run one Euler-Maruyama trajectory from `start` until the first step that
/// lands outside `region`.
///
/// Per full step: `X += b(X) h + sigma(X) sqrt(h) xi` with `xi` standard
/// 2D normal, then `Y *= 1 + c(X) h` and `Z += f(X) Y h` (coefficients at
/// the step's starting point). The exit step uses the fractional time
/// `s*h`, where `s` is the segment fraction to the boundary crossing.
pub fn simulate_exit<P: Problem>(
    region: &Region,
    start: [f64; 2],
    problem: &P,
    params: &McParams,
    rng: &mut ChaCha8Rng,
) -> ExitRecord {
    let h = params.timestep;
    let sqrt_h = h.sqrt();
    let mut x = start;
    let mut discount = 1.0f64;
    let mut accumulated = 0.0f64;
    let mut steps: u64 = 0;

    loop {
        if steps >= params.max_steps {
            return ExitRecord { exit: None, tau: steps as f64 * h, discount, accumulated, steps };
        }
        let xi0: f64 = rng.sample(StandardNormal);
        let xi1: f64 = rng.sample(StandardNormal);
        let cand = if P::PURE_BROWNIAN {
            [x[0] + sqrt_h * xi0, x[1] + sqrt_h * xi1]
        } else {
            let b = problem.drift(x);
            let s = problem.diffusion(x);
            [
                x[0] + b[0] * h + sqrt_h * (s[0][0] * xi0 + s[0][1] * xi1),
                x[1] + b[1] * h + sqrt_h * (s[1][0] * xi0 + s[1][1] * xi1),
            ]
        };
        match region.first_crossing(x, cand) {
            None => {
                if !P::ZERO_RATE {
                    discount *= 1.0 + problem.rate(x) * h;
                }
                if !P::ZERO_SOURCE {
                    accumulated += problem.source(x) * discount * h;
                }
                x = cand;
                steps += 1;
            }
            Some((frac, point, class)) => {
                let hs = frac * h;
                if !P::ZERO_RATE {
                    discount *= 1.0 + problem.rate(x) * hs;
                }
                if !P::ZERO_SOURCE {
                    accumulated += problem.source(x) * discount * hs;
                }
                let tau = steps as f64 * h + hs;
                return ExitRecord { exit: Some((point, class)), tau, discount, accumulated, steps };
            }
        }
    }
}

/// Mean first-exit time of the Wiener process from a disc of radius
/// `radius`, started at distance `start_distance` from the centre:
/// `(R^2 - r^2)/2`.
pub fn fet_circle(radius: f64, start_distance: f64) -> Result<f64> {
    if start_distance < 0.0 || radius < 0.0 {
        return Err(Error::Parameter("radius and start distance must be nonnegative".into()));
    }
    if start_distance > radius {
        return Err(Error::Parameter(format!(
            "start distance {start_distance} exceeds radius {radius}"
        )));
    }
    Ok((radius * radius - start_distance * start_distance) / 2.0)
}

/// Mean first-exit time of standard Brownian motion (generator Laplacian/2)
/// from the rectangle `[-a, a] x [-b, b]`, evaluated at `(x, y)`, by the
/// separated double cosine series truncated at `terms` per index.
pub fn fet_rect_series(half_widths: (f64, f64), point: (f64, f64), terms: usize) -> f64 {
    let (a, b) = half_widths;
    let (x, y) = point;
    debug_assert!(terms >= 1);
    let mut cx = Vec::with_capacity(terms);
    let mut cy = Vec::with_capacity(terms);
    for k in 0..terms {
        let ka = (2 * k + 1) as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        cx.push(sign * (ka * std::f64::consts::PI * x / (2.0 * a)).cos() / ka);
        cy.push(sign * (ka * std::f64::consts::PI * y / (2.0 * b)).cos() / ka);
    }
    let mut sum = 0.0;
    for k in 0..terms {
        let ka = (2 * k + 1) as f64;
        let ka2 = ka * ka / (a * a);
        for l in 0..terms {
            let la = (2 * l + 1) as f64;
            sum += cx[k] * cy[l] / (ka2 + la * la / (b * b));
        }
    }
    128.0 / std::f64::consts::PI.powi(4) * sum
}

/// Monte Carlo mean-FET estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FetEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
    pub truncated: usize,
    pub truncation_fraction: f64,
    /// Set when more than 1% of trajectories were truncated.
    pub flagged: bool,
}

/// Sample mean and standard error of the first-exit time of standard
/// Brownian motion from `region` started at `start`.
///
/// Trajectories fan out in parallel; the reduction runs in trajectory-index
/// order so the result is independent of thread count.
pub fn mean_fet_mc(region: &Region, start: [f64; 2], params: &McParams) -> Result<FetEstimate> {
    mean_fet_mc_problem(region, start, &UnitBrownian, params)
}

/// As [`mean_fet_mc`] but with trajectories driven by `problem`'s drift and
/// diffusion (its `c`, `f`, `g` are ignored; only the exit time matters).
pub fn mean_fet_mc_problem<P: Problem>(
    region: &Region,
    start: [f64; 2],
    problem: &P,
    params: &McParams,
) -> Result<FetEstimate> {
    params.validate()?;
    if !region.contains(start) {
        return Err(Error::Parameter(format!("start point {start:?} is not inside the region")));
    }
    let taus: Vec<(f64, bool)> = (0..params.samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = trajectory_rng(StreamKey::new(params.seed, 0, t as u64, 0));
            let rec = simulate_exit(region, start, problem, params, &mut rng);
            (rec.tau, rec.truncated())
        })
        .collect();

    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let mut truncated = 0usize;
    for &(tau, trunc) in &taus {
        if trunc {
            truncated += 1;
        } else {
            sum += tau;
            sumsq += tau * tau;
        }
    }
    let n = params.samples - truncated;
    if n == 0 {
        return Err(Error::NonConvergence("every trajectory hit the step cap".into()));
    }
    let mean = sum / n as f64;
    let var = ((sumsq - sum * sum / n as f64) / (n.max(2) - 1) as f64).max(0.0);
    let truncation_fraction = truncated as f64 / params.samples as f64;
    Ok(FetEstimate {
        mean,
        std_err: (var / n as f64).sqrt(),
        samples: params.samples,
        truncated,
        truncation_fraction,
        flagged: truncation_fraction > 0.01,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_fet_values() {
        assert_eq!(fet_circle(1.0, 0.0).unwrap(), 0.5);
        assert_eq!(fet_circle(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(fet_circle(2.0, 1.0).unwrap(), 1.5);
        assert!(fet_circle(1.0, 1.5).is_err());
    }

    #[test]
    fn rect_series_boundary_and_scaling() {
        // Vanishes on the boundary within truncation tolerance.
        assert!(fet_rect_series((0.5, 0.5), (0.5, 0.0), 200).abs() < 1e-6);
        assert!(fet_rect_series((1.0, 0.5), (0.3, 0.5), 200).abs() < 1e-6);
        // Quadratic scaling under domain dilation, to machine precision.
        let v1 = fet_rect_series((0.5, 0.75), (0.1, -0.2), 150);
        let v2 = fet_rect_series((1.0, 1.5), (0.2, -0.4), 150);
        assert!((v2 - 4.0 * v1).abs() < 1e-12 * v2.abs());
    }

    #[test]
    fn zero_rate_keeps_discount_exactly_one() {
        let region = Region::Rect(Rect::new([-1.0, -1.0], [1.0, 1.0]));
        let params = McParams::new(1e-3, 1, 7);
        for t in 0..50 {
            let mut rng = trajectory_rng(StreamKey::new(7, 0, t, 0));
            let rec = simulate_exit(&region, [0.0, 0.0], &UnitBrownian, &params, &mut rng);
            assert_eq!(rec.discount, 1.0);
            assert_eq!(rec.accumulated, 0.0);
            assert!(!rec.truncated());
        }
    }

    #[test]
    fn determinism_bit_for_bit() {
        let region = Region::Rect(Rect::new([-1.0, -0.5], [1.0, 0.5]));
        let params = McParams::new(1e-3, 1, 99);
        for t in [0u64, 5, 17] {
            let mut r1 = trajectory_rng(StreamKey::new(99, 3, t, 0));
            let mut r2 = trajectory_rng(StreamKey::new(99, 3, t, 0));
            let a = simulate_exit(&region, [0.1, 0.0], &UnitBrownian, &params, &mut r1);
            let b = simulate_exit(&region, [0.1, 0.0], &UnitBrownian, &params, &mut r2);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn scaling_is_exact_path_by_path() {
        // Doubling the region and start, with timestep 4h and the same
        // normal draws, doubles every coordinate and quadruples tau exactly.
        let small = Region::Rect(Rect::new([-1.0, -0.5], [1.0, 0.5]));
        let big = Region::Rect(Rect::new([-2.0, -1.0], [2.0, 1.0]));
        let p_small = McParams::new(1e-3, 1, 5);
        let p_big = McParams::new(4e-3, 1, 5);
        for t in 0..100u64 {
            let mut r1 = trajectory_rng(StreamKey::new(5, 0, t, 0));
            let mut r2 = trajectory_rng(StreamKey::new(5, 0, t, 0));
            let a = simulate_exit(&small, [0.25, -0.125], &UnitBrownian, &p_small, &mut r1);
            let b = simulate_exit(&big, [0.5, -0.25], &UnitBrownian, &p_big, &mut r2);
            assert_eq!(b.tau, 4.0 * a.tau, "trajectory {t}");
            assert_eq!(b.steps, a.steps);
            let (pa, ca) = a.exit.unwrap();
            let (pb, cb) = b.exit.unwrap();
            assert_eq!(ca, cb);
            assert_eq!(pb[0], 2.0 * pa[0]);
            assert_eq!(pb[1], 2.0 * pa[1]);
        }
    }

    #[test]
    fn discount_monotone_under_paired_seeds() {
        // With g >= 0 and c < 0, each trajectory's discounted boundary
        // score is no larger in magnitude than its undiscounted twin.
        let region = Region::Rect(Rect::new([-1.0, -1.0], [1.0, 1.0]));
        let params = McParams::new(1e-3, 1, 11);
        let discounted = GeneralProblem {
            drift: |_| [0.0, 0.0],
            diffusion: |_| [[1.0, 0.0], [0.0, 1.0]],
            rate: |_| -1.0,
            source: |_| 0.0,
            dirichlet: |p: [f64; 2]| 1.0 + p[0].abs(),
        };
        for t in 0..200u64 {
            let mut r1 = trajectory_rng(StreamKey::new(11, 0, t, 0));
            let mut r2 = trajectory_rng(StreamKey::new(11, 0, t, 0));
            let a = simulate_exit(&region, [0.0, 0.0], &discounted, &params, &mut r1);
            let b = simulate_exit(&region, [0.0, 0.0], &UnitBrownian, &params, &mut r2);
            let (pa, _) = a.exit.unwrap();
            let (pb, _) = b.exit.unwrap();
            assert_eq!(pa, pb, "paired trajectories must agree");
            let g = 1.0 + pa[0].abs();
            assert!(a.discount > 0.0 && a.discount <= 1.0);
            assert!((g * a.discount).abs() <= (g * b.discount).abs());
        }
    }

    #[test]
    fn disc_fet_matches_closed_form() {
        let region = Region::Disc { center: [0.0, 0.0], radius: 1.0 };
        let params = McParams::new(1e-3, 20_000, 2024);
        let est = mean_fet_mc(&region, [0.0, 0.0], &params).unwrap();
        let tol = 3.0 * est.std_err + 2.0 * params.timestep.sqrt();
        assert!(
            (est.mean - 0.5).abs() < tol,
            "mean {} vs 0.5, tol {tol}",
            est.mean
        );
        assert!(!est.flagged);
    }

    #[test]
    fn rect_fet_matches_series() {
        let region = Region::Rect(Rect::new([-1.0, -0.5], [1.0, 0.5]));
        let params = McParams::new(5e-4, 20_000, 31);
        let est = mean_fet_mc(&region, [0.0, 0.0], &params).unwrap();
        let series = fet_rect_series((1.0, 0.5), (0.0, 0.0), 200);
        let tol = 3.0 * est.std_err + 2.0 * params.timestep.sqrt();
        assert!((est.mean - series).abs() < tol, "mc {} vs series {series}", est.mean);
    }

    #[test]
    fn near_boundary_fet_exceeds_inscribed_circle_bound() {
        // Start a knot-spacing away from the boundary of a square patch:
        // the patch FET must beat the inscribed-circle closed form.
        let a = 0.5;
        let dz = 0.1;
        let region = Region::Rect(Rect::new([-a, -a], [a, a]));
        let params = McParams::new(1e-4, 20_000, 77);
        let est = mean_fet_mc(&region, [0.0, -(a - dz)], &params).unwrap();
        let lower = fet_circle(a, a - dz).unwrap();
        assert!(est.mean > lower, "mc {} vs circle bound {lower}", est.mean);
    }

    #[test]
    fn exit_sides_partition() {
        let region = Region::Rect(Rect::new([-1.0, -1.0], [1.0, 1.0]));
        let params = McParams::new(1e-3, 1, 400);
        let mut counts = [0usize; 4];
        let n = 2000;
        for t in 0..n {
            let mut rng = trajectory_rng(StreamKey::new(400, 0, t, 0));
            let rec = simulate_exit(&region, [0.0, 0.0], &UnitBrownian, &params, &mut rng);
            match rec.exit.unwrap().1 {
                ExitClass::Side(s) => counts[s.index()] += 1,
                ExitClass::Boundary => panic!("rect exits classify by side"),
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), n as usize);
    }

    #[test]
    fn exit_point_lies_on_boundary() {
        let rect = Rect::new([-1.0, -0.5], [1.0, 0.5]);
        let region = Region::Rect(rect);
        let params = McParams::new(2e-3, 1, 1234);
        for t in 0..500u64 {
            let mut rng = trajectory_rng(StreamKey::new(1234, 0, t, 0));
            let rec = simulate_exit(&region, [0.0, 0.0], &UnitBrownian, &params, &mut rng);
            let (p, class) = rec.exit.unwrap();
            match class {
                ExitClass::Side(s) => {
                    let coord = rect.side_coord(s);
                    let axis = s.along_axis().other();
                    assert_eq!(p[axis.index()], coord);
                    let (lo, hi) = rect.side_span(s);
                    let along = p[s.along_axis().index()];
                    assert!(along >= lo && along <= hi);
                }
                ExitClass::Boundary => unreachable!(),
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(McParams::new(0.0, 10, 1).validate().is_err());
        assert!(McParams::new(1e-3, 0, 1).validate().is_err());
        let region = Region::Disc { center: [0.0, 0.0], radius: 1.0 };
        assert!(mean_fet_mc(&region, [2.0, 0.0], &McParams::new(1e-3, 10, 1)).is_err());
    }
}
