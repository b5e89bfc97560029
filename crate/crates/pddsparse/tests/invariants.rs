//! Property tests over the interpolation and simulation invariants, plus
//! fast cross-module integration checks on small assembled systems.

use proptest::prelude::*;

use pddsparse::assembly::{assemble_system, exit_histogram, BasisParams};
use pddsparse::geometry::{build_discretization, DiscretizationConfig, KnotKind, Side};
use pddsparse::interp::{BasisMode, CardinalBasis};
use pddsparse::stochastics::{
    BrownianDirichlet, GeneralProblem, McParams, UnitBrownian,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Partition of unity holds to 1e-3 wherever the Gaussian basis is
    /// constructible (flat-kernel configs beyond double precision report a
    /// conditioning error and are skipped).
    #[test]
    fn gaussian_partition_of_unity(count in 7usize..14, shape_ratio in 4.0f64..8.0, dz in 0.1f64..2.0) {
        let nodes: Vec<f64> = (0..count).map(|i| i as f64 * dz).collect();
        let basis = match CardinalBasis::build(&nodes, dz, shape_ratio * dz, BasisMode::GaussianRbf) {
            Ok(b) => b,
            Err(pddsparse::Error::Conditioning { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        };
        let defect = basis.partition_of_unity_defect(101);
        prop_assert!(defect <= 1e-3, "defect {defect} at count {count}, c = {shape_ratio} dz");
    }

    /// The cardinal property at the nodes is enforced whenever a Gaussian
    /// basis builds.
    #[test]
    fn gaussian_cardinal_property(count in 2usize..14, shape_ratio in 1.0f64..8.0) {
        let nodes: Vec<f64> = (0..count).map(|i| i as f64).collect();
        let basis = match CardinalBasis::build(&nodes, 1.0, shape_ratio, BasisMode::GaussianRbf) {
            Ok(b) => b,
            Err(pddsparse::Error::Conditioning { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        };
        let mut vals = vec![0.0; count];
        for (k, &zk) in basis.nodes().iter().enumerate() {
            basis.eval_all(zk, &mut vals);
            for (j, &v) in vals.iter().enumerate() {
                let d = if j == k { 1.0 } else { 0.0 };
                prop_assert!((v - d).abs() <= 1e-8);
            }
        }
    }

    /// Sinc-limit cardinals are an exact Kronecker delta on the lattice,
    /// for any spacing and offset.
    #[test]
    fn sinc_mode_exact_on_lattice(count in 2usize..40, dz in 0.05f64..3.0, offset in -5i64..5) {
        let nodes: Vec<f64> = (0..count).map(|i| (offset + i as i64) as f64 * dz).collect();
        let basis = CardinalBasis::build(&nodes, dz, dz, BasisMode::SincLimit).unwrap();
        let mut vals = vec![0.0; count];
        for (k, &zk) in nodes.iter().enumerate() {
            basis.eval_all(zk, &mut vals);
            for (j, &v) in vals.iter().enumerate() {
                prop_assert_eq!(v, if j == k { 1.0 } else { 0.0 });
            }
        }
    }
}

/// Assembling with a negative rate on paired streams shrinks every
/// off-diagonal magnitude relative to the zero-rate twin.
#[test]
fn paired_rate_shrinks_offdiagonals() {
    let disc = build_discretization(&DiscretizationConfig::new(3.0, 3, 1.0, 1)).unwrap();
    let params = McParams::new(1e-3, 2_000, 77);
    let basis = BasisParams::sinc();
    let plain = assemble_system(&disc, &BrownianDirichlet { dirichlet: |_| 1.0 }, &params, &basis).unwrap();
    let discounted = GeneralProblem {
        drift: |_| [0.0, 0.0],
        diffusion: |_| [[1.0, 0.0], [0.0, 1.0]],
        rate: |_| -1.0,
        source: |_| 0.0,
        dirichlet: |_: [f64; 2]| 1.0,
    };
    let damped = assemble_system(&disc, &discounted, &params, &basis).unwrap();
    assert_eq!(plain.matrix.col_indices, damped.matrix.col_indices);
    // The discount shrinks each trajectory's contribution, so entries whose
    // accumulation is sign-resolved shrink in magnitude. Entries at noise
    // level mix cardinal tail signs and the pointwise comparison does not
    // apply to them, so restrict to well-resolved entries.
    let mut compared = 0usize;
    for i in 0..plain.interior_count() {
        let (cols, v0) = plain.matrix.row(i);
        let (_, v1) = damped.matrix.row(i);
        let se = &plain.diagnostics[i].entry_std_err;
        for (k, &c) in cols.iter().enumerate() {
            if c == i || v0[k].abs() < 10.0 * se[k] {
                continue;
            }
            compared += 1;
            assert!(
                v1[k].abs() <= v0[k].abs() + 1e-15,
                "row {i} col {c}: damped {} vs plain {}",
                v1[k],
                v0[k]
            );
        }
    }
    assert!(compared > 50, "expected plenty of resolved entries, saw {compared}");
}

/// With unit boundary data and no source, the right-hand side is exactly
/// the absorbing-hit probability and complements the off-diagonal mass.
#[test]
fn unit_data_partitions_between_rhs_and_offdiagonals() {
    let disc = build_discretization(&DiscretizationConfig::new(3.0, 3, 2.0, 2)).unwrap();
    let params = McParams::new(1e-3, 2_000, 2024);
    let system = assemble_system(
        &disc,
        &BrownianDirichlet { dirichlet: |_| 1.0 },
        &params,
        &BasisParams::sinc(),
    )
    .unwrap();
    for i in 0..system.interior_count() {
        let d = &system.diagnostics[i];
        assert_eq!(system.rhs[i], d.dirichlet_hit_prob, "row {i}: rhs is the hit probability");
        let (cols, vals) = system.matrix.row(i);
        let offdiag: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(c, _)| **c != i)
            .map(|(_, v)| -v)
            .sum();
        let slack = 3.0 * (d.offdiag_sum_std_err + d.rhs_std_err) + 1e-2;
        assert!(
            (system.rhs[i] + offdiag - 1.0).abs() < slack,
            "row {i}: {} + {} != 1 (slack {slack})",
            system.rhs[i],
            offdiag
        );
    }
}

/// Floating-patch rows put their entire unit mass on the interfaces.
#[test]
fn floating_rows_have_unit_offdiagonal_mass() {
    let disc = build_discretization(&DiscretizationConfig::new(7.5, 5, 1.0, 2)).unwrap();
    let params = McParams::new(2e-3, 2_000, 99);
    let system = assemble_system(&disc, &UnitBrownian, &params, &BasisParams::sinc()).unwrap();
    let mut floating_rows = 0;
    for i in 0..system.interior_count() {
        let d = &system.diagnostics[i];
        if d.dirichlet_hits > 0 {
            continue;
        }
        floating_rows += 1;
        let (cols, vals) = system.matrix.row(i);
        let signed: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(c, _)| **c != i)
            .map(|(_, v)| *v)
            .sum();
        let slack = 3.0 * d.offdiag_sum_std_err + 1e-2;
        assert!(
            (signed + 1.0).abs() < slack,
            "floating row {i}: signed off-diagonal sum {signed} (slack {slack})"
        );
    }
    assert!(floating_rows > 0, "the 5x5 grid must have floating patches");
}

/// Exit histograms from a centered crossing knot are side-symmetric up to
/// binomial noise, and their masses partition the trajectory count.
#[test]
fn histogram_symmetry_and_partition() {
    let disc = build_discretization(&DiscretizationConfig::new(5.0, 5, 1.0, 0)).unwrap();
    // Any floating crossing knot sits at the centre of its square patch.
    let knot = disc
        .knots
        .iter()
        .find(|k| {
            k.kind == KnotKind::Crossing
                && disc.patches[k.index]
                    .as_ref()
                    .is_some_and(|p| p.sides.iter().all(|s| !s.dirichlet))
        })
        .unwrap();
    let params = McParams::new(1e-3, 4_000, 5150);
    let h = exit_histogram(&disc, &UnitBrownian, &params, knot.index, 16, 0).unwrap();
    assert_eq!(h.dirichlet_hits, 0, "floating patch cannot leak");
    let mass: u64 = h.per_side.iter().map(|s| s.counts.iter().sum::<u64>()).sum();
    assert_eq!(mass + h.truncated, h.total_trajectories);

    let side_mass = |side: Side| -> f64 {
        h.per_side
            .iter()
            .find(|s| s.side == side)
            .map(|s| s.counts.iter().sum::<u64>() as f64)
            .unwrap()
    };
    let e = side_mass(Side::East);
    let w = side_mass(Side::West);
    // Conditional on the combined two-sided count m, the east count is
    // Binomial(m, 1/2), so sd(e - w) = sqrt(m).
    let sd = (e + w).sqrt();
    assert!(
        (e - w).abs() <= 3.0 * sd + 1.0,
        "east {e} vs west {w} beyond 3 sd ({sd:.1}) of the two-sided count"
    );
}
