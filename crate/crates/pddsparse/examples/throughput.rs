//! Quick throughput probe for the trajectory stepper.

use pddsparse::geometry::Rect;
use pddsparse::rng::{trajectory_rng, StreamKey};
use pddsparse::stochastics::{simulate_exit, McParams, Region, UnitBrownian};

fn main() {
    let region = Region::Rect(Rect::new([-5.0, -5.0], [5.0, 5.0]));
    let params = McParams::new(1e-4, 1, 0);
    let n_traj = 200u64;
    let start = std::time::Instant::now();
    let mut steps = 0u64;
    let mut tau_sum = 0.0;
    for t in 0..n_traj {
        let mut rng = trajectory_rng(StreamKey::new(0, 0, t, 0));
        let rec = simulate_exit(&region, [0.0, 0.0], &UnitBrownian, &params, &mut rng);
        steps += rec.steps + 1;
        tau_sum += rec.tau;
    }
    let el = start.elapsed().as_secs_f64();
    println!(
        "steps {steps}, {:.1} ns/step, mean tau {:.3} (expect ~14.73)",
        el * 1e9 / steps as f64,
        tau_sum / n_traj as f64
    );
}
