//! The random-mixture penalty versus the all-pairs baseline: identical goal,
//! very different cost. The mixture penalty evaluates exactly one distance
//! per step no matter how many domains there are.
//!
//!     cargo run --release --example mixture_penalty

use causirl::distances::DistanceKind;
use causirl::penalties::{causirl_penalty, pairwise_penalty, PenaltyStats};
use causirl::rng::{substream, GaussianSource};
use ndarray::Array2;

fn main() {
    let mut src = GaussianSource::from_seed(11, "domains");
    // five domains with different means: plenty of pairwise distance
    let latents: Vec<Array2<f64>> = (0..5)
        .map(|d| Array2::from_shape_fn((64, 3), |_| src.next_normal() + d as f64 * 0.5))
        .collect();

    let dist = DistanceKind::mmd_default();
    let mut rng = substream(11, "mixture-plan");

    let mut mix_stats = PenaltyStats::default();
    let steps = 50;
    let mut mix_total = 0.0;
    for _ in 0..steps {
        let (v, _grads) = causirl_penalty(&latents, &dist, &mut rng, &mut mix_stats).unwrap();
        mix_total += v;
    }
    let mut pair_stats = PenaltyStats::default();
    let (pair_value, _grads) = pairwise_penalty(&latents, &dist, &mut pair_stats).unwrap();

    println!("5 domains, {} steps of the mixture penalty:", steps);
    println!(
        "  mixture : mean value {:.4}, {} distance evals ({} per step)",
        mix_total / steps as f64,
        mix_stats.dist_evals,
        mix_stats.dist_evals / steps as u64
    );
    println!(
        "  pairwise: value {:.4}, {} distance evals per step (d(d-1)/2 = 10)",
        pair_value, pair_stats.dist_evals
    );

    // identical domains drive both penalties to ~0
    let shared = Array2::from_shape_fn((64, 3), |_| src.next_normal());
    let same: Vec<Array2<f64>> = (0..5).map(|_| shared.clone()).collect();
    let mut s = PenaltyStats::default();
    let (v_same, _) = pairwise_penalty(&same, &dist, &mut s).unwrap();
    println!("identical domains, pairwise value: {v_same:.2e}");
}
