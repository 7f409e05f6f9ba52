//! Penalty cost versus number of domains: the mixture penalty stays at one
//! distance evaluation per step while the pairwise baseline needs k(k-1)/2.
//! CORAL is used as the distance so per-evaluation cost is linear in rows and
//! the evaluation count dominates the timing.
//!
//!     cargo run --release --example penalty_scaling

use std::time::Instant;

use causirl::distances::DistanceKind;
use causirl::penalties::{causirl_penalty, pairwise_penalty, PenaltyStats};
use causirl::rng::{substream, GaussianSource};
use ndarray::Array2;

fn main() {
    let dist = DistanceKind::Coral;
    let reps = 200;
    println!("{:>4} {:>14} {:>14} {:>12} {:>12}", "k", "mixture evals", "pairwise evals", "mixture ms", "pairwise ms");
    for k in [2usize, 5, 10, 20] {
        let mut src = GaussianSource::from_seed(k as u64, "scaling");
        let latents: Vec<Array2<f64>> = (0..k)
            .map(|d| Array2::from_shape_fn((64, 5), |_| src.next_normal() + d as f64 * 0.1))
            .collect();
        let mut rng = substream(0, "plan");

        let mut mix_stats = PenaltyStats::default();
        let t0 = Instant::now();
        for _ in 0..reps {
            causirl_penalty(&latents, &dist, &mut rng, &mut mix_stats).unwrap();
        }
        let mix_ms = t0.elapsed().as_secs_f64() * 1000.0 / reps as f64;

        let mut pair_stats = PenaltyStats::default();
        let t0 = Instant::now();
        for _ in 0..reps {
            pairwise_penalty(&latents, &dist, &mut pair_stats).unwrap();
        }
        let pair_ms = t0.elapsed().as_secs_f64() * 1000.0 / reps as f64;

        println!(
            "{:>4} {:>14} {:>14} {:>12.4} {:>12.4}",
            k,
            mix_stats.dist_evals / reps as u64,
            pair_stats.dist_evals / reps as u64,
            mix_ms,
            pair_ms
        );
    }
    println!("\nmixture cost grows linearly with k (more rows), pairwise quadratically (more pairs)");
}
