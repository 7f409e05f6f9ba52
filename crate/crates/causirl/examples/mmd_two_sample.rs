//! MMD and CORAL as two-sample distances: both separate shifted
//! distributions from identical ones, and both are differentiable.
//!
//!     cargo run --release --example mmd_two_sample

use causirl::distances::DistanceKind;
use causirl::rng::GaussianSource;
use ndarray::Array2;

fn gaussian_batch(n: usize, dim: usize, shift: f64, src: &mut GaussianSource) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| src.next_normal() + shift)
}

fn main() {
    let mut src = GaussianSource::from_seed(3, "two-sample");
    let x = gaussian_batch(256, 4, 0.0, &mut src);
    let same = gaussian_batch(256, 4, 0.0, &mut src);
    let shifted = gaussian_batch(256, 4, 1.0, &mut src);

    for dist in [DistanceKind::mmd_default(), DistanceKind::Coral] {
        let null = dist.eval(&x, &same).unwrap();
        let alt = dist.eval(&x, &shifted).unwrap();
        println!(
            "{:>5}: same-distribution {:.5}, shifted {:.5}  (ratio {:.1}x)",
            dist.name(),
            null,
            alt,
            alt / null
        );
    }

    // gradients point the batches toward each other: one step of descent on
    // the shifted batch reduces the distance
    let dist = DistanceKind::mmd_default();
    let (before, _dx, dy) = dist.eval_grad(&x, &shifted).unwrap();
    let moved = &shifted - &(2.0 * &dy / l2(&dy));
    let after = dist.eval(&x, &moved).unwrap();
    println!("mmd before gradient step {before:.5}, after {after:.5}");
}

fn l2(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
