//! Synthetic structural causal model benchmark.
//!
//! The generative process:
//!
//! ```text
//! Y  <- N_y            N_y, N_d ~ Bernoulli(0.5)
//! D  <- N_d
//! G1 <- Y + N          N ~ Normal(0, 1), independent per factor
//! G2 <- 2Y + 2D + N
//! G3 <- D + N
//! ```
//!
//! Encoders observe the generative factors (G1, G2, G3) directly; Y is the
//! prediction target and D the sensitive/domain index. A multi-domain variant
//! replaces the binary D with a uniform index over k values, embedded on a
//! grid in [0, 1] so the structural form is unchanged; it exists to exercise
//! penalty-cost scaling with the number of domains.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, GaussianSource};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScmSample {
    pub y: u8,
    /// Domain / sensitive index in {0, ..., k-1}.
    pub d: usize,
    pub g: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct ScmDataset {
    pub train: Vec<ScmSample>,
    pub test: Vec<ScmSample>,
    /// Number of domains.
    pub k: usize,
}

/// Structural equations with all randomness passed in; the test hook for
/// forcing noise channels to zero.
pub fn structural_equations(y: u8, d_value: f64, noise: [f64; 3]) -> [f64; 3] {
    let y = y as f64;
    [
        y + noise[0],
        2.0 * y + 2.0 * d_value + noise[1],
        d_value + noise[2],
    ]
}

fn sample_with_domain_count(n: usize, k: usize, seed: u64) -> Vec<ScmSample> {
    let mut coins = substream(seed, "scm-coins");
    let mut gauss = GaussianSource::from_seed(seed, "scm-noise");
    (0..n)
        .map(|_| {
            let y = coins.gen_range(0..2u8);
            let d = coins.gen_range(0..k);
            // embed the index on {0, 1/(k-1), ..., 1}; for k=2 this reduces
            // to the Bernoulli D of the two-domain benchmark
            let d_value = d as f64 / (k - 1) as f64;
            let noise = [
                gauss.next_normal(),
                gauss.next_normal(),
                gauss.next_normal(),
            ];
            ScmSample {
                y,
                d,
                g: structural_equations(y, d_value, noise),
            }
        })
        .collect()
}

/// i.i.d. samples from the two-domain model.
pub fn sample_scm(n: usize, seed: u64) -> Vec<ScmSample> {
    sample_with_domain_count(n, 2, seed)
}

/// Multi-domain variant with D uniform on {0, ..., k-1}.
pub fn sample_scm_multi(n: usize, k: usize, seed: u64) -> Result<Vec<ScmSample>> {
    if k < 2 {
        return Err(Error::Input("domain count must be at least 2".into()));
    }
    Ok(sample_with_domain_count(n, k, seed))
}

/// Seeded uniform split without replacement.
pub fn train_test_split(samples: &[ScmSample], n_test: usize, seed: u64, k: usize) -> Result<ScmDataset> {
    if n_test >= samples.len() {
        return Err(Error::Input(format!(
            "n_test {} must be smaller than the sample count {}",
            n_test,
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = substream(seed, "scm-split");
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let test: Vec<ScmSample> = order[..n_test].iter().map(|&i| samples[i]).collect();
    let train: Vec<ScmSample> = order[n_test..].iter().map(|&i| samples[i]).collect();
    Ok(ScmDataset { train, test, k })
}

/// Feature matrix (G1, G2, G3), labels and domain indices.
pub fn to_arrays(samples: &[ScmSample]) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    let x = Array2::from_shape_fn((samples.len(), 3), |(i, j)| samples[i].g[j]);
    let y = samples.iter().map(|s| s.y as usize).collect();
    let d = samples.iter().map(|s| s.d).collect();
    (x, y, d)
}

/// CSV export with header `g1,g2,g3,y,d`.
pub fn write_csv<W: std::io::Write>(samples: &[ScmSample], mut w: W) -> Result<()> {
    writeln!(w, "g1,g2,g3,y,d")?;
    for s in samples {
        writeln!(w, "{},{},{},{},{}", s.g[0], s.g[1], s.g[2], s.y, s.d)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: impl Iterator<Item = f64>) -> (f64, usize) {
        let collected: Vec<f64> = v.collect();
        let n = collected.len();
        (collected.iter().sum::<f64>() / n as f64, n)
    }

    #[test]
    fn zero_noise_substitution() {
        assert_eq!(structural_equations(1, 1.0, [0.0; 3]), [1.0, 4.0, 1.0]);
        assert_eq!(structural_equations(0, 1.0, [0.0; 3]), [0.0, 2.0, 1.0]);
    }

    #[test]
    fn population_moments() {
        let n = 1_000_000;
        let samples = sample_scm(n, 0);
        let (mean_g2, _) = mean(samples.iter().map(|s| s.g[1]));
        assert!((mean_g2 - 2.0).abs() < 0.01, "mean G2 = {mean_g2}");

        let (mean_g3, _) = mean(samples.iter().map(|s| s.g[2]));
        let var_g3 = samples
            .iter()
            .map(|s| (s.g[2] - mean_g3) * (s.g[2] - mean_g3))
            .sum::<f64>()
            / n as f64;
        assert!((var_g3 - 1.25).abs() < 0.01, "var G3 = {var_g3}");

        // Y and D are independent by construction
        let my = samples.iter().map(|s| s.y as f64).sum::<f64>() / n as f64;
        let md = samples.iter().map(|s| s.d as f64).sum::<f64>() / n as f64;
        let cov = samples
            .iter()
            .map(|s| (s.y as f64 - my) * (s.d as f64 - md))
            .sum::<f64>()
            / n as f64;
        let corr = cov / (my * (1.0 - my) * md * (1.0 - md)).sqrt();
        assert!(corr.abs() < 0.005, "corr(Y,D) = {corr}");
    }

    #[test]
    fn g1_recovers_the_y_coefficient() {
        let samples = sample_scm(100_000, 3);
        let g1_y1: Vec<f64> = samples.iter().filter(|s| s.y == 1).map(|s| s.g[0]).collect();
        let g1_y0: Vec<f64> = samples.iter().filter(|s| s.y == 0).map(|s| s.g[0]).collect();
        let m1 = g1_y1.iter().sum::<f64>() / g1_y1.len() as f64;
        let m0 = g1_y0.iter().sum::<f64>() / g1_y0.len() as f64;
        assert!((m1 - m0 - 1.0).abs() < 0.05, "gap = {}", m1 - m0);
    }

    #[test]
    fn multi_domain_matches_binary_moments_at_k2() {
        let a = sample_scm(200_000, 4);
        let b = sample_scm_multi(200_000, 2, 5).unwrap();
        for f in 0..3 {
            let (ma, _) = mean(a.iter().map(|s| s.g[f]));
            let (mb, _) = mean(b.iter().map(|s| s.g[f]));
            assert!((ma - mb).abs() < 0.02, "factor {f}: {ma} vs {mb}");
            let va = a.iter().map(|s| (s.g[f] - ma) * (s.g[f] - ma)).sum::<f64>()
                / a.len() as f64;
            let vb = b.iter().map(|s| (s.g[f] - mb) * (s.g[f] - mb)).sum::<f64>()
                / b.len() as f64;
            assert!((va - vb).abs() / va < 0.01, "factor {f}: var {va} vs {vb}");
        }
    }

    #[test]
    fn multi_domain_zero_noise_substitution() {
        assert_eq!(structural_equations(0, 1.0, [0.0; 3]), [0.0, 2.0, 1.0]);
    }

    #[test]
    fn domain_frequencies_are_uniform() {
        let k = 5;
        let n = 1_000_000;
        let samples = sample_scm_multi(n, k, 6).unwrap();
        let mut counts = vec![0usize; k];
        for s in &samples {
            counts[s.d] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / k as f64).abs() < 0.01 / k as f64 + 0.002, "freq {freq}");
        }
    }

    #[test]
    fn rejects_single_domain() {
        assert!(sample_scm_multi(10, 1, 0).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let samples = sample_scm(1000, 7);
        let ds = train_test_split(&samples, 200, 7, 2).unwrap();
        assert_eq!(ds.train.len(), 800);
        assert_eq!(ds.test.len(), 200);
        let mut union: Vec<_> = ds
            .train
            .iter()
            .chain(ds.test.iter())
            .map(|s| (s.y, s.d, s.g[0].to_bits(), s.g[1].to_bits(), s.g[2].to_bits()))
            .collect();
        let mut expected: Vec<_> = samples
            .iter()
            .map(|s| (s.y, s.d, s.g[0].to_bits(), s.g[1].to_bits(), s.g[2].to_bits()))
            .collect();
        union.sort();
        expected.sort();
        assert_eq!(union, expected);
    }

    #[test]
    fn split_is_deterministic() {
        let samples = sample_scm(500, 8);
        let a = train_test_split(&samples, 100, 9, 2).unwrap();
        let b = train_test_split(&samples, 100, 9, 2).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn split_rejects_oversized_test() {
        let samples = sample_scm(10, 0);
        assert!(train_test_split(&samples, 10, 0, 2).is_err());
    }

    #[test]
    fn datasets_are_bit_reproducible() {
        assert_eq!(sample_scm(100, 42), sample_scm(100, 42));
    }

    #[test]
    fn csv_roundtrip_header() {
        let samples = sample_scm(3, 1);
        let mut buf = Vec::new();
        write_csv(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("g1,g2,g3,y,d\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
