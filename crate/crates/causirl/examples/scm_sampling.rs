//! Sample the synthetic SCM benchmark and check its population moments.
//!
//!     cargo run --release --example scm_sampling

use causirl::scm::{sample_scm, train_test_split, write_csv};

fn main() {
    let n = 100_000;
    let samples = sample_scm(n, 7);

    let mean = |f: &dyn Fn(&causirl::scm::ScmSample) -> f64| {
        samples.iter().map(|s| f(s)).sum::<f64>() / n as f64
    };
    let m_g1 = mean(&|s| s.g[0]);
    let m_g2 = mean(&|s| s.g[1]);
    let m_g3 = mean(&|s| s.g[2]);
    println!("E[G1] = {m_g1:.4}  (Y + noise, expect 0.5)");
    println!("E[G2] = {m_g2:.4}  (2Y + 2D + noise, expect 2.0)");
    println!("E[G3] = {m_g3:.4}  (D + noise, expect 0.5)");

    let var_g3 = mean(&|s| (s.g[2] - m_g3) * (s.g[2] - m_g3));
    println!("Var[G3] = {var_g3:.4}  (0.25 from D + 1 from noise, expect 1.25)");

    // the benchmark-sized dataset: 1000 samples, 200 held out
    let bench = sample_scm(1000, 0);
    let ds = train_test_split(&bench, 200, 0, 2).unwrap();
    println!("benchmark split: {} train / {} test", ds.train.len(), ds.test.len());

    let mut csv = Vec::new();
    write_csv(&ds.train[..5], &mut csv).unwrap();
    println!("CSV export preview:\n{}", String::from_utf8(csv).unwrap());
}
