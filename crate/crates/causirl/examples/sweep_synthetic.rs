//! A compact λ sweep on the synthetic benchmark with persisted results and a
//! rendered report. The full benchmark grid lives in configs/synthetic.toml; this
//! example shrinks it so it finishes in a few seconds.
//!
//!     cargo run --release --example sweep_synthetic

use causirl::config::RunConfigFile;
use causirl::harness::run_sweep;
use causirl::report::{emit_report, ReportFormat};

fn main() {
    let mut cfg = RunConfigFile::synthetic_preset();
    cfg.sweep.lambdas = vec![0.0, 1.0, 10.0];
    cfg.sweep.seeds = vec![0, 1];

    let dir = std::env::temp_dir().join("causirl-sweep-example");
    let _ = std::fs::remove_dir_all(&dir);

    let records = run_sweep(&cfg, Some(&dir)).unwrap();
    let failed = records.iter().filter(|r| r.status != "ok").count();
    println!("{} runs ({} failed), persisted under {}\n", records.len(), failed, dir.display());

    print!("{}", emit_report(&dir, ReportFormat::Markdown).unwrap());
}
