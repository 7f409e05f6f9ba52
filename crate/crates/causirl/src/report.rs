//! Report generation from a results directory.
//!
//! Reports group completed runs by (dataset, penalty, distance, λ) and print
//! the mean and unbiased standard deviation of the target and adversary
//! accuracies over seeds — nothing is computed beyond mean/std, so every
//! number traces back to a results-CSV row. Output is either a CSV table
//! (one row per group, directly plottable as a λ-vs-accuracy curve) or a
//! markdown document. Rebuilding a report from the same directory yields
//! byte-identical output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{rebuild_results_csv, RESULTS_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStat {
    pub dataset: String,
    pub penalty: String,
    pub distance: String,
    pub lambda: f64,
    /// Number of completed runs (seeds) in the group.
    pub n: usize,
    pub target_mean: f64,
    pub target_std: f64,
    pub adv_mean: f64,
    pub adv_std: f64,
}

fn mean_and_unbiased_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group the rows of a results CSV and reduce each group to mean ± std.
/// Failed runs are excluded.
pub fn summarize(results_csv: &str) -> Result<Vec<GroupStat>> {
    let mut lines = results_csv.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        _ => return Err(Error::Parse {
            file: "results.csv".into(),
            line: 1,
            msg: "missing or unexpected header".into(),
        }),
    }
    let col = |name: &str| RESULTS_HEADER.split(',').position(|c| c == name).unwrap();
    let (c_ds, c_pen, c_dist, c_lam) = (col("dataset"), col("penalty"), col("distance"), col("lambda"));
    let (c_tgt, c_adv, c_status) = (col("target_acc"), col("adversary_acc"), col("status"));

    let mut groups: Vec<(String, String, String, f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < RESULTS_HEADER.split(',').count() {
            return Err(Error::Parse {
                file: "results.csv".into(),
                line: i + 2,
                msg: "short row".into(),
            });
        }
        if f[c_status] != "ok" {
            continue;
        }
        let lambda: f64 = f[c_lam].parse().map_err(|_| Error::Parse {
            file: "results.csv".into(),
            line: i + 2,
            msg: format!("bad lambda {:?}", f[c_lam]),
        })?;
        let tgt: f64 = f[c_tgt].parse().unwrap_or(f64::NAN);
        let adv: f64 = f[c_adv].parse().unwrap_or(f64::NAN);
        let key = (f[c_ds].to_string(), f[c_pen].to_string(), f[c_dist].to_string(), lambda);
        match groups.iter_mut().find(|g| (g.0.as_str(), g.1.as_str(), g.2.as_str(), g.3) == (key.0.as_str(), key.1.as_str(), key.2.as_str(), key.3)) {
            Some(g) => {
                g.4.push(tgt);
                g.5.push(adv);
            }
            None => groups.push((key.0, key.1, key.2, key.3, vec![tgt], vec![adv])),
        }
    }
    if groups.is_empty() {
        return Err(Error::Input("no completed runs to report".into()));
    }
    let mut stats: Vec<GroupStat> = groups
        .into_iter()
        .map(|(dataset, penalty, distance, lambda, tgts, advs)| {
            let (target_mean, target_std) = mean_and_unbiased_std(&tgts);
            let (adv_mean, adv_std) = mean_and_unbiased_std(&advs);
            GroupStat {
                dataset,
                penalty,
                distance,
                lambda,
                n: tgts.len(),
                target_mean,
                target_std,
                adv_mean,
                adv_std,
            }
        })
        .collect();
    stats.sort_by(|a, b| {
        (&a.dataset, &a.penalty, &a.distance)
            .cmp(&(&b.dataset, &b.penalty, &b.distance))
            .then(a.lambda.partial_cmp(&b.lambda).unwrap())
    });
    Ok(stats)
}

pub fn render(stats: &[GroupStat], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from(
                "dataset,penalty,distance,lambda,n,target_mean,target_std,adv_mean,adv_std\n",
            );
            for s in stats {
                out.push_str(&format!(
                    "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4}\n",
                    s.dataset, s.penalty, s.distance, s.lambda, s.n,
                    s.target_mean, s.target_std, s.adv_mean, s.adv_std
                ));
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::from(
                "# Sweep report\n\nUncertainty convention: mean ± unbiased standard deviation over seeds.\n\n\
                 | dataset | penalty | distance | lambda | target acc | adversary acc |\n\
                 |---|---|---|---|---|---|\n",
            );
            for s in stats {
                let note = if s.n == 1 { " (n=1)" } else { "" };
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {:.4} ± {:.4}{note} | {:.4} ± {:.4}{note} |\n",
                    s.dataset, s.penalty, s.distance, s.lambda,
                    s.target_mean, s.target_std, s.adv_mean, s.adv_std
                ));
            }
            out
        }
    }
}

/// Build a report from a results directory. The aggregate CSV is rebuilt
/// from the per-run subdirectories first, so the report always reflects the
/// directory contents.
pub fn emit_report(results_dir: &Path, format: ReportFormat) -> Result<String> {
    let csv = rebuild_results_csv(results_dir)?;
    let stats = summarize(&csv)?;
    Ok(render(&stats, format))
}
