//! Command-line front end: dataset fetching/generation, training, sweeps
//! and reports, driven by TOML run configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use causirl::config::RunConfigFile;
use causirl::harness::{persist_run, rebuild_results_csv, run_one, run_sweep};
use causirl::report::{emit_report, ReportFormat};
use causirl::tabular::data_dir;
use causirl::{fetch, scm};

#[derive(Parser)]
#[command(name = "causirl", version, about = "Invariant representation learning with random-mixture distribution matching")]
struct Cli {
    /// Run configuration file (TOML); defaults to the synthetic preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (results, generated datasets, fetched files).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweep cells (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download the UCI Adult and German Credit files and verify checksums.
    Fetch,
    /// Generate the synthetic SCM benchmark as CSV files.
    GenScm {
        /// Total sample count.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Held-out test sample count.
        #[arg(long, default_value_t = 200)]
        test: usize,
        /// Number of domains.
        #[arg(long, default_value_t = 2)]
        domains: usize,
    },
    /// Train and evaluate a single run from the config.
    Train,
    /// Run the config's full lambda x seed sweep.
    Sweep,
    /// Summarize a results directory.
    Report {
        /// "csv" or "markdown".
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

fn load_config(cli: &Cli) -> causirl::Result<RunConfigFile> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfigFile::from_path(path)?,
        None => RunConfigFile::synthetic_preset(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> causirl::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| causirl::Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fetch => {
            let dir = cli.out.clone().unwrap_or_else(data_dir);
            fetch::fetch_all(&dir)?;
            println!("fetched and verified {} files in {}", fetch::FILES.len(), dir.display());
        }
        Command::GenScm { n, test, domains } => {
            let seed = cli.seed.unwrap_or(0);
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("scm-data"));
            std::fs::create_dir_all(&out)?;
            let samples = scm::sample_scm_multi(*n, *domains, seed)?;
            let ds = scm::train_test_split(&samples, *test, seed, *domains)?;
            scm::write_csv(&ds.train, std::fs::File::create(out.join("train.csv"))?)?;
            scm::write_csv(&ds.test, std::fs::File::create(out.join("test.csv"))?)?;
            println!(
                "wrote {} train / {} test samples to {}",
                ds.train.len(),
                ds.test.len(),
                out.display()
            );
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let record = run_one(&cfg, cfg.penalty.lambda, cfg.train.seed);
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out)?;
                persist_run(&record, out)?;
                rebuild_results_csv(out)?;
            }
            println!(
                "{}: status={} target_acc={:.4} adversary_acc={:.4} dist_evals={}",
                record.run_id, record.status, record.target_acc, record.adversary_acc, record.dist_evals
            );
            if record.status != "ok" {
                return Err(causirl::Error::Input(record.status));
            }
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let records = run_sweep(&cfg, Some(&out))?;
            let failed = records.iter().filter(|r| r.status != "ok").count();
            println!(
                "{} runs completed ({} failed); results in {}",
                records.len(),
                failed,
                out.display()
            );
        }
        Command::Report { format } => {
            let format = match format.as_str() {
                "csv" => ReportFormat::Csv,
                "markdown" => ReportFormat::Markdown,
                other => {
                    return Err(causirl::Error::Input(format!("unknown report format {other:?}")))
                }
            };
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            print!("{}", emit_report(&dir, format)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
