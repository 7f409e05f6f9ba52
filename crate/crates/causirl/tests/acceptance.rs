//! Acceptance gate: one test per criterion, each printing a single
//! PASS/SKIP line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 2 and 3 need the raw UCI files (see `causirl fetch`); they print
//! a SKIP line when the files are absent so the suite stays runnable offline.

use std::time::Instant;

use causirl::config::RunConfigFile;
use causirl::diffnet::{cross_entropy, LayerSpec, MlpModel, Mode};
use causirl::distances::DistanceKind;
use causirl::harness::{run_one, run_sweep};
use causirl::penalties::{
    causirl_penalty, causirl_penalty_with_plan, draw_split_plan, mixture_split_with_plan,
    pairwise_penalty, PenaltyStats,
};
use causirl::rng::{substream, GaussianSource};
use causirl::scm::sample_scm;
use causirl::tabular::{data_dir, load_adult, load_german, stratified_split};
use ndarray::Array2;
use rand::Rng;

fn gaussian_batch(n: usize, dim: usize, shift: f64, src: &mut GaussianSource) -> Array2<f64> {
    Array2::from_shape_fn((n, dim), |_| src.next_normal() + shift)
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - mx)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - mx) * (b - mx)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn criterion_1_synthetic_tradeoff() {
    let start = Instant::now();
    let cfg = RunConfigFile::from_path(std::path::Path::new("../../configs/synthetic.toml")).unwrap();
    assert_eq!(cfg.sweep.lambdas, vec![0.0, 0.1, 0.5, 1.0, 5.0, 10.0]);
    assert_eq!(cfg.sweep.seeds.len(), 3);

    let records = run_sweep(&cfg, None).unwrap();
    assert_eq!(records.len(), 18);
    assert!(records.iter().all(|r| r.status == "ok"));

    let mean_at = |lambda: f64, f: &dyn Fn(&causirl::harness::RunRecord) -> f64| -> f64 {
        let vals: Vec<f64> = records.iter().filter(|r| r.lambda == lambda).map(f).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let tgt0 = mean_at(0.0, &|r| r.target_acc);
    let adv0 = mean_at(0.0, &|r| r.adversary_acc);
    let tgt10 = mean_at(10.0, &|r| r.target_acc);
    let adv10 = mean_at(10.0, &|r| r.adversary_acc);

    assert!(adv0 >= 0.60, "lambda=0 adversary {adv0}");
    assert!(tgt0 >= 0.80, "lambda=0 target {tgt0}");
    assert!((0.48..=0.58).contains(&adv10), "lambda=10 adversary {adv10}");
    assert!(tgt10 <= 0.65, "lambda=10 target {tgt10}");

    // trade-off direction: adversary accuracy falls as lambda rises
    let lambdas = cfg.sweep.lambdas.clone();
    let advs: Vec<f64> = lambdas.iter().map(|&l| mean_at(l, &|r| r.adversary_acc)).collect();
    assert!(spearman(&lambdas, &advs) < 0.0, "adversary means {advs:?}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs <= 300.0, "sweep took {secs:.0}s");
    println!(
        "ACCEPTANCE 1 (synthetic trade-off): PASS  lambda=0 {:.1}%/{:.1}%, lambda=10 {:.1}%/{:.1}%, {:.0}s",
        100.0 * tgt0, 100.0 * adv0, 100.0 * tgt10, 100.0 * adv10, secs
    );
}

#[test]
fn criterion_2_adult() {
    let dir = data_dir();
    if !dir.join("adult.data").exists() || !dir.join("adult.test").exists() {
        println!(
            "ACCEPTANCE 2 (adult): SKIP  {} has no adult.data/adult.test; run `causirl fetch`",
            dir.display()
        );
        return;
    }
    let start = Instant::now();
    let ds = load_adult(&dir.join("adult.data"), &dir.join("adult.test")).unwrap();
    assert_eq!(ds.rows.len(), 45222);
    let maj_t = ds.majority_target_fraction();
    let maj_s = ds.majority_sensitive_fraction();
    assert!((maj_t - 0.75).abs() <= 0.01, "majority target {maj_t}");
    assert!((maj_s - 0.67).abs() <= 0.01, "majority sensitive {maj_s}");

    let mut cfg = RunConfigFile::adult_preset();
    cfg.dataset.data_dir = dir.display().to_string();
    let record = run_one(&cfg, 1.0, 0);
    assert_eq!(record.status, "ok", "{}", record.status);
    assert!(record.target_acc >= 0.830, "target {}", record.target_acc);
    assert!(record.adversary_acc <= 0.715, "adversary {}", record.adversary_acc);
    let secs = start.elapsed().as_secs_f64();
    assert!(secs <= 1800.0, "run took {secs:.0}s");
    println!(
        "ACCEPTANCE 2 (adult): PASS  target {:.1}%, adversary {:.1}%, majority {:.1}/{:.1}, {:.0}s",
        100.0 * record.target_acc, 100.0 * record.adversary_acc, 100.0 * maj_t, 100.0 * maj_s, secs
    );
}

#[test]
fn criterion_3_german() {
    let dir = data_dir();
    if !dir.join("german.data").exists() {
        println!(
            "ACCEPTANCE 3 (german): SKIP  {} has no german.data; run `causirl fetch`",
            dir.display()
        );
        return;
    }
    let mut ds = load_german(&dir.join("german.data")).unwrap();
    assert_eq!(ds.rows.len(), 1000);
    let maj_t = ds.majority_target_fraction();
    let maj_s = ds.majority_sensitive_fraction();
    assert!((maj_t - 0.71).abs() <= 0.01, "majority target {maj_t}");
    assert!((maj_s - 0.69).abs() <= 0.01, "majority sensitive {maj_s}");
    stratified_split(&mut ds, 0.2, 0).unwrap();

    let mut cfg = RunConfigFile::german_preset();
    cfg.dataset.data_dir = dir.display().to_string();
    let record = run_one(&cfg, 1.0, 0);
    assert_eq!(record.status, "ok", "{}", record.status);
    assert!(record.target_acc >= 0.76, "target {}", record.target_acc);
    assert!(record.adversary_acc <= 0.71, "adversary {}", record.adversary_acc);
    println!(
        "ACCEPTANCE 3 (german): PASS  target {:.1}%, adversary {:.1}%, majority {:.1}/{:.1}",
        100.0 * record.target_acc, 100.0 * record.adversary_acc, 100.0 * maj_t, 100.0 * maj_s
    );
}

#[test]
fn criterion_4_evaluation_count_law() {
    let dist = DistanceKind::Coral; // per-evaluation cost linear in rows
    let steps = 200;
    let mut per_k = Vec::new();
    for k in [2usize, 5, 10, 20] {
        let mut src = GaussianSource::from_seed(k as u64, "count-law");
        let latents: Vec<Array2<f64>> = (0..k)
            .map(|d| gaussian_batch(64, 5, d as f64 * 0.1, &mut src))
            .collect();
        let mut rng = substream(0, "count-law-plan");

        let mut mix_stats = PenaltyStats::default();
        let t0 = Instant::now();
        for _ in 0..steps {
            causirl_penalty(&latents, &dist, &mut rng, &mut mix_stats).unwrap();
        }
        let mix_secs = t0.elapsed().as_secs_f64();
        assert_eq!(mix_stats.dist_evals, steps as u64, "k={k}");

        let mut pair_stats = PenaltyStats::default();
        let t0 = Instant::now();
        for _ in 0..steps {
            pairwise_penalty(&latents, &dist, &mut pair_stats).unwrap();
        }
        let pair_secs = t0.elapsed().as_secs_f64();
        assert_eq!(pair_stats.dist_evals, (steps * k * (k - 1) / 2) as u64, "k={k}");
        per_k.push((k, mix_secs, pair_secs));
    }
    // timing growth from k=2 to k=20: mixture stays sub-quadratic (the only
    // growth is the row count of the two mixtures), pairwise grows with the
    // pair count
    let (_, mix2, pair2) = per_k[0];
    let (_, mix20, pair20) = per_k[3];
    let mix_ratio = mix20 / mix2;
    let pair_ratio = pair20 / pair2;
    assert!(mix_ratio < 50.0, "mixture timing grew {mix_ratio:.1}x (quadratic would be 100x)");
    assert!(pair_ratio > 20.0, "pairwise timing grew only {pair_ratio:.1}x");
    println!(
        "ACCEPTANCE 4 (evaluation-count law): PASS  evals exact for k in {{2,5,10,20}}; timing growth mixture {mix_ratio:.1}x vs pairwise {pair_ratio:.1}x"
    );
}

#[test]
fn criterion_5_property_suite() {
    let start = Instant::now();

    // --- finite-difference gradient checks, 20 seeds ---
    // (a) composed network: Dense + BatchNorm + ReLU + Dense through
    //     softmax cross-entropy
    let specs = [
        LayerSpec::Dense { fan_in: 4, fan_out: 6 },
        LayerSpec::BatchNorm { features: 6 },
        LayerSpec::Relu,
        LayerSpec::Dense { fan_in: 6, fan_out: 3 },
    ];
    for seed in 0..20u64 {
        let mut model = MlpModel::init(&specs, seed).unwrap();
        model.set_mode(Mode::Train);
        let mut src = GaussianSource::from_seed(seed, "fd-input");
        let x = gaussian_batch(16, 4, 0.0, &mut src);
        let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
        let (_, grads, _) = model.ce_backward(&x, &labels).unwrap();
        let grad_flat: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
        let mut pick = substream(seed, "fd-pick");
        let n_params: usize = model.param_slices_mut().iter().map(|s| s.len()).sum();
        for _ in 0..4 {
            let target = pick.gen_range(0..n_params);
            let analytic = grad_flat[target];
            let numeric = |model: &mut MlpModel, h: f64| -> f64 {
                let nudge = |m: &mut MlpModel, delta: f64| {
                    let mut flat_i = 0;
                    for slice in m.param_slices_mut() {
                        for v in slice.iter_mut() {
                            if flat_i == target {
                                *v += delta;
                            }
                            flat_i += 1;
                        }
                    }
                };
                nudge(model, h);
                let lp = cross_entropy(&model.forward(&x).unwrap(), &labels).unwrap();
                nudge(model, -2.0 * h);
                let lm = cross_entropy(&model.forward(&x).unwrap(), &labels).unwrap();
                nudge(model, h);
                (lp - lm) / (2.0 * h)
            };
            let ok = |num: f64| (num - analytic).abs() <= 1e-4 * analytic.abs().max(1.0);
            // retry with a smaller step if the first lands on a ReLU kink
            let num = numeric(&mut model, 1e-3);
            if !ok(num) {
                let num = numeric(&mut model, 1e-6);
                assert!(ok(num), "seed {seed}: fd {num} vs analytic {analytic}");
            }
        }
    }
    // (b) distance gradients and penalty composition on a 2-domain toy
    for seed in 0..20u64 {
        let mut src = GaussianSource::from_seed(seed, "fd-dist");
        let za = gaussian_batch(10, 3, 0.0, &mut src);
        let zb = gaussian_batch(12, 3, 0.5, &mut src);
        for dist in [DistanceKind::mmd_default(), DistanceKind::Coral] {
            let (_, dx, _) = dist.eval_grad(&za, &zb).unwrap();
            let mut pick = substream(seed, "fd-dist-pick");
            let (i, j) = (pick.gen_range(0..za.nrows()), pick.gen_range(0..za.ncols()));
            let h = 1e-5;
            let mut zp = za.clone();
            zp[[i, j]] += h;
            let mut zm = za.clone();
            zm[[i, j]] -= h;
            let num = (dist.eval(&zp, &zb).unwrap() - dist.eval(&zm, &zb).unwrap()) / (2.0 * h);
            let a = dx[[i, j]];
            assert!((num - a).abs() <= 1e-4 * a.abs().max(1e-3), "{}: {num} vs {a}", dist.name());
        }
        // mixture penalty with a fixed plan, differentiated per latent entry
        let latents = vec![za.clone(), zb.clone()];
        let plan = draw_split_plan(&[10, 12], &mut substream(seed, "fd-plan"));
        let dist = DistanceKind::Coral;
        let mut stats = PenaltyStats::default();
        let (_, grads) = causirl_penalty_with_plan(&latents, &dist, &plan, &mut stats).unwrap();
        let h = 1e-5;
        let mut lp = latents.clone();
        lp[0][[2, 1]] += h;
        let mut lm = latents.clone();
        lm[0][[2, 1]] -= h;
        let mut s2 = PenaltyStats::default();
        let vp = causirl_penalty_with_plan(&lp, &dist, &plan, &mut s2).unwrap().0;
        let vm = causirl_penalty_with_plan(&lm, &dist, &plan, &mut s2).unwrap().0;
        let num = (vp - vm) / (2.0 * h);
        let a = grads[0][[2, 1]];
        assert!((num - a).abs() <= 1e-4 * a.abs().max(1e-3), "penalty fd {num} vs {a}");
    }

    // --- distance properties ---
    let mut src = GaussianSource::from_seed(99, "props");
    let x = gaussian_batch(64, 4, 0.0, &mut src);
    let y = gaussian_batch(64, 4, 0.7, &mut src);
    for dist in [DistanceKind::mmd_default(), DistanceKind::Coral] {
        let d_xy = dist.eval(&x, &y).unwrap();
        let d_yx = dist.eval(&y, &x).unwrap();
        assert!((d_xy - d_yx).abs() < 1e-9, "symmetry");
        assert!(d_xy >= 0.0, "non-negativity");
        assert!(dist.eval(&x, &x).unwrap() < 1e-9, "zero on identical");
        let shift = &x + 3.25;
        let shifted_y = &y + 3.25;
        assert!(
            (dist.eval(&shift, &shifted_y).unwrap() - d_xy).abs() < 1e-6,
            "translation invariance"
        );
    }

    // --- Algorithm 1 invariants ---
    let latents = vec![
        gaussian_batch(8, 2, 0.0, &mut src),
        gaussian_batch(6, 2, 1.0, &mut src),
        gaussian_batch(10, 2, 2.0, &mut src),
    ];
    let mut rng = substream(5, "alg1");
    let mut total_b1 = 0usize;
    let draws = 20_000;
    for _ in 0..draws {
        let plan = draw_split_plan(&[8, 6, 10], &mut rng);
        let (b1, b2) = mixture_split_with_plan(&latents, &plan).unwrap();
        assert_eq!(b1.nrows() + b2.nrows(), 24, "sizes partition the pool");
        total_b1 += b1.nrows();
    }
    let mean_b1 = total_b1 as f64 / draws as f64;
    assert!((mean_b1 - 12.0).abs() < 0.15, "E[|B1|] = {mean_b1}");

    // --- SCM moments ---
    let n = 1_000_000;
    let samples = sample_scm(n, 0);
    let m_g2 = samples.iter().map(|s| s.g[1]).sum::<f64>() / n as f64;
    assert!((m_g2 - 2.0).abs() < 0.01);
    let m_g3 = samples.iter().map(|s| s.g[2]).sum::<f64>() / n as f64;
    let v_g3 = samples.iter().map(|s| (s.g[2] - m_g3) * (s.g[2] - m_g3)).sum::<f64>() / n as f64;
    assert!((v_g3 - 1.25).abs() < 0.01);
    let my = samples.iter().map(|s| s.y as f64).sum::<f64>() / n as f64;
    let md = samples.iter().map(|s| s.d as f64).sum::<f64>() / n as f64;
    let corr = samples
        .iter()
        .map(|s| (s.y as f64 - my) * (s.d as f64 - md))
        .sum::<f64>()
        / n as f64
        / (my * (1.0 - my) * md * (1.0 - md)).sqrt();
    assert!(corr.abs() < 0.005);

    // --- end-to-end determinism: identical results CSV up to wall-clock ---
    let mut cfg = RunConfigFile::synthetic_preset();
    cfg.dataset.n = 200;
    cfg.dataset.n_test = 40;
    cfg.train.epochs = 3;
    cfg.eval.target_epochs = 3;
    cfg.eval.adversary_epochs = 3;
    cfg.sweep.lambdas = vec![0.0, 1.0];
    cfg.sweep.seeds = vec![0, 1];
    let strip_wall = |dir: &std::path::Path| -> String {
        let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
        csv.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let mut f: Vec<&str> = f;
                if f.len() > 13 {
                    f[13] = "-"; // wall_secs
                }
                f.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let (t1, t2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_sweep(&cfg, Some(t1.path())).unwrap();
    run_sweep(&cfg, Some(t2.path())).unwrap();
    assert_eq!(strip_wall(t1.path()), strip_wall(t2.path()));

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "property suite took {secs:.1}s");
    println!("ACCEPTANCE 5 (property suite): PASS  {secs:.1}s");
}

#[test]
fn criterion_6_out_of_scope_benchmarks() {
    // image-domain benchmark suites are deliberately not implemented; the
    // config layer only knows the three desk-scale datasets, and the
    // many-domain regime is exercised by the multi-domain synthetic
    // (criterion 4) instead
    for kind in ["domainbed", "wilds", "pacs", "camelyon17"] {
        let mut cfg = RunConfigFile::default();
        cfg.dataset.kind = kind.into();
        assert!(cfg.validate().is_err(), "{kind} should be rejected");
    }
    println!(
        "ACCEPTANCE 6 (exclusions): PASS  image benchmark suites are out of scope by design; only synthetic/adult/german are accepted"
    );
}
