//! Experimental protocol: penalized encoder training, frozen-encoder
//! discriminator evaluation, λ-sweeps and run persistence.
//!
//! A run is one (λ, seed, penalty, distance) cell: train an encoder with the
//! penalized objective, freeze it, train a target discriminator (latents → Y)
//! and an adversary (latents → D), and report the best test accuracy each
//! discriminator achieves over its training epochs. Sweeps execute cells in
//! parallel, each persisted to its own subdirectory; the aggregate results
//! CSV is rebuilt from those subdirectories at report time.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfigFile;
use crate::diffnet::{accuracy, GradientSet, LayerSpec, MlpModel, Mode};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamState, OptimConfig};
use crate::penalties::{
    causirl_penalty, pairwise_penalty, training_loss, PenaltyKind, PenaltyStats, PenaltyVariant,
};
use crate::rng::substream;
use crate::scm::{self, ScmDataset};
use crate::tabular::{self, Preprocessor, TabularDataset};

/// Feature matrices and labels for one dataset, pooled across domains with
/// per-row domain indices.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub id: String,
    pub train_x: Array2<f64>,
    pub train_y: Vec<usize>,
    pub train_d: Vec<usize>,
    pub test_x: Array2<f64>,
    pub test_y: Vec<usize>,
    pub test_d: Vec<usize>,
    pub n_domains: usize,
    pub n_classes: usize,
}

impl DatasetBundle {
    pub fn from_scm(ds: &ScmDataset) -> DatasetBundle {
        let (train_x, train_y, train_d) = scm::to_arrays(&ds.train);
        let (test_x, test_y, test_d) = scm::to_arrays(&ds.test);
        DatasetBundle {
            id: "synthetic".into(),
            train_x,
            train_y,
            train_d,
            test_x,
            test_y,
            test_d,
            n_domains: ds.k,
            n_classes: 2,
        }
    }

    /// Encode a tabular dataset; the sensitive attribute becomes the domain
    /// index. The preprocessor is fit on the training split only.
    pub fn from_tabular(ds: &TabularDataset, include_sensitive: bool) -> Result<DatasetBundle> {
        let train_rows = ds.train_rows();
        let test_rows = ds.test_rows();
        let prep = Preprocessor::fit(&ds.schema, &train_rows, include_sensitive)?;
        let train = prep.apply(&train_rows)?;
        let test = prep.apply(&test_rows)?;
        Ok(DatasetBundle {
            id: ds.schema.name.clone(),
            train_x: train.features,
            train_y: train.targets,
            train_d: train.sensitive,
            test_x: test.features,
            test_y: test.targets,
            test_d: test.sensitive,
            n_domains: 2,
            n_classes: 2,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.train_x.ncols()
    }
}

/// Build the dataset a config describes. For the synthetic benchmark the
/// generator is seeded by `seed`, so each sweep cell draws its own dataset;
/// tabular datasets are loaded from disk and split by the config's own seed.
pub fn build_dataset(cfg: &RunConfigFile, seed: u64) -> Result<DatasetBundle> {
    match cfg.dataset.kind.as_str() {
        "synthetic" => {
            let samples = scm::sample_scm_multi(cfg.dataset.n, cfg.dataset.domains, seed)?;
            let ds = scm::train_test_split(&samples, cfg.dataset.n_test, seed, cfg.dataset.domains)?;
            Ok(DatasetBundle::from_scm(&ds))
        }
        "adult" => {
            let dir = resolve_data_dir(cfg);
            let ds = tabular::load_adult(&dir.join("adult.data"), &dir.join("adult.test"))?;
            DatasetBundle::from_tabular(&ds, cfg.dataset.include_sensitive)
        }
        "german" => {
            let dir = resolve_data_dir(cfg);
            let mut ds = tabular::load_german(&dir.join("german.data"))?;
            tabular::stratified_split(&mut ds, cfg.dataset.test_fraction, cfg.dataset.split_seed)?;
            DatasetBundle::from_tabular(&ds, cfg.dataset.include_sensitive)
        }
        other => Err(Error::Config(format!("unknown dataset kind {other:?}"))),
    }
}

fn resolve_data_dir(cfg: &RunConfigFile) -> std::path::PathBuf {
    if cfg.dataset.data_dir.is_empty() {
        tabular::data_dir()
    } else {
        cfg.dataset.data_dir.clone().into()
    }
}

/// Layer specs for a plain MLP: each hidden width becomes Dense
/// (+ BatchNorm) + ReLU, followed by a final Dense to `out_dim`. An empty
/// hidden list gives a single linear layer.
pub fn mlp_specs(in_dim: usize, hidden: &[usize], out_dim: usize, batchnorm: bool) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut prev = in_dim;
    for &h in hidden {
        specs.push(LayerSpec::Dense { fan_in: prev, fan_out: h });
        if batchnorm {
            specs.push(LayerSpec::BatchNorm { features: h });
        }
        specs.push(LayerSpec::Relu);
        prev = h;
    }
    specs.push(LayerSpec::Dense { fan_in: prev, fan_out: out_dim });
    specs
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub encoder_specs: Vec<LayerSpec>,
    pub head_specs: Vec<LayerSpec>,
    pub penalty: PenaltyKind,
    pub epochs: usize,
    /// Per-domain batch size.
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub seed: u64,
    pub dataset_id: String,
}

impl TrainConfig {
    /// Assemble the encoder-training configuration for a dataset with the
    /// given input width and class count.
    pub fn from_run_config(cfg: &RunConfigFile, in_dim: usize, n_classes: usize) -> Result<TrainConfig> {
        cfg.validate()?;
        Ok(TrainConfig {
            encoder_specs: mlp_specs(
                in_dim,
                &cfg.model.encoder_hidden,
                cfg.model.latent,
                cfg.model.encoder_batchnorm,
            ),
            head_specs: mlp_specs(cfg.model.latent, &[], n_classes, false),
            penalty: cfg.penalty_kind()?,
            epochs: cfg.train.epochs,
            batch_size: cfg.train.batch_size,
            optim: OptimConfig::adam(cfg.train.lr, cfg.train.weight_decay),
            seed: cfg.train.seed,
            dataset_id: cfg.dataset.kind.clone(),
        })
    }
}

/// Per-domain mini-batch cursor: each domain's rows are shuffled and drawn
/// without replacement, reshuffling when a domain is exhausted.
struct DomainBatcher {
    indices: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    rng: ChaCha8Rng,
}

impl DomainBatcher {
    fn new(domain_labels: &[usize], n_domains: usize, mut rng: ChaCha8Rng) -> Result<DomainBatcher> {
        let mut indices = vec![Vec::new(); n_domains];
        for (row, &d) in domain_labels.iter().enumerate() {
            if d >= n_domains {
                return Err(Error::Input(format!("domain label {d} out of range")));
            }
            indices[d].push(row);
        }
        for (d, idx) in indices.iter_mut().enumerate() {
            if idx.is_empty() {
                return Err(Error::Input(format!("domain {d} has no training rows")));
            }
            shuffle(idx, &mut rng);
        }
        Ok(DomainBatcher {
            cursors: vec![0; n_domains],
            indices,
            rng,
        })
    }

    fn smallest_domain(&self) -> usize {
        self.indices.iter().map(Vec::len).min().unwrap()
    }

    fn next_batch(&mut self, domain: usize, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            let idx = &mut self.indices[domain];
            let cursor = &mut self.cursors[domain];
            if *cursor >= idx.len() {
                shuffle(idx, &mut self.rng);
                *cursor = 0;
            }
            let take = (size - out.len()).min(idx.len() - *cursor);
            out.extend_from_slice(&idx[*cursor..*cursor + take]);
            *cursor += take;
        }
        out
    }
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), x.ncols()), |(i, j)| x[[rows[i], j]])
}

#[derive(Debug)]
pub struct TrainedModel {
    pub encoder: MlpModel,
    pub head: MlpModel,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub penalty_stats: PenaltyStats,
    pub steps: usize,
}

/// Train encoder + classifier head with the penalized objective: per step,
/// one batch per domain, mean cross-entropy through the head plus
/// λ · penalty on the latents, one Adam update. An epoch is one pass over the
/// smallest domain. Deterministic given the config seed.
pub fn train_encoder(cfg: &TrainConfig, data: &DatasetBundle) -> Result<TrainedModel> {
    if cfg.epochs < 1 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if cfg.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2".into()));
    }
    let mut encoder = MlpModel::init(
        &cfg.encoder_specs,
        substream(cfg.seed, "encoder-init").gen(),
    )?;
    let mut head = MlpModel::init(&cfg.head_specs, substream(cfg.seed, "head-init").gen())?;
    encoder.set_mode(Mode::Train);
    head.set_mode(Mode::Train);

    let mut batcher = DomainBatcher::new(&data.train_d, data.n_domains, substream(cfg.seed, "batches"))?;
    let mut plan_rng = substream(cfg.seed, "mixture-plan");
    let mut enc_state = AdamState::new(&encoder);
    let mut head_state = AdamState::new(&head);
    let mut stats = PenaltyStats::default();
    let steps_per_epoch = (batcher.smallest_domain() / cfg.batch_size).max(1);
    let d = data.n_domains;
    let lambda = cfg.penalty.lambda;

    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;
    for epoch in 0..cfg.epochs {
        let (lr, _) = cfg.optim.lr_at_epoch(epoch);
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            // one forward pass over the concatenation of all domain batches,
            // so batch normalization sees the mixed batch; the latents are
            // sliced back per domain afterwards
            let mut rows = Vec::with_capacity(d * cfg.batch_size);
            let mut labels = Vec::with_capacity(d);
            for dom in 0..d {
                let batch = batcher.next_batch(dom, cfg.batch_size);
                labels.push(batch.iter().map(|&r| data.train_y[r]).collect::<Vec<_>>());
                rows.extend(batch);
            }
            let xb = select_rows(&data.train_x, &rows);
            let cache = encoder.forward_cached(&xb)?;
            let latents: Vec<Array2<f64>> = (0..d)
                .map(|dom| {
                    cache
                        .output()
                        .slice(ndarray::s![dom * cfg.batch_size..(dom + 1) * cfg.batch_size, ..])
                        .to_owned()
                })
                .collect();

            let mut ces = Vec::with_capacity(d);
            let mut dlat_ce = Vec::with_capacity(d);
            let mut head_grads = GradientSet::zeros_like(&head);
            for dom in 0..d {
                let (ce, hg, dlat) = head.ce_backward(&latents[dom], &labels[dom])?;
                ces.push(ce);
                dlat_ce.push(dlat);
                head_grads.add_scaled(&hg, 1.0 / d as f64);
            }

            // λ = 0 contributes nothing; skipping keeps the run identical to
            // training without a penalty at all
            let (pen_value, pen_grads) = if lambda == 0.0 {
                (0.0, None)
            } else {
                let (v, g) = match cfg.penalty.variant {
                    PenaltyVariant::CausIrlMixture => {
                        causirl_penalty(&latents, &cfg.penalty.distance, &mut plan_rng, &mut stats)?
                    }
                    PenaltyVariant::PairwiseBaseline => {
                        pairwise_penalty(&latents, &cfg.penalty.distance, &mut stats)?
                    }
                };
                (v, Some(g))
            };

            let mut upstream = Array2::zeros(cache.output().raw_dim());
            for dom in 0..d {
                let mut block = upstream
                    .slice_mut(ndarray::s![dom * cfg.batch_size..(dom + 1) * cfg.batch_size, ..]);
                block.scaled_add(1.0 / d as f64, &dlat_ce[dom]);
                if let Some(pg) = &pen_grads {
                    block.scaled_add(lambda, &pg[dom]);
                }
            }
            let (enc_grads, _) = encoder.backward(&cache, &upstream)?;

            let loss = training_loss(&ces, pen_value, lambda);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            adam_step(&mut encoder, &enc_grads, &mut enc_state, &cfg.optim, lr)?;
            adam_step(&mut head, &head_grads, &mut head_state, &cfg.optim, lr)?;
            epoch_loss += loss;
            steps += 1;
        }
        loss_history.push(epoch_loss / steps_per_epoch as f64);
    }
    Ok(TrainedModel {
        encoder,
        head,
        loss_history,
        penalty_stats: stats,
        steps,
    })
}

/// Frozen-encoder evaluation protocol: discriminator architectures, epoch
/// budgets and the (cosine-annealed) optimizer they share.
#[derive(Debug, Clone)]
pub struct EvalProtocol {
    pub target_specs: Vec<LayerSpec>,
    pub adversary_specs: Vec<LayerSpec>,
    pub target_epochs: usize,
    pub adversary_epochs: usize,
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl EvalProtocol {
    pub fn from_run_config(cfg: &RunConfigFile, n_domains: usize, n_classes: usize, seed: u64) -> EvalProtocol {
        EvalProtocol {
            target_specs: mlp_specs(cfg.model.latent, &cfg.model.target_disc_hidden, n_classes, false),
            adversary_specs: mlp_specs(
                cfg.model.latent,
                &cfg.model.adversary_disc_hidden,
                n_domains,
                false,
            ),
            target_epochs: cfg.eval.target_epochs,
            adversary_epochs: cfg.eval.adversary_epochs,
            optim: OptimConfig::adam(cfg.eval.lr, cfg.eval.weight_decay),
            batch_size: cfg.eval.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Best test accuracy of the target discriminator over its epochs.
    pub target_acc: f64,
    /// Best test accuracy of the adversary over its epochs.
    pub adversary_acc: f64,
    pub best_epoch_target: usize,
    pub best_epoch_adv: usize,
    pub final_target_acc: f64,
    pub final_adv_acc: f64,
    pub target_curve: Vec<f64>,
    pub adversary_curve: Vec<f64>,
    pub schedule_overruns: usize,
}

struct DiscriminatorOutcome {
    best: f64,
    best_epoch: usize,
    final_acc: f64,
    curve: Vec<f64>,
    overruns: usize,
}

fn train_discriminator(
    specs: &[LayerSpec],
    train_z: &Array2<f64>,
    train_labels: &[usize],
    test_z: &Array2<f64>,
    test_labels: &[usize],
    epochs: usize,
    optim: &OptimConfig,
    batch_size: usize,
    seed: u64,
    tag: &str,
) -> Result<DiscriminatorOutcome> {
    let optim = optim.clone().with_cosine(epochs);
    let mut model = MlpModel::init(specs, substream(seed, &format!("{tag}-init")).gen())?;
    model.set_mode(Mode::Train);
    let mut state = AdamState::new(&model);
    let mut order: Vec<usize> = (0..train_z.nrows()).collect();
    let mut rng = substream(seed, &format!("{tag}-batches"));
    let mut curve = Vec::with_capacity(epochs);
    let mut best = 0.0;
    let mut best_epoch = 0;
    let mut overruns = 0usize;
    for epoch in 0..epochs {
        let (lr, overrun) = optim.lr_at_epoch(epoch);
        overruns += overrun as usize;
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(batch_size) {
            let xb = select_rows(train_z, chunk);
            let yb: Vec<usize> = chunk.iter().map(|&r| train_labels[r]).collect();
            let (loss, grads, _) = model.ce_backward(&xb, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite discriminator loss at epoch {epoch}"
                )));
            }
            adam_step(&mut model, &grads, &mut state, &optim, lr)?;
        }
        let acc = accuracy(&model.forward(test_z)?, test_labels);
        if acc > best {
            best = acc;
            best_epoch = epoch;
        }
        curve.push(acc);
    }
    let final_acc = *curve.last().unwrap();
    Ok(DiscriminatorOutcome {
        best,
        best_epoch,
        final_acc,
        curve,
        overruns,
    })
}

/// Freeze the encoder and train the two discriminators on its latents: one
/// predicting Y, one predicting D. Test accuracy is evaluated every epoch and
/// the best value kept. The encoder's parameters and batch-norm running
/// statistics are bit-identical before and after.
pub fn evaluate_frozen(
    encoder: &mut MlpModel,
    data: &DatasetBundle,
    protocol: &EvalProtocol,
) -> Result<EvalReport> {
    if data.test_y.is_empty() {
        return Err(Error::Input("empty test split".into()));
    }
    encoder.set_mode(Mode::Eval);
    let params_before = encoder.params_snapshot();
    let bn_before = encoder.bn_state_snapshot();

    let train_z = encoder.forward(&data.train_x)?;
    let test_z = encoder.forward(&data.test_x)?;

    let target = train_discriminator(
        &protocol.target_specs,
        &train_z,
        &data.train_y,
        &test_z,
        &data.test_y,
        protocol.target_epochs,
        &protocol.optim,
        protocol.batch_size,
        protocol.seed,
        "target-disc",
    )?;
    let adversary = train_discriminator(
        &protocol.adversary_specs,
        &train_z,
        &data.train_d,
        &test_z,
        &data.test_d,
        protocol.adversary_epochs,
        &protocol.optim,
        protocol.batch_size,
        protocol.seed,
        "adversary-disc",
    )?;

    if encoder.params_snapshot() != params_before || encoder.bn_state_snapshot() != bn_before {
        return Err(Error::Contract("encoder changed during frozen evaluation".into()));
    }
    Ok(EvalReport {
        target_acc: target.best,
        adversary_acc: adversary.best,
        best_epoch_target: target.best_epoch,
        best_epoch_adv: adversary.best_epoch,
        final_target_acc: target.final_acc,
        final_adv_acc: adversary.final_acc,
        target_curve: target.curve,
        adversary_curve: adversary.curve,
        schedule_overruns: target.overruns + adversary.overruns,
    })
}

/// One sweep cell: config snapshot, evaluation outcome and bookkeeping
/// counters. Failed cells carry their error in `status` and NaN accuracies.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub dataset: String,
    pub penalty: String,
    pub distance: String,
    pub lambda: f64,
    pub seed: u64,
    pub target_acc: f64,
    pub adversary_acc: f64,
    pub best_epoch_target: usize,
    pub best_epoch_adv: usize,
    pub final_target_acc: f64,
    pub final_adv_acc: f64,
    pub dist_evals: u64,
    pub wall_secs: f64,
    pub status: String,
    pub config_toml: String,
    pub target_curve: Vec<f64>,
    pub adversary_curve: Vec<f64>,
}

pub const RESULTS_HEADER: &str = "run_id,dataset,penalty,distance,lambda,seed,target_acc,adversary_acc,best_epoch_target,best_epoch_adv,final_target_acc,final_adv_acc,dist_evals,wall_secs,status";

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.dataset,
            self.penalty,
            self.distance,
            self.lambda,
            self.seed,
            self.target_acc,
            self.adversary_acc,
            self.best_epoch_target,
            self.best_epoch_adv,
            self.final_target_acc,
            self.final_adv_acc,
            self.dist_evals,
            self.wall_secs,
            self.status
        )
    }
}

fn run_id(dataset: &str, penalty: &str, distance: &str, lambda: f64, seed: u64) -> String {
    format!("{dataset}-{penalty}-{distance}-lam{lambda}-seed{seed}")
}

/// Execute one sweep cell end to end. Errors inside the cell are captured in
/// the returned record rather than propagated, so a failing cell never aborts
/// a sweep.
pub fn run_one(cfg: &RunConfigFile, lambda: f64, seed: u64) -> RunRecord {
    let kind = cfg.penalty_kind().expect("validated config");
    let mut cell_cfg = cfg.clone();
    cell_cfg.penalty.lambda = lambda;
    cell_cfg.train.seed = seed;
    let mut record = RunRecord {
        run_id: run_id(&cfg.dataset.kind, kind.variant.name(), kind.distance.name(), lambda, seed),
        dataset: cfg.dataset.kind.clone(),
        penalty: kind.variant.name().into(),
        distance: kind.distance.name().into(),
        lambda,
        seed,
        target_acc: f64::NAN,
        adversary_acc: f64::NAN,
        best_epoch_target: 0,
        best_epoch_adv: 0,
        final_target_acc: f64::NAN,
        final_adv_acc: f64::NAN,
        dist_evals: 0,
        wall_secs: 0.0,
        status: "ok".into(),
        config_toml: cell_cfg.to_toml_string(),
        target_curve: Vec::new(),
        adversary_curve: Vec::new(),
    };
    let start = Instant::now();
    let outcome = (|| -> Result<()> {
        let data = build_dataset(&cell_cfg, seed)?;
        let train_cfg = TrainConfig::from_run_config(&cell_cfg, data.feature_dim(), data.n_classes)?;
        let trained = train_encoder(&train_cfg, &data)?;
        record.dist_evals = trained.penalty_stats.dist_evals;
        let protocol = EvalProtocol::from_run_config(&cell_cfg, data.n_domains, data.n_classes, seed);
        let mut encoder = trained.encoder;
        let report = evaluate_frozen(&mut encoder, &data, &protocol)?;
        record.target_acc = report.target_acc;
        record.adversary_acc = report.adversary_acc;
        record.best_epoch_target = report.best_epoch_target;
        record.best_epoch_adv = report.best_epoch_adv;
        record.final_target_acc = report.final_target_acc;
        record.final_adv_acc = report.final_adv_acc;
        record.target_curve = report.target_curve;
        record.adversary_curve = report.adversary_curve;
        Ok(())
    })();
    record.wall_secs = start.elapsed().as_secs_f64();
    if let Err(e) = outcome {
        // keep the CSV row machine-parsable
        record.status = format!("failed: {e}").replace([',', '\n'], ";");
    }
    record
}

/// Run the full λ × seed grid of the config's `[sweep]` section, cells in
/// parallel. With a results directory, every record is persisted and the
/// aggregate results CSV rebuilt.
pub fn run_sweep(cfg: &RunConfigFile, results_dir: Option<&Path>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if let Some(dir) = results_dir {
        std::fs::create_dir_all(dir)?;
    }
    let cells: Vec<(f64, u64)> = cfg
        .sweep
        .lambdas
        .iter()
        .flat_map(|&l| cfg.sweep.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(lambda, seed)| {
            let record = run_one(cfg, lambda, seed);
            if let Some(dir) = results_dir {
                // a persistence failure is a cell failure, not a sweep abort
                if let Err(e) = persist_run(&record, dir) {
                    let mut failed = record.clone();
                    failed.status = format!("failed: {e}").replace([',', '\n'], ";");
                    return failed;
                }
            }
            record
        })
        .collect();
    if let Some(dir) = results_dir {
        rebuild_results_csv(dir)?;
    }
    Ok(records)
}

/// Persist one run as a self-contained subdirectory: the exact config
/// snapshot, a flat key-value metrics document, and per-epoch accuracy
/// curves.
pub fn persist_run(record: &RunRecord, results_dir: &Path) -> Result<()> {
    let dir = results_dir.join(&record.run_id);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), &record.config_toml)?;

    let mut metrics = String::new();
    for (k, v) in [
        ("run_id", record.run_id.clone()),
        ("dataset", record.dataset.clone()),
        ("penalty", record.penalty.clone()),
        ("distance", record.distance.clone()),
        ("lambda", record.lambda.to_string()),
        ("seed", record.seed.to_string()),
        ("target_acc", record.target_acc.to_string()),
        ("adversary_acc", record.adversary_acc.to_string()),
        ("best_epoch_target", record.best_epoch_target.to_string()),
        ("best_epoch_adv", record.best_epoch_adv.to_string()),
        ("final_target_acc", record.final_target_acc.to_string()),
        ("final_adv_acc", record.final_adv_acc.to_string()),
        ("dist_evals", record.dist_evals.to_string()),
        ("wall_secs", record.wall_secs.to_string()),
        ("status", record.status.clone()),
    ] {
        metrics.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(dir.join("metrics.txt"), metrics)?;

    let mut curves = String::from("epoch,target_acc,adversary_acc\n");
    let n = record.target_curve.len().max(record.adversary_curve.len());
    for e in 0..n {
        let t = record.target_curve.get(e).map_or(String::new(), f64::to_string);
        let a = record.adversary_curve.get(e).map_or(String::new(), f64::to_string);
        curves.push_str(&format!("{e},{t},{a}\n"));
    }
    std::fs::write(dir.join("curves.csv"), curves)?;
    Ok(())
}

/// Rebuild the aggregate results CSV from the per-run subdirectories (sorted
/// by run id, so the output is a pure function of the directory contents).
pub fn rebuild_results_csv(results_dir: &Path) -> Result<String> {
    let mut rows = Vec::new();
    let mut dirs: Vec<_> = std::fs::read_dir(results_dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    dirs.sort();
    for dir in dirs {
        let metrics_path = dir.join("metrics.txt");
        if !metrics_path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&metrics_path)?;
        let get = |key: &str| -> Result<String> {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
                .ok_or_else(|| {
                    Error::Parse {
                        file: metrics_path.display().to_string(),
                        line: 0,
                        msg: format!("missing key {key}"),
                    }
                })
        };
        let mut fields = Vec::new();
        for key in RESULTS_HEADER.split(',') {
            fields.push(get(key)?);
        }
        rows.push(fields.join(","));
    }
    if rows.is_empty() {
        return Err(Error::Input(format!(
            "no completed runs under {}",
            results_dir.display()
        )));
    }
    let csv = format!("{RESULTS_HEADER}\n{}\n", rows.join("\n"));
    std::fs::write(results_dir.join("results.csv"), &csv)?;
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::DistanceKind;

    fn tiny_synthetic_config() -> RunConfigFile {
        let mut cfg = RunConfigFile::synthetic_preset();
        cfg.dataset.n = 300;
        cfg.dataset.n_test = 60;
        cfg.train.epochs = 10;
        cfg.train.batch_size = 32;
        cfg.eval.target_epochs = 15;
        cfg.eval.adversary_epochs = 15;
        cfg
    }

    fn tiny_train_config(cfg: &RunConfigFile, data: &DatasetBundle) -> TrainConfig {
        TrainConfig::from_run_config(cfg, data.feature_dim(), data.n_classes).unwrap()
    }

    #[test]
    fn mlp_specs_shapes() {
        let specs = mlp_specs(3, &[10], 5, true);
        assert_eq!(specs.len(), 4); // dense, bn, relu, dense
        let linear = mlp_specs(5, &[], 2, false);
        assert_eq!(linear.len(), 1);
    }

    #[test]
    fn training_reduces_loss_on_separable_data() {
        let cfg = tiny_synthetic_config();
        let data = build_dataset(&cfg, 0).unwrap();
        let mut tc = tiny_train_config(&cfg, &data);
        tc.penalty.lambda = 0.0;
        let trained = train_encoder(&tc, &data).unwrap();
        let first = trained.loss_history[0];
        let last = *trained.loss_history.last().unwrap();
        assert!(last < first, "no descent: {first} -> {last}");
    }

    #[test]
    fn lambda_zero_matches_absent_penalty() {
        let cfg = tiny_synthetic_config();
        let data = build_dataset(&cfg, 1).unwrap();
        let mut a = tiny_train_config(&cfg, &data);
        a.penalty.lambda = 0.0;
        let mut b = a.clone();
        b.penalty.variant = PenaltyVariant::PairwiseBaseline;
        b.penalty.distance = DistanceKind::Coral;
        let ra = train_encoder(&a, &data).unwrap();
        let rb = train_encoder(&b, &data).unwrap();
        assert_eq!(ra.loss_history, rb.loss_history);
        assert_eq!(ra.encoder.params_snapshot(), rb.encoder.params_snapshot());
        assert_eq!(ra.penalty_stats.dist_evals, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_synthetic_config();
        let data = build_dataset(&cfg, 2).unwrap();
        let tc = tiny_train_config(&cfg, &data);
        let a = train_encoder(&tc, &data).unwrap();
        let b = train_encoder(&tc, &data).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.encoder.params_snapshot(), b.encoder.params_snapshot());
    }

    #[test]
    fn nan_input_aborts_with_numeric_error() {
        let cfg = tiny_synthetic_config();
        let mut data = build_dataset(&cfg, 3).unwrap();
        data.train_x[[0, 0]] = f64::NAN;
        let tc = tiny_train_config(&cfg, &data);
        match train_encoder(&tc, &data) {
            Err(Error::Numeric(_)) => {}
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn eval_count_law_per_step() {
        let mut cfg = tiny_synthetic_config();
        cfg.dataset.domains = 3;
        cfg.dataset.n = 600;
        cfg.dataset.n_test = 60;
        let data = build_dataset(&cfg, 4).unwrap();
        let mut causirl = tiny_train_config(&cfg, &data);
        causirl.penalty.distance = DistanceKind::Coral;
        let mut pairwise = causirl.clone();
        pairwise.penalty.variant = PenaltyVariant::PairwiseBaseline;
        let rc = train_encoder(&causirl, &data).unwrap();
        let rp = train_encoder(&pairwise, &data).unwrap();
        assert_eq!(rc.penalty_stats.dist_evals + rc.penalty_stats.guard_skips, rc.steps as u64);
        assert_eq!(rp.penalty_stats.dist_evals, rp.steps as u64 * 3); // 3·2/2 pairs
    }

    #[test]
    fn frozen_encoder_is_untouched() {
        let cfg = tiny_synthetic_config();
        let data = build_dataset(&cfg, 5).unwrap();
        let tc = tiny_train_config(&cfg, &data);
        let trained = train_encoder(&tc, &data).unwrap();
        let mut encoder = trained.encoder;
        let params = encoder.params_snapshot();
        let bn = encoder.bn_state_snapshot();
        let protocol = EvalProtocol::from_run_config(&cfg, data.n_domains, data.n_classes, 5);
        let report = evaluate_frozen(&mut encoder, &data, &protocol).unwrap();
        assert_eq!(encoder.params_snapshot(), params);
        assert_eq!(encoder.bn_state_snapshot(), bn);
        assert!(report.target_acc >= 0.0 && report.target_acc <= 1.0);
        assert_eq!(report.target_curve.len(), cfg.eval.target_epochs);
    }

    #[test]
    fn constant_encoder_learns_only_the_prior() {
        let cfg = tiny_synthetic_config();
        let data = build_dataset(&cfg, 6).unwrap();
        let tc = tiny_train_config(&cfg, &data);
        let mut encoder = MlpModel::init(&tc.encoder_specs, 0).unwrap();
        for slice in encoder.param_slices_mut() {
            for v in slice.iter_mut() {
                *v = 0.0;
            }
        }
        let mut protocol = EvalProtocol::from_run_config(&cfg, data.n_domains, data.n_classes, 6);
        protocol.target_epochs = 30;
        protocol.adversary_epochs = 30;
        let report = evaluate_frozen(&mut encoder, &data, &protocol).unwrap();
        let majority_y = {
            let ones = data.test_y.iter().sum::<usize>() as f64 / data.test_y.len() as f64;
            ones.max(1.0 - ones)
        };
        let majority_d = {
            let ones = data.test_d.iter().sum::<usize>() as f64 / data.test_d.len() as f64;
            ones.max(1.0 - ones)
        };
        assert!((report.target_acc - majority_y).abs() <= 0.011, "{} vs {majority_y}", report.target_acc);
        assert!((report.adversary_acc - majority_d).abs() <= 0.011, "{} vs {majority_d}", report.adversary_acc);
    }

    #[test]
    fn identity_encoder_leaks_the_domain() {
        let mut cfg = tiny_synthetic_config();
        cfg.dataset.n = 1000;
        cfg.dataset.n_test = 200;
        cfg.model.latent = 3;
        let data = build_dataset(&cfg, 7).unwrap();
        // identity map: one dense layer with W = I, b = 0
        let mut encoder = MlpModel::init(&mlp_specs(3, &[], 3, false), 0).unwrap();
        {
            let mut slices = encoder.param_slices_mut();
            let w = &mut slices[0];
            for i in 0..3 {
                for j in 0..3 {
                    w[i * 3 + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            for v in slices[1].iter_mut() {
                *v = 0.0;
            }
        }
        let mut protocol = EvalProtocol::from_run_config(&cfg, data.n_domains, data.n_classes, 7);
        protocol.adversary_epochs = 60;
        let report = evaluate_frozen(&mut encoder, &data, &protocol).unwrap();
        assert!(report.adversary_acc > 0.60, "adversary {}", report.adversary_acc);
    }

    #[test]
    fn empty_test_split_is_rejected() {
        let cfg = tiny_synthetic_config();
        let mut data = build_dataset(&cfg, 8).unwrap();
        data.test_x = Array2::zeros((0, data.test_x.ncols()));
        data.test_y.clear();
        data.test_d.clear();
        let tc = tiny_train_config(&cfg, &data);
        let mut encoder = MlpModel::init(&tc.encoder_specs, 0).unwrap();
        let protocol = EvalProtocol::from_run_config(&cfg, 2, 2, 8);
        assert!(evaluate_frozen(&mut encoder, &data, &protocol).is_err());
    }

    #[test]
    fn sweep_grid_and_determinism() {
        let mut cfg = tiny_synthetic_config();
        cfg.dataset.n = 200;
        cfg.dataset.n_test = 40;
        cfg.train.epochs = 3;
        cfg.eval.target_epochs = 3;
        cfg.eval.adversary_epochs = 3;
        cfg.sweep.lambdas = vec![0.0, 1.0];
        cfg.sweep.seeds = vec![0, 1];
        let a = run_sweep(&cfg, None).unwrap();
        let b = run_sweep(&cfg, None).unwrap();
        assert_eq!(a.len(), 4);
        let strip = |rs: &[RunRecord]| -> Vec<(String, String, String)> {
            rs.iter()
                .map(|r| {
                    (
                        r.run_id.clone(),
                        format!("{};{}", r.target_acc, r.adversary_acc),
                        r.status.clone(),
                    )
                })
                .collect()
        };
        // wall-clock differs between repeats; everything else must not
        assert_eq!(strip(&a), strip(&b));
        assert!(a.iter().all(|r| r.status == "ok"));
        let ids: std::collections::BTreeSet<_> = a.iter().map(|r| r.run_id.clone()).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn persistence_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_synthetic_config();
        cfg.dataset.n = 200;
        cfg.dataset.n_test = 40;
        cfg.train.epochs = 2;
        cfg.eval.target_epochs = 2;
        cfg.eval.adversary_epochs = 2;
        cfg.sweep.lambdas = vec![0.5];
        cfg.sweep.seeds = vec![0, 1];
        let records = run_sweep(&cfg, Some(tmp.path())).unwrap();
        assert_eq!(records.len(), 2);

        // config snapshot round-trips field for field
        let snap_path = tmp.path().join(&records[0].run_id).join("config.toml");
        let snap = RunConfigFile::from_path(&snap_path).unwrap();
        assert_eq!(snap.penalty.lambda, 0.5);
        assert_eq!(snap.train.seed, records[0].seed);

        // aggregate CSV has one row per completed run and rebuilds identically
        let csv = std::fs::read_to_string(tmp.path().join("results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(RESULTS_HEADER));
        let rebuilt = rebuild_results_csv(tmp.path()).unwrap();
        assert_eq!(csv, rebuilt);
    }

    #[test]
    fn failing_cell_is_recorded_not_fatal() {
        let mut cfg = tiny_synthetic_config();
        cfg.dataset.kind = "german".into();
        cfg.dataset.data_dir = "/nonexistent".into();
        cfg.sweep.lambdas = vec![1.0];
        cfg.sweep.seeds = vec![0];
        let records = run_sweep(&cfg, None).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].status.starts_with("failed:"), "{}", records[0].status);
        assert!(!records[0].status.contains(','));
    }

    #[test]
    fn empty_results_dir_is_an_input_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(rebuild_results_csv(tmp.path()).is_err());
    }
}
