//! Invariance regularizers over per-domain latent batches.
//!
//! Two variants: the mixture penalty, which slices every domain batch at a
//! uniformly drawn cut point, concatenates the two sides into mixture batches
//! B1/B2 and takes a single distance between them; and the classical pairwise
//! baseline, which averages the distance over all domain pairs. A fresh split
//! plan is drawn at every optimization step.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::distances::DistanceKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyVariant {
    CausIrlMixture,
    PairwiseBaseline,
}

impl PenaltyVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyVariant::CausIrlMixture => "causirl",
            PenaltyVariant::PairwiseBaseline => "pairwise",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyKind {
    pub variant: PenaltyVariant,
    pub distance: DistanceKind,
    pub lambda: f64,
}

/// Per-domain cut points; s_i in [0, n_i] inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan(pub Vec<usize>);

/// Counters carried across a run: distance evaluations, guard skips and
/// non-finite penalty values that were zeroed.
#[derive(Debug, Clone, Copy, Default)]
pub struct PenaltyStats {
    pub dist_evals: u64,
    pub guard_skips: u64,
    pub nonfinite_zeroed: u64,
}

/// Draw a cut point uniformly on {0, ..., n_i} (both ends inclusive) for each
/// domain.
pub fn draw_split_plan(sizes: &[usize], rng: &mut ChaCha8Rng) -> SplitPlan {
    SplitPlan(sizes.iter().map(|&n| rng.gen_range(0..=n)).collect())
}

fn concat_rows(parts: &[Array2<f64>]) -> Array2<f64> {
    let cols = parts.iter().find(|p| p.nrows() > 0).map_or(0, |p| p.ncols());
    let total: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Array2::zeros((total, cols));
    let mut row = 0;
    for p in parts {
        for r in p.axis_iter(Axis(0)) {
            out.row_mut(row).assign(&r);
            row += 1;
        }
    }
    out
}

/// Split each domain batch at its cut point and concatenate the first `s_i`
/// rows into B1 and the rest into B2, preserving row order within a domain.
pub fn mixture_split_with_plan(
    batches: &[Array2<f64>],
    plan: &SplitPlan,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if batches.is_empty() {
        return Err(Error::Input("empty batch list".into()));
    }
    if plan.0.len() != batches.len() {
        return Err(Error::Input("split plan length does not match domain count".into()));
    }
    let dim = batches[0].ncols();
    for (i, b) in batches.iter().enumerate() {
        if b.nrows() == 0 {
            return Err(Error::Input(format!("domain {i} has an empty batch")));
        }
        if b.ncols() != dim {
            return Err(Error::Shape("domain batches differ in feature dimension".into()));
        }
        if plan.0[i] > b.nrows() {
            return Err(Error::Input(format!(
                "cut point {} exceeds batch size {}",
                plan.0[i],
                b.nrows()
            )));
        }
    }
    let firsts: Vec<Array2<f64>> = batches
        .iter()
        .zip(&plan.0)
        .map(|(b, &s)| b.slice(ndarray::s![..s, ..]).to_owned())
        .collect();
    let seconds: Vec<Array2<f64>> = batches
        .iter()
        .zip(&plan.0)
        .map(|(b, &s)| b.slice(ndarray::s![s.., ..]).to_owned())
        .collect();
    Ok((concat_rows(&firsts), concat_rows(&seconds)))
}

pub fn mixture_split(
    batches: &[Array2<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, Array2<f64>, SplitPlan)> {
    if batches.is_empty() {
        return Err(Error::Input("empty batch list".into()));
    }
    let sizes: Vec<usize> = batches.iter().map(|b| b.nrows()).collect();
    let plan = draw_split_plan(&sizes, rng);
    let (b1, b2) = mixture_split_with_plan(batches, &plan)?;
    Ok((b1, b2, plan))
}

/// Mixture penalty for a given split plan. Returns the penalty value and the
/// gradient on each domain's latent batch.
///
/// Two guards keep training robust: a side with fewer than 2 rows yields a
/// zero penalty without evaluating the distance, and a non-finite distance is
/// zeroed and flagged.
pub fn causirl_penalty_with_plan(
    latents: &[Array2<f64>],
    distance: &DistanceKind,
    plan: &SplitPlan,
    stats: &mut PenaltyStats,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let (b1, b2) = mixture_split_with_plan(latents, plan)?;
    let zero_grads = || latents.iter().map(|l| Array2::zeros(l.raw_dim())).collect();
    if b1.nrows() <= 1 || b2.nrows() <= 1 {
        stats.guard_skips += 1;
        return Ok((0.0, zero_grads()));
    }
    stats.dist_evals += 1;
    let (value, db1, db2) = distance.eval_grad(&b1, &b2)?;
    if !value.is_finite() {
        stats.nonfinite_zeroed += 1;
        return Ok((0.0, zero_grads()));
    }
    // scatter the mixture gradients back to per-domain rows
    let mut grads: Vec<Array2<f64>> = zero_grads();
    let mut r1 = 0;
    let mut r2 = 0;
    for (i, (l, &s)) in latents.iter().zip(&plan.0).enumerate() {
        for row in 0..s {
            grads[i].row_mut(row).assign(&db1.row(r1));
            r1 += 1;
        }
        for row in s..l.nrows() {
            grads[i].row_mut(row).assign(&db2.row(r2));
            r2 += 1;
        }
    }
    Ok((value, grads))
}

/// Mixture penalty with a freshly drawn split plan; exactly one distance
/// evaluation regardless of the number of domains.
pub fn causirl_penalty(
    latents: &[Array2<f64>],
    distance: &DistanceKind,
    rng: &mut ChaCha8Rng,
    stats: &mut PenaltyStats,
) -> Result<(f64, Vec<Array2<f64>>)> {
    if latents.is_empty() {
        return Err(Error::Input("empty batch list".into()));
    }
    let sizes: Vec<usize> = latents.iter().map(|b| b.nrows()).collect();
    let plan = draw_split_plan(&sizes, rng);
    causirl_penalty_with_plan(latents, distance, &plan, stats)
}

/// Pairwise baseline: (2 / d(d-1)) * sum over pairs of distance(Z_i, Z_j);
/// exactly d(d-1)/2 distance evaluations, zero for a single domain.
pub fn pairwise_penalty(
    latents: &[Array2<f64>],
    distance: &DistanceKind,
    stats: &mut PenaltyStats,
) -> Result<(f64, Vec<Array2<f64>>)> {
    if latents.is_empty() {
        return Err(Error::Input("empty batch list".into()));
    }
    let d = latents.len();
    let mut grads: Vec<Array2<f64>> = latents.iter().map(|l| Array2::zeros(l.raw_dim())).collect();
    if d == 1 {
        return Ok((0.0, grads));
    }
    let norm = 2.0 / (d * (d - 1)) as f64;
    let mut total = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            stats.dist_evals += 1;
            let (v, di, dj) = distance.eval_grad(&latents[i], &latents[j])?;
            if !v.is_finite() {
                stats.nonfinite_zeroed += 1;
                continue;
            }
            total += v * norm;
            grads[i].scaled_add(norm, &di);
            grads[j].scaled_add(norm, &dj);
        }
    }
    Ok((total, grads))
}

/// Total training loss: mean per-domain cross-entropy plus lambda * penalty.
pub fn training_loss(ce_per_domain: &[f64], penalty_value: f64, lambda: f64) -> f64 {
    let d = ce_per_domain.len() as f64;
    ce_per_domain.iter().sum::<f64>() / d + lambda * penalty_value
}
