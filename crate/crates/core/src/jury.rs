//! Demographically constrained jury simulation.
//!
//! Every jury draw is seeded from `(master_seed, comment_id, jury_index)`
//! alone, so verdicts do not depend on thread count or processing order, and
//! different compositions of the same comment share random numbers.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotstore::{WorkerAttribute, WorkerProfile};
use crate::featurize::EmbeddingTable;
use crate::model::DcnModel;
use crate::rng::{derive_seed, hash_str, stream};
use crate::{Error, Result};

/// Anything that can give per-worker stigma probabilities for a comment.
pub trait JurorModel: Sync {
    fn juror_probabilities(&self, comment_id: &str, workers: &[&WorkerProfile]) -> Result<Vec<f64>>;
}

/// A trained network plus the content embeddings of the comments to judge.
pub struct DcnJurors<'a> {
    pub model: &'a DcnModel,
    pub embeddings: &'a EmbeddingTable,
}

impl JurorModel for DcnJurors<'_> {
    fn juror_probabilities(&self, comment_id: &str, workers: &[&WorkerProfile]) -> Result<Vec<f64>> {
        let content: Vec<f64> = self
            .embeddings
            .get(comment_id)
            .ok_or_else(|| Error::Consistency(format!("no content embedding for comment {comment_id}")))?
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        self.model.predict_for_workers(&content, workers)
    }
}

/// Wraps a plain function of `(comment_id, worker)`.
pub struct FnJurors<F>(pub F);

impl<F> JurorModel for FnJurors<F>
where
    F: Fn(&str, &WorkerProfile) -> f64 + Sync,
{
    fn juror_probabilities(&self, comment_id: &str, workers: &[&WorkerProfile]) -> Result<Vec<f64>> {
        Ok(workers.iter().map(|w| (self.0)(comment_id, w)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JuryConfig {
    pub jury_size: usize,
    /// Positive juror votes needed for a positive jury vote.
    pub majority_threshold: usize,
    pub n_juries: usize,
    pub verdict_thresholds: Vec<f64>,
    pub master_seed: u64,
}

impl Default for JuryConfig {
    fn default() -> Self {
        JuryConfig {
            jury_size: 12,
            majority_threshold: 7,
            n_juries: 10_000,
            verdict_thresholds: (10..=20).map(|i| f64::from(i) / 20.0).collect(),
            master_seed: 0,
        }
    }
}

impl JuryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.jury_size == 0 || self.n_juries == 0 {
            return bad("jury_size and n_juries must be positive".into());
        }
        if 2 * self.majority_threshold <= self.jury_size || self.majority_threshold > self.jury_size {
            return bad(format!(
                "majority threshold {} must exceed half of jury size {}",
                self.majority_threshold, self.jury_size
            ));
        }
        if let Some(t) = self.verdict_thresholds.iter().find(|t| !(0.5..=1.0).contains(*t)) {
            return bad(format!("verdict threshold {t} outside [0.5, 1]"));
        }
        Ok(())
    }

    pub fn check_k(&self, k: usize) -> Result<()> {
        if k > self.jury_size {
            return Err(Error::Argument(format!("k={k} exceeds jury size {}", self.jury_size)));
        }
        Ok(())
    }
}

/// Workers split by one binary attribute, each stratum sorted by id.
#[derive(Debug, Clone)]
pub struct StratifiedPool<'a> {
    pub attribute: WorkerAttribute,
    pub positive: Vec<&'a WorkerProfile>,
    pub negative: Vec<&'a WorkerProfile>,
}

impl<'a> StratifiedPool<'a> {
    pub fn new(workers: impl IntoIterator<Item = &'a WorkerProfile>, attribute: WorkerAttribute) -> Self {
        let (mut positive, mut negative): (Vec<_>, Vec<_>) = workers.into_iter().partition(|w| w.attribute(attribute));
        positive.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
        negative.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
        StratifiedPool { attribute, positive, negative }
    }

    pub fn feasible(&self, k: usize, config: &JuryConfig) -> bool {
        k <= config.jury_size && self.positive.len() >= k && self.negative.len() >= config.jury_size - k
    }

    fn check(&self, k: usize, config: &JuryConfig) -> Result<()> {
        config.check_k(k)?;
        let rest = config.jury_size - k;
        if self.positive.len() < k {
            return Err(Error::InsufficientStratum {
                stratum: format!("{}=1", self.attribute),
                needed: k,
                available: self.positive.len(),
            });
        }
        if self.negative.len() < rest {
            return Err(Error::InsufficientStratum {
                stratum: format!("{}=0", self.attribute),
                needed: rest,
                available: self.negative.len(),
            });
        }
        Ok(())
    }
}

fn jury_rng(config: &JuryConfig, comment_id: &str, jury_index: usize) -> rand_chacha::ChaCha8Rng {
    stream(derive_seed(config.master_seed, &[hash_str("jury"), hash_str(comment_id), jury_index as u64]))
}

/// Positions of the sampled jurors within the positive and negative strata.
fn draw_indices(
    pool: &StratifiedPool<'_>,
    k: usize,
    config: &JuryConfig,
    comment_id: &str,
    jury_index: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = jury_rng(config, comment_id, jury_index);
    let pos = sample(&mut rng, pool.positive.len(), k).into_vec();
    let neg = sample(&mut rng, pool.negative.len(), config.jury_size - k).into_vec();
    (pos, neg)
}

/// Draw one jury: `k` members with the attribute, the rest without.
pub fn sample_jury(
    pool: &StratifiedPool<'_>,
    k: usize,
    config: &JuryConfig,
    comment_id: &str,
    jury_index: usize,
) -> Result<Vec<String>> {
    pool.check(k, config)?;
    let (pos, neg) = draw_indices(pool, k, config, comment_id, jury_index);
    Ok(pos
        .into_iter()
        .map(|i| pool.positive[i].worker_id.clone())
        .chain(neg.into_iter().map(|i| pool.negative[i].worker_id.clone()))
        .collect())
}

/// A juror votes stigma when its probability exceeds 0.5; the jury votes
/// stigma with at least `majority_threshold` such votes.
pub fn jury_vote(
    model: &dyn JurorModel,
    comment_id: &str,
    jurors: &[&WorkerProfile],
    config: &JuryConfig,
) -> Result<bool> {
    let probs = model.juror_probabilities(comment_id, jurors)?;
    Ok(probs.iter().filter(|&&p| p > 0.5).count() >= config.majority_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentVerdict {
    pub comment_id: String,
    pub positive_juries: usize,
    pub positive_fraction: f64,
    /// `(threshold, label)` in threshold order.
    pub labels: Vec<(f64, bool)>,
}

/// `fraction >= threshold` with a little slack for grid values such as 0.55.
pub fn meets_threshold(fraction: f64, threshold: f64) -> bool {
    fraction >= threshold - 1e-12
}

/// Individual votes of both strata on one comment.
struct StratumVotes {
    positive: Vec<bool>,
    negative: Vec<bool>,
}

fn stratum_votes(model: &dyn JurorModel, comment_id: &str, pool: &StratifiedPool<'_>) -> Result<StratumVotes> {
    let all: Vec<&WorkerProfile> = pool.positive.iter().chain(&pool.negative).copied().collect();
    let probs = model.juror_probabilities(comment_id, &all)?;
    if probs.len() != all.len() {
        return Err(Error::Consistency("model returned the wrong number of probabilities".into()));
    }
    let votes: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
    let (pos, neg) = votes.split_at(pool.positive.len());
    Ok(StratumVotes { positive: pos.to_vec(), negative: neg.to_vec() })
}

fn positive_juries(
    votes: &StratumVotes,
    pool: &StratifiedPool<'_>,
    k: usize,
    config: &JuryConfig,
    comment_id: &str,
) -> usize {
    (0..config.n_juries)
        .filter(|&j| {
            let (pos, neg) = draw_indices(pool, k, config, comment_id, j);
            let yes =
                pos.iter().filter(|&&i| votes.positive[i]).count() + neg.iter().filter(|&&i| votes.negative[i]).count();
            yes >= config.majority_threshold
        })
        .count()
}

fn make_verdict(comment_id: &str, positive: usize, config: &JuryConfig) -> CommentVerdict {
    let fraction = positive as f64 / config.n_juries as f64;
    CommentVerdict {
        comment_id: comment_id.to_string(),
        positive_juries: positive,
        positive_fraction: fraction,
        labels: config.verdict_thresholds.iter().map(|&t| (t, meets_threshold(fraction, t))).collect(),
    }
}

/// Monte-Carlo verdict on one comment for composition `k`.
pub fn verdict(
    model: &dyn JurorModel,
    comment_id: &str,
    pool: &StratifiedPool<'_>,
    k: usize,
    config: &JuryConfig,
) -> Result<CommentVerdict> {
    config.validate()?;
    pool.check(k, config)?;
    let votes = stratum_votes(model, comment_id, pool)?;
    Ok(make_verdict(comment_id, positive_juries(&votes, pool, k, config, comment_id), config))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub attribute: WorkerAttribute,
    pub k: usize,
    pub threshold: f64,
    pub percent_stigmatizing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub attribute: WorkerAttribute,
    /// `percent[k][t]`; `None` for compositions the pool cannot fill.
    pub percent: Vec<Option<Vec<f64>>>,
    /// Mean positive-jury fraction over comments, per k.
    pub mean_fraction: Vec<Option<f64>>,
    pub thresholds: Vec<f64>,
}

impl SweepTable {
    pub fn rows(&self) -> Vec<SweepRow> {
        let mut rows = Vec::new();
        for (k, row) in self.percent.iter().enumerate() {
            if let Some(row) = row {
                for (&t, &p) in self.thresholds.iter().zip(row) {
                    rows.push(SweepRow { attribute: self.attribute, k, threshold: t, percent_stigmatizing: p });
                }
            }
        }
        rows
    }

    /// Percent at `threshold` for every feasible k, as `(k, percent)`.
    pub fn column(&self, threshold: f64) -> Vec<(usize, f64)> {
        let Some(j) = self.thresholds.iter().position(|&t| (t - threshold).abs() < 1e-12) else {
            return Vec::new();
        };
        self.percent.iter().enumerate().filter_map(|(k, r)| r.as_ref().map(|r| (k, r[j]))).collect()
    }
}

fn assemble(attribute: WorkerAttribute, ks: &[usize], per_comment: &[Vec<usize>], config: &JuryConfig) -> SweepTable {
    let n = config.n_juries as f64;
    let mut percent = vec![None; config.jury_size + 1];
    let mut mean_fraction = vec![None; config.jury_size + 1];
    for (ki, &k) in ks.iter().enumerate() {
        let row = config
            .verdict_thresholds
            .iter()
            .map(|&t| {
                let hits = per_comment.iter().filter(|counts| meets_threshold(counts[ki] as f64 / n, t)).count();
                100.0 * hits as f64 / per_comment.len() as f64
            })
            .collect();
        percent[k] = Some(row);
        mean_fraction[k] = Some(per_comment.iter().map(|c| c[ki] as f64 / n).sum::<f64>() / per_comment.len() as f64);
    }
    SweepTable { attribute, percent, mean_fraction, thresholds: config.verdict_thresholds.clone() }
}

/// Percent of `comments` labelled stigmatizing for every composition
/// `k = 0..=jury_size` and every verdict threshold.
pub fn sweep_composition(
    model: &dyn JurorModel,
    comments: &[String],
    pool: &StratifiedPool<'_>,
    config: &JuryConfig,
) -> Result<SweepTable> {
    config.validate()?;
    if comments.is_empty() {
        return Err(Error::Argument("no comments to sweep".into()));
    }
    let ks: Vec<usize> = (0..=config.jury_size).filter(|&k| pool.feasible(k, config)).collect();
    let per_comment: Vec<Vec<usize>> = comments
        .par_iter()
        .map(|c| {
            let votes = stratum_votes(model, c, pool)?;
            Ok(ks.iter().map(|&k| positive_juries(&votes, pool, k, config, c)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(assemble(pool.attribute, &ks, &per_comment, config))
}

/// `sweep_composition` for several attributes over one worker pool. Each
/// worker's vote on a comment is predicted once and shared by all sweeps.
pub fn sweep_attributes(
    model: &dyn JurorModel,
    comments: &[String],
    workers: &[WorkerProfile],
    attributes: &[WorkerAttribute],
    config: &JuryConfig,
) -> Result<Vec<SweepTable>> {
    config.validate()?;
    if comments.is_empty() {
        return Err(Error::Argument("no comments to sweep".into()));
    }
    let pools: Vec<StratifiedPool<'_>> = attributes.iter().map(|&a| StratifiedPool::new(workers, a)).collect();
    let ks: Vec<Vec<usize>> =
        pools.iter().map(|p| (0..=config.jury_size).filter(|&k| p.feasible(k, config)).collect()).collect();
    let all: Vec<&WorkerProfile> = workers.iter().collect();
    // per comment, per attribute, per feasible k
    let counts: Vec<Vec<Vec<usize>>> = comments
        .par_iter()
        .map(|c| {
            let probs = model.juror_probabilities(c, &all)?;
            if probs.len() != all.len() {
                return Err(Error::Consistency("model returned the wrong number of probabilities".into()));
            }
            let vote: HashMap<&str, bool> =
                all.iter().zip(&probs).map(|(w, &p)| (w.worker_id.as_str(), p > 0.5)).collect();
            Ok(pools
                .iter()
                .zip(&ks)
                .map(|(pool, ks)| {
                    let votes = StratumVotes {
                        positive: pool.positive.iter().map(|w| vote[w.worker_id.as_str()]).collect(),
                        negative: pool.negative.iter().map(|w| vote[w.worker_id.as_str()]).collect(),
                    };
                    ks.iter().map(|&k| positive_juries(&votes, pool, k, config, c)).collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(pools
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            let per_comment: Vec<Vec<usize>> = counts.iter().map(|c| c[i].clone()).collect();
            assemble(pool.attribute, &ks[i], &per_comment, config)
        })
        .collect())
}

pub fn write_sweep(path: impl AsRef<Path>, tables: &[SweepTable]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["attribute", "k", "threshold", "percent_stigmatizing"])?;
    for t in tables {
        for r in t.rows() {
            w.write_record([
                r.attribute.to_string(),
                r.k.to_string(),
                format!("{:.2}", r.threshold),
                format!("{:.4}", r.percent_stigmatizing),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WildLabel {
    pub comment_id: String,
    pub fraction_a: f64,
    pub fraction_b: f64,
    pub label_a: bool,
    pub label_b: bool,
}

pub const WILD_THRESHOLD: f64 = 0.90;

/// Label each comment twice: with juries drawn entirely from workers having
/// `pool.attribute` (A) and entirely from those without it (B).
pub fn label_in_wild(
    model: &dyn JurorModel,
    comments: &[String],
    pool: &StratifiedPool<'_>,
    wild_threshold: f64,
    config: &JuryConfig,
) -> Result<Vec<WildLabel>> {
    config.validate()?;
    pool.check(config.jury_size, config)?;
    pool.check(0, config)?;
    comments
        .par_iter()
        .map(|c| {
            let votes = stratum_votes(model, c, pool)?;
            let n = config.n_juries as f64;
            let fraction_a = positive_juries(&votes, pool, config.jury_size, config, c) as f64 / n;
            let fraction_b = positive_juries(&votes, pool, 0, config, c) as f64 / n;
            Ok(WildLabel {
                comment_id: c.clone(),
                fraction_a,
                fraction_b,
                label_a: meets_threshold(fraction_a, wild_threshold),
                label_b: meets_threshold(fraction_b, wild_threshold),
            })
        })
        .collect()
}

pub fn write_wild_labels(path: impl AsRef<Path>, labels: &[WildLabel]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["comment_id", "fraction_A", "fraction_B", "label_A", "label_B"])?;
    for l in labels {
        w.write_record([
            l.comment_id.clone(),
            l.fraction_a.to_string(),
            l.fraction_b.to_string(),
            u8::from(l.label_a).to_string(),
            u8::from(l.label_b).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_wild_labels(path: impl AsRef<Path>) -> Result<Vec<WildLabel>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Format(format!("{}: short row", path.display())));
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse().map_err(|_| Error::Format(format!("{}: bad number", path.display())))
        };
        let flag = |i: usize| -> Result<bool> {
            match field(i)? {
                "1" => Ok(true),
                "0" => Ok(false),
                v => Err(Error::Format(format!("{}: bad label {v:?}", path.display()))),
            }
        };
        out.push(WildLabel {
            comment_id: field(0)?.to_string(),
            fraction_a: num(1)?,
            fraction_b: num(2)?,
            label_a: flag(3)?,
            label_b: flag(4)?,
        });
    }
    Ok(out)
}
