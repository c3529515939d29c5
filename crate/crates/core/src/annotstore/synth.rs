//! Synthetic annotator populations with known ground truth.
//!
//! Labels follow `P(stigma) = sigmoid(base + s_c + sum_f effect_f * f(w) + u_w)`
//! with comment latent `s_c ~ N(0, 1)` and worker offset `u_w ~ N(0, sd)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Bernoulli, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::records::{AnnotationRecord, Answer, WorkerAttribute, WorkerProfile};
use crate::corpus::RawComment;
use crate::featurize::{DictionaryLexicon, EmbeddingTable};
use crate::rng::{derive_seed, hash_str, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Marginals {
    pub female: f64,
    pub african_american: f64,
    pub knows_treated: f64,
    pub substance_user: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    /// Mean use days among users (shifted exponential, capped at 30).
    pub user_days_mean: f64,
}

impl Default for Marginals {
    fn default() -> Self {
        Marginals {
            female: 0.45,
            african_american: 0.11,
            knows_treated: 0.65,
            substance_user: 0.53,
            age_mean: 38.8,
            age_sd: 10.8,
            user_days_mean: 8.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_workers: usize,
    pub n_comments: usize,
    pub annotations_per_worker: usize,
    pub effects: BTreeMap<WorkerAttribute, f64>,
    pub base_logit: f64,
    pub worker_noise_sd: f64,
    pub marginals: Marginals,
    /// Share of annotations answering "no" to the substance question.
    pub q_sub_no_rate: f64,
    /// Share of workers failing the attention check.
    pub screening_fail_rate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_workers: 400,
            n_comments: 4000,
            annotations_per_worker: 30,
            effects: BTreeMap::from([(WorkerAttribute::SubstanceUser, 1.5)]),
            base_logit: 0.0,
            worker_noise_sd: 0.25,
            marginals: Marginals::default(),
            q_sub_no_rate: 0.0,
            screening_fail_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_workers == 0 || self.n_comments == 0 || self.annotations_per_worker == 0 {
            return Err(Error::Argument("synthetic sizes must be positive".into()));
        }
        if self.annotations_per_worker > self.n_comments {
            return Err(Error::Argument(format!(
                "annotations_per_worker {} exceeds n_comments {}",
                self.annotations_per_worker, self.n_comments
            )));
        }
        let m = &self.marginals;
        for (name, p) in [
            ("female", m.female),
            ("african_american", m.african_american),
            ("knows_treated", m.knows_treated),
            ("substance_user", m.substance_user),
            ("q_sub_no_rate", self.q_sub_no_rate),
            ("screening_fail_rate", self.screening_fail_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("{name}={p} is not a probability")));
            }
        }
        if !(self.worker_noise_sd >= 0.0 && m.age_sd >= 0.0 && m.user_days_mean >= 0.0) {
            return Err(Error::Argument("scale parameters must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPopulation {
    pub workers: Vec<WorkerProfile>,
    pub annotations: Vec<AnnotationRecord>,
    /// Comment id to latent stigma score.
    pub latent: BTreeMap<String, f64>,
    /// Worker id to idiosyncratic logit offset.
    pub worker_offsets: BTreeMap<String, f64>,
}

pub fn comment_id(i: usize) -> String {
    format!("c{i:05}")
}

pub fn worker_id(i: usize) -> String {
    format!("w{i:04}")
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Workers are assigned comments round-robin over a seeded permutation, so
/// each comment receives `n_workers * annotations_per_worker / n_comments`
/// annotations (±1) and no worker sees a comment twice.
pub fn synthesize_population(params: &SynthParams) -> Result<SynthPopulation> {
    params.validate()?;
    let m = &params.marginals;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let bern = |p: f64| Bernoulli::new(p).expect("validated probability");

    let mut rng = stream(derive_seed(params.seed, &[hash_str("latent")]));
    let latent: Vec<f64> = (0..params.n_comments).map(|_| normal.sample(&mut rng)).collect();

    let mut rng = stream(derive_seed(params.seed, &[hash_str("workers")]));
    let days = Exp::new(1.0 / m.user_days_mean.max(1e-9)).expect("positive rate");
    let mut workers = Vec::with_capacity(params.n_workers);
    let mut offsets = Vec::with_capacity(params.n_workers);
    for i in 0..params.n_workers {
        let age = (m.age_mean + m.age_sd * normal.sample(&mut rng)).round().clamp(18.0, 90.0) as u32;
        let female = u8::from(bern(m.female).sample(&mut rng));
        let aa = u8::from(bern(m.african_american).sample(&mut rng));
        let knows = u8::from(bern(m.knows_treated).sample(&mut rng));
        let user = bern(m.substance_user).sample(&mut rng);
        let use_days = if user { (1.0 + days.sample(&mut rng).floor()).min(30.0) as u8 } else { 0 };
        let passed = !bern(params.screening_fail_rate).sample(&mut rng);
        offsets.push(params.worker_noise_sd * normal.sample(&mut rng));
        workers.push(WorkerProfile {
            worker_id: worker_id(i),
            age,
            gender_female: female,
            race_african_american: aa,
            knows_treated_person: knows,
            substance_use_days: use_days,
            passed_attention_check: passed,
            completed_survey: true,
            completed_hit: true,
        });
    }

    let mut rng = stream(derive_seed(params.seed, &[hash_str("assignment")]));
    let mut perm: Vec<usize> = (0..params.n_comments).collect();
    perm.shuffle(&mut rng);
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for w in 0..params.n_workers {
        for j in 0..params.annotations_per_worker {
            slots.push((w, perm[(w * params.annotations_per_worker + j) % params.n_comments]));
        }
    }
    // interleave workers so input order does not favour low worker indices
    // at the per-comment cap
    slots.shuffle(&mut rng);

    let mut rng = stream(derive_seed(params.seed, &[hash_str("labels")]));
    let annotations = slots
        .into_iter()
        .map(|(w, c)| {
            let worker = &workers[w];
            let effect: f64 = params.effects.iter().filter(|(attr, _)| worker.attribute(**attr)).map(|(_, e)| e).sum();
            let p = sigmoid(params.base_logit + latent[c] + effect + offsets[w]);
            let q_sub_no = rng.random::<f64>() < params.q_sub_no_rate;
            let positive = rng.random::<f64>() < p;
            AnnotationRecord {
                worker_id: worker.worker_id.clone(),
                comment_id: comment_id(c),
                q_sub: if q_sub_no { Answer::No } else { Answer::Yes },
                q_stigma: if q_sub_no {
                    None
                } else if positive {
                    Some(Answer::Yes)
                } else {
                    Some(Answer::No)
                },
            }
        })
        .collect();

    Ok(SynthPopulation {
        worker_offsets: workers.iter().map(|w| w.worker_id.clone()).zip(offsets).collect(),
        latent: latent.into_iter().enumerate().map(|(i, s)| (comment_id(i), s)).collect(),
        workers,
        annotations,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    params: &'a SynthParams,
    latent: &'a BTreeMap<String, f64>,
    worker_offsets: &'a BTreeMap<String, f64>,
}

pub fn write_manifest(path: impl AsRef<Path>, params: &SynthParams, pop: &SynthPopulation) -> Result<()> {
    let path = path.as_ref();
    let m = Manifest { seed: params.seed, params, latent: &pop.latent, worker_offsets: &pop.worker_offsets };
    let mut text = serde_json::to_string_pretty(&m)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Text and embedding generation for synthetic comments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextParams {
    pub embedding_dim: usize,
    /// Loading of the latent score on the embedding's signal direction.
    pub embedding_signal: f64,
    pub min_words: usize,
    pub max_words: usize,
    /// Per-word probability of a planted term at latent score +inf.
    pub planted_rate: f64,
}

impl Default for TextParams {
    fn default() -> Self {
        TextParams { embedding_dim: 16, embedding_signal: 1.0, min_words: 12, max_words: 40, planted_rate: 0.12 }
    }
}

/// Words whose use rises with a comment's latent stigma score.
pub const PLANTED_TERMS: &[&str] =
    &["addict", "junkie", "addicts", "dealers", "criminals", "disgusting", "they", "people"];

const SUBSTANCE_TERMS: &[&str] = &["heroin", "cocaine", "meth", "opioids", "fentanyl", "pills", "weed", "xanax"];

const SYLLABLES: &[&str] =
    &["ka", "lo", "mi", "ten", "ra", "sul", "po", "vin", "da", "re", "nu", "sha", "bel", "tor", "qui"];

fn neutral_vocabulary() -> Vec<String> {
    let mut v = Vec::new();
    for a in SYLLABLES {
        for b in SYLLABLES {
            v.push(format!("{a}{b}"));
        }
    }
    v
}

/// Comment bodies and embeddings for the given latent scores. Each comment's
/// randomness depends only on `(seed, id)`.
pub fn synthesize_comments(
    latent: &BTreeMap<String, f64>,
    params: &TextParams,
    seed: u64,
) -> Result<(Vec<RawComment>, EmbeddingTable)> {
    if params.min_words == 0 || params.min_words > params.max_words {
        return Err(Error::Argument("invalid word-count range".into()));
    }
    let vocab = neutral_vocabulary();
    let zipf: Vec<f64> = (1..=vocab.len()).map(|r| 1.0 / r as f64).collect();
    let pick = WeightedIndex::new(&zipf).expect("positive weights");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut direction: Vec<f64> = {
        let mut rng = stream(derive_seed(seed, &[hash_str("direction")]));
        (0..params.embedding_dim).map(|_| normal.sample(&mut rng)).collect()
    };
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut table = EmbeddingTable::new(params.embedding_dim)?;
    let mut comments = Vec::with_capacity(latent.len());
    for (id, &s) in latent {
        let mut rng = stream(derive_seed(seed, &[hash_str("comment"), hash_str(id)]));
        let n = rng.random_range(params.min_words..=params.max_words);
        let rate = params.planted_rate * sigmoid(2.0 * s);
        let keyword_at = rng.random_range(0..n);
        let words: Vec<&str> = (0..n)
            .map(|i| {
                if i == keyword_at {
                    SUBSTANCE_TERMS[rng.random_range(0..SUBSTANCE_TERMS.len())]
                } else if rng.random::<f64>() < rate {
                    PLANTED_TERMS[rng.random_range(0..PLANTED_TERMS.len())]
                } else {
                    vocab[pick.sample(&mut rng)].as_str()
                }
            })
            .collect();
        comments.push(RawComment::new(id.clone(), words.join(" ")));
        let v: Vec<f32> =
            direction.iter().map(|u| (params.embedding_signal * s * u + normal.sample(&mut rng)) as f32).collect();
        table.insert(id.clone(), &v)?;
    }
    Ok((comments, table))
}

/// A small category dictionary over the synthetic vocabulary.
pub fn synthetic_dictionary() -> DictionaryLexicon {
    let vocab = neutral_vocabulary();
    let mut cats = vec![
        ("stigma_labels".to_string(), vec!["addict*".to_string(), "junkie*".to_string()]),
        (
            "othering".to_string(),
            vec!["they".to_string(), "people".to_string(), "criminals".to_string(), "dealers".to_string()],
        ),
        ("negemo".to_string(), vec!["disgust*".to_string()]),
        ("substances".to_string(), SUBSTANCE_TERMS.iter().map(|s| s.to_string()).collect()),
    ];
    for (i, syl) in SYLLABLES.iter().take(6).enumerate() {
        cats.push((format!("filler{i}"), vec![format!("{syl}*")]));
    }
    debug_assert!(vocab.len() > 100);
    DictionaryLexicon::new(cats).expect("static dictionary is valid")
}
