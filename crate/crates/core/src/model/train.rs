use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dcn::{
    batch_inputs, fill_input, forward_batch, loss_and_grad, sigmoid, DcnConfig, DcnParams, TrainExample, GROUP_DIM,
};
use crate::annotstore::{StigmaAnnotation, WorkerProfile};
use crate::featurize::EmbeddingTable;
use crate::rng::{derive_seed, hash_str, stream};
use crate::{Error, Result};

/// Z-scoring of the continuous group fields (age, use days). Fitted once per
/// distinct training worker; a zero SD maps the field to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScaler {
    pub age_mean: f64,
    pub age_sd: f64,
    pub days_mean: f64,
    pub days_sd: f64,
}

impl GroupScaler {
    pub fn fit<'a>(workers: impl IntoIterator<Item = &'a WorkerProfile>) -> Result<Self> {
        let (ages, days): (Vec<f64>, Vec<f64>) =
            workers.into_iter().map(|w| (f64::from(w.age), f64::from(w.substance_use_days))).unzip();
        if ages.is_empty() {
            return Err(Error::Argument("cannot fit group scaler on zero workers".into()));
        }
        let moments = |x: &[f64]| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            (m, (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
        };
        let (age_mean, age_sd) = moments(&ages);
        let (days_mean, days_sd) = moments(&days);
        Ok(GroupScaler { age_mean, age_sd, days_mean, days_sd })
    }

    pub fn transform(&self, w: &WorkerProfile) -> [f64; GROUP_DIM] {
        let z = |x: f64, m: f64, s: f64| if s > 0.0 { (x - m) / s } else { 0.0 };
        [
            z(f64::from(w.age), self.age_mean, self.age_sd),
            f64::from(w.gender_female),
            f64::from(w.race_african_american),
            f64::from(w.knows_treated_person),
            z(f64::from(w.substance_use_days), self.days_mean, self.days_sd),
        ]
    }
}

fn content_vector(embeddings: &EmbeddingTable, comment_id: &str) -> Result<Vec<f64>> {
    embeddings
        .get(comment_id)
        .map(|v| v.iter().map(|&x| f64::from(x)).collect())
        .ok_or_else(|| Error::Consistency(format!("no content embedding for comment {comment_id}")))
}

/// Network inputs for `annotations`; `worker_ids` fixes the one-hot order.
pub fn build_examples(
    annotations: &[StigmaAnnotation],
    workers: &BTreeMap<String, WorkerProfile>,
    embeddings: &EmbeddingTable,
    worker_ids: &[String],
    scaler: &GroupScaler,
) -> Result<Vec<TrainExample>> {
    let index: HashMap<&str, usize> = worker_ids.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    annotations
        .iter()
        .map(|a| {
            let worker = workers
                .get(&a.worker_id)
                .ok_or_else(|| Error::Consistency(format!("annotation by unknown worker {}", a.worker_id)))?;
            let &worker_index = index
                .get(a.worker_id.as_str())
                .ok_or_else(|| Error::Consistency(format!("unseen worker {} in training rows", a.worker_id)))?;
            let content = match cache.get(a.comment_id.as_str()) {
                Some(c) => c.clone(),
                None => {
                    let c = content_vector(embeddings, &a.comment_id)?;
                    cache.insert(a.comment_id.as_str(), c.clone());
                    c
                }
            };
            Ok(TrainExample { content, group: scaler.transform(worker), worker_index, label: a.label })
        })
        .collect()
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &DcnParams) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut DcnParams, grads: &DcnParams, config: &DcnConfig) {
        let a = config.adam;
        self.t += 1;
        let c1 = 1.0 - a.beta1.powi(self.t);
        let c2 = 1.0 - a.beta2.powi(self.t);
        let lr = config.lr;
        for (((p, g), m), v) in
            params.tensors_mut().into_iter().zip(grads.tensors()).zip(self.m.iter_mut()).zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
                v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + a.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: u8,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: DcnParams,
    pub log: Vec<EpochLog>,
}

/// Adam over shuffled mini-batches for `warm_epochs + frozen_epochs` epochs.
/// Optimizer state carries over between the two phases. Deterministic per
/// `config.seed`.
pub fn train(config: &DcnConfig, examples: &[TrainExample]) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Argument("no training examples".into()));
    }
    let mut init_rng = stream(derive_seed(config.seed, &[hash_str("init")]));
    let mut params = DcnParams::glorot(config, &mut init_rng);
    let mut shuffle_rng = stream(derive_seed(config.seed, &[hash_str("shuffle")]));
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs());
    for epoch in 1..=config.epochs() {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (x, y) = batch_inputs(config, &batch)?;
            let (loss, grads) = loss_and_grad(&params, &x, &y)?;
            adam.step(&mut params, &grads, config);
            total += loss * batch.len() as f64;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            phase: if epoch <= config.warm_epochs { 1 } else { 2 },
            mean_loss: total / examples.len() as f64,
        });
    }
    Ok(TrainOutcome { params, log })
}

/// A trained network together with everything needed to build its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DcnModel {
    pub config: DcnConfig,
    pub params: DcnParams,
    worker_ids: Vec<String>,
    worker_index: HashMap<String, usize>,
    pub scaler: GroupScaler,
    /// Input artifact name to SHA-256, recorded in checkpoints.
    pub feature_hashes: BTreeMap<String, String>,
}

impl DcnModel {
    pub fn new(config: DcnConfig, params: DcnParams, worker_ids: Vec<String>, scaler: GroupScaler) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        if worker_ids.len() != config.n_workers {
            return Err(Error::Consistency(format!(
                "{} worker ids for a person embedding of width {}",
                worker_ids.len(),
                config.n_workers
            )));
        }
        let worker_index: HashMap<String, usize> = worker_ids.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        if worker_index.len() != worker_ids.len() {
            return Err(Error::Consistency("duplicate worker ids".into()));
        }
        Ok(DcnModel { config, params, worker_ids, worker_index, scaler, feature_hashes: BTreeMap::new() })
    }

    /// An untrained model with all parameters zero.
    pub fn zeros(config: DcnConfig, worker_ids: Vec<String>, scaler: GroupScaler) -> Result<Self> {
        let params = DcnParams::zeros(&config);
        DcnModel::new(config, params, worker_ids, scaler)
    }

    /// Parameters rounded to `f32`, the precision stored in checkpoints, so a
    /// freshly trained model and its reloaded checkpoint predict identically.
    pub fn round_to_storage(&mut self) {
        for t in self.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
    }

    pub fn worker_ids(&self) -> &[String] {
        &self.worker_ids
    }

    pub fn worker_position(&self, worker_id: &str) -> Result<usize> {
        self.worker_index.get(worker_id).copied().ok_or_else(|| Error::UnknownWorker(worker_id.to_string()))
    }

    pub fn example(&self, content: &[f64], worker: &WorkerProfile) -> Result<TrainExample> {
        Ok(TrainExample {
            content: content.to_vec(),
            group: self.scaler.transform(worker),
            worker_index: self.worker_position(&worker.worker_id)?,
            label: false,
        })
    }

    /// Probability that `worker` labels the comment with `content` as stigmatizing.
    pub fn predict_annotation(&self, content: &[f64], worker: &WorkerProfile) -> Result<f64> {
        Ok(self.predict_for_workers(content, &[worker])?[0])
    }

    /// Probabilities for one comment across several workers.
    pub fn predict_for_workers(&self, content: &[f64], workers: &[&WorkerProfile]) -> Result<Vec<f64>> {
        let d = self.config.input_dim();
        let mut x = Array2::zeros((workers.len(), d));
        for (mut row, w) in x.rows_mut().into_iter().zip(workers) {
            let ex = self.example(content, w)?;
            fill_input(&self.config, &ex, row.as_slice_mut().expect("row-major"))?;
        }
        self.probabilities(&x)
    }

    /// Probabilities for prepared examples (labels ignored).
    pub fn predict_examples(&self, examples: &[TrainExample]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(256) {
            let refs: Vec<&TrainExample> = chunk.iter().collect();
            let (x, _) = batch_inputs(&self.config, &refs)?;
            out.extend(self.probabilities(&x)?);
        }
        Ok(out)
    }

    fn probabilities(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(forward_batch(&self.params, x)?.logits.iter().map(|&z| sigmoid(z)).collect())
    }
}
