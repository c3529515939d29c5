//! Shared builders for integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stigma_core::annotstore::WorkerProfile;
use stigma_core::model::{loss_and_grad, DcnConfig, DcnParams};

pub fn worker(id: &str, age: u32, female: u8, aa: u8, knows: u8, days: u8) -> WorkerProfile {
    WorkerProfile {
        worker_id: id.to_string(),
        age,
        gender_female: female,
        race_african_american: aa,
        knows_treated_person: knows,
        substance_use_days: days,
        passed_attention_check: true,
        completed_survey: true,
        completed_hit: true,
    }
}

/// Small network configuration for gradient checks.
pub fn tiny_config(content_dim: usize, n_workers: usize, widths: Vec<usize>, cross_layers: usize) -> DcnConfig {
    let mut c = DcnConfig::new(content_dim, n_workers);
    c.deep_widths = widths;
    c.cross_layers = cross_layers;
    c
}

/// Largest relative error between the analytic gradient and central finite
/// differences over every parameter, `|a - n| / max(1e-8, |a| + |n|)`.
pub fn max_gradient_error(config: &DcnConfig, seed: u64, batch: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = DcnParams::glorot(config, &mut rng);
    // non-zero biases so every bias path is exercised
    for b in params.cross_b.iter_mut().chain(params.deep_b.iter_mut()) {
        b.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    params.out_b[0] = rng.random_range(-0.1..0.1);
    let d = config.input_dim();
    let x = Array2::from_shape_fn((batch, d), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(batch, |_| f64::from(u8::from(rng.random::<bool>())));
    let (_, grads) = loss_and_grad(&params, &x, &y).unwrap();
    let analytic: Vec<f64> = grads.tensors().into_iter().flat_map(|t| t.to_vec()).collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].len();
        for i in 0..len {
            let orig = params.tensors()[t][i];
            params.tensors_mut()[t][i] = orig + h;
            let (lp, _) = loss_and_grad(&params, &x, &y).unwrap();
            params.tensors_mut()[t][i] = orig - h;
            let (lm, _) = loss_and_grad(&params, &x, &y).unwrap();
            params.tensors_mut()[t][i] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[idx];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
            idx += 1;
        }
    }
    worst
}
