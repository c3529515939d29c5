use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const GROUP_DIM: usize = 5;

/// Which input blocks feed the network. Disabled blocks are left out of
/// `x0` entirely, so the ablated models are genuinely smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputMask {
    pub content: bool,
    pub group: bool,
    pub person: bool,
}

impl InputMask {
    pub const FULL: InputMask = InputMask { content: true, group: true, person: true };
    pub const CONTENT_GROUP: InputMask = InputMask { content: true, group: true, person: false };
    pub const CONTENT: InputMask = InputMask { content: true, group: false, person: false };
}

impl Default for InputMask {
    fn default() -> Self {
        InputMask::FULL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcnConfig {
    pub content_dim: usize,
    pub group_dim: usize,
    pub n_workers: usize,
    pub cross_layers: usize,
    pub deep_widths: Vec<usize>,
    pub lr: f64,
    /// Epochs of the first training phase.
    pub warm_epochs: usize,
    /// Epochs of the second phase (encoder frozen in the original setup).
    pub frozen_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub inputs: InputMask,
}

impl DcnConfig {
    pub fn new(content_dim: usize, n_workers: usize) -> Self {
        DcnConfig {
            content_dim,
            group_dim: GROUP_DIM,
            n_workers,
            cross_layers: 3,
            deep_widths: vec![768, 768, 768],
            lr: 1e-5,
            warm_epochs: 5,
            frozen_epochs: 15,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            inputs: InputMask::FULL,
        }
    }

    /// Length of `x0`.
    pub fn input_dim(&self) -> usize {
        let m = self.inputs;
        usize::from(m.content) * self.content_dim
            + usize::from(m.group) * self.group_dim
            + usize::from(m.person) * self.n_workers
    }

    pub fn epochs(&self) -> usize {
        self.warm_epochs + self.frozen_epochs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if self.group_dim != GROUP_DIM {
            return bad("group_dim must be 5");
        }
        if self.content_dim == 0 || self.n_workers == 0 {
            return bad("content_dim and n_workers must be positive");
        }
        if self.input_dim() == 0 {
            return bad("at least one input block must be enabled");
        }
        if self.deep_widths.contains(&0) {
            return bad("deep widths must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("invalid Adam constants");
        }
        Ok(())
    }
}

/// One annotation as the network sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub content: Vec<f64>,
    /// `[age_z, gender_female, race_african_american, knows_treated_person, substance_use_days_z]`
    pub group: [f64; GROUP_DIM],
    pub worker_index: usize,
    pub label: bool,
}

/// Write `x0` for `example` into `out` (length `config.input_dim()`).
pub fn fill_input(config: &DcnConfig, example: &TrainExample, out: &mut [f64]) -> Result<()> {
    if example.content.len() != config.content_dim {
        return Err(Error::Argument(format!(
            "content has length {}, expected {}",
            example.content.len(),
            config.content_dim
        )));
    }
    if example.worker_index >= config.n_workers {
        return Err(Error::Argument(format!(
            "worker index {} out of range for {} workers",
            example.worker_index, config.n_workers
        )));
    }
    if out.len() != config.input_dim() {
        return Err(Error::Argument("output buffer has the wrong length".into()));
    }
    let mut at = 0;
    if config.inputs.content {
        out[..config.content_dim].copy_from_slice(&example.content);
        at = config.content_dim;
    }
    if config.inputs.group {
        out[at..at + GROUP_DIM].copy_from_slice(&example.group);
        at += GROUP_DIM;
    }
    if config.inputs.person {
        out[at..].fill(0.0);
        out[at + example.worker_index] = 1.0;
    }
    Ok(())
}

pub fn build_input(config: &DcnConfig, example: &TrainExample) -> Result<Vec<f64>> {
    let mut x = vec![0.0; config.input_dim()];
    fill_input(config, example, &mut x)?;
    Ok(x)
}

/// Stack the inputs of `examples` into a batch matrix and label vector.
pub fn batch_inputs(config: &DcnConfig, examples: &[&TrainExample]) -> Result<(Array2<f64>, Array1<f64>)> {
    let d = config.input_dim();
    let mut x = Array2::zeros((examples.len(), d));
    for (mut row, ex) in x.rows_mut().into_iter().zip(examples) {
        fill_input(config, ex, row.as_slice_mut().expect("row-major"))?;
    }
    let y = examples.iter().map(|e| f64::from(u8::from(e.label))).collect();
    Ok((x, y))
}

/// Network weights. Weight matrices are stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcnParams {
    pub cross_w: Vec<Array2<f64>>,
    pub cross_b: Vec<Array1<f64>>,
    pub deep_w: Vec<Array2<f64>>,
    pub deep_b: Vec<Array1<f64>>,
    pub out_w: Array1<f64>,
    /// Length-1 vector so every tensor has the same handling.
    pub out_b: Array1<f64>,
}

impl DcnParams {
    pub fn zeros(config: &DcnConfig) -> Self {
        let d = config.input_dim();
        let mut deep_w = Vec::new();
        let mut deep_b = Vec::new();
        let mut fan_in = d;
        for &w in &config.deep_widths {
            deep_w.push(Array2::zeros((w, fan_in)));
            deep_b.push(Array1::zeros(w));
            fan_in = w;
        }
        DcnParams {
            cross_w: (0..config.cross_layers).map(|_| Array2::zeros((d, d))).collect(),
            cross_b: (0..config.cross_layers).map(|_| Array1::zeros(d)).collect(),
            deep_w,
            deep_b,
            out_w: Array1::zeros(fan_in),
            out_b: Array1::zeros(1),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(config: &DcnConfig, rng: &mut R) -> Self {
        let mut p = DcnParams::zeros(config);
        let mut fill = |w: &mut Array2<f64>| {
            let (o, i) = w.dim();
            let bound = (6.0 / (o + i) as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        };
        p.cross_w.iter_mut().for_each(&mut fill);
        p.deep_w.iter_mut().for_each(&mut fill);
        let mut out = p.out_w.clone().insert_axis(Axis(0));
        fill(&mut out);
        p.out_w = out.remove_axis(Axis(0));
        p
    }

    /// `(name, shape)` of every tensor in storage order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        let mut m = Vec::new();
        for (l, (w, b)) in self.cross_w.iter().zip(&self.cross_b).enumerate() {
            m.push((format!("cross.{l}.weight"), w.shape().to_vec()));
            m.push((format!("cross.{l}.bias"), b.shape().to_vec()));
        }
        for (k, (w, b)) in self.deep_w.iter().zip(&self.deep_b).enumerate() {
            m.push((format!("deep.{k}.weight"), w.shape().to_vec()));
            m.push((format!("deep.{k}.bias"), b.shape().to_vec()));
        }
        m.push(("out.weight".into(), self.out_w.shape().to_vec()));
        m.push(("out.bias".into(), vec![1]));
        m
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = Vec::new();
        for (w, b) in self.cross_w.iter().zip(&self.cross_b) {
            t.push(w.as_slice().expect("standard layout"));
            t.push(b.as_slice().expect("standard layout"));
        }
        for (w, b) in self.deep_w.iter().zip(&self.deep_b) {
            t.push(w.as_slice().expect("standard layout"));
            t.push(b.as_slice().expect("standard layout"));
        }
        t.push(self.out_w.as_slice().expect("standard layout"));
        t.push(self.out_b.as_slice().expect("standard layout"));
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.cross_w.iter_mut().zip(self.cross_b.iter_mut()) {
            t.push(w.as_slice_mut().expect("standard layout"));
            t.push(b.as_slice_mut().expect("standard layout"));
        }
        for (w, b) in self.deep_w.iter_mut().zip(self.deep_b.iter_mut()) {
            t.push(w.as_slice_mut().expect("standard layout"));
            t.push(b.as_slice_mut().expect("standard layout"));
        }
        t.push(self.out_w.as_slice_mut().expect("standard layout"));
        t.push(self.out_b.as_slice_mut().expect("standard layout"));
        t
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Check tensor shapes against `config`.
    pub fn check_shapes(&self, config: &DcnConfig) -> Result<()> {
        if self.manifest() != DcnParams::zeros(config).manifest() {
            return Err(Error::Consistency("parameter shapes do not match the configuration".into()));
        }
        Ok(())
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Cross-network states `x_0 ..= x_L`.
    pub cross: Vec<Array2<f64>>,
    /// Deep pre-activations per layer.
    pub pre: Vec<Array2<f64>>,
    /// Deep inputs per layer followed by the last ReLU output.
    pub hidden: Vec<Array2<f64>>,
    pub logits: Array1<f64>,
}

fn check_finite<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>, layer: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation in {layer}")))
    }
}

/// Forward pass over a batch of inputs (one row per example).
pub fn forward_batch(params: &DcnParams, x0: &Array2<f64>) -> Result<Activations> {
    if x0.ncols() != params.cross_w.first().map_or(params.deep_w.first().map_or(0, |w| w.ncols()), |w| w.ncols()) {
        return Err(Error::Argument(format!("input width {} does not match the model", x0.ncols())));
    }
    let mut cross = vec![x0.clone()];
    for (l, (w, b)) in params.cross_w.iter().zip(&params.cross_b).enumerate() {
        let xl = cross.last().unwrap();
        let mut next = xl.dot(&w.t()) + b;
        next *= x0;
        next += xl;
        check_finite(&next, &format!("cross layer {l}"))?;
        cross.push(next);
    }
    let mut hidden = vec![cross.last().unwrap().clone()];
    let mut pre = Vec::new();
    for (k, (w, b)) in params.deep_w.iter().zip(&params.deep_b).enumerate() {
        let a = hidden.last().unwrap().dot(&w.t()) + b;
        check_finite(&a, &format!("deep layer {k}"))?;
        hidden.push(a.mapv(|v| v.max(0.0)));
        pre.push(a);
    }
    let logits = hidden.last().unwrap().dot(&params.out_w) + params.out_b[0];
    check_finite(&logits, "output layer")?;
    Ok(Activations { cross, pre, hidden, logits })
}

/// Logit for a single input vector.
pub fn forward(params: &DcnParams, x0: &[f64]) -> Result<f64> {
    let x = Array2::from_shape_vec((1, x0.len()), x0.to_vec()).expect("one row");
    Ok(forward_batch(params, &x)?.logits[0])
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z) - y z`, stable for large |z|.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Matrix products of two single-row-or-column operands can come back
/// column-major; parameter tensors must stay row-major.
fn row_major(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Mean binary cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad(params: &DcnParams, x0: &Array2<f64>, y: &Array1<f64>) -> Result<(f64, DcnParams)> {
    let n = x0.nrows();
    if n == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    if y.len() != n {
        return Err(Error::Argument("label count does not match batch".into()));
    }
    let acts = forward_batch(params, x0)?;
    let nf = n as f64;
    let loss = acts.logits.iter().zip(y).map(|(&z, &t)| bce_with_logit(z, t)).sum::<f64>() / nf;
    let g_logit: Array1<f64> = acts.logits.iter().zip(y).map(|(&z, &t)| (sigmoid(z) - t) / nf).collect();

    let mut grad = DcnParams::zeros_like(params);
    let top = acts.hidden.last().unwrap();
    grad.out_w = top.t().dot(&g_logit);
    grad.out_b[0] = g_logit.sum();
    // dL/dh for the last hidden layer
    let mut g_h = g_logit.view().insert_axis(Axis(1)).dot(&params.out_w.view().insert_axis(Axis(0)));
    for k in (0..params.deep_w.len()).rev() {
        let mut g_a = g_h;
        g_a.zip_mut_with(&acts.pre[k], |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        grad.deep_w[k] = row_major(g_a.t().dot(&acts.hidden[k]));
        grad.deep_b[k] = g_a.sum_axis(Axis(0));
        g_h = g_a.dot(&params.deep_w[k]);
    }
    let x0 = &acts.cross[0];
    let mut g_x = g_h;
    for l in (0..params.cross_w.len()).rev() {
        let dz = &g_x * x0;
        grad.cross_w[l] = row_major(dz.t().dot(&acts.cross[l]));
        grad.cross_b[l] = dz.sum_axis(Axis(0));
        g_x += &dz.dot(&params.cross_w[l]);
    }
    Ok((loss, grad))
}

impl DcnParams {
    pub fn zeros_like(other: &DcnParams) -> Self {
        DcnParams {
            cross_w: other.cross_w.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            cross_b: other.cross_b.iter().map(|b| Array1::zeros(b.len())).collect(),
            deep_w: other.deep_w.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            deep_b: other.deep_b.iter().map(|b| Array1::zeros(b.len())).collect(),
            out_w: Array1::zeros(other.out_w.len()),
            out_b: Array1::zeros(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    fn tiny(content_dim: usize, n_workers: usize, widths: Vec<usize>) -> DcnConfig {
        DcnConfig { deep_widths: widths, ..DcnConfig::new(content_dim, n_workers) }
    }

    fn ex(content: Vec<f64>, worker: usize, label: bool) -> TrainExample {
        TrainExample { content, group: [0.0; 5], worker_index: worker, label }
    }

    #[test]
    fn single_row_batch_gradients_are_row_major() {
        let cfg = tiny(2, 1, vec![3]);
        let params = DcnParams::glorot(&cfg, &mut stream(5));
        let x = Array2::from_elem((1, cfg.input_dim()), 0.5);
        let (_, g) = loss_and_grad(&params, &x, &array![1.0]).unwrap();
        assert_eq!(g.tensors().len(), params.tensors().len());
    }

    #[test]
    fn input_layout() {
        let cfg = tiny(1, 2, vec![4]);
        assert_eq!(build_input(&cfg, &ex(vec![1.0], 0, true)).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let a = build_input(&cfg, &ex(vec![1.0], 1, true)).unwrap();
        assert_eq!(&a[..6], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&a[6..], &[0.0, 1.0]);
        assert!(build_input(&cfg, &ex(vec![1.0, 2.0], 0, true)).is_err());
        assert!(build_input(&cfg, &ex(vec![1.0], 2, true)).is_err());
        let masked = DcnConfig { inputs: InputMask::CONTENT, ..cfg };
        assert_eq!(build_input(&masked, &ex(vec![3.0], 1, false)).unwrap(), vec![3.0]);
    }

    #[test]
    fn zero_model_is_half() {
        let cfg = tiny(3, 4, vec![5, 5]);
        let p = DcnParams::zeros(&cfg);
        let x = build_input(&cfg, &ex(vec![0.3, -2.0, 7.0], 2, true)).unwrap();
        let xm = Array2::from_shape_vec((1, x.len()), x.clone()).unwrap();
        let acts = forward_batch(&p, &xm).unwrap();
        assert_eq!(acts.cross[3], xm);
        assert_eq!(forward(&p, &x).unwrap(), 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn single_cross_layer_by_hand() {
        let p = DcnParams {
            cross_w: vec![Array2::eye(2)],
            cross_b: vec![Array1::zeros(2)],
            deep_w: vec![],
            deep_b: vec![],
            out_w: array![1.0, 0.0],
            out_b: array![0.0],
        };
        let acts = forward_batch(&p, &array![[1.0, 2.0]]).unwrap();
        assert_eq!(acts.cross[1], array![[2.0, 6.0]]);
        assert_eq!(acts.logits[0], 2.0);
    }

    #[test]
    fn loss_at_zero_logit() {
        assert!((bce_with_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logit(800.0, 0.0) - 800.0).abs() < 1e-9);
        assert!(bce_with_logit(-800.0, 0.0) >= 0.0);
    }

    #[test]
    fn output_bias_gradient_at_zero() {
        let cfg = tiny(2, 3, vec![4]);
        let p = DcnParams::zeros(&cfg);
        let exs = [ex(vec![1.0, 0.0], 0, true), ex(vec![0.0, 1.0], 1, true), ex(vec![1.0, 1.0], 2, false)];
        let refs: Vec<&TrainExample> = exs.iter().collect();
        let (x, y) = batch_inputs(&cfg, &refs).unwrap();
        let (loss, g) = loss_and_grad(&p, &x, &y).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        let expected = y.iter().map(|t| 0.5 - t).sum::<f64>() / 3.0;
        assert!((g.out_b[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_names_layer() {
        let cfg = tiny(1, 1, vec![2]);
        let mut p = DcnParams::zeros(&cfg);
        p.cross_w[1].fill(f64::MAX);
        let x = build_input(&cfg, &ex(vec![1e10], 0, true)).unwrap();
        let err = forward(&p, &x).unwrap_err().to_string();
        assert!(err.contains("cross layer"), "{err}");
    }

    #[test]
    fn manifest_matches_tensors() {
        let cfg = tiny(3, 2, vec![4, 2]);
        let mut rng = stream(1);
        let p = DcnParams::glorot(&cfg, &mut rng);
        let m = p.manifest();
        let t = p.tensors();
        assert_eq!(m.len(), t.len());
        for ((_, shape), data) in m.iter().zip(&t) {
            assert_eq!(shape.iter().product::<usize>(), data.len());
        }
        assert!(p.out_w.iter().any(|&v| v != 0.0));
        assert!(p.deep_b.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        p.check_shapes(&cfg).unwrap();
    }
}
