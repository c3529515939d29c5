use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::Serialize;

use crate::{Error, Result};

/// Predicts the majority training class for every row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MostFrequentClass {
    pub positive: bool,
}

impl MostFrequentClass {
    /// Ties go to the negative class.
    pub fn fit(labels: &[bool]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Argument("no training labels".into()));
        }
        let pos = labels.iter().filter(|&&l| l).count();
        Ok(MostFrequentClass { positive: 2 * pos > labels.len() })
    }

    pub fn scores(&self, n: usize) -> Vec<f64> {
        vec![if self.positive { 1.0 } else { 0.0 }; n]
    }
}

pub const DEFAULT_L2_C: f64 = 1e6;
const NEWTON_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub intercept: f64,
    pub coef: Array1<f64>,
    pub iterations: usize,
    /// False when the gradient tolerance was not reached; coefficients are
    /// still usable.
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticRegression {
    /// Minimise `-loglik + ||coef||^2 / (2 c)` by damped Newton steps; the
    /// intercept is not penalized.
    pub fn fit(x: ArrayView2<'_, f64>, y: &[bool], c: f64) -> Result<Self> {
        let (n, p) = x.dim();
        if n != y.len() || n == 0 {
            return Err(Error::Argument("feature rows and labels differ".into()));
        }
        if !(c > 0.0) {
            return Err(Error::Argument("C must be positive".into()));
        }
        let yv: Array1<f64> = y.iter().map(|&l| f64::from(u8::from(l))).collect();
        // design with a leading column of ones
        let mut design = Array2::ones((n, p + 1));
        design.slice_mut(ndarray::s![.., 1..]).assign(&x);
        let lambda = 1.0 / c;
        let objective = |theta: &Array1<f64>| {
            let z = design.dot(theta);
            let nll: f64 = z.iter().zip(&yv).map(|(&z, &t)| softplus(z) - t * z).sum();
            nll + 0.5 * lambda * theta.iter().skip(1).map(|b| b * b).sum::<f64>()
        };
        let mut theta = Array1::<f64>::zeros(p + 1);
        let mut obj = objective(&theta);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < NEWTON_MAX_ITER {
            let z = design.dot(&theta);
            let prob = z.mapv(sigmoid);
            let mut grad = design.t().dot(&(&prob - &yv));
            for j in 1..=p {
                grad[j] += lambda * theta[j];
            }
            if grad.dot(&grad).sqrt() < NEWTON_TOL {
                converged = true;
                break;
            }
            iterations += 1;
            let w = prob.mapv(|q| q * (1.0 - q));
            let weighted = &design * &w.view().insert_axis(Axis(1));
            let mut hess = design.t().dot(&weighted);
            for j in 1..=p {
                hess[[j, j]] += lambda;
            }
            let h = DMatrix::from_row_iterator(p + 1, p + 1, hess.iter().copied());
            let g = DVector::from_iterator(p + 1, grad.iter().copied());
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => {
                    // fall back to a lightly ridged system
                    let ridge = h + DMatrix::identity(p + 1, p + 1) * 1e-8;
                    ridge.cholesky().ok_or_else(|| Error::Numeric("Hessian is not positive definite".into()))?.solve(&g)
                }
            };
            let step: Array1<f64> = step.iter().copied().collect();
            let mut t = 1.0;
            loop {
                let cand = &theta - &(&step * t);
                let cand_obj = objective(&cand);
                if cand_obj <= obj || t < 1e-10 {
                    theta = cand;
                    obj = cand_obj;
                    break;
                }
                t *= 0.5;
            }
        }
        Ok(LogisticRegression {
            intercept: theta[0],
            coef: theta.slice(ndarray::s![1..]).to_owned(),
            iterations,
            converged,
        })
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.coef.len() {
            return Err(Error::Argument("feature width does not match the fit".into()));
        }
        Ok(x.dot(&self.coef).iter().map(|&z| sigmoid(z + self.intercept)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn mfc_majority() {
        assert!(MostFrequentClass::fit(&[true, true, false]).unwrap().positive);
        assert!(!MostFrequentClass::fit(&[true, false]).unwrap().positive);
        assert_eq!(MostFrequentClass { positive: true }.scores(2), vec![1.0, 1.0]);
    }

    #[test]
    fn intercept_only_is_base_rate() {
        let x = Array2::<f64>::zeros((10, 0));
        let y = [true, true, true, false, false, false, false, false, false, false];
        let m = LogisticRegression::fit(x.view(), &y, DEFAULT_L2_C).unwrap();
        assert!(m.converged);
        for p in m.predict_proba(x.view()).unwrap() {
            assert!((p - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_data_returns_coefficients() {
        let x = Array2::from_shape_vec((4, 1), vec![-2.0, -1.0, 1.0, 2.0]).unwrap();
        let m = LogisticRegression::fit(x.view(), &[false, false, true, true], DEFAULT_L2_C).unwrap();
        assert!(m.coef[0] > 5.0);
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p[0] < 0.01 && p[3] > 0.99);
    }
}
