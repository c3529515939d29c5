//! Differential language analysis and the small statistical toolkit behind it.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::featurize::FeatureMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided Welch (unequal variance) t-test of `a` against `b`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate("each group needs at least two observations".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 {
            WelchTest { t: 0.0, df: f64::NAN, p: 1.0 }
        } else {
            WelchTest { t: diff.signum() * f64::INFINITY, df: f64::NAN, p: 0.0 }
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest { t, df, p })
}

/// Mean and unbiased sample variance.
fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Comments used in one analysis, with their binary outcome.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreeDisagree {
    /// Comments where both jury types concur, labelled by the shared verdict.
    pub agree: LabeledSet,
    /// Comments the first jury type flags, labelled by the second jury type.
    pub disagree: LabeledSet,
}

pub fn agree_disagree_labels(
    labels_a: &BTreeMap<String, bool>,
    labels_b: &BTreeMap<String, bool>,
) -> Result<AgreeDisagree> {
    if labels_a.len() != labels_b.len() || labels_a.keys().ne(labels_b.keys()) {
        return Err(Error::Argument("label sets cover different comment ids".into()));
    }
    let mut agree = LabeledSet::default();
    let mut disagree = LabeledSet::default();
    for ((id, &a), &b) in labels_a.iter().zip(labels_b.values()) {
        if a == b {
            agree.ids.push(id.clone());
            agree.labels.push(a);
        }
        if a {
            disagree.ids.push(id.clone());
            disagree.labels.push(b);
        }
    }
    Ok(AgreeDisagree { agree, disagree })
}

/// Largest slope magnitude reported for separated data.
pub const SEPARATION_CAP: f64 = 20.0;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateFit {
    pub intercept: f64,
    pub beta: f64,
    pub se: f64,
    pub p_raw: f64,
    pub separation: bool,
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

/// Intercept + slope logistic regression by Newton iteration with a Wald
/// test on the slope.
///
/// Complete or quasi-complete separation is detected up front (or when the
/// slope leaves `±20` during iteration); the slope is then capped at `±20`
/// and `p_raw` is reported as 0.
pub fn univariate_logreg(x: &[f64], y: &[bool]) -> Result<UnivariateFit> {
    if x.len() != y.len() {
        return Err(Error::Argument("feature and label lengths differ".into()));
    }
    let n1 = y.iter().filter(|&&v| v).count();
    if n1 == 0 || n1 == y.len() {
        return Err(Error::Degenerate("labels contain a single class".into()));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = x.len() as f64;
    let base = (n1 as f64 / (n - n1 as f64)).ln();
    if lo == hi {
        return Ok(UnivariateFit {
            intercept: base,
            beta: 0.0,
            se: f64::INFINITY,
            p_raw: 1.0,
            separation: false,
            converged: true,
        });
    }
    let separated = |sign: f64| {
        let max0 = x.iter().zip(y).filter(|(_, &l)| !l).map(|(v, _)| sign * v).fold(f64::NEG_INFINITY, f64::max);
        let min1 = x.iter().zip(y).filter(|(_, &l)| l).map(|(v, _)| sign * v).fold(f64::INFINITY, f64::min);
        max0 <= min1
    };
    let capped = |sign: f64| UnivariateFit {
        intercept: f64::NAN,
        beta: sign * SEPARATION_CAP,
        se: f64::NAN,
        p_raw: 0.0,
        separation: true,
        converged: false,
    };
    if separated(1.0) {
        return Ok(capped(1.0));
    }
    if separated(-1.0) {
        return Ok(capped(-1.0));
    }

    let (mut a, mut b) = (base, 0.0);
    let mut converged = false;
    let mut info = [0.0f64; 3];
    for _ in 0..=NEWTON_MAX_ITER {
        let (mut g0, mut g1) = (0.0, 0.0);
        info = [0.0; 3];
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(a + b * xi);
            let r = f64::from(u8::from(yi)) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            info[0] += w;
            info[1] += w * xi;
            info[2] += w * xi * xi;
        }
        if g0.hypot(g1) < NEWTON_TOL {
            converged = true;
            break;
        }
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        a += (info[2] * g0 - info[1] * g1) / det;
        b += (info[0] * g1 - info[1] * g0) / det;
        if b.abs() > SEPARATION_CAP {
            return Ok(capped(b.signum()));
        }
    }
    let det = info[0] * info[2] - info[1] * info[1];
    let se = (info[0] / det).sqrt();
    let p_raw =
        if se.is_finite() && se > 0.0 { erfc((b / se).abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0) } else { 1.0 };
    Ok(UnivariateFit { intercept: a, beta: b, se, p_raw, separation: false, converged })
}

/// Benjamini-Hochberg step-up: flag every hypothesis ranked at or below the
/// largest rank `i` with `p_(i) <= i q / m`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]).then(i.cmp(&j)));
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|(rank, &i)| p_values[i] <= (rank + 1) as f64 * q / m as f64)
        .map(|(rank, _)| rank + 1)
        .max()
        .unwrap_or(0);
    let mut flags = vec![false; m];
    for &i in &order[..cutoff] {
        flags[i] = true;
    }
    flags
}

/// Standardized mean difference (group 1 minus group 0) over the pooled SD.
pub fn cohens_d(x: &[f64], y: &[bool]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument("feature and label lengths differ".into()));
    }
    let g1: Vec<f64> = x.iter().zip(y).filter(|(_, &l)| l).map(|(v, _)| *v).collect();
    let g0: Vec<f64> = x.iter().zip(y).filter(|(_, &l)| !l).map(|(v, _)| *v).collect();
    if g1.len() < 2 || g0.len() < 2 {
        return Err(Error::Degenerate("each group needs at least two points".into()));
    }
    let (m1, v1) = mean_var(&g1);
    let (m0, v0) = mean_var(&g0);
    let (n1, n0) = (g1.len() as f64, g0.len() as f64);
    let pooled = (((n1 - 1.0) * v1 + (n0 - 1.0) * v0) / (n1 + n0 - 2.0)).sqrt();
    if pooled == 0.0 || !pooled.is_finite() {
        return Err(Error::Degenerate("zero pooled standard deviation".into()));
    }
    Ok((m1 - m0) / pooled)
}

/// Spearman rank correlation (midranks for ties).
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let mid = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = mid;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DlaResult {
    pub feature: String,
    pub beta: f64,
    pub p_raw: f64,
    #[serde(rename = "significant")]
    pub p_bh_significant: bool,
    pub cohens_d: f64,
    pub n0: usize,
    pub n1: usize,
    #[serde(rename = "separation")]
    pub separation_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DlaReport {
    /// Sorted by |d| descending, then feature name.
    pub results: Vec<DlaResult>,
    /// Features that could not be analysed, with the reason.
    pub failures: Vec<(String, String)>,
}

impl DlaReport {
    pub fn significant(&self) -> impl Iterator<Item = &DlaResult> {
        self.results.iter().filter(|r| r.p_bh_significant)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, significant_only: bool) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut wrote = false;
        for r in self.results.iter().filter(|r| !significant_only || r.p_bh_significant) {
            w.serialize(r)?;
            wrote = true;
        }
        if !wrote {
            w.write_record(["feature", "beta", "p_raw", "significant", "cohens_d", "n0", "n1", "separation"])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One univariate logistic regression and Cohen's d per feature column, then
/// Benjamini-Hochberg at level `q` across the family.
pub fn dla(matrix: &FeatureMatrix, labels: &[bool], q: f64) -> Result<DlaReport> {
    if matrix.standardization().is_none() {
        return Err(Error::State("differential analysis expects a standardized matrix".into()));
    }
    if matrix.row_keys().len() != labels.len() {
        return Err(Error::Argument(format!("{} rows but {} labels", matrix.row_keys().len(), labels.len())));
    }
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    let values = matrix.values();
    let per_feature: Vec<(String, Result<(UnivariateFit, f64)>)> = matrix
        .feature_names()
        .par_iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = values.column(j).to_vec();
            let res = univariate_logreg(&col, labels).and_then(|fit| Ok((fit, cohens_d(&col, labels)?)));
            (name.clone(), res)
        })
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (name, res) in per_feature {
        match res {
            Ok(v) => ok.push((name, v)),
            Err(e) => failures.push((name, e.to_string())),
        }
    }
    let p: Vec<f64> = ok.iter().map(|(_, (fit, _))| fit.p_raw).collect();
    let flags = bh_fdr(&p, q);
    let mut results: Vec<DlaResult> = ok
        .into_iter()
        .zip(flags)
        .map(|((feature, (fit, d)), flag)| DlaResult {
            feature,
            beta: fit.beta,
            p_raw: fit.p_raw,
            p_bh_significant: flag,
            cohens_d: d,
            n0,
            n1,
            separation_flag: fit.separation,
        })
        .collect();
    results.sort_by(|a, b| b.cohens_d.abs().total_cmp(&a.cohens_d.abs()).then_with(|| a.feature.cmp(&b.feature)));
    Ok(DlaReport { results, failures })
}
