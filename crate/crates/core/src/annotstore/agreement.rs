use std::collections::BTreeMap;

use serde::Serialize;

use super::quality::{CleanDataset, StigmaAnnotation};
use super::records::WorkerAttribute;
use crate::stats::welch_t_test;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupTTest {
    pub rate_1: f64,
    pub rate_0: f64,
    pub n_1: usize,
    pub n_0: usize,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch two-sided t-test on annotation-level binary labels, comparing
/// annotations by workers with `attribute = 1` against the rest.
pub fn group_rate_ttest(dataset: &CleanDataset, attribute: WorkerAttribute) -> Result<GroupTTest> {
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for a in &dataset.annotations {
        let w = dataset
            .workers
            .get(&a.worker_id)
            .ok_or_else(|| Error::Consistency(format!("annotation references unknown worker {}", a.worker_id)))?;
        let y = if a.label { 1.0 } else { 0.0 };
        if w.attribute(attribute) {
            ones.push(y);
        } else {
            zeros.push(y);
        }
    }
    for (name, g) in [("attribute=1", &ones), ("attribute=0", &zeros)] {
        if g.len() < 2 {
            return Err(Error::Degenerate(format!("degenerate group: {attribute} {name} has {} annotations", g.len())));
        }
    }
    let test = welch_t_test(&ones, &zeros)?;
    Ok(GroupTTest {
        rate_1: mean(&ones),
        rate_0: mean(&zeros),
        n_1: ones.len(),
        n_0: zeros.len(),
        t: test.t,
        df: test.df,
        p: test.p,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Nominal Krippendorff's alpha from `(unit, value)` ratings via the
/// coincidence matrix. Units with fewer than two ratings are not pairable and
/// are ignored.
pub fn krippendorff_alpha_nominal<U: Ord>(ratings: &[(U, u32)]) -> Result<f64> {
    let mut units: BTreeMap<&U, Vec<u32>> = BTreeMap::new();
    for (u, v) in ratings {
        units.entry(u).or_default().push(*v);
    }
    let mut categories: Vec<u32> = ratings.iter().map(|r| r.1).collect();
    categories.sort_unstable();
    categories.dedup();
    let k = categories.len();
    let pos = |v: u32| categories.binary_search(&v).unwrap();

    let mut coincidence = vec![vec![0.0f64; k]; k];
    let mut pairable = false;
    for values in units.values().filter(|v| v.len() >= 2) {
        pairable = true;
        let mut counts = vec![0.0f64; k];
        for &v in values {
            counts[pos(v)] += 1.0;
        }
        let m = values.len() as f64;
        for c in 0..k {
            for d in 0..k {
                let pairs = if c == d { counts[c] * (counts[c] - 1.0) } else { counts[c] * counts[d] };
                coincidence[c][d] += pairs / (m - 1.0);
            }
        }
    }
    if !pairable {
        return Err(Error::Degenerate("no overlap: no comment has two or more raters".into()));
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return Err(Error::Degenerate("all pairable ratings fall in one category".into()));
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Krippendorff's alpha over the comment-by-worker stigma label matrix.
pub fn krippendorff_alpha(annotations: &[StigmaAnnotation]) -> Result<f64> {
    let ratings: Vec<(&str, u32)> = annotations.iter().map(|a| (a.comment_id.as_str(), u32::from(a.label))).collect();
    krippendorff_alpha_nominal(&ratings)
}
