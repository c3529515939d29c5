use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::records::{AnnotationRecord, Answer, WorkerAttribute, WorkerProfile};
use crate::rng;
use crate::{Error, Result};

/// A worker's stigma judgement on one comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StigmaAnnotation {
    pub worker_id: String,
    pub comment_id: String,
    pub label: bool,
}

/// Annotations that survived quality control, with the workers who made them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanDataset {
    pub workers: BTreeMap<String, WorkerProfile>,
    pub comments: BTreeSet<String>,
    pub annotations: Vec<StigmaAnnotation>,
}

impl CleanDataset {
    fn from_parts(all_workers: &HashMap<&str, &WorkerProfile>, annotations: Vec<StigmaAnnotation>) -> Self {
        let mut workers = BTreeMap::new();
        let mut comments = BTreeSet::new();
        for a in &annotations {
            comments.insert(a.comment_id.clone());
            workers.entry(a.worker_id.clone()).or_insert_with(|| (*all_workers[a.worker_id.as_str()]).clone());
        }
        CleanDataset { workers, comments, annotations }
    }

    /// Annotations as raw records (`q_sub = yes` with the stigma answer).
    pub fn to_records(&self) -> Vec<AnnotationRecord> {
        self.annotations
            .iter()
            .map(|a| AnnotationRecord {
                worker_id: a.worker_id.clone(),
                comment_id: a.comment_id.clone(),
                q_sub: Answer::Yes,
                q_stigma: Some(if a.label { Answer::Yes } else { Answer::No }),
            })
            .collect()
    }

    pub fn worker_list(&self) -> Vec<WorkerProfile> {
        self.workers.values().cloned().collect()
    }

    /// Annotations made by workers whose `attribute` equals `value`.
    pub fn subgroup(&self, attribute: WorkerAttribute, value: bool) -> Vec<StigmaAnnotation> {
        self.annotations.iter().filter(|a| self.workers[&a.worker_id].attribute(attribute) == value).cloned().collect()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.annotations.is_empty() {
            return 0.0;
        }
        self.annotations.iter().filter(|a| a.label).count() as f64 / self.annotations.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelStage {
    pub stage: String,
    pub workers: usize,
    pub comments: usize,
    pub annotations: usize,
}

fn stage_counts<'a>(stage: &str, rows: impl Iterator<Item = (&'a str, &'a str)>) -> FunnelStage {
    let mut workers = BTreeSet::new();
    let mut comments = BTreeSet::new();
    let mut annotations = 0;
    for (w, c) in rows {
        workers.insert(w);
        comments.insert(c);
        annotations += 1;
    }
    FunnelStage { stage: stage.to_string(), workers: workers.len(), comments: comments.len(), annotations }
}

/// Maximum stigma annotations kept per comment.
pub const MAX_ANNOTATIONS_PER_COMMENT: usize = 3;
/// Workers whose positive-stigma fraction reaches this value are removed.
pub const POSITIVE_FRACTION_CUTOFF: f64 = 0.95;

/// Apply the quality-control funnel, in order:
///
/// 1. drop workers that failed the attention check, skipped survey questions,
///    or quit the HIT early (and annotations by unknown workers);
/// 2. drop annotations without a stigma answer (`q_sub = no`);
/// 3. keep the first three stigma annotations of each comment, in input order;
/// 4. drop workers whose positive fraction over their remaining annotations
///    is at least 0.95.
///
/// Worker and comment counts at each stage count only those with at least one
/// surviving annotation.
pub fn quality_filter(workers: &[WorkerProfile], annotations: &[AnnotationRecord]) -> (CleanDataset, Vec<FunnelStage>) {
    let by_id: HashMap<&str, &WorkerProfile> = workers.iter().map(|w| (w.worker_id.as_str(), w)).collect();
    let mut funnel =
        vec![stage_counts("input", annotations.iter().map(|a| (a.worker_id.as_str(), a.comment_id.as_str())))];

    let screened: Vec<&AnnotationRecord> =
        annotations.iter().filter(|a| by_id.get(a.worker_id.as_str()).is_some_and(|w| w.passes_screening())).collect();
    funnel
        .push(stage_counts("worker_screening", screened.iter().map(|a| (a.worker_id.as_str(), a.comment_id.as_str()))));

    let stigma: Vec<StigmaAnnotation> = screened
        .into_iter()
        .filter_map(|a| match (a.q_sub, a.q_stigma) {
            (Answer::Yes, Some(s)) => Some(StigmaAnnotation {
                worker_id: a.worker_id.clone(),
                comment_id: a.comment_id.clone(),
                label: s.is_yes(),
            }),
            _ => None,
        })
        .collect();
    funnel.push(stage_counts("stigma_answered", stigma.iter().map(|a| (a.worker_id.as_str(), a.comment_id.as_str()))));

    let mut per_comment: HashMap<&str, usize> = HashMap::new();
    let capped: Vec<&StigmaAnnotation> = stigma
        .iter()
        .filter(|a| {
            let n = per_comment.entry(a.comment_id.as_str()).or_insert(0);
            *n += 1;
            *n <= MAX_ANNOTATIONS_PER_COMMENT
        })
        .collect();
    funnel.push(stage_counts("per_comment_cap", capped.iter().map(|a| (a.worker_id.as_str(), a.comment_id.as_str()))));

    let mut tallies: HashMap<&str, (usize, usize)> = HashMap::new();
    for a in &capped {
        let t = tallies.entry(a.worker_id.as_str()).or_insert((0, 0));
        t.0 += usize::from(a.label);
        t.1 += 1;
    }
    let final_rows: Vec<StigmaAnnotation> = capped
        .into_iter()
        .filter(|a| {
            let (pos, n) = tallies[a.worker_id.as_str()];
            (pos as f64) < POSITIVE_FRACTION_CUTOFF * n as f64
        })
        .cloned()
        .collect();
    funnel.push(stage_counts(
        "positive_rate_cutoff",
        final_rows.iter().map(|a| (a.worker_id.as_str(), a.comment_id.as_str())),
    ));

    (CleanDataset::from_parts(&by_id, final_rows), funnel)
}

pub fn write_funnel(path: impl AsRef<Path>, funnel: &[FunnelStage]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for s in funnel {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Train,
    Test,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Train => "train",
            Side::Test => "test",
        })
    }
}

/// Random comment-level split: `floor(train_frac * N)` comments go to the
/// training side. Annotations inherit their comment's side.
pub fn split_train_test(dataset: &CleanDataset, train_frac: f64, seed: u64) -> Result<BTreeMap<String, Side>> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Argument(format!("train_frac {train_frac} outside (0, 1)")));
    }
    if dataset.comments.is_empty() {
        return Err(Error::Argument("cannot split an empty dataset".into()));
    }
    let mut ids: Vec<&String> = dataset.comments.iter().collect();
    ids.shuffle(&mut rng::stream(seed));
    let n_train = (train_frac * ids.len() as f64).floor() as usize;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i < n_train { Side::Train } else { Side::Test }))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    comment_id: String,
    side: Side,
}

pub fn write_split(path: impl AsRef<Path>, split: &BTreeMap<String, Side>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for (id, side) in split {
        w.serialize(SplitRow { comment_id: id.clone(), side: *side })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_split(path: impl AsRef<Path>) -> Result<BTreeMap<String, Side>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for row in r.deserialize::<SplitRow>() {
        let row = row?;
        out.insert(row.comment_id, row.side);
    }
    Ok(out)
}
