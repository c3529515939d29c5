use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An annotator's demographics, substance-use answers, and QC flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: String,
    pub age: u32,
    pub gender_female: u8,
    pub race_african_american: u8,
    pub knows_treated_person: u8,
    /// Days of non-medical substance use in the past 30 days.
    pub substance_use_days: u8,
    pub passed_attention_check: bool,
    pub completed_survey: bool,
    pub completed_hit: bool,
}

impl WorkerProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.worker_id.is_empty() {
            return bad("empty worker_id".into());
        }
        if self.age == 0 {
            return bad("age must be positive".into());
        }
        for (name, v) in [
            ("gender_female", self.gender_female),
            ("race_african_american", self.race_african_american),
            ("knows_treated_person", self.knows_treated_person),
        ] {
            if v > 1 {
                return bad(format!("{name}={v} is not 0/1"));
            }
        }
        if self.substance_use_days > 30 {
            return bad(format!("substance_use_days={} outside 0..=30", self.substance_use_days));
        }
        Ok(())
    }

    pub fn passes_screening(&self) -> bool {
        self.passed_attention_check && self.completed_survey && self.completed_hit
    }

    pub fn attribute(&self, attr: WorkerAttribute) -> bool {
        match attr {
            WorkerAttribute::GenderFemale => self.gender_female == 1,
            WorkerAttribute::RaceAfricanAmerican => self.race_african_american == 1,
            WorkerAttribute::KnowsTreatedPerson => self.knows_treated_person == 1,
            WorkerAttribute::SubstanceUser => self.substance_use_days > 0,
        }
    }
}

/// Binary worker attributes used for subgroup statistics and jury composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerAttribute {
    GenderFemale,
    RaceAfricanAmerican,
    KnowsTreatedPerson,
    /// Any substance use in the past 30 days.
    SubstanceUser,
}

impl WorkerAttribute {
    pub const ALL: [WorkerAttribute; 4] = [
        WorkerAttribute::SubstanceUser,
        WorkerAttribute::KnowsTreatedPerson,
        WorkerAttribute::RaceAfricanAmerican,
        WorkerAttribute::GenderFemale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkerAttribute::GenderFemale => "gender_female",
            WorkerAttribute::RaceAfricanAmerican => "race_african_american",
            WorkerAttribute::KnowsTreatedPerson => "knows_treated_person",
            WorkerAttribute::SubstanceUser => "substance_user",
        }
    }
}

impl fmt::Display for WorkerAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkerAttribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WorkerAttribute::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown worker attribute {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }
}

impl FromStr for Answer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" | "1" | "true" => Ok(Answer::Yes),
            "no" | "n" | "0" | "false" => Ok(Answer::No),
            other => Err(Error::Argument(format!("invalid answer {other:?}"))),
        }
    }
}

/// One worker's answers on one comment. `q_stigma` is asked only after a
/// "yes" to `q_sub`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub worker_id: String,
    pub comment_id: String,
    pub q_sub: Answer,
    pub q_stigma: Option<Answer>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.worker_id.is_empty() || self.comment_id.is_empty() {
            return Err(Error::Argument("empty worker_id or comment_id".into()));
        }
        match (self.q_sub, self.q_stigma) {
            (Answer::Yes, None) => Err(Error::Argument("q_sub=yes but q_stigma missing".into())),
            (Answer::No, Some(_)) => Err(Error::Argument("q_stigma present but q_sub=no".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based data row (header excluded).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub rejected: Vec<RowError>,
}

const WORKER_COLUMNS: [&str; 9] = [
    "worker_id",
    "age",
    "gender_female",
    "race_african_american",
    "knows_treated_person",
    "substance_use_days",
    "passed_attention_check",
    "completed_survey",
    "completed_hit",
];

const ANNOTATION_COLUMNS: [&str; 4] = ["worker_id", "comment_id", "q_sub", "q_stigma"];

fn column_index(headers: &csv::StringRecord, required: &[&str], path: &Path) -> Result<HashMap<String, usize>> {
    let idx: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
    for col in required {
        if !idx.contains_key(*col) {
            return Err(Error::Format(format!("{}: missing required column {col:?}", path.display())));
        }
    }
    Ok(idx)
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("invalid boolean {other:?}")),
    }
}

fn parse_num<T: FromStr>(field: &str, s: &str) -> std::result::Result<T, String> {
    s.trim().parse().map_err(|_| format!("{field}: invalid number {s:?}"))
}

struct Row<'a> {
    idx: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl<'a> Row<'a> {
    fn get(&self, name: &str) -> &'a str {
        self.idx.get(name).and_then(|&j| self.record.get(j)).unwrap_or("")
    }
}

fn read_rows<T>(
    path: &Path,
    required: &[&str],
    parse: impl Fn(&Row<'_>) -> std::result::Result<T, String>,
) -> Result<Loaded<T>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    })?;
    let headers = reader.headers()?.clone();
    let idx = column_index(&headers, required, path)?;
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError { row: row_no, message: e.to_string() });
                continue;
            }
        };
        match parse(&Row { idx: &idx, record: &row }) {
            Ok(r) => records.push(r),
            Err(message) => rejected.push(RowError { row: row_no, message }),
        }
    }
    Ok(Loaded { records, rejected })
}

pub fn load_workers(path: impl AsRef<Path>) -> Result<Loaded<WorkerProfile>> {
    read_rows(path.as_ref(), &WORKER_COLUMNS, |row| {
        let get = |name| row.get(name);
        let w = WorkerProfile {
            worker_id: get("worker_id").trim().to_string(),
            age: parse_num("age", get("age"))?,
            gender_female: parse_num("gender_female", get("gender_female"))?,
            race_african_american: parse_num("race_african_american", get("race_african_american"))?,
            knows_treated_person: parse_num("knows_treated_person", get("knows_treated_person"))?,
            substance_use_days: parse_num("substance_use_days", get("substance_use_days"))?,
            passed_attention_check: parse_bool(get("passed_attention_check"))?,
            completed_survey: parse_bool(get("completed_survey"))?,
            completed_hit: parse_bool(get("completed_hit"))?,
        };
        w.validate().map_err(|e| e.to_string())?;
        Ok(w)
    })
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Loaded<AnnotationRecord>> {
    read_rows(path.as_ref(), &ANNOTATION_COLUMNS, |row| {
        let get = |name| row.get(name);
        let q_sub: Answer = get("q_sub").parse().map_err(|e: Error| e.to_string())?;
        let raw = get("q_stigma").trim();
        let q_stigma = if raw.is_empty() { None } else { Some(raw.parse().map_err(|e: Error| e.to_string())?) };
        let a = AnnotationRecord {
            worker_id: get("worker_id").trim().to_string(),
            comment_id: get("comment_id").trim().to_string(),
            q_sub,
            q_stigma,
        };
        a.validate().map_err(|e| e.to_string())?;
        Ok(a)
    })
}

pub fn write_workers(path: impl AsRef<Path>, workers: &[WorkerProfile]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for worker in workers {
        w.serialize(worker)?;
    }
    if workers.is_empty() {
        w.write_record(WORKER_COLUMNS)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_annotations(path: impl AsRef<Path>, annotations: &[AnnotationRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for a in annotations {
        w.serialize(a)?;
    }
    if annotations.is_empty() {
        w.write_record(ANNOTATION_COLUMNS)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
