use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::corpus::RawComment;
use crate::{Error, Result};

/// Per-feature mean and population standard deviation, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn transform(&self, j: usize, x: f64) -> f64 {
        if self.sd[j] == 0.0 {
            0.0
        } else {
            (x - self.mean[j]) / self.sd[j]
        }
    }
}

/// Named feature columns over keyed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    row_keys: Vec<String>,
    index: HashMap<String, usize>,
    values: Array2<f64>,
    standardization: Option<Standardization>,
}

impl FeatureMatrix {
    pub fn new(feature_names: Vec<String>, row_keys: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != row_keys.len() || values.ncols() != feature_names.len() {
            return Err(Error::Argument(format!(
                "matrix is {}x{} but there are {} rows and {} features",
                values.nrows(),
                values.ncols(),
                row_keys.len(),
                feature_names.len()
            )));
        }
        let mut index = HashMap::with_capacity(row_keys.len());
        for (i, k) in row_keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate row key {k:?}")));
            }
        }
        Ok(FeatureMatrix { feature_names, row_keys, index, values, standardization: None })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row_keys(&self) -> &[String] {
        &self.row_keys
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn row(&self, key: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(key).map(|&i| self.values.row(i))
    }

    fn position(&self, key: &str) -> Result<usize> {
        self.index.get(key).copied().ok_or_else(|| Error::Argument(format!("unknown row key {key:?}")))
    }

    /// Rows for `keys`, in order, as a dense matrix.
    pub fn select_rows(&self, keys: &[String]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((keys.len(), self.n_features()));
        for (i, k) in keys.iter().enumerate() {
            out.row_mut(i).assign(&self.values.row(self.position(k)?));
        }
        Ok(out)
    }

    /// Submatrix restricted to `keys` (in that order), unstandardized state kept.
    pub fn subset(&self, keys: &[String]) -> Result<FeatureMatrix> {
        let mut m = FeatureMatrix::new(self.feature_names.clone(), keys.to_vec(), self.select_rows(keys)?)?;
        m.standardization = self.standardization.clone();
        Ok(m)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["row_key".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (i, key) in self.row_keys.iter().enumerate() {
            let mut rec = vec![key.clone()];
            rec.extend(self.values.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn load_feature_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("row_key") {
        return Err(Error::Format(format!("{}: first column must be row_key", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut keys = Vec::new();
    let mut flat = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        keys.push(rec.get(0).unwrap_or("").to_string());
        for v in rec.iter().skip(1) {
            flat.push(v.parse::<f64>().map_err(|_| Error::Format(format!("{}: invalid value {v:?}", path.display())))?);
        }
    }
    let values = Array2::from_shape_vec((keys.len(), names.len()), flat).map_err(|e| Error::Format(e.to_string()))?;
    FeatureMatrix::new(names, keys, values)
}

fn fit_counts<'a>(fit_rows: &'a [String], available: &HashMap<&str, usize>) -> Result<&'a [String]> {
    if fit_rows.is_empty() {
        return Err(Error::Argument("fit_rows is empty".into()));
    }
    if let Some(k) = fit_rows.iter().find(|k| !available.contains_key(k.as_str())) {
        return Err(Error::Argument(format!("fit row {k:?} not among the input rows")));
    }
    Ok(fit_rows)
}

/// Unigram vocabulary fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    /// Distinct unigrams seen across the fit rows, before thresholding.
    pub raw_size: usize,
}

/// Keep unigrams whose document frequency over `fit_rows` is at least
/// `min_doc_frac`. `fit_rows` may repeat a key (e.g. once per annotation of
/// a comment); repeats count as separate documents.
pub fn fit_vocabulary(comments: &[RawComment], fit_rows: &[String], min_doc_frac: f64) -> Result<Vocabulary> {
    let pos: HashMap<&str, usize> = comments.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    let fit_rows = fit_counts(fit_rows, &pos)?;
    let mut unique_tokens: HashMap<usize, BTreeSet<String>> = HashMap::new();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for key in fit_rows {
        let i = pos[key.as_str()];
        let toks = unique_tokens.entry(i).or_insert_with(|| tokenize(&comments[i].body).into_iter().collect());
        for t in toks.iter() {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
    }
    let n = fit_rows.len() as f64;
    let raw_size = df.len();
    let terms = df.into_iter().filter(|(_, c)| *c as f64 / n >= min_doc_frac).map(|(t, _)| t).collect();
    Ok(Vocabulary { terms, raw_size })
}

/// Relative frequency (count / total tokens) of each vocabulary term per row.
pub fn unigram_matrix(comments: &[RawComment], vocab: &Vocabulary) -> Result<FeatureMatrix> {
    let col: HashMap<&str, usize> = vocab.terms.iter().enumerate().map(|(j, t)| (t.as_str(), j)).collect();
    let mut values = Array2::zeros((comments.len(), vocab.terms.len()));
    for (i, c) in comments.iter().enumerate() {
        let toks = tokenize(&c.body);
        if toks.is_empty() {
            continue;
        }
        let total = toks.len() as f64;
        for t in &toks {
            if let Some(&j) = col.get(t.as_str()) {
                values[[i, j]] += 1.0;
            }
        }
        values.row_mut(i).mapv_inplace(|v| v / total);
    }
    FeatureMatrix::new(vocab.terms.clone(), comments.iter().map(|c| c.id.clone()).collect(), values)
}

pub fn unigram_features(comments: &[RawComment], min_doc_frac: f64, fit_rows: &[String]) -> Result<FeatureMatrix> {
    let vocab = fit_vocabulary(comments, fit_rows, min_doc_frac)?;
    unigram_matrix(comments, &vocab)
}

/// Dictionary of word categories. An entry ending in `*` matches any token
/// with that prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryLexicon {
    categories: Vec<(String, Vec<String>)>,
}

impl DictionaryLexicon {
    pub fn new(categories: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, entries) in &categories {
            if name.is_empty() || !seen.insert(name.clone()) {
                return Err(Error::Argument(format!("duplicate or empty category name {name:?}")));
            }
            if let Some(e) =
                entries.iter().find(|e| e.chars().any(char::is_uppercase) || e.trim_end_matches('*').is_empty())
            {
                return Err(Error::Argument(format!("invalid entry {e:?} in category {name}")));
            }
        }
        Ok(DictionaryLexicon { categories })
    }

    /// Parse blocks delimited by `%` lines; each block is a category name line
    /// followed by one entry per line. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut categories = Vec::new();
        let mut current: Option<(String, Vec<String>)> = None;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "%" {
                categories.extend(current.take());
                continue;
            }
            match current.as_mut() {
                None => current = Some((line.to_string(), Vec::new())),
                Some((_, entries)) => entries.push(line.to_lowercase()),
            }
        }
        categories.extend(current);
        Self::new(categories)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, entries) in &self.categories {
            let _ = writeln!(s, "%\n{name}");
            for e in entries {
                let _ = writeln!(s, "{e}");
            }
        }
        s.push_str("%\n");
        s
    }

    pub fn category_names(&self) -> Vec<String> {
        self.categories.iter().map(|(n, _)| n.clone()).collect()
    }

    fn category_matches(entries: &[String], token: &str) -> bool {
        entries.iter().any(|e| match e.strip_suffix('*') {
            Some(stem) => token.starts_with(stem),
            None => token == e,
        })
    }
}

/// Per category: tokens matching any entry, divided by total tokens.
pub fn dictionary_features(comments: &[RawComment], lexicon: &DictionaryLexicon) -> Result<FeatureMatrix> {
    let k = lexicon.categories.len();
    let mut values = Array2::zeros((comments.len(), k));
    for (i, c) in comments.iter().enumerate() {
        let toks = tokenize(&c.body);
        if toks.is_empty() {
            continue;
        }
        let total = toks.len() as f64;
        for (j, (_, entries)) in lexicon.categories.iter().enumerate() {
            let hits = toks.iter().filter(|t| DictionaryLexicon::category_matches(entries, t)).count();
            values[[i, j]] = hits as f64 / total;
        }
    }
    FeatureMatrix::new(lexicon.category_names(), comments.iter().map(|c| c.id.clone()).collect(), values)
}

/// Centre and scale every column with the mean and population SD over
/// `fit_rows` (repeats counted); zero-variance columns become zeros.
pub fn standardize(matrix: &FeatureMatrix, fit_rows: &[String]) -> Result<FeatureMatrix> {
    if matrix.standardization.is_some() {
        return Err(Error::State("matrix is already standardized".into()));
    }
    let available: HashMap<&str, usize> = matrix.index.iter().map(|(k, &v)| (k.as_str(), v)).collect();
    let fit_rows = fit_counts(fit_rows, &available)?;
    let p = matrix.n_features();
    let n = fit_rows.len() as f64;
    let mut mean = vec![0.0; p];
    for k in fit_rows {
        let row = matrix.values.row(available[k.as_str()]);
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; p];
    for k in fit_rows {
        let row = matrix.values.row(available[k.as_str()]);
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            // treat round-off noise on constant columns as zero variance
            if sd <= 1e-12 {
                0.0
            } else {
                sd
            }
        })
        .collect();
    let params = Standardization { mean, sd };
    let mut values = matrix.values.clone();
    for mut row in values.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = params.transform(j, *v);
        }
    }
    Ok(FeatureMatrix {
        feature_names: matrix.feature_names.clone(),
        row_keys: matrix.row_keys.clone(),
        index: matrix.index.clone(),
        values,
        standardization: Some(params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn c(id: &str, body: &str) -> RawComment {
        RawComment::new(id, body)
    }

    fn keys(ks: &[&str]) -> Vec<String> {
        ks.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn relative_frequency() {
        let comments = vec![c("x", "a a b")];
        let m = unigram_features(&comments, 0.0, &keys(&["x"])).unwrap();
        assert_eq!(m.feature_names(), ["a", "b"]);
        let row = m.row("x").unwrap();
        assert_abs_diff_eq!(row[0], 2.0 / 3.0);
        assert_abs_diff_eq!(row[1], 1.0 / 3.0);
        assert_abs_diff_eq!(row.sum(), 1.0);
    }

    #[test]
    fn rare_unigrams_excluded() {
        // "rare" occurs in 4 of 1000 fit rows = 0.4% < 0.5%
        let comments: Vec<RawComment> =
            (0..1000).map(|i| c(&format!("r{i}"), if i < 4 { "common rare" } else { "common" })).collect();
        let fit: Vec<String> = comments.iter().map(|c| c.id.clone()).collect();
        let vocab = fit_vocabulary(&comments, &fit, 0.005).unwrap();
        assert_eq!(vocab.terms, ["common"]);
        assert_eq!(vocab.raw_size, 2);
        // five of 1000 is exactly at the threshold and kept
        let comments: Vec<RawComment> =
            (0..1000).map(|i| c(&format!("r{i}"), if i < 5 { "common rare" } else { "common" })).collect();
        assert_eq!(fit_vocabulary(&comments, &fit, 0.005).unwrap().terms, ["common", "rare"]);
    }

    #[test]
    fn repeated_fit_rows_count_as_documents() {
        let comments = vec![c("a", "x y"), c("b", "x")];
        let v = fit_vocabulary(&comments, &keys(&["a", "b", "b", "b"]), 0.3).unwrap();
        assert_eq!(v.terms, ["x"]);
        assert!(fit_vocabulary(&comments, &[], 0.3).is_err());
        assert!(fit_vocabulary(&comments, &keys(&["zzz"]), 0.3).is_err());
    }

    #[test]
    fn empty_text_rows_are_zero() {
        let comments = vec![c("a", "x y"), c("b", "")];
        let m = unigram_features(&comments, 0.0, &keys(&["a"])).unwrap();
        assert_eq!(m.row("b").unwrap().sum(), 0.0);
        let lex = DictionaryLexicon::from_text("%\nNEG\nbad\n%\n").unwrap();
        let d = dictionary_features(&comments, &lex).unwrap();
        assert_eq!(d.row("b").unwrap().to_vec(), vec![0.0]);
    }

    #[test]
    fn dictionary_counts_and_stems() {
        let lex = DictionaryLexicon::from_text("%\nNEG\nbad\n%\nADDICT\naddict*\n%\n").unwrap();
        let comments = vec![c("a", "bad bad good"), c("b", "addiction is not addictive, addict")];
        let d = dictionary_features(&comments, &lex).unwrap();
        assert_abs_diff_eq!(d.row("a").unwrap()[0], 2.0 / 3.0);
        assert_abs_diff_eq!(d.row("b").unwrap()[1], 3.0 / 5.0);
        assert_eq!(DictionaryLexicon::from_text(&lex.to_text()).unwrap(), lex);
    }

    #[test]
    fn dictionary_validation() {
        assert!(DictionaryLexicon::from_text("%\nA\nx\n%\nA\ny\n").is_err());
        assert!(DictionaryLexicon::from_text("%\nA\n*\n").is_err());
    }

    #[test]
    fn standardize_examples() {
        let m = FeatureMatrix::new(
            keys(&["const", "two"]),
            keys(&["r1", "r2", "t"]),
            array![[3.0, 0.0], [3.0, 2.0], [3.0, 5.0]],
        )
        .unwrap();
        let s = standardize(&m, &keys(&["r1", "r2"])).unwrap();
        assert_eq!(s.row("r1").unwrap().to_vec(), vec![0.0, -1.0]);
        assert_eq!(s.row("r2").unwrap().to_vec(), vec![0.0, 1.0]);
        // test row with train parameters: (5 - 1) / 1
        assert_eq!(s.row("t").unwrap().to_vec(), vec![0.0, 4.0]);
        assert!(matches!(standardize(&s, &keys(&["r1"])), Err(Error::State(_))));
    }

    #[test]
    fn csv_round_trip() {
        let m = FeatureMatrix::new(keys(&["a", "b"]), keys(&["x", "y"]), array![[0.1, 1.0 / 3.0], [0.0, 2.5]]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.write_csv(f.path()).unwrap();
        assert_eq!(load_feature_matrix(f.path()).unwrap(), m);
    }

    proptest! {
        #[test]
        fn rows_nonnegative_and_sum_at_most_one(
            bodies in prop::collection::vec("[abc !]{0,20}", 1..20),
            frac in 0.0f64..0.6) {
            let comments: Vec<RawComment> = bodies.iter().enumerate().map(|(i, b)| c(&i.to_string(), b)).collect();
            let fit: Vec<String> = comments.iter().take(comments.len().div_ceil(2)).map(|c| c.id.clone()).collect();
            let m = unigram_features(&comments, frac, &fit).unwrap();
            for row in m.values().rows() {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!(row.sum() <= 1.0 + 1e-12);
            }
            // adding rows outside the fit set leaves the vocabulary unchanged
            let mut more = comments.clone();
            more.push(c("extra", "zzz zzz qqq"));
            let v1 = fit_vocabulary(&comments, &fit, frac).unwrap();
            let v2 = fit_vocabulary(&more, &fit, frac).unwrap();
            prop_assert_eq!(v1, v2);
        }
    }
}
