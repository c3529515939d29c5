//! Comment ingestion, substance-keyword matching, and exclusion heuristics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// One social-media comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_utc: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subreddit: Option<String>,
}

impl RawComment {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        RawComment { id: id.into(), body: body.into(), created_utc: None, subreddit: None }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedComments {
    pub comments: Vec<RawComment>,
    /// Malformed lines (bad JSON, missing or empty id, duplicate id).
    pub skipped: usize,
}

/// Fraction of malformed lines above which loading fails outright.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

pub fn load_comments(path: impl AsRef<Path>) -> Result<LoadedComments> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut comments = Vec::new();
    let mut seen = HashSet::new();
    let mut skipped = 0usize;
    let mut total = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<RawComment>(&line) {
            Ok(c) if !c.id.is_empty() && seen.insert(c.id.clone()) => comments.push(c),
            _ => skipped += 1,
        }
    }
    if total > 0 && skipped as f64 > MAX_MALFORMED_FRACTION * total as f64 {
        return Err(Error::Format(format!(
            "{}: {skipped} of {total} lines malformed (limit {:.0}%)",
            path.display(),
            MAX_MALFORMED_FRACTION * 100.0
        )));
    }
    Ok(LoadedComments { comments, skipped })
}

pub fn write_comments(path: impl AsRef<Path>, comments: &[RawComment]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for c in comments {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Lowercased tokens: maximal runs of letters, digits, and apostrophes.
pub fn keyword_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn normalize_whitespace(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone)]
enum PatternKind {
    /// Contiguous token sequence.
    Tokens(Vec<String>),
    /// `*` wildcard pattern, matched as a substring of the normalized body.
    Wildcard(Regex),
}

#[derive(Debug, Clone)]
pub struct ExclusionPattern {
    raw: String,
    kind: PatternKind,
}

impl ExclusionPattern {
    pub fn parse(raw: &str) -> Result<Self> {
        let raw = raw.trim().to_lowercase();
        let stripped: String = raw.chars().filter(|&c| c != '*').collect();
        if stripped.trim().is_empty() {
            return Err(Error::Argument(format!("exclusion pattern {raw:?} is empty once wildcards are removed")));
        }
        let kind = if raw.contains('*') {
            let body = normalize_whitespace(&raw);
            let re = body.split('*').map(regex::escape).collect::<Vec<_>>().join(".*");
            PatternKind::Wildcard(Regex::new(&re).map_err(|e| Error::Argument(e.to_string()))?)
        } else {
            PatternKind::Tokens(keyword_tokens(&raw))
        };
        Ok(ExclusionPattern { raw, kind })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    fn matches(&self, tokens: &[String], normalized: &str) -> bool {
        match &self.kind {
            PatternKind::Wildcard(re) => re.is_match(normalized),
            PatternKind::Tokens(seq) => !seq.is_empty() && tokens.windows(seq.len()).any(|w| w == seq.as_slice()),
        }
    }
}

pub const DEFAULT_KEYWORDS: &[&str] = &[
    "acid",
    "adderall",
    "addy",
    "cocaine",
    "codeine",
    "coke",
    "dab",
    "drug",
    "fentanyl",
    "heroin",
    "kratom",
    "kush",
    "lsd",
    "marijuana",
    "mdma",
    "meth",
    "molly",
    "norco",
    "opiate",
    "opioid",
    "oxy",
    "oxycodone",
    "percocet",
    "purp",
    "shrooms",
    "valium",
    "weed",
    "xanax",
    "xans",
    "xtc",
    // rare terms retained by the disambiguation rule
    "barbs",
    "blunt",
    "crack",
    "ecstasy",
    "joint",
    "pot",
    "tabs",
];

pub const DEFAULT_EXCLUSIONS: &[&str] = &[
    "hillary",
    "clinton",
    "obama",
    "bernie",
    "bern",
    "sanders",
    "trump",
    "gab",
    "weed out",
    "crack jokes",
    "crack me up",
    "*white pill",
    "black pill",
    "red pill",
    "blue pill",
    "*whitepill*",
    "*blackpill*",
    "*redpill",
    "*bluepill*",
    "crazy pill",
];

/// Substance keywords plus exclusion phrases.
#[derive(Debug, Clone)]
pub struct KeywordLexicon {
    keywords: BTreeSet<String>,
    exclusions: Vec<ExclusionPattern>,
}

impl Default for KeywordLexicon {
    fn default() -> Self {
        Self::new(DEFAULT_KEYWORDS.iter().copied(), DEFAULT_EXCLUSIONS.iter().copied())
            .expect("built-in lexicon is valid")
    }
}

impl KeywordLexicon {
    pub fn new<'a>(
        keywords: impl IntoIterator<Item = &'a str>,
        exclusions: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for kw in keywords {
            let kw = kw.trim();
            if kw.is_empty() {
                continue;
            }
            if kw.chars().any(char::is_uppercase) {
                return Err(Error::Argument(format!("keyword {kw:?} is not lowercase")));
            }
            if !set.insert(kw.to_string()) {
                return Err(Error::Argument(format!("duplicate keyword {kw:?}")));
            }
        }
        let exclusions = exclusions
            .into_iter()
            .filter(|p| !p.trim().is_empty())
            .map(ExclusionPattern::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(KeywordLexicon { keywords: set, exclusions })
    }

    /// Parse the plain-text lexicon format:
    ///
    /// ```text
    /// # comment
    /// [keywords]
    /// weed
    /// [exclude]
    /// crack jokes
    /// *redpill
    /// ```
    pub fn from_text(text: &str) -> Result<Self> {
        let mut keywords = Vec::new();
        let mut exclusions = Vec::new();
        let mut section: Option<&str> = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[keywords]" => section = Some("keywords"),
                "[exclude]" => section = Some("exclude"),
                _ => match section {
                    Some("keywords") => keywords.push(line.to_lowercase()),
                    Some(_) => exclusions.push(line.to_string()),
                    None => {
                        return Err(Error::Format(format!(
                            "lexicon line {}: entry before any [keywords]/[exclude] header",
                            n + 1
                        )))
                    }
                },
            }
        }
        Self::new(keywords.iter().map(String::as_str), exclusions.iter().map(String::as_str))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("[keywords]\n");
        for k in &self.keywords {
            let _ = writeln!(s, "{k}");
        }
        s.push_str("[exclude]\n");
        for p in &self.exclusions {
            let _ = writeln!(s, "{}", p.raw);
        }
        s
    }

    pub fn keywords(&self) -> &BTreeSet<String> {
        &self.keywords
    }

    pub fn exclusions(&self) -> impl Iterator<Item = &str> {
        self.exclusions.iter().map(|p| p.raw.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub comment_id: String,
    pub matched_keywords: BTreeSet<String>,
    pub excluded: bool,
    pub exclusion_hits: Vec<String>,
}

impl MatchResult {
    pub fn passes(&self) -> bool {
        !self.matched_keywords.is_empty() && !self.excluded
    }
}

/// Keywords found in the body as whole tokens.
pub fn matched_keywords(body: &str, lexicon: &KeywordLexicon) -> BTreeSet<String> {
    keyword_tokens(body).into_iter().filter(|t| lexicon.keywords.contains(t)).collect()
}

/// Exclusion patterns hitting the body, in lexicon order.
pub fn apply_exclusions(comment: &RawComment, lexicon: &KeywordLexicon) -> (bool, Vec<String>) {
    let tokens = keyword_tokens(&comment.body);
    let normalized = normalize_whitespace(&comment.body);
    let hits: Vec<String> =
        lexicon.exclusions.iter().filter(|p| p.matches(&tokens, &normalized)).map(|p| p.raw.clone()).collect();
    (!hits.is_empty(), hits)
}

pub fn match_keywords(comment: &RawComment, lexicon: &KeywordLexicon) -> MatchResult {
    let (excluded, exclusion_hits) = apply_exclusions(comment, lexicon);
    MatchResult {
        comment_id: comment.id.clone(),
        matched_keywords: matched_keywords(&comment.body, lexicon),
        excluded,
        exclusion_hits,
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Sampled survivors, in input order.
    pub sample: Vec<RawComment>,
    /// One entry per input comment, in input order.
    pub report: Vec<MatchResult>,
    pub survivors: usize,
}

/// Keep comments with at least one keyword and no exclusion hit, then draw a
/// uniform sample of `min(sample_n, survivors)` of them.
///
/// Sampling is two-pass (collect survivors, then index-sample), so the result
/// depends only on `seed` and input order.
pub fn filter_corpus(
    stream: impl IntoIterator<Item = RawComment>,
    lexicon: &KeywordLexicon,
    seed: u64,
    sample_n: usize,
) -> FilterOutcome {
    let mut report = Vec::new();
    let mut survivors = Vec::new();
    for c in stream {
        let m = match_keywords(&c, lexicon);
        if m.passes() {
            survivors.push(c);
        }
        report.push(m);
    }
    let n = survivors.len();
    let k = sample_n.min(n);
    let mut picked = index::sample(&mut rng::stream(seed), n, k).into_vec();
    picked.sort_unstable();
    let mut keep = vec![false; n];
    for i in picked {
        keep[i] = true;
    }
    let sample = survivors.into_iter().zip(keep).filter_map(|(c, k)| k.then_some(c)).collect();
    FilterOutcome { sample, report, survivors: n }
}

pub fn write_match_report(path: impl AsRef<Path>, report: &[MatchResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["comment_id", "keywords", "excluded"])?;
    for m in report {
        let kws = m.matched_keywords.iter().map(String::as_str).collect::<Vec<_>>().join(";");
        w.write_record([m.comment_id.as_str(), &kws, if m.excluded { "1" } else { "0" }])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaValue {
    Defined(f64),
    /// Expected agreement is 1 (both raters used a single, shared class).
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub agreement_rate: f64,
    pub kappa: KappaValue,
}

/// Two-rater Cohen's kappa on binary labels.
pub fn cohen_kappa(labels_a: &[bool], labels_b: &[bool]) -> Result<Agreement> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::Argument(format!(
            "label vectors differ in length ({} vs {})",
            labels_a.len(),
            labels_b.len()
        )));
    }
    if labels_a.is_empty() {
        return Err(Error::Argument("label vectors are empty".into()));
    }
    let n = labels_a.len() as f64;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as f64;
    let pa = labels_a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = labels_b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    let kappa =
        if (1.0 - p_e).abs() < 1e-15 { KappaValue::Degenerate } else { KappaValue::Defined((p_o - p_e) / (1.0 - p_e)) };
    Ok(Agreement { agreement_rate: p_o, kappa })
}

/// One rated comment in the disambiguation sample.
#[derive(Debug, Clone)]
pub struct DisambiguationItem {
    pub keywords: BTreeSet<String>,
    /// Conjunctive label: both raters judged the comment to be about substances.
    pub about_substances: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordDisambiguation {
    pub keyword: String,
    pub occurrences: usize,
    pub substance_count: usize,
    /// `None` when the keyword never occurs.
    pub substance_fraction: Option<f64>,
    pub retain: bool,
    pub manual_override: bool,
}

/// Per-keyword retention: keep keywords used about substances in more than
/// half of their occurrences, keywords that never occur, and anything in
/// `overrides`.
pub fn disambiguation_report(
    sample: &[DisambiguationItem],
    keywords: &BTreeSet<String>,
    overrides: &BTreeSet<String>,
) -> Vec<KeywordDisambiguation> {
    let mut counts: BTreeMap<&str, (usize, usize)> = keywords.iter().map(|k| (k.as_str(), (0, 0))).collect();
    for item in sample {
        for kw in &item.keywords {
            if let Some(c) = counts.get_mut(kw.as_str()) {
                c.0 += 1;
                if item.about_substances {
                    c.1 += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|(kw, (occ, subst))| {
            let fraction = (occ > 0).then(|| subst as f64 / occ as f64);
            let by_rule = fraction.is_none_or(|f| f > 0.5);
            let manual_override = !by_rule && overrides.contains(kw);
            KeywordDisambiguation {
                keyword: kw.to_string(),
                occurrences: occ,
                substance_count: subst,
                substance_fraction: fraction,
                retain: by_rule || manual_override,
                manual_override,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn lex() -> KeywordLexicon {
        KeywordLexicon::default()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn default_lexicon_sizes() {
        let l = lex();
        assert_eq!(l.keywords().len(), 37);
        assert_eq!(l.exclusions().count(), 20);
    }

    #[test]
    fn matches_pot() {
        let m = match_keywords(&RawComment::new("1", "I smoked pot last night"), &lex());
        assert_eq!(m.matched_keywords, set(&["pot"]));
        assert!(m.passes());
    }

    #[test]
    fn no_keyword_is_filtered() {
        let m = match_keywords(&RawComment::new("1", "hello world"), &lex());
        assert!(m.matched_keywords.is_empty());
        assert!(!m.passes());
    }

    #[test]
    fn repeated_and_mixed_case_keywords() {
        let m = match_keywords(&RawComment::new("1", "Weed and LSD, plus weed again"), &lex());
        assert_eq!(m.matched_keywords, set(&["weed", "lsd"]));
    }

    #[test]
    fn method_does_not_match_meth() {
        let m = match_keywords(&RawComment::new("1", "a method for pots"), &lex());
        assert!(m.matched_keywords.is_empty());
    }

    #[test]
    fn empty_body_matches_nothing() {
        let m = match_keywords(&RawComment::new("1", ""), &lex());
        assert!(m.matched_keywords.is_empty() && !m.excluded);
    }

    #[test]
    fn crack_jokes_excluded() {
        let (ex, hits) = apply_exclusions(&RawComment::new("1", "he can crack jokes all day"), &lex());
        assert!(ex);
        assert_eq!(hits, vec!["crack jokes".to_string()]);
    }

    #[test]
    fn plain_comment_not_excluded() {
        let (ex, hits) = apply_exclusions(&RawComment::new("1", "meth is discussed here"), &lex());
        assert!(!ex && hits.is_empty());
    }

    #[test]
    fn wildcard_is_substring() {
        let (ex, hits) = apply_exclusions(&RawComment::new("1", "that redpilled thread"), &lex());
        assert!(ex);
        assert_eq!(hits, vec!["*redpill".to_string()]);
        let (ex, _) = apply_exclusions(&RawComment::new("1", "the WHITE   pill crowd"), &lex());
        assert!(ex);
    }

    #[test]
    fn token_phrases_need_whole_tokens() {
        // "bern" is a token pattern: "bernard" must not hit it
        let (ex, _) = apply_exclusions(&RawComment::new("1", "bernard smoked weed"), &lex());
        assert!(!ex);
        let (ex, hits) = apply_exclusions(&RawComment::new("1", "Feel the Bern"), &lex());
        assert!(ex);
        assert_eq!(hits, vec!["bern".to_string()]);
    }

    #[test]
    fn invalid_lexicons_rejected() {
        assert!(KeywordLexicon::new(["weed", "weed"], []).is_err());
        assert!(KeywordLexicon::new(["Weed"], []).is_err());
        assert!(KeywordLexicon::new(["weed"], ["**"]).is_err());
    }

    #[test]
    fn lexicon_text_round_trip() {
        let l = lex();
        let back = KeywordLexicon::from_text(&l.to_text()).unwrap();
        assert_eq!(back.keywords(), l.keywords());
        assert_eq!(back.exclusions().collect::<Vec<_>>(), l.exclusions().collect::<Vec<_>>());
        let parsed = KeywordLexicon::from_text("# c\n[keywords]\nweed # inline\n[exclude]\nweed out\n").unwrap();
        assert_eq!(parsed.keywords(), &set(&["weed"]));
        assert!(KeywordLexicon::from_text("weed\n").is_err());
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_well_formed() {
        let f = write_lines(&[
            r#"{"id":"a","body":"x"}"#,
            r#"{"id":"b","body":"y","subreddit":"r"}"#,
            r#"{"id":"c","body":"","created_utc":5}"#,
        ]);
        let out = load_comments(f.path()).unwrap();
        assert_eq!(out.comments.len(), 3);
        assert_eq!(out.skipped, 0);
        assert_eq!(out.comments[2].created_utc, Some(5));
    }

    #[test]
    fn load_skips_malformed_then_fails_over_limit() {
        let mut lines: Vec<String> = (0..19).map(|i| format!(r#"{{"id":"{i}","body":"x"}}"#)).collect();
        lines.push("not json".into());
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let out = load_comments(write_lines(&refs).path()).unwrap();
        assert_eq!((out.comments.len(), out.skipped), (19, 1));

        let f = write_lines(&[r#"{"id":"a","body":"x"}"#, r#"{"id":"b","body":"x"}"#, "{oops"]);
        assert!(matches!(load_comments(f.path()), Err(Error::Format(_))));
        assert!(matches!(load_comments("/nonexistent/x.jsonl"), Err(Error::Io { .. })));
    }

    #[test]
    fn filter_edge_cases() {
        let comments: Vec<RawComment> = (0..10).map(|i| RawComment::new(i.to_string(), "weed")).collect();
        let all = filter_corpus(comments.clone(), &lex(), 1, 10);
        assert_eq!(all.sample, comments);
        let none = filter_corpus(comments, &lex(), 1, 0);
        assert!(none.sample.is_empty());
        assert_eq!(none.survivors, 10);
    }

    #[test]
    fn filter_is_deterministic() {
        let comments: Vec<RawComment> = (0..1000).map(|i| RawComment::new(format!("c{i}"), "coke")).collect();
        let a = filter_corpus(comments.clone(), &lex(), 42, 100);
        let b = filter_corpus(comments.clone(), &lex(), 42, 100);
        let c = filter_corpus(comments, &lex(), 43, 100);
        assert_eq!(a.sample.len(), 100);
        assert_eq!(a.sample, b.sample);
        assert_ne!(a.sample, c.sample);
    }

    #[test]
    fn kappa_examples() {
        let a = cohen_kappa(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(a.agreement_rate, 0.5);
        assert_eq!(a.kappa, KappaValue::Defined(0.0));
        let v = [true, false, true, true];
        let id = cohen_kappa(&v, &v).unwrap();
        assert_eq!(id.agreement_rate, 1.0);
        assert_eq!(id.kappa, KappaValue::Defined(1.0));
        let deg = cohen_kappa(&[true, true], &[true, true]).unwrap();
        assert_eq!(deg.kappa, KappaValue::Degenerate);
        assert!(cohen_kappa(&[true], &[true, false]).is_err());
        assert!(cohen_kappa(&[], &[]).is_err());
    }

    fn item(kw: &str, about: bool) -> DisambiguationItem {
        DisambiguationItem { keywords: set(&[kw]), about_substances: about }
    }

    #[test]
    fn disambiguation_rules() {
        let mut sample: Vec<_> = (0..10).map(|_| item("weed", true)).collect();
        // acid: 41 of 100 about substances
        sample.extend((0..100).map(|i| item("acid", i < 41)));
        sample.extend((0..100).map(|i| item("pot", i < 41)));
        let kws = set(&["weed", "acid", "pot", "barbs"]);
        let report = disambiguation_report(&sample, &kws, &set(&["acid"]));
        let get = |k: &str| report.iter().find(|r| r.keyword == k).unwrap().clone();
        assert!(get("weed").retain);
        assert_eq!(get("weed").substance_fraction, Some(1.0));
        assert!(!get("pot").retain);
        assert_eq!(get("acid").substance_fraction, Some(0.41));
        assert!(get("acid").retain && get("acid").manual_override);
        assert!(get("barbs").retain);
        assert_eq!(get("barbs").occurrences, 0);
    }

    proptest! {
        #[test]
        fn matching_is_case_insensitive(body in "[a-zA-Z ,.!']{0,60}") {
            let l = lex();
            prop_assert_eq!(
                matched_keywords(&body, &l),
                matched_keywords(&body.to_uppercase(), &l)
            );
        }

        #[test]
        fn kappa_symmetric_and_self_one(a in prop::collection::vec(any::<bool>(), 2..40),
                                        b in prop::collection::vec(any::<bool>(), 2..40)) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            prop_assert_eq!(cohen_kappa(a, b).unwrap(), cohen_kappa(b, a).unwrap());
            if a.iter().any(|&x| x) && a.iter().any(|&x| !x) {
                prop_assert_eq!(cohen_kappa(a, a).unwrap().kappa, KappaValue::Defined(1.0));
            }
        }

        #[test]
        fn filter_output_is_subset(bodies in prop::collection::vec(
            prop::sample::select(vec!["weed here", "hello", "crack jokes weed", "meth", "the redpill coke", "pot"]), 0..40),
            n in 0usize..50, seed in any::<u64>()) {
            let comments: Vec<RawComment> = bodies.iter().enumerate()
                .map(|(i, b)| RawComment::new(i.to_string(), *b)).collect();
            let l = lex();
            let out = filter_corpus(comments.clone(), &l, seed, n);
            prop_assert_eq!(out.sample.len(), n.min(out.survivors));
            for c in &out.sample {
                prop_assert!(comments.contains(c));
                prop_assert!(match_keywords(c, &l).passes());
            }
        }

        #[test]
        fn retention_monotone(occ in 1usize..50, s1 in 0usize..50, s2 in 0usize..50) {
            let (lo, hi) = (s1.min(s2).min(occ), s1.max(s2).min(occ));
            let mk = |s: usize| -> Vec<DisambiguationItem> {
                (0..occ).map(|i| item("pot", i < s)).collect()
            };
            let kws = set(&["pot"]);
            let none = BTreeSet::new();
            let r_lo = disambiguation_report(&mk(lo), &kws, &none)[0].retain;
            let r_hi = disambiguation_report(&mk(hi), &kws, &none)[0].retain;
            prop_assert!(!r_lo || r_hi);
        }
    }
}
