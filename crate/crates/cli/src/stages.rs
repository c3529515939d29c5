use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::Serialize;
use stigma_core::annotstore::synth::{
    comment_id, synthesize_comments, synthesize_population, synthetic_dictionary, write_manifest,
};
use stigma_core::annotstore::{
    group_rate_ttest, krippendorff_alpha, load_annotations, load_split, load_workers, quality_filter, split_train_test,
    write_annotations, write_funnel, write_split, write_workers, CleanDataset, Side, StigmaAnnotation, WorkerAttribute,
};
use stigma_core::corpus::{
    cohen_kappa, disambiguation_report, filter_corpus, load_comments, write_comments, write_match_report,
    DisambiguationItem, KappaValue, KeywordLexicon, RawComment,
};
use stigma_core::featurize::{
    dictionary_features, fit_vocabulary, load_embeddings, load_feature_matrix, standardize, unigram_matrix,
    write_embeddings, DictionaryLexicon, EmbeddingFormat, EmbeddingTable, FeatureMatrix,
};
use stigma_core::jury::{label_in_wild, load_wild_labels, sweep_attributes, write_sweep, write_wild_labels};
use stigma_core::jury::{DcnJurors, StratifiedPool};
use stigma_core::model::{
    build_examples, classification_metrics, load_checkpoint, save_checkpoint, train, DcnModel, GroupScaler,
    LogisticRegression, Metrics, MostFrequentClass,
};
use stigma_core::rng::stage_seed;
use stigma_core::stats::{agree_disagree_labels, dla};

use crate::config::{Loaded, PipelineConfig, Variant};
use crate::manifest::Recorder;
use crate::{Command, Failure};

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

fn ensure_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Shared state for one stage invocation.
struct Stage<'a> {
    loaded: &'a Loaded,
    out: PathBuf,
    rec: Recorder,
}

impl<'a> Stage<'a> {
    fn cfg(&self) -> &PipelineConfig {
        &self.loaded.config
    }

    fn seed(&self, stage: &str) -> u64 {
        stage_seed(self.cfg().master_seed, stage)
    }

    /// A configured input path that must exist; recorded in the manifest.
    fn input(&mut self, role: &str, path: Option<&PathBuf>) -> Result<PathBuf, Failure> {
        let p = path.ok_or_else(|| Failure::Config(format!("paths.{role} is not set")))?;
        let p = self.loaded.resolve(p);
        if !p.is_file() {
            return Err(Failure::data(format!("missing input {role}: {}", p.display())));
        }
        self.rec.input(role, &p)?;
        Ok(p)
    }

    fn optional_input(&mut self, role: &str, path: Option<&PathBuf>) -> Result<Option<PathBuf>, Failure> {
        match path {
            Some(_) => self.input(role, path).map(Some),
            None => Ok(None),
        }
    }

    /// An artifact of an earlier stage.
    fn artifact(&mut self, rel: &str) -> Result<PathBuf, Failure> {
        let p = self.out.join(rel);
        if !p.is_file() {
            return Err(Failure::data(format!("missing input {}; run the producing stage first", p.display())));
        }
        self.rec.input(rel, &p)?;
        Ok(p)
    }

    fn output_path(&self, rel: &str) -> Result<PathBuf, Failure> {
        let p = self.out.join(rel);
        if let Some(parent) = p.parent() {
            ensure_dir(parent)?;
        }
        Ok(p)
    }

    fn produced(&mut self, path: &Path) -> Result<(), Failure> {
        self.rec.output(path)
    }
}

pub fn run(command: Command, loaded: &Loaded) -> Result<(), Failure> {
    let out = loaded.out_dir();
    ensure_dir(&out)?;
    let mut st = Stage { loaded, out, rec: Recorder::new(&loaded.out_dir()) };
    match command {
        Command::FilterCorpus => filter_stage(&mut st)?,
        Command::Disambiguate => disambiguate_stage(&mut st)?,
        Command::Clean => clean_stage(&mut st)?,
        Command::Split => split_stage(&mut st)?,
        Command::Featurize => featurize_stage(&mut st)?,
        Command::Train => train_stage(&mut st)?,
        Command::Eval => eval_stage(&mut st)?,
        Command::JurySweep => sweep_stage(&mut st)?,
        Command::WildLabel => wild_stage(&mut st)?,
        Command::Dla => dla_stage(&mut st)?,
        Command::Agreement => agreement_stage(&mut st)?,
        Command::Synth => synth_stage(&mut st)?,
        Command::Report => report_stage(&mut st)?,
    }
    st.rec.write(command.name(), st.cfg())?;
    Ok(())
}

fn keyword_lexicon(st: &mut Stage<'_>) -> Result<KeywordLexicon, Failure> {
    let path = st.cfg().paths.keywords.clone();
    Ok(match st.optional_input("keywords", path.as_ref())? {
        Some(p) => KeywordLexicon::load(p)?,
        None => KeywordLexicon::default(),
    })
}

#[derive(Serialize)]
struct FilterSummary {
    input_comments: usize,
    malformed_lines: usize,
    survivors: usize,
    sampled: usize,
}

fn filter_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let corpus = st.input("corpus", st.cfg().paths.corpus.clone().as_ref())?;
    let lex = keyword_lexicon(st)?;
    let loaded = load_comments(&corpus)?;
    let n = loaded.comments.len();
    let outcome = filter_corpus(loaded.comments, &lex, st.seed("filter"), st.cfg().filter.sample_n);
    let sample = st.output_path("corpus/sample.jsonl")?;
    write_comments(&sample, &outcome.sample)?;
    let report = st.output_path("corpus/match_report.csv")?;
    write_match_report(&report, &outcome.report)?;
    let summary = st.output_path("corpus/filter_summary.json")?;
    write_json(
        &summary,
        &FilterSummary {
            input_comments: n,
            malformed_lines: loaded.skipped,
            survivors: outcome.survivors,
            sampled: outcome.sample.len(),
        },
    )?;
    for p in [sample, report, summary] {
        st.produced(&p)?;
    }
    Ok(())
}

fn parse_flag(raw: &str, what: &str) -> Result<bool, Failure> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        v => Err(Failure::data(format!("{what}: expected 0/1, got {v:?}"))),
    }
}

fn disambiguate_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let path = st.input("disambiguation", st.cfg().paths.disambiguation.clone().as_ref())?;
    let lex = keyword_lexicon(st)?;
    let mut r = csv::Reader::from_path(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut items = Vec::new();
    for (i, rec) in r.deserialize::<(String, String, String)>().enumerate() {
        let (_, keywords, about) = rec.map_err(|e| Failure::data(format!("{} row {}: {e}", path.display(), i + 1)))?;
        items.push(DisambiguationItem {
            keywords: keywords.split_whitespace().map(str::to_lowercase).collect(),
            about_substances: parse_flag(&about, &format!("{} row {}", path.display(), i + 1))?,
        });
    }
    let overrides: BTreeSet<String> = st.cfg().disambiguate.overrides.iter().cloned().collect();
    let report = disambiguation_report(&items, lex.keywords(), &overrides);
    let out = st.output_path("corpus/disambiguation.csv")?;
    let mut w = csv::Writer::from_path(&out).map_err(|e| Failure::data(e.to_string()))?;
    let mut rows = vec![vec![
        "keyword".to_string(),
        "occurrences".into(),
        "substance_count".into(),
        "substance_fraction".into(),
        "retain".into(),
        "manual_override".into(),
    ]];
    for k in report {
        rows.push(vec![
            k.keyword,
            k.occurrences.to_string(),
            k.substance_count.to_string(),
            k.substance_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
            u8::from(k.retain).to_string(),
            u8::from(k.manual_override).to_string(),
        ]);
    }
    for row in rows {
        w.write_record(&row).map_err(|e| Failure::data(e.to_string()))?;
    }
    w.flush().map_err(|e| io_err(&out, e))?;
    st.produced(&out)
}

#[derive(Serialize)]
struct CleanSummary {
    rejected_worker_rows: usize,
    rejected_annotation_rows: usize,
    positive_rate: f64,
}

fn clean_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let wp = st.input("workers", st.cfg().paths.workers.clone().as_ref())?;
    let ap = st.input("annotations", st.cfg().paths.annotations.clone().as_ref())?;
    let workers = load_workers(&wp)?;
    let annotations = load_annotations(&ap)?;
    let (clean, funnel) = quality_filter(&workers.records, &annotations.records);
    let w_out = st.output_path("clean/workers.csv")?;
    write_workers(&w_out, &clean.worker_list())?;
    let a_out = st.output_path("clean/annotations.csv")?;
    write_annotations(&a_out, &clean.to_records())?;
    let f_out = st.output_path("clean/funnel.csv")?;
    write_funnel(&f_out, &funnel)?;
    let s_out = st.output_path("clean/summary.json")?;
    write_json(
        &s_out,
        &CleanSummary {
            rejected_worker_rows: workers.rejected.len(),
            rejected_annotation_rows: annotations.rejected.len(),
            positive_rate: clean.positive_rate(),
        },
    )?;
    for p in [w_out, a_out, f_out, s_out] {
        st.produced(&p)?;
    }
    Ok(())
}

/// The cleaned dataset as written by `clean`. Re-applying the funnel to
/// already-clean rows changes nothing and rebuilds the in-memory view.
fn load_clean(st: &mut Stage<'_>) -> Result<CleanDataset, Failure> {
    let wp = st.artifact("clean/workers.csv")?;
    let ap = st.artifact("clean/annotations.csv")?;
    let workers = load_workers(&wp)?;
    let annotations = load_annotations(&ap)?;
    if !workers.rejected.is_empty() || !annotations.rejected.is_empty() {
        return Err(Failure::data("cleaned files contain invalid rows"));
    }
    let (clean, _) = quality_filter(&workers.records, &annotations.records);
    if clean.annotations.len() != annotations.records.len() {
        return Err(Failure::data("cleaned annotations do not survive the funnel; re-run clean"));
    }
    Ok(clean)
}

fn split_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let split = split_train_test(&clean, st.cfg().split.train_frac, st.seed("split"))?;
    let out = st.output_path("split/split.csv")?;
    write_split(&out, &split)?;
    st.produced(&out)
}

fn load_split_map(st: &mut Stage<'_>) -> Result<BTreeMap<String, Side>, Failure> {
    let p = st.artifact("split/split.csv")?;
    Ok(load_split(p)?)
}

/// Train and test annotations, in clean-file order.
fn partition(
    clean: &CleanDataset,
    split: &BTreeMap<String, Side>,
) -> Result<(Vec<StigmaAnnotation>, Vec<StigmaAnnotation>), Failure> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for a in &clean.annotations {
        match split.get(&a.comment_id) {
            Some(Side::Train) => train.push(a.clone()),
            Some(Side::Test) => test.push(a.clone()),
            None => return Err(Failure::data(format!("comment {} missing from split", a.comment_id))),
        }
    }
    Ok((train, test))
}

fn load_texts(path: &Path) -> Result<Vec<RawComment>, Failure> {
    let mut comments = load_comments(path)?.comments;
    comments.sort_by(|a, b| a.id.cmp(&b.id));
    if comments.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Failure::data(format!("{}: duplicate comment ids", path.display())));
    }
    Ok(comments)
}

fn featurize_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let split = load_split_map(st)?;
    let (train_rows, _) = partition(&clean, &split)?;
    let cp = st.input("comments", st.cfg().paths.comments.clone().as_ref())?;
    let texts: Vec<RawComment> = load_texts(&cp)?.into_iter().filter(|c| clean.comments.contains(&c.id)).collect();
    if let Some(missing) = clean.comments.iter().find(|id| texts.binary_search_by(|c| c.id.cmp(id)).is_err()) {
        return Err(Failure::data(format!("annotated comment {missing} has no text in {}", cp.display())));
    }
    let dictionary = match st.optional_input("dictionary", st.cfg().paths.dictionary.clone().as_ref())? {
        Some(p) => Some(DictionaryLexicon::load(p)?),
        None => None,
    };
    let min_df = st.cfg().featurize.min_doc_frac;
    // one document per training annotation
    let fit: Vec<String> = train_rows.iter().map(|a| a.comment_id.clone()).collect();
    let vocab = fit_vocabulary(&texts, &fit, min_df)?;
    let mut outputs = Vec::new();
    let p = st.output_path("features/annotated_unigrams.csv")?;
    unigram_matrix(&texts, &vocab)?.write_csv(&p)?;
    outputs.push(p);
    if let Some(lex) = &dictionary {
        let p = st.output_path("features/annotated_dictionary.csv")?;
        dictionary_features(&texts, lex)?.write_csv(&p)?;
        outputs.push(p);
    }
    let mut summary = serde_json::json!({
        "annotated_vocabulary_raw": vocab.raw_size,
        "annotated_vocabulary": vocab.terms.len(),
    });
    if let Some(wp) = st.optional_input("wild_comments", st.cfg().paths.wild_comments.clone().as_ref())? {
        let wild = load_texts(&wp)?;
        let ids: Vec<String> = wild.iter().map(|c| c.id.clone()).collect();
        let wvocab = fit_vocabulary(&wild, &ids, min_df)?;
        let p = st.output_path("features/wild_unigrams.csv")?;
        unigram_matrix(&wild, &wvocab)?.write_csv(&p)?;
        outputs.push(p);
        if let Some(lex) = &dictionary {
            let p = st.output_path("features/wild_dictionary.csv")?;
            dictionary_features(&wild, lex)?.write_csv(&p)?;
            outputs.push(p);
        }
        summary["wild_vocabulary_raw"] = wvocab.raw_size.into();
        summary["wild_vocabulary"] = wvocab.terms.len().into();
    }
    let p = st.output_path("features/summary.json")?;
    write_json(&p, &summary)?;
    outputs.push(p);
    for p in outputs {
        st.produced(&p)?;
    }
    Ok(())
}

fn load_embedding_table(st: &mut Stage<'_>) -> Result<EmbeddingTable, Failure> {
    let p = st.input("embeddings", st.cfg().paths.embeddings.clone().as_ref())?;
    Ok(load_embeddings(p)?)
}

/// Scaler over the distinct workers of the training annotations.
fn fit_scaler(clean: &CleanDataset, train_rows: &[StigmaAnnotation]) -> Result<GroupScaler, Failure> {
    let ids: BTreeSet<&str> = train_rows.iter().map(|a| a.worker_id.as_str()).collect();
    Ok(GroupScaler::fit(clean.workers.values().filter(|w| ids.contains(w.worker_id.as_str())))?)
}

fn train_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let split = load_split_map(st)?;
    let emb = load_embedding_table(st)?;
    let (train_rows, _) = partition(&clean, &split)?;
    // every clean worker gets a one-hot slot, including test-only workers
    let worker_ids: Vec<String> = clean.workers.keys().cloned().collect();
    let scaler = fit_scaler(&clean, &train_rows)?;
    let examples = build_examples(&train_rows, &clean.workers, &emb, &worker_ids, &scaler)?;
    let hashes: BTreeMap<String, String> = ["embeddings", "clean/annotations.csv", "split/split.csv"]
        .iter()
        .map(|k| {
            let p = match *k {
                "embeddings" => st.loaded.resolve(st.cfg().paths.embeddings.as_ref().expect("checked above")),
                rel => st.out.join(rel),
            };
            crate::manifest::sha256_file(&p).map(|h| (k.to_string(), h))
        })
        .collect::<Result<_, _>>()?;
    let seed = st.seed("train");
    for variant in st.cfg().train.variants.clone() {
        let cfg = st.cfg().train.dcn_config(emb.dim(), worker_ids.len(), seed, variant);
        let outcome = train(&cfg, &examples)?;
        let mut model = DcnModel::new(cfg, outcome.params, worker_ids.clone(), scaler)?;
        model.round_to_storage();
        model.feature_hashes = hashes.clone();
        let ckpt = st.output_path(&format!("train/{}.ckpt", variant.name()))?;
        save_checkpoint(&ckpt, &model)?;
        let log = st.output_path(&format!("train/{}_log.csv", variant.name()))?;
        let mut text = String::from("epoch,phase,mean_loss\n");
        for e in &outcome.log {
            let _ = writeln!(text, "{},{},{:.8}", e.epoch, e.phase, e.mean_loss);
        }
        write_text(&log, &text)?;
        st.produced(&ckpt)?;
        st.produced(&log)?;
    }
    Ok(())
}

fn load_model(st: &mut Stage<'_>, variant: Variant) -> Result<DcnModel, Failure> {
    let p = st.artifact(&format!("train/{}.ckpt", variant.name()))?;
    Ok(load_checkpoint(p)?)
}

/// Annotation-level design matrix from comment features, standardized on
/// the training annotations.
fn annotation_design(
    features: &FeatureMatrix,
    train_rows: &[StigmaAnnotation],
    test_rows: &[StigmaAnnotation],
) -> Result<(Array2<f64>, Array2<f64>), Failure> {
    let fit: Vec<String> = train_rows.iter().map(|a| a.comment_id.clone()).collect();
    let z = standardize(features, &fit)?;
    let keys = |rows: &[StigmaAnnotation]| rows.iter().map(|a| a.comment_id.clone()).collect::<Vec<_>>();
    Ok((z.select_rows(&keys(train_rows))?, z.select_rows(&keys(test_rows))?))
}

fn with_demographics(
    x: Array2<f64>,
    rows: &[StigmaAnnotation],
    clean: &CleanDataset,
    scaler: &GroupScaler,
) -> Array2<f64> {
    let g = Array2::from_shape_fn((rows.len(), 5), |(i, j)| scaler.transform(&clean.workers[&rows[i].worker_id])[j]);
    ndarray::concatenate(Axis(1), &[x.view(), g.view()]).expect("same row count")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn eval_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let split = load_split_map(st)?;
    let (train_rows, test_rows) = partition(&clean, &split)?;
    if test_rows.is_empty() {
        return Err(Failure::data("no test annotations"));
    }
    let y_train: Vec<bool> = train_rows.iter().map(|a| a.label).collect();
    let y_test: Vec<bool> = test_rows.iter().map(|a| a.label).collect();
    let threshold = st.cfg().eval.threshold;
    let c = st.cfg().eval.l2_c;
    let mut rows: Vec<(String, Metrics)> = Vec::new();

    let mfc = MostFrequentClass::fit(&y_train)?;
    rows.push(("most_frequent_class".into(), classification_metrics(&mfc.scores(y_test.len()), &y_test, threshold)?));

    let scaler = fit_scaler(&clean, &train_rows)?;
    let uni = st.artifact("features/annotated_unigrams.csv")?;
    let (xtr, xte) = annotation_design(&load_feature_matrix(uni)?, &train_rows, &test_rows)?;
    let lr = LogisticRegression::fit(xtr.view(), &y_train, c)?;
    // stands in for the tree ensemble over the same unigram features
    rows.push(("unigram_logreg".into(), classification_metrics(&lr.predict_proba(xte.view())?, &y_test, threshold)?));
    if st.out.join("features/annotated_dictionary.csv").is_file() {
        let dict = st.artifact("features/annotated_dictionary.csv")?;
        let (xtr, xte) = annotation_design(&load_feature_matrix(dict)?, &train_rows, &test_rows)?;
        let lr = LogisticRegression::fit(xtr.view(), &y_train, c)?;
        rows.push((
            "dictionary_logreg".into(),
            classification_metrics(&lr.predict_proba(xte.view())?, &y_test, threshold)?,
        ));
        let xtr = with_demographics(xtr, &train_rows, &clean, &scaler);
        let xte = with_demographics(xte, &test_rows, &clean, &scaler);
        let lr = LogisticRegression::fit(xtr.view(), &y_train, c)?;
        rows.push((
            "dictionary_demographics_logreg".into(),
            classification_metrics(&lr.predict_proba(xte.view())?, &y_test, threshold)?,
        ));
    }

    let emb = load_embedding_table(st)?;
    for variant in st.cfg().train.variants.clone() {
        let model = load_model(st, variant)?;
        let examples = build_examples(&test_rows, &clean.workers, &emb, model.worker_ids(), &model.scaler)?;
        let scores = model.predict_examples(&examples)?;
        rows.push((format!("dcn_{}", variant.name()), classification_metrics(&scores, &y_test, threshold)?));
    }

    let out = st.output_path("eval/metrics.csv")?;
    let mut text = String::from("model,accuracy,f1,auc\n");
    for (name, m) in &rows {
        let _ = writeln!(text, "{name},{:.4},{},{}", m.accuracy, fmt_opt(m.f1), fmt_opt(m.auc));
    }
    write_text(&out, &text)?;
    st.produced(&out)
}

/// Comment ids judged by juries: the wild sample when configured, else the
/// held-out annotated comments.
fn jury_comments(st: &mut Stage<'_>) -> Result<Vec<String>, Failure> {
    let mut ids: Vec<String> =
        match st.optional_input("wild_comments", st.cfg().paths.wild_comments.clone().as_ref())? {
            Some(p) => load_texts(&p)?.into_iter().map(|c| c.id).collect(),
            None => load_split_map(st)?.into_iter().filter(|(_, s)| *s == Side::Test).map(|(id, _)| id).collect(),
        };
    if let Some(n) = st.cfg().jury.max_comments {
        ids.truncate(n);
    }
    if ids.is_empty() {
        return Err(Failure::data("no comments for the juries"));
    }
    Ok(ids)
}

fn sweep_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let model = load_model(st, st.cfg().jury.model)?;
    let emb = load_embedding_table(st)?;
    let comments = jury_comments(st)?;
    let config = st.cfg().jury.jury_config(st.seed("jury"));
    let jurors = DcnJurors { model: &model, embeddings: &emb };
    let workers = clean.worker_list();
    let tables = sweep_attributes(&jurors, &comments, &workers, &st.cfg().jury.attributes, &config)?;
    let out = st.output_path("jury/sweep.csv")?;
    write_sweep(&out, &tables)?;
    st.produced(&out)
}

fn wild_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let model = load_model(st, st.cfg().jury.model)?;
    let emb = load_embedding_table(st)?;
    let comments = jury_comments(st)?;
    let config = st.cfg().jury.jury_config(st.seed("jury"));
    let workers = clean.worker_list();
    let pool = StratifiedPool::new(&workers, st.cfg().wild.attribute);
    let jurors = DcnJurors { model: &model, embeddings: &emb };
    let labels = label_in_wild(&jurors, &comments, &pool, st.cfg().wild.threshold, &config)?;
    let out = st.output_path("jury/wild_labels.csv")?;
    write_wild_labels(&out, &labels)?;
    st.produced(&out)
}

fn dla_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let lp = st.artifact("jury/wild_labels.csv")?;
    let labels = load_wild_labels(lp)?;
    let a: BTreeMap<String, bool> = labels.iter().map(|l| (l.comment_id.clone(), l.label_a)).collect();
    let b: BTreeMap<String, bool> = labels.iter().map(|l| (l.comment_id.clone(), l.label_b)).collect();
    let sets = agree_disagree_labels(&a, &b)?;
    let q = st.cfg().dla.q;
    let mut summary = BTreeMap::new();
    for family in ["unigrams", "dictionary"] {
        let rel = format!("features/wild_{family}.csv");
        if !st.out.join(&rel).is_file() {
            if family == "unigrams" {
                return Err(Failure::data(format!("missing input {}; run featurize", st.out.join(&rel).display())));
            }
            continue;
        }
        let features = load_feature_matrix(st.artifact(&rel)?)?;
        for (name, set) in [("agree", &sets.agree), ("disagree", &sets.disagree)] {
            let n1 = set.labels.iter().filter(|&&l| l).count();
            let key = format!("{name}_{family}");
            if n1 == 0 || n1 == set.labels.len() {
                // a one-class set carries no contrast to analyze
                summary.insert(key, serde_json::json!({ "comments": set.ids.len(), "skipped": "single class" }));
                continue;
            }
            let z = standardize(&features.subset(&set.ids)?, &set.ids)?;
            let report = dla(&z, &set.labels, q)?;
            let full = st.output_path(&format!("dla/{key}.csv"))?;
            report.write_csv(&full, false)?;
            let sig = st.output_path(&format!("dla/{key}_significant.csv"))?;
            report.write_csv(&sig, true)?;
            summary.insert(
                key,
                serde_json::json!({
                    "comments": set.ids.len(),
                    "positive": n1,
                    "significant": report.significant().count(),
                    "failed_features": report.failures.len(),
                }),
            );
            st.produced(&full)?;
            st.produced(&sig)?;
        }
    }
    let p = st.output_path("dla/summary.json")?;
    write_json(&p, &summary)?;
    st.produced(&p)
}

fn agreement_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let clean = load_clean(st)?;
    let mut alpha = String::from("group,value,annotations,alpha\n");
    let fmt_alpha = |r: stigma_core::Result<f64>| r.map(|a| format!("{a:.4}")).unwrap_or_default();
    let _ = writeln!(alpha, "all,,{},{}", clean.annotations.len(), fmt_alpha(krippendorff_alpha(&clean.annotations)));
    let mut tests = String::from("attribute,rate_1,rate_0,n_1,n_0,t,df,p\n");
    for attr in WorkerAttribute::ALL {
        for value in [true, false] {
            let sub = clean.subgroup(attr, value);
            let _ = writeln!(alpha, "{attr},{},{},{}", u8::from(value), sub.len(), fmt_alpha(krippendorff_alpha(&sub)));
        }
        match group_rate_ttest(&clean, attr) {
            Ok(t) => {
                let _ = writeln!(
                    tests,
                    "{attr},{:.4},{:.4},{},{},{:.4},{:.2},{:.3e}",
                    t.rate_1, t.rate_0, t.n_1, t.n_0, t.t, t.df, t.p
                );
            }
            Err(_) => {
                let _ = writeln!(tests, "{attr},,,,,,,");
            }
        }
    }
    let ap = st.output_path("agreement/alpha.csv")?;
    write_text(&ap, &alpha)?;
    let tp = st.output_path("agreement/group_tests.csv")?;
    write_text(&tp, &tests)?;
    st.produced(&ap)?;
    st.produced(&tp)?;
    if let Some(cp) = st.optional_input("coder_labels", st.cfg().paths.coder_labels.clone().as_ref())? {
        let mut r = csv::Reader::from_path(&cp).map_err(|e| Failure::data(format!("{}: {e}", cp.display())))?;
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        for (i, rec) in r.deserialize::<(String, String, String)>().enumerate() {
            let (_, x, y) = rec.map_err(|e| Failure::data(format!("{} row {}: {e}", cp.display(), i + 1)))?;
            la.push(parse_flag(&x, "coder_a")?);
            lb.push(parse_flag(&y, "coder_b")?);
        }
        let k = cohen_kappa(&la, &lb)?;
        let kappa = match k.kappa {
            KappaValue::Defined(v) => format!("{v:.4}"),
            KappaValue::Degenerate => "degenerate".into(),
        };
        let kp = st.output_path("agreement/kappa.csv")?;
        write_text(&kp, &format!("items,agreement_rate,kappa\n{},{:.4},{kappa}\n", la.len(), k.agreement_rate))?;
        st.produced(&kp)?;
    }
    Ok(())
}

fn wild_id(i: usize) -> String {
    format!("x{i:05}")
}

/// Synthetic inputs under `<out>/synth` plus `pipeline.toml` referencing
/// them, so later stages run with `--config <out>/synth/pipeline.toml`.
fn synth_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let mut params = st.cfg().synth.population.clone();
    params.seed = st.seed("synth");
    let pop = synthesize_population(&params)?;
    let text = st.cfg().synth.text.clone();
    let (comments, mut table) = synthesize_comments(&pop.latent, &text, st.seed("synth/text"))?;

    let n_wild = st.cfg().synth.n_wild;
    let wild_latent: BTreeMap<String, f64> = {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = stigma_core::rng::stream(st.seed("synth/wild"));
        (0..n_wild).map(|i| (wild_id(i), StandardNormal.sample(&mut rng))).collect()
    };
    let (wild, wild_table) = synthesize_comments(&wild_latent, &text, st.seed("synth/wild_text"))?;
    for id in wild_table.ids() {
        table.insert(id.clone(), wild_table.get(id).expect("listed id"))?;
    }

    let files: Vec<(&str, PathBuf)> = vec![
        ("workers", st.output_path("synth/workers.csv")?),
        ("annotations", st.output_path("synth/annotations.csv")?),
        ("comments", st.output_path("synth/comments.jsonl")?),
        ("wild_comments", st.output_path("synth/wild_comments.jsonl")?),
        ("embeddings", st.output_path("synth/embeddings.embtab")?),
        ("dictionary", st.output_path("synth/dictionary.txt")?),
        ("truth", st.output_path("synth/truth.json")?),
    ];
    write_workers(&files[0].1, &pop.workers)?;
    write_annotations(&files[1].1, &pop.annotations)?;
    write_comments(&files[2].1, &comments)?;
    write_comments(&files[3].1, &wild)?;
    write_embeddings(&files[4].1, &table, EmbeddingFormat::Embtab)?;
    write_text(&files[5].1, &synthetic_dictionary().to_text())?;
    write_manifest(&files[6].1, &params, &pop)?;

    // the population seed is rederived from master_seed on every run
    let mut cfg = st.cfg().clone();
    cfg.paths = Default::default();
    cfg.paths.out = Some("..".into());
    cfg.paths.workers = Some("workers.csv".into());
    cfg.paths.annotations = Some("annotations.csv".into());
    cfg.paths.comments = Some("comments.jsonl".into());
    cfg.paths.wild_comments = Some("wild_comments.jsonl".into());
    cfg.paths.embeddings = Some("embeddings.embtab".into());
    cfg.paths.dictionary = Some("dictionary.txt".into());
    let toml_text = toml::to_string(&cfg).map_err(|e| Failure::data(e.to_string()))?;
    let cp = st.output_path("synth/pipeline.toml")?;
    write_text(&cp, &toml_text)?;
    for (_, p) in &files {
        st.produced(p)?;
    }
    st.produced(&cp)?;
    debug_assert_eq!(comment_id(0), "c00000");
    Ok(())
}

fn report_stage(st: &mut Stage<'_>) -> Result<(), Failure> {
    let mut md = String::from("# Pipeline report\n");
    let sections = [
        ("Quality-control funnel", "clean/funnel.csv"),
        ("Held-out metrics", "eval/metrics.csv"),
        ("Label agreement", "agreement/alpha.csv"),
        ("Subgroup label rates", "agreement/group_tests.csv"),
    ];
    let mut found = 0;
    for (title, rel) in sections {
        let p = st.out.join(rel);
        if !p.is_file() {
            continue;
        }
        st.rec.input(rel, &p)?;
        found += 1;
        let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let _ = write!(md, "\n## {title}\n\n```\n{text}```\n");
    }
    let sweep = st.out.join("jury/sweep.csv");
    if sweep.is_file() {
        st.rec.input("jury/sweep.csv", &sweep)?;
        found += 1;
        let text = std::fs::read_to_string(&sweep).map_err(|e| io_err(&sweep, e))?;
        let _ = write!(md, "\n## Jury sweep at threshold 0.50\n\n```\nattribute,k,percent_stigmatizing\n");
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 4 && f[2] == "0.50" {
                let _ = writeln!(md, "{},{},{}", f[0], f[1], f[3]);
            }
        }
        md.push_str("```\n");
    }
    let dla_summary = st.out.join("dla/summary.json");
    if dla_summary.is_file() {
        st.rec.input("dla/summary.json", &dla_summary)?;
        found += 1;
        let text = std::fs::read_to_string(&dla_summary).map_err(|e| io_err(&dla_summary, e))?;
        let _ = write!(md, "\n## Differential language analysis\n\n```\n{text}```\n");
    }
    if found == 0 {
        return Err(Failure::data(format!("nothing to report in {}", st.out.display())));
    }
    let p = st.output_path("report.md")?;
    write_text(&p, &md)?;
    st.produced(&p)
}
