//! Pipeline configuration: one TOML file, `--set section.key=value`
//! overrides on top, then typed validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stigma_core::annotstore::synth::{SynthParams, TextParams};
use stigma_core::annotstore::WorkerAttribute;
use stigma_core::jury::{JuryConfig, WILD_THRESHOLD};
use stigma_core::model::{AdamConfig, DcnConfig, InputMask, DEFAULT_L2_C};

use crate::Failure;

/// Input locations. Relative paths resolve against the directory of the
/// config file (or the working directory without one).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: Option<PathBuf>,
    /// Raw comment stream for `filter-corpus`.
    pub corpus: Option<PathBuf>,
    /// Keyword lexicon; the built-in list when absent.
    pub keywords: Option<PathBuf>,
    /// Rated disambiguation sample (comment_id, keywords, about_substances).
    pub disambiguation: Option<PathBuf>,
    /// Texts of the annotated comments.
    pub comments: Option<PathBuf>,
    pub workers: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    /// Unannotated comments labelled by juries.
    pub wild_comments: Option<PathBuf>,
    /// Two-coder relevance labels (item_id, coder_a, coder_b).
    pub coder_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub sample_n: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection { sample_n: 10_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisambiguateSection {
    /// Keywords kept regardless of the majority rule.
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_frac: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_frac: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizeSection {
    pub min_doc_frac: f64,
}

impl Default for FeaturizeSection {
    fn default() -> Self {
        FeaturizeSection { min_doc_frac: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Content,
    ContentGroup,
    Full,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Content => "content",
            Variant::ContentGroup => "content_group",
            Variant::Full => "full",
        }
    }

    pub fn mask(self) -> InputMask {
        match self {
            Variant::Content => InputMask::CONTENT,
            Variant::ContentGroup => InputMask::CONTENT_GROUP,
            Variant::Full => InputMask::FULL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub cross_layers: usize,
    pub deep_widths: Vec<usize>,
    pub lr: f64,
    pub warm_epochs: usize,
    pub frozen_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub variants: Vec<Variant>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = DcnConfig::new(1, 1);
        TrainSection {
            cross_layers: d.cross_layers,
            deep_widths: d.deep_widths,
            lr: d.lr,
            warm_epochs: d.warm_epochs,
            frozen_epochs: d.frozen_epochs,
            batch_size: d.batch_size,
            adam: d.adam,
            variants: vec![Variant::Content, Variant::ContentGroup, Variant::Full],
        }
    }
}

impl TrainSection {
    pub fn dcn_config(&self, content_dim: usize, n_workers: usize, seed: u64, variant: Variant) -> DcnConfig {
        DcnConfig {
            cross_layers: self.cross_layers,
            deep_widths: self.deep_widths.clone(),
            lr: self.lr,
            warm_epochs: self.warm_epochs,
            frozen_epochs: self.frozen_epochs,
            batch_size: self.batch_size,
            seed,
            adam: self.adam,
            inputs: variant.mask(),
            ..DcnConfig::new(content_dim, n_workers)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    pub l2_c: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { threshold: 0.5, l2_c: DEFAULT_L2_C }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JurySection {
    pub jury_size: usize,
    pub majority_threshold: usize,
    pub n_juries: usize,
    pub verdict_thresholds: Vec<f64>,
    pub attributes: Vec<WorkerAttribute>,
    /// Checkpoint used as the juror model.
    pub model: Variant,
    /// Judge at most this many comments (first by id).
    pub max_comments: Option<usize>,
}

impl Default for JurySection {
    fn default() -> Self {
        let j = JuryConfig::default();
        JurySection {
            jury_size: j.jury_size,
            majority_threshold: j.majority_threshold,
            n_juries: j.n_juries,
            verdict_thresholds: j.verdict_thresholds,
            attributes: WorkerAttribute::ALL.to_vec(),
            model: Variant::Full,
            max_comments: None,
        }
    }
}

impl JurySection {
    pub fn jury_config(&self, master_seed: u64) -> JuryConfig {
        JuryConfig {
            jury_size: self.jury_size,
            majority_threshold: self.majority_threshold,
            n_juries: self.n_juries,
            verdict_thresholds: self.verdict_thresholds.clone(),
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WildSection {
    pub attribute: WorkerAttribute,
    pub threshold: f64,
}

impl Default for WildSection {
    fn default() -> Self {
        WildSection { attribute: WorkerAttribute::SubstanceUser, threshold: WILD_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlaSection {
    pub q: f64,
}

impl Default for DlaSection {
    fn default() -> Self {
        DlaSection { q: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub population: SynthParams,
    pub text: TextParams,
    pub n_wild: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { population: SynthParams::default(), text: TextParams::default(), n_wild: 10_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub master_seed: u64,
    pub paths: Paths,
    pub filter: FilterSection,
    pub disambiguate: DisambiguateSection,
    pub split: SplitSection,
    pub featurize: FeaturizeSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub jury: JurySection,
    pub wild: WildSection,
    pub dla: DlaSection,
    pub synth: SynthSection,
}

/// Configuration plus the directory relative input paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(self.config.paths.out.as_deref().unwrap_or(Path::new("out")))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words such as `full` or `substance_user` are taken as strings
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Apply one `section.key=value` override to a raw TOML tree.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::Config(format!("bad override key {key:?}")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table =
            entry.as_table_mut().ok_or_else(|| Failure::Config(format!("override {key:?}: {p} is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded, Failure> {
    let (mut root, base_dir) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?;
            let root: toml::Table =
                toml::from_str(&text).map_err(|e| Failure::Config(format!("config {}: {e}", p.display())))?;
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (root, if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir })
        }
        None => (toml::Table::new(), PathBuf::from(".")),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let config: PipelineConfig =
        toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| Failure::Config(e.to_string()))?;
    validate(&config)?;
    Ok(Loaded { config, base_dir })
}

fn validate(c: &PipelineConfig) -> Result<(), Failure> {
    let bad = |m: String| Err(Failure::Config(m));
    if !(c.split.train_frac > 0.0 && c.split.train_frac < 1.0) {
        return bad(format!("split.train_frac {} outside (0, 1)", c.split.train_frac));
    }
    if !(0.0..=1.0).contains(&c.featurize.min_doc_frac) {
        return bad("featurize.min_doc_frac outside [0, 1]".into());
    }
    if c.train.variants.is_empty() {
        return bad("train.variants is empty".into());
    }
    c.train.dcn_config(1, 1, 0, Variant::Full).validate().map_err(|e| Failure::Config(format!("train: {e}")))?;
    if !(c.eval.l2_c > 0.0) {
        return bad("eval.l2_c must be positive".into());
    }
    c.jury.jury_config(0).validate().map_err(|e| Failure::Config(format!("jury: {e}")))?;
    if !(0.5..=1.0).contains(&c.wild.threshold) {
        return bad("wild.threshold outside [0.5, 1]".into());
    }
    if !(c.dla.q > 0.0 && c.dla.q < 1.0) {
        return bad("dla.q outside (0, 1)".into());
    }
    c.synth.population.validate().map_err(|e| Failure::Config(format!("synth: {e}")))?;
    Ok(())
}
