use std::path::{Path, PathBuf};

use stigma_cli::{run, EXIT_CONFIG, EXIT_DATA, EXIT_OK};

const SMALL: &str = r#"
master_seed = 11
[paths]
out = "run"
[train]
deep_widths = [8, 8]
cross_layers = 1
lr = 0.003
warm_epochs = 1
frozen_epochs = 2
[jury]
n_juries = 30
max_comments = 25
[synth]
n_wild = 120
[synth.population]
n_workers = 80
n_comments = 300
annotations_per_worker = 15
"#;

const STAGES: [&str; 10] =
    ["clean", "split", "featurize", "train", "eval", "agreement", "jury-sweep", "wild-label", "dla", "report"];

fn stigma(args: &[&str]) -> i32 {
    run(std::iter::once("stigma").chain(args.iter().copied()))
}

fn setup(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    let cfg = dir.join("small.toml");
    assert_eq!(stigma(&["--config", cfg.to_str().unwrap(), "synth"]), EXIT_OK);
    dir.join("run/synth/pipeline.toml")
}

fn run_all(config: &Path) {
    for stage in STAGES {
        assert_eq!(stigma(&["--config", config.to_str().unwrap(), stage]), EXIT_OK, "stage {stage}");
    }
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    run_all(&config);
    let out = dir.path().join("run");

    let metrics = read(out.join("eval/metrics.csv"));
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("model,accuracy,f1,auc"));
    let models: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    for m in
        ["most_frequent_class", "unigram_logreg", "dictionary_logreg", "dcn_content", "dcn_content_group", "dcn_full"]
    {
        assert!(models.contains(&m), "{m} missing from {models:?}");
    }

    let funnel = read(out.join("clean/funnel.csv"));
    assert!(funnel.starts_with("stage,workers,comments,annotations\ninput,"));

    let sweep = read(out.join("jury/sweep.csv"));
    assert!(sweep.starts_with("attribute,k,threshold,percent_stigmatizing\n"));
    for line in sweep.lines().skip(1).filter(|l| !l.ends_with(',')) {
        let pct: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&pct), "{line}");
    }

    assert!(read(out.join("jury/wild_labels.csv")).lines().count() == 26);
    assert!(out.join("dla/summary.json").is_file());
    assert!(read(out.join("report.md")).contains("## Held-out metrics"));

    for stage in STAGES.iter().chain(&["synth"]) {
        let m: serde_json::Value = serde_json::from_str(&read(out.join(format!("manifests/{stage}.json")))).unwrap();
        assert_eq!(m["stage"], *stage);
        assert!(m["config"]["paths"]["out"].is_null());
        for (_, h) in m["outputs"].as_object().unwrap() {
            assert_eq!(h.as_str().unwrap().len(), 64);
        }
    }
}

#[test]
fn reruns_reproduce_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = setup(a.path());
    let cb = setup(b.path());
    for stage in ["clean", "split", "featurize", "train"] {
        assert_eq!(stigma(&["--config", ca.to_str().unwrap(), stage]), EXIT_OK);
        assert_eq!(stigma(&["--config", cb.to_str().unwrap(), "--threads", "3", stage]), EXIT_OK);
    }
    for rel in [
        "synth/embeddings.embtab",
        "split/split.csv",
        "features/annotated_unigrams.csv",
        "train/full.ckpt",
        "manifests/train.json",
    ] {
        assert_eq!(
            std::fs::read(a.path().join("run").join(rel)).unwrap(),
            std::fs::read(b.path().join("run").join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn seed_flag_changes_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let cfg = dir.path().join("c.toml");
    let cfg = cfg.to_str().unwrap();
    let first = dir.path().join("one");
    let second = dir.path().join("two");
    assert_eq!(stigma(&["--config", cfg, "--out", first.to_str().unwrap(), "synth"]), EXIT_OK);
    assert_eq!(stigma(&["--config", cfg, "--out", second.to_str().unwrap(), "--seed", "12", "synth"]), EXIT_OK);
    assert_ne!(read(first.join("synth/annotations.csv")), read(second.join("synth/annotations.csv")));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(stigma(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(stigma(&[]), EXIT_CONFIG);
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(stigma(&["--out", out.to_str().unwrap(), "--set", "split.train_frac=1.5", "synth"]), EXIT_CONFIG);
    assert_eq!(stigma(&["--out", out.to_str().unwrap(), "--set", "nosuch.key=1", "synth"]), EXIT_CONFIG);
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[paths]\nout = \"o\"\nworkers = \"absent_workers.csv\"\nannotations = \"a.csv\"\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_stigma");
    let output = std::process::Command::new(bin).args(["--config", cfg.to_str().unwrap(), "clean"]).output().unwrap();
    assert_eq!(output.status.code(), Some(EXIT_DATA));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("absent_workers.csv"), "{stderr}");
}

#[test]
fn later_stage_without_earlier_artifacts_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    assert_eq!(stigma(&["--config", config.to_str().unwrap(), "train"]), EXIT_DATA);
}

#[test]
fn corpus_stages_and_coder_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bodies = [
        "I smoked pot last night",
        "cooking soup in a big pot",
        "nothing relevant here",
        "he relapsed on heroin again",
        "{not json",
        "junkies everywhere downtown",
        "weather is fine",
        "traffic was slow",
        "new phone arrived",
        "the game went long",
        "lunch at noon",
        "quiet evening",
    ];
    let mut corpus = String::new();
    for (i, b) in bodies.iter().enumerate() {
        if b.starts_with('{') {
            corpus.push_str(b);
            corpus.push('\n');
        } else {
            corpus.push_str(&serde_json::json!({"id": format!("r{i}"), "body": b}).to_string());
            corpus.push('\n');
        }
    }
    std::fs::write(d.join("corpus.jsonl"), corpus).unwrap();
    std::fs::write(d.join("dis.csv"), "comment_id,keywords,about_substances\na,pot,1\nb,pot,0\nc,pot,0\nd,heroin,1\n")
        .unwrap();
    std::fs::write(d.join("coders.csv"), "comment_id,coder_a,coder_b\na,1,1\nb,0,0\nc,1,0\nd,0,0\n").unwrap();
    std::fs::write(
        d.join("c.toml"),
        "[paths]\nout = \"o\"\ncorpus = \"corpus.jsonl\"\ndisambiguation = \"dis.csv\"\ncoder_labels = \"coders.csv\"\n[filter]\nsample_n = 2\n",
    )
    .unwrap();
    let cfg = d.join("c.toml");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(stigma(&["--config", cfg, "filter-corpus"]), EXIT_OK);
    let summary: serde_json::Value = serde_json::from_str(&read(d.join("o/corpus/filter_summary.json"))).unwrap();
    assert_eq!(summary["input_comments"], 11);
    assert_eq!(summary["malformed_lines"], 1);
    assert_eq!(summary["sampled"], 2);
    assert_eq!(read(d.join("o/corpus/sample.jsonl")).lines().count(), 2);

    assert_eq!(stigma(&["--config", cfg, "disambiguate"]), EXIT_OK);
    let dis = read(d.join("o/corpus/disambiguation.csv"));
    let pot = dis.lines().find(|l| l.starts_with("pot,")).unwrap();
    assert!(pot.starts_with("pot,3,1,0.3333,0,"), "{pot}");

    // agreement needs the clean stage; the kappa file alone is checked here
    let synth_cfg = setup(d);
    let text = read(synth_cfg.clone()) + "";
    let with_coders = text.replace("[paths]\n", &format!("[paths]\ncoder_labels = {:?}\n", d.join("coders.csv")));
    std::fs::write(&synth_cfg, with_coders).unwrap();
    let sc = synth_cfg.to_str().unwrap();
    assert_eq!(stigma(&["--config", sc, "clean"]), EXIT_OK);
    assert_eq!(stigma(&["--config", sc, "agreement"]), EXIT_OK);
    let kappa = read(d.join("run/agreement/kappa.csv"));
    // po = 0.75, pe = 0.5*0.25 + 0.5*0.75 = 0.5
    assert_eq!(kappa, "items,agreement_rate,kappa\n4,0.7500,0.5000\n");
}
