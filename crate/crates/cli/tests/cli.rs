use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn relex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relex"))
        .args(args)
        .env("RELEX_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/semeval_sample.txt")
}

fn records(ids: &[usize]) -> String {
    let text = fs::read_to_string(sample()).unwrap();
    let blocks: Vec<&str> = text.split("\n\n").filter(|b| !b.trim().is_empty()).collect();
    ids.iter()
        .map(|&i| format!("{}\n\n", blocks[i - 1].trim()))
        .collect()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_schema(name: &str, doc: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let schema = read_json(&path);
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{name}: {msgs:?}");
    };
}

const TINY: &str = "d_w = 8\nr = 2\nd_h = 6\nd_p = 4\nd_a = 4\nK = 2\n\
dropout_word = 0.0\ndropout_lstm = 0.0\ndropout_attention = 0.0\nmax_len = 90\ndev_size = 0\n";

/// The tiny settings with the `key = value` lines of `extra` replacing
/// their defaults.
fn tiny_text(extra: &str) -> String {
    let key = |l: &str| l.split('=').next().unwrap().trim().to_string();
    let overridden: Vec<String> = extra.lines().map(key).collect();
    let mut out: String = TINY
        .lines()
        .filter(|l| !overridden.contains(&key(l)))
        .map(|l| format!("{l}\n"))
        .collect();
    out.push_str(extra);
    out
}

fn tiny_config(dir: &Path, extra: &str) -> PathBuf {
    write(dir, "tiny.cfg", &tiny_text(extra))
}

/// A three-word-per-line vector file covering a few sample tokens.
fn vectors(dir: &Path, d: usize) -> PathBuf {
    let mut body = String::new();
    for (i, w) in ["the", "of", "a", "cradle", "author"].iter().enumerate() {
        let v: Vec<String> = (0..d)
            .map(|j| format!("{:.3}", ((i * d + j) as f64 * 0.37).sin() * 0.1))
            .collect();
        body.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    write(dir, "vectors.txt", &body)
}

/// Trains on three sentences until they are memorized; returns the run
/// directory and the sentence file.
fn memorized(dir: &Path) -> (PathBuf, PathBuf) {
    let data = write(dir, "three.txt", &records(&[1, 3, 5]));
    let cfg = tiny_config(dir, "batch_size = 3\nmax_epochs = 400\npatience = 400\n");
    let out = dir.join("mem");
    let o = relex(&[
        "train",
        "--data",
        s(&data),
        "--dev",
        s(&data),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--seed",
        "7",
        "--precision",
        "64",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (out, data)
}

#[test]
fn train_writes_checkpoint_and_report() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "max_epochs = 3\ndev_size = 5\n");
    let emb = vectors(dir.path(), 8);
    let out = dir.path().join("run1");
    let o = relex(&[
        "train",
        "--data",
        s(&sample()),
        "--embeddings",
        s(&emb),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("model.ckpt").is_file());
    let report = read_json(&out.join("report.json"));
    assert_schema("report.schema.json", &report);
    assert_eq!(report["epochs"].as_array().unwrap().len(), 3);
    assert_eq!(report["selected_on_train"], false);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn missing_embeddings_exit_2_names_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no_such_vectors.txt");
    let o = relex(&[
        "train",
        "--data",
        s(&sample()),
        "--embeddings",
        s(&missing),
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_vectors.txt"), "{}", stderr(&o));
}

#[test]
fn missing_data_exit_2() {
    let dir = TempDir::new().unwrap();
    let o = relex(&[
        "train",
        "--data",
        "/nonexistent/train.txt",
        "--out",
        s(&dir.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/train.txt"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "d_h = 0\n");
    let o = relex(&[
        "train",
        "--data",
        s(&sample()),
        "--out",
        s(&dir.path().join("r")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn config_overrides_show_in_report() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "d_h = 5\nd_a = 3\nmax_epochs = 1\n");
    let out = dir.path().join("r");
    let o = relex(&[
        "train",
        "--data",
        s(&sample()),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["config"]["d_h"], 5);
    assert_eq!(r["config"]["d_a"], 3);
    assert_eq!(r["config"]["d_w"], 8);
    assert_eq!(r["config"]["k"], 2);
    assert_eq!(r["precision"], 32);
    assert_eq!(r["selected_on_train"], true);
}

#[test]
fn eval_of_memorized_sentences_scores_one() {
    let dir = TempDir::new().unwrap();
    let (run, data) = memorized(dir.path());
    let out = dir.path().join("eval");
    let o = relex(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--test",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let score = read_json(&out.join("score.json"));
    assert_schema("score.schema.json", &score);
    assert_eq!(score["macroF1"], 1.0);
    assert_eq!(score["examples"], 3);
    let preds = fs::read_to_string(out.join("predictions.txt")).unwrap();
    assert_eq!(
        preds,
        "1\tComponent-Whole(e2,e1)\n3\tInstrument-Agency(e2,e1)\n5\tMember-Collection(e1,e2)\n"
    );
}

#[test]
fn predictions_have_one_line_per_example() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "max_epochs = 1\n");
    let run = dir.path().join("r");
    let o = relex(&[
        "train",
        "--data",
        s(&sample()),
        "--out",
        s(&run),
        "--config",
        s(&cfg),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = run.join("model.ckpt");
    let out = dir.path().join("e");
    let o = relex(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--test",
        s(&sample()),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<String> = fs::read_to_string(out.join("predictions.txt"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 20);
    for (i, l) in lines.iter().enumerate() {
        assert!(l.starts_with(&format!("{}\t", i + 1)), "{l}");
    }

    // Unlabeled input goes through `predict`.
    let unlabeled: String = fs::read_to_string(sample())
        .unwrap()
        .split("\n\n")
        .filter(|b| !b.trim().is_empty())
        .map(|b| format!("{}\n\n", b.lines().next().unwrap()))
        .collect();
    let u = write(dir.path(), "unlabeled.txt", &unlabeled);
    let out2 = dir.path().join("p");
    let o = relex(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--test",
        s(&u),
        "--out",
        s(&out2),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p2 = fs::read_to_string(out2.join("predictions.txt")).unwrap();
    assert_eq!(p2.lines().count(), 20);
    assert_eq!(p2, fs::read_to_string(out.join("predictions.txt")).unwrap());
}

#[test]
fn incompatible_dims_exit_3() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "max_epochs = 1\n");
    let run = dir.path().join("r");
    assert!(relex(&[
        "train",
        "--data",
        s(&sample()),
        "--out",
        s(&run),
        "--config",
        s(&cfg)
    ])
    .status
    .success());
    let other = write(dir.path(), "other.cfg", &tiny_text("d_h = 7\n"));
    let o = relex(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--test",
        s(&sample()),
        "--out",
        s(&dir.path().join("e")),
        "--config",
        s(&other),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let same = dir.path().join("tiny.cfg");
    let o = relex(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--test",
        s(&sample()),
        "--out",
        s(&dir.path().join("e")),
        "--config",
        s(&same),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn corrupt_checkpoint_is_an_error() {
    let dir = TempDir::new().unwrap();
    let ckpt = write(dir.path(), "model.ckpt", "not a checkpoint");
    let o = relex(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--test",
        s(&sample()),
        "--out",
        s(&dir.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn visualize_exports_attention_data() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "max_epochs = 1\n");
    let run = dir.path().join("r");
    assert!(relex(&[
        "train",
        "--data",
        s(&sample()),
        "--out",
        s(&run),
        "--config",
        s(&cfg)
    ])
    .status
    .success());
    let mut text = records(&[2]);
    text.push_str("99\t\"No entity markers in this one.\"\nOther\nComment:\n\n");
    let input = write(dir.path(), "vis.txt", &text);
    let out = dir.path().join("vis");
    let o = relex(&[
        "visualize",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--test",
        s(&input),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let sa = read_json(&out.join("selfattn.json"));
    assert_schema("selfattn.schema.json", &sa);
    let sent = &sa["sentences"][0];
    let n = sent["tokens"].as_array().unwrap().len();
    let heads = sent["heads"].as_array().unwrap();
    assert_eq!(heads.len(), 2);
    for h in heads {
        let rows = h.as_array().unwrap();
        assert_eq!(rows.len(), n);
        assert!(rows.iter().all(|r| r.as_array().unwrap().len() == n));
    }
    assert_eq!(sa["errors"].as_array().unwrap().len(), 1);

    let alpha = read_json(&out.join("alpha.json"));
    assert_schema("alpha.schema.json", &alpha);
    for sent in alpha["sentences"].as_array().unwrap() {
        let total: f64 = sent["alpha"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    let types = read_json(&out.join("types.json"));
    assert_schema("types.schema.json", &types);

    // Every sentence failing is an error.
    let bad = write(
        dir.path(),
        "bad.txt",
        "7\t\"nothing tagged\"\nOther\nComment:\n\n",
    );
    let o = relex(&[
        "visualize",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--test",
        s(&bad),
        "--out",
        s(&out),
    ]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn type_report_lists_min_50_entities() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(dir.path(), "max_epochs = 1\n");
    let run = dir.path().join("r");
    assert!(relex(&[
        "train",
        "--data",
        s(&sample()),
        "--out",
        s(&run),
        "--config",
        s(&cfg)
    ])
    .status
    .success());
    let ckpt = run.join("model.ckpt");

    // The 20 sample sentences: fewer than 50 distinct entity tokens.
    let out = dir.path().join("small");
    assert!(relex(&[
        "visualize",
        "--checkpoint",
        s(&ckpt),
        "--test",
        s(&sample()),
        "--out",
        s(&out)
    ])
    .status
    .success());
    let types = read_json(&out.join("types.json"));
    let mut distinct: Vec<String> = types["entities"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["token"].as_str().unwrap().to_string())
        .collect();
    distinct.sort();
    distinct.dedup();
    assert!(distinct.len() < 50);
    for t in types["types"].as_array().unwrap() {
        assert_eq!(t["top_entities"].as_array().unwrap().len(), distinct.len());
    }

    // Sixty sentences with distinct entity words: truncated to 50.
    let mut text = String::new();
    for i in 0..60 {
        text.push_str(&format!(
            "{}\t\"The <e1>thing{i}</e1> near the <e2>stuff{i}</e2> .\"\nOther\nComment:\n\n",
            i + 1
        ));
    }
    let many = write(dir.path(), "many.txt", &text);
    let out = dir.path().join("many");
    assert!(relex(&[
        "visualize",
        "--checkpoint",
        s(&ckpt),
        "--test",
        s(&many),
        "--out",
        s(&out)
    ])
    .status
    .success());
    let types = read_json(&out.join("types.json"));
    assert_schema("types.schema.json", &types);
    for t in types["types"].as_array().unwrap() {
        assert_eq!(t["top_entities"].as_array().unwrap().len(), 50);
    }
}

#[test]
fn check_passes_and_writes_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("check.json");
    let o = relex(&["check", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for g in [
        "word",
        "pos",
        "selfattn",
        "lstm.fwd",
        "lstm.bwd",
        "entity.w_h",
        "entity.w_e",
        "entity.v",
        "let.types",
        "output.w",
        "output.b",
    ] {
        assert!(stdout.lines().any(|l| l.starts_with(g)), "{g} missing");
    }
    let report = read_json(&out);
    assert_schema("check.schema.json", &report);
    assert_eq!(report["tol"], 1e-4);
}

#[test]
fn check_catches_corrupted_rule() {
    let o = relex(&["check", "--inject-fault", "tanh"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let o = relex(&["check", "--inject-fault", "sigmoid"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn check_tolerance_flag_loosens() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("check.json");
    let o = relex(&["check", "--tol", "1e-2", "--out", s(&out)]);
    assert!(o.status.success());
    let r = read_json(&out);
    assert_eq!(r["tol"], 1e-2);
    let worst = r["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g["max_rel_error"].as_f64().unwrap())
        .fold(0.0, f64::max);
    // A threshold below the observed error fails, one above it passes.
    let tight = format!("{:e}", worst / 2.0);
    let loose = format!("{:e}", worst * 2.0);
    assert!(!relex(&["check", "--tol", &tight]).status.success());
    assert!(relex(&["check", "--tol", &loose]).status.success());
}

#[test]
fn runs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = tiny_config(
        dir.path(),
        "max_epochs = 2\ndev_size = 4\ndropout_word = 0.3\ndropout_lstm = 0.3\n",
    );
    let emb = vectors(dir.path(), 8);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = relex(&[
            "train",
            "--data",
            s(&sample()),
            "--embeddings",
            s(&emb),
            "--out",
            s(&out),
            "--config",
            s(&cfg),
            "--seed",
            "7",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(
        fs::read(a.join("model.ckpt")).unwrap(),
        fs::read(b.join("model.ckpt")).unwrap()
    );
    let strip = |p: &Path| {
        let mut v = read_json(&p.join("report.json"));
        for e in v["epochs"].as_array_mut().unwrap() {
            e["wall_secs"] = Value::from(0.0);
        }
        v
    };
    assert_eq!(strip(&a), strip(&b));

    let vis = |run: &Path, name: &str| {
        let out = dir.path().join(name);
        assert!(relex(&[
            "visualize",
            "--checkpoint",
            s(&run.join("model.ckpt")),
            "--test",
            s(&sample()),
            "--out",
            s(&out)
        ])
        .status
        .success());
        fs::read(out.join("types.json")).unwrap()
    };
    assert_eq!(vis(&a, "va"), vis(&b, "vb"));
}
