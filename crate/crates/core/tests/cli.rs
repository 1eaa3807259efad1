use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use operand_qa::dataspace::{build_vocabulary, read_jsonl, read_tables, validate, Dataset, GeneratorConfig};
use operand_qa::evaluator::{parse_trace_text, score, MetricsReport, OracleAdapter, Trace};
use operand_qa::evaluator::predict_all;
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::opsolver::Operation;
use operand_qa::trainer::load_checkpoint;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_operand-qa"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let (code, stdout, stderr) = run(dir, args);
    assert_eq!(code, 0, "{args:?} failed:\n{stderr}");
    stdout
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn split(dir: &Path, name: &str) -> Dataset {
    Dataset {
        tables: read_tables(&dir.join("tables")).unwrap(),
        examples: read_jsonl(&dir.join(format!("{name}.jsonl"))).unwrap(),
    }
}

#[test]
fn gen_data_defaults_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "a"]);
    ok(d, &["gen-data", "--out", "b"]);
    ok(d, &["gen-data", "--out", "c", "--seed", "8"]);
    for (name, n) in [("train", 100), ("dev", 50), ("test", 50)] {
        let s = split(&d.join("a"), name);
        assert_eq!(s.examples.len(), n);
        validate(&s.examples, &s.tables).unwrap();
    }
    let a = files(&d.join("a"));
    let mut b = files(&d.join("b"));
    // the echoed config names its own output directory
    let ca = String::from_utf8(a[Path::new("config.toml")].clone()).unwrap();
    let cb = String::from_utf8(b.remove(Path::new("config.toml")).unwrap()).unwrap();
    assert_eq!(ca.replace("out = \"a\"", "out = \"b\""), cb);
    let mut a = a;
    a.remove(Path::new("config.toml"));
    assert_eq!(a, b);
    assert_ne!(files(&d.join("c"))[Path::new("train.jsonl")], a[Path::new("train.jsonl")]);

    // feeding the echo back reproduces the run
    ok(d, &["gen-data", "--config", "a/config.toml", "--out", "again"]);
    let mut again = files(&d.join("again"));
    again.remove(Path::new("config.toml"));
    assert_eq!(again, a);
}

#[test]
fn skewed_preset_matches_its_operation_mix() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "skew", "--preset", "wikiops-skew"]);
    let mix = GeneratorConfig::preset("wikiops-skew").unwrap().op_mix;
    let total_w: f64 = mix.values().sum();
    let mut counts: BTreeMap<Operation, usize> = BTreeMap::new();
    let mut n = 0;
    for name in ["train", "dev", "test"] {
        for ex in split(&d.join("skew"), name).examples {
            *counts.entry(ex.logical_form.op).or_default() += 1;
            n += 1;
        }
    }
    for (op, w) in mix {
        let got = *counts.get(&op).unwrap_or(&0) as f64 / n as f64;
        assert!((got - w / total_w).abs() <= 0.02, "{op}: {got} vs {}", w / total_w);
    }
    assert!(counts[&Operation::All] as f64 / n as f64 > 0.7);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(run(d, &["frobnicate"]).0, 1);
    assert_eq!(run(d, &["gen-data", "--preset", "nope"]).0, 1);
    fs::write(d.join("bad.toml"), "seed = 3\nunknown_key = 1\n").unwrap();
    let (code, _, err) = run(d, &["gen-data", "--config", "bad.toml"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown"), "{err}");
    fs::write(d.join("bad2.toml"), "[train]\nlearning_rte = 1.0\n").unwrap();
    assert_eq!(run(d, &["gen-data", "--config", "bad2.toml"]).0, 1);
    assert_eq!(run(d, &["gen-data", "--threads", "0"]).0, 1);
    assert_eq!(run(d, &["--help"]).0, 0);
}

#[test]
fn invalid_data_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data"]);
    let path = d.join("data/dev.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut ex: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    ex["operands"] = serde_json::json!([]);
    lines[0] = ex.to_string();
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let (code, _, err) = run(d, &["eval", "--data", "data", "--oracle", "--out", "ev"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn train_eval_trace_round() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data"]);

    // zero epochs: the checkpoint is the initialization
    ok(d, &["train", "--data", "data", "--out", "zero", "--epochs", "0"]);
    let (model, _, epoch) = load_checkpoint(&d.join("zero/checkpoint.json")).unwrap();
    assert_eq!(epoch, 0);
    let train = split(&d.join("data"), "train");
    let init = OperandModel::new(ModelConfig::desk(), build_vocabulary(&train.examples, &train.tables), 7).unwrap();
    assert_eq!(model.store, init.store);

    // one epoch, twice, and once with two threads: identical files
    for out in ["one", "one-again"] {
        ok(d, &["train", "--data", "data", "--out", out, "--epochs", "1", "--batch-size", "25"]);
    }
    ok(d, &["train", "--data", "data", "--out", "one-threads", "--epochs", "1", "--batch-size", "25", "--threads", "2"]);
    let one = fs::read(d.join("one/checkpoint.json")).unwrap();
    assert_eq!(one, fs::read(d.join("one-again/checkpoint.json")).unwrap());
    assert_eq!(one, fs::read(d.join("one-threads/checkpoint.json")).unwrap());
    assert_eq!(fs::read(d.join("one/checkpoints/epoch-0001.json")).unwrap(), one);
    let metrics = fs::read_to_string(d.join("one/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    // ablation flag reaches the trainer
    ok(d, &["train", "--data", "data", "--out", "abl", "--epochs", "1", "--ablation", "no-cell-loss", "--checkpoint-every", "0"]);
    let (_, tc, _) = load_checkpoint(&d.join("abl/checkpoint.json")).unwrap();
    assert!(!tc.use_cell_loss && tc.use_answer_loss);
    assert!(fs::read_to_string(d.join("abl/config.toml")).unwrap().contains("use_cell_loss = false"));
    assert!(!d.join("abl/checkpoints").exists());
    let csv = fs::read_to_string(d.join("abl/metrics.csv")).unwrap();
    let cell_loss: f64 = csv.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(cell_loss, 0.0);

    // eval: report files equal the in-memory evaluation
    for g in ["0.4", "0.6"] {
        ok(d, &["eval", "--data", "data", "--checkpoint", "one/checkpoint.json", "--gamma", g, "--out", &format!("ev{g}")]);
    }
    assert_eq!(run(d, &["eval", "--data", "data", "--checkpoint", "one/checkpoint.json", "--gamma", "1.5", "--out", "evx"]).0, 1);
    let dev = split(&d.join("data"), "dev");
    let (model, _, _) = load_checkpoint(&d.join("one/checkpoint.json")).unwrap();
    let want = score(&dev, &predict_all(&model, &dev, 0.4, 1).unwrap()).unwrap();
    let json: MetricsReport = serde_json::from_str(&fs::read_to_string(d.join("ev0.4/report.json")).unwrap()).unwrap();
    assert_eq!(json, want);
    assert_eq!(MetricsReport::from_csv(&fs::read_to_string(d.join("ev0.4/report.csv")).unwrap()).unwrap(), want);
    ok(d, &["eval", "--data", "data", "--checkpoint", "one/checkpoint.json", "--gamma", "0.4", "--out", "ev-again"]);
    assert_eq!(fs::read(d.join("ev0.4/report.csv")).unwrap(), fs::read(d.join("ev-again/report.csv")).unwrap());

    // oracle self-test
    let out = ok(d, &["eval", "--data", "data", "--oracle", "--split", "test", "--out", "oracle"]);
    assert!(out.contains("FinalAcc 1.0000"), "{out}");
    let r: MetricsReport = serde_json::from_str(&fs::read_to_string(d.join("oracle/report.json")).unwrap()).unwrap();
    assert_eq!((r.soft_op_p, r.soft_op_r, r.hard_op_a, r.final_acc), (1.0, 1.0, 1.0, 1.0));
    let test = split(&d.join("data"), "test");
    assert_eq!(score(&test, &predict_all(&OracleAdapter, &test, 0.5, 1).unwrap()).unwrap(), r);

    // trace: both files, text parses back to the JSON, default k = 3
    let id = dev.examples[0].id.clone();
    ok(d, &["trace", "--data", "data", "--checkpoint", "one/checkpoint.json", "--id", &id, "--out", "tr"]);
    let json: Trace = serde_json::from_str(&fs::read_to_string(d.join(format!("tr/{id}.trace.json"))).unwrap()).unwrap();
    let text = parse_trace_text(&fs::read_to_string(d.join(format!("tr/{id}.trace.txt"))).unwrap()).unwrap();
    assert_eq!(text, json);
    assert!(json.steps.iter().all(|s| s.columns.len() == 3.min(dev.table(&dev.examples[0]).unwrap().n_cols())));
    assert_eq!(json.steps.len(), 4);
    let (code, _, _) = run(d, &["trace", "--data", "data", "--checkpoint", "one/checkpoint.json", "--id", "nope", "--out", "tr2"]);
    assert_ne!(code, 0);

    // a checkpoint whose vocabulary does not fit its parameters is refused
    let mut ck: serde_json::Value = serde_json::from_slice(&one).unwrap();
    ck["vocab"].as_array_mut().unwrap().pop();
    fs::write(d.join("broken.json"), ck.to_string()).unwrap();
    let (code, _, _) = run(d, &["eval", "--data", "data", "--checkpoint", "broken.json", "--out", "evb"]);
    assert_ne!(code, 0);
}

#[test]
fn perturb_outputs_are_valid() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["gen-data", "--out", "data"]);
    let test = split(&d.join("data"), "test");

    ok(d, &["perturb", "--data", "data", "--mode", "vp", "--split", "test", "--out", "vp"]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("vp/validity.json")).unwrap()).unwrap();
    assert_eq!(v["all_valid"], true);
    assert!(v["skip_rate"].as_f64().unwrap() <= 0.05);
    let vp = split(&d.join("vp"), "test");
    validate(&vp.examples, &vp.tables).unwrap();
    let status = fs::read_to_string(d.join("vp/status.jsonl")).unwrap();
    assert_eq!(status.lines().count(), test.examples.len());
    for ex in &vp.examples {
        let orig = test.examples.iter().find(|o| o.id == ex.id).unwrap();
        assert_eq!(ex.answer, orig.answer);
        assert_eq!(ex.operands, orig.operands);
        assert_ne!(vp.table(ex).unwrap(), test.table(orig).unwrap());
    }

    ok(d, &["perturb", "--data", "data", "--mode", "op", "--split", "test", "--out", "op"]);
    let op = split(&d.join("op"), "test");
    validate(&op.examples, &op.tables).unwrap();
    assert!(!op.examples.is_empty());
    for ex in &op.examples {
        let orig = test.examples.iter().find(|o| o.id == ex.id).unwrap();
        assert_ne!(ex.logical_form.op, orig.logical_form.op);
        assert_eq!(ex.operands, orig.operands);
    }
    assert_eq!(run(d, &["perturb", "--data", "data", "--mode", "xx"]).0, 1);
}
