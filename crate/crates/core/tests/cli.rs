use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ugf-rerank"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Ten users with ten interactions each over 30 items.
fn fixture(dir: &Path) -> PathBuf {
    let mut text = String::from("user_id,item_id,rating,timestamp,price\n");
    for u in 0..10 {
        for t in 0..10 {
            let item = (u * 7 + t * 3) % 30;
            text.push_str(&format!("u{u},i{item:02},{},{},{}.5\n", 1 + (u + t) % 5, 1000 + t * 10 + u, item));
        }
    }
    let path = dir.join("interactions.csv");
    fs::write(&path, text).unwrap();
    path
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Hand-made candidate and group files: two advantaged users with many hits
/// at the top and four disadvantaged users whose positives sit lower.
fn rerank_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let mut cands = String::from("user_id,item_id,score,relevant\n");
    let mut groups = String::from("user_id,group\n");
    for u in 0..6 {
        let adv = u < 2;
        groups.push_str(&format!("u{u},{}\n", if adv { "adv" } else { "disadv" }));
        for j in 0..8 {
            let relevant = if adv { j < 2 } else { j == 3 + u % 3 };
            let score = 1.0 - j as f64 * 0.1 - u as f64 * 0.01;
            cands.push_str(&format!("u{u},i{j},{score},{}\n", u8::from(relevant)));
        }
    }
    let c = dir.join("candidates.csv");
    let g = dir.join("groups.csv");
    fs::write(&c, cands).unwrap();
    fs::write(&g, groups).unwrap();
    (c, g)
}

#[test]
fn split_writes_parts_that_add_up() {
    let tmp = TempDir::new().unwrap();
    let input = fixture(tmp.path());
    let out = tmp.path().join("split");
    let o = ok(&["split", "--input", s(&input), "--out", s(&out)]);
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["actions"], 100);
    assert_eq!(stats["users"], 10);
    let total: usize = ["train", "validation", "test"]
        .iter()
        .map(|p| rows(&out.join(format!("{p}.csv"))))
        .sum();
    assert_eq!(total, 100);
    assert_eq!(rows(&out.join("test.csv")), 10);
    assert_eq!(json(&out.join("stats.json")), stats);
}

#[test]
fn missing_input_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["split", "--input", "/definitely/not/here.csv", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.csv"));
}

#[test]
fn malformed_row_reports_file_and_line() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "user_id,item_id,rating,timestamp\nu,a,5,1\nu,b,five,2\n").unwrap();
    let out = run(&["split", "--input", s(&input), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv") && err.contains('3'), "{err}");
}

#[test]
fn unknown_flag_is_an_input_error() {
    let out = run(&["rerank", "--bogus"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn full_pipeline_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let input = fixture(d);
    let split = d.join("split");
    ok(&["split", "--input", s(&input), "--out", s(&split), "--seed", "4"]);
    let groups = d.join("groups.csv");
    let g = ok(&["group", "--split", s(&split), "--out", s(&groups), "--top-fraction", "0.2"]);
    let summary: Value = serde_json::from_slice(&g.stdout).unwrap();
    assert_eq!(summary["advantaged"], 2);
    let model = d.join("model.bin");
    ok(&["train", "--split", s(&split), "--out", s(&model), "--epochs", "5", "--dim", "8", "--seed", "4"]);
    let cands = d.join("cands.csv");
    ok(&["score", "--split", s(&split), "--model", s(&model), "--out", s(&cands), "--negatives", "10", "--seed", "4"]);
    assert_eq!(rows(&cands), 10 * 11);

    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = d.join(format!("rr{i}"));
        let code = run(&[
            "rerank", "--candidates", s(&cands), "--groups", s(&groups), "--k", "3", "--epsilon-factor", "0.5",
            "--out", s(&out), "--threads", threads,
        ])
        .status
        .code();
        assert!(code == Some(0) || code == Some(2));
        outputs.push(
            ["diagnostics.json", "report.json", "solution.csv"]
                .map(|f| fs::read(out.join(f)).unwrap_or_default()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);

    let model2 = d.join("model2.bin");
    ok(&["train", "--split", s(&split), "--out", s(&model2), "--epochs", "5", "--dim", "8", "--seed", "4"]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&model2).unwrap());
}

#[test]
fn epsilon_factor_halves_the_baseline_gap() {
    let tmp = TempDir::new().unwrap();
    let (c, g) = rerank_inputs(tmp.path());
    let out = tmp.path().join("rr");
    ok(&["rerank", "--candidates", s(&c), "--groups", s(&g), "--k", "2", "--epsilon-factor", "0.5", "--out", s(&out)]);
    let report = json(&out.join("report.json"));
    let diag = json(&out.join("diagnostics.json"));
    let baseline_gap = report["before"]["f1"]["precise"]["ugf"].as_f64().unwrap();
    assert!(baseline_gap > 10.0);
    assert!((diag["epsilon"].as_f64().unwrap() - 0.5 * baseline_gap).abs() < 1e-9);
    assert!(diag["ugf"].as_f64().unwrap() <= diag["epsilon"].as_f64().unwrap() + 1e-7);
    assert!(diag.get("wall_time").is_none());
    assert_eq!(diag["status"], "optimal");
    let after_gap = report["after"]["f1"]["precise"]["ugf"].as_f64().unwrap();
    assert!(after_gap <= 0.5 * baseline_gap + 1e-7);
}

#[test]
fn unconstrained_rerank_reproduces_baseline() {
    let tmp = TempDir::new().unwrap();
    let (c, g) = rerank_inputs(tmp.path());
    let out = tmp.path().join("rr");
    ok(&["rerank", "--candidates", s(&c), "--groups", s(&g), "--k", "3", "--epsilon", "inf", "--out", s(&out)]);
    let solution = fs::read_to_string(out.join("solution.csv")).unwrap();
    let mut expected = String::from("user_id,rank,item_id,score\n");
    for u in 0..6 {
        for j in 0..3 {
            let score = 1.0 - j as f64 * 0.1 - u as f64 * 0.01;
            expected.push_str(&format!("u{u},{},i{j},{score}\n", j + 1));
        }
    }
    assert_eq!(solution, expected);
    let report = json(&out.join("report.json"));
    assert_eq!(report["before"], report["after"]);
    assert_eq!(report["epsilon"], "inf");

    let eval = ok(&["eval", "--candidates", s(&c), "--groups", s(&g), "--k", "3", "--lists", s(&out.join("solution.csv"))]);
    let eval: Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(eval, report["after"]);
}

#[test]
fn infeasible_bound_exits_two_and_keeps_diagnostics() {
    let tmp = TempDir::new().unwrap();
    // the advantaged user only has relevant candidates, the other none
    let c = tmp.path().join("c.csv");
    fs::write(&c, "user_id,item_id,score,relevant,n_relevant\na,x,0.9,1,2\na,y,0.8,1,2\nb,x,0.9,0,1\nb,y,0.8,0,1\n").unwrap();
    let g = tmp.path().join("g.csv");
    fs::write(&g, "user_id,group\na,adv\nb,disadv\n").unwrap();
    let out = tmp.path().join("rr");
    let o = run(&["rerank", "--candidates", s(&c), "--groups", s(&g), "--k", "1", "--epsilon", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let diag = json(&out.join("diagnostics.json"));
    assert_eq!(diag["status"], "infeasible");
    assert!(diag["min_abs_constraint"].as_f64().unwrap() > 1.0);
    assert!(!out.join("solution.csv").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let (c, g) = rerank_inputs(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("# experiment\ncandidates = {}\ngroups = {}\nk = 2\nepsilon = 3\nsolver = lagrangian\n", s(&c), s(&g)),
    )
    .unwrap();
    let out = tmp.path().join("rr");
    ok(&["rerank", "--config", s(&cfg), "--out", s(&out), "--epsilon", "4"]);
    let diag = json(&out.join("diagnostics.json"));
    assert_eq!(diag["solver"], "lagrangian");
    assert!((diag["epsilon"].as_f64().unwrap() - 4.0).abs() < 1e-9);
    assert_eq!(json(&out.join("report.json"))["k"], 2);

    fs::write(&cfg, "k: 2\n").unwrap();
    assert_eq!(run(&["rerank", "--config", s(&cfg)]).status.code(), Some(3));
}

#[test]
fn sweep_writes_rows_and_chart() {
    let tmp = TempDir::new().unwrap();
    let (c, g) = rerank_inputs(tmp.path());
    let out = tmp.path().join("sw");
    ok(&["sweep", "--candidates", s(&c), "--groups", s(&g), "--k", "2", "--epsilons", "inf,20,10,0", "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(lines.len(), 4);
    let objectives: Vec<f64> = lines.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(objectives.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    let zero = &lines[3];
    assert_eq!(zero[0], "0");
    assert_eq!(zero[4], zero[5], "advantaged and disadvantaged F1 at epsilon 0");
    let svg = fs::read_to_string(out.join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 6);

    // one-entry grid matches a rerank run at the same epsilon
    let one = tmp.path().join("one");
    ok(&["sweep", "--candidates", s(&c), "--groups", s(&g), "--k", "2", "--epsilons", "10", "--out", s(&one)]);
    let rr = tmp.path().join("rr");
    ok(&["rerank", "--candidates", s(&c), "--groups", s(&g), "--k", "2", "--epsilon", "10", "--out", s(&rr)]);
    let row: Vec<String> = fs::read_to_string(one.join("sweep.csv"))
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(String::from)
        .collect();
    let report = json(&rr.join("report.json"));
    let diag = json(&rr.join("diagnostics.json"));
    assert_eq!(row[2].parse::<f64>().unwrap(), diag["objective"].as_f64().unwrap());
    assert_eq!(row[3].parse::<f64>().unwrap(), report["after"]["f1"]["overall"].as_f64().unwrap());
    assert_eq!(row[9].parse::<f64>().unwrap(), report["after"]["f1"]["ugf"].as_f64().unwrap());
}

#[test]
fn lp_dump_is_written() {
    let tmp = TempDir::new().unwrap();
    let (c, g) = rerank_inputs(tmp.path());
    let lp = tmp.path().join("p.lp");
    ok(&[
        "rerank", "--candidates", s(&c), "--groups", s(&g), "--k", "2", "--epsilon", "5", "--out", s(&tmp.path().join("o")),
        "--lp", s(&lp),
    ]);
    let text = fs::read_to_string(lp).unwrap();
    assert!(text.contains("Maximize") && text.contains("Binary") && text.contains("ugf_hi"));
}

#[test]
fn timing_flag_adds_wall_time() {
    let tmp = TempDir::new().unwrap();
    let (c, g) = rerank_inputs(tmp.path());
    let out = tmp.path().join("rr");
    ok(&["rerank", "--candidates", s(&c), "--groups", s(&g), "--k", "2", "--out", s(&out), "--timing"]);
    assert!(json(&out.join("diagnostics.json"))["wall_time"].is_number());
}
