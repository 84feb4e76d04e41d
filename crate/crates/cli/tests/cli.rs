use std::path::Path;
use std::process::{Command, Output};

use dircause_cli::report::Report;

fn dircause(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dircause")).args(args).env_remove("DIRCAUSE_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &Path) -> (String, usize) {
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().to_string();
    (header, lines.count())
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(dircause(&["--help"]).status.code(), Some(0));
    assert_eq!(dircause(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(dircause(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dircause(&["simulate", "--model", "chain"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = dircause(&["simulate", "--model", "chain", "--rho", "0.1,0.2,0.3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn non_positive_definite_noise_exits_two_with_the_minor() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = dircause(&["simulate", "--model", "four_d", "--rho", "0.3,0.8,0.8", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("leading minor of order 4"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn chain_simulation_has_the_requested_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chain");
    let o = dircause(&["simulate", "--model", "chain", "--n", "300000", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = data_rows(&out.join("data.csv"));
    assert_eq!(header, "x,y,z");
    assert_eq!(rows, 300_000);
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["data"]["params"]["seed"], 7);
    assert!(echo["rng"].as_str().unwrap().contains("ChaCha20"));
}

#[test]
fn four_channel_simulation_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fourd");
    let o = dircause(&[
        "simulate",
        "--model",
        "four_d",
        "--rho",
        "0.66,0.55,0.48",
        "--n",
        "5000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = data_rows(&out.join("data.csv"));
    assert_eq!(header, "w,x,y,z");
    assert_eq!(rows, 5000);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("truth.json")).unwrap()).unwrap();
    let pairs = |key: &str| -> Vec<(String, String)> { serde_json::from_value(truth[key].clone()).unwrap() };
    let p = |a: &str, b: &str| (a.to_string(), b.to_string());
    assert_eq!(pairs("undirected_unconditional"), vec![p("w", "x"), p("w", "z"), p("x", "z"), p("y", "z")]);
    assert_eq!(pairs("undirected_conditional"), vec![p("w", "x"), p("x", "y"), p("x", "z"), p("y", "z")]);
    assert_eq!(pairs("directed").len(), 5);
    // every output carries the same hash
    let hash = truth["config_hash"].as_str().unwrap();
    let csv = std::fs::read_to_string(out.join("data.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash: {hash}\n")));
}

#[test]
fn simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o =
            dircause(&["simulate", "--model", "four_d", "--n", "3000", "--seed", "5", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read(out.join("data.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn var1_simulation_reads_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, r#"{"a": [[0.5, 0.0], [0.7, 0.8]], "q": [[1.0, 0.0], [0.0, 1.0]], "names": ["x", "y"]}"#)
        .unwrap();
    let out = dir.path().join("var");
    let o = dircause(&[
        "simulate",
        "--model",
        "var1",
        "--var1-model",
        model.to_str().unwrap(),
        "--n",
        "2000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&out.join("data.csv")), ("x,y".to_string(), 2000));
}

fn write_config(dir: &Path, data: &str, seed: u64) -> std::path::PathBuf {
    let cfg = format!(
        r#"{{
            "data": {data},
            "blocks": {{ "n_blocks": 2, "block_len": 800 }},
            "policy": {{ "seed": {seed}, "alpha": 0.1 }},
            "measures": [ {{ "kind": "te", "target": "z", "source": "x" }},
                          {{ "kind": "geweke_dyn", "target": "z", "source": "x", "ar_order": 2 }} ],
            "output": "out"
        }}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn infer_writes_hashed_outputs_and_guards_them() {
    let dir = tempfile::tempdir().unwrap();
    let chain = r#"{ "kind": "chain", "params": { "n": 1600 } }"#;
    let cfg = write_config(dir.path(), chain, 1);
    let o = dircause(&["infer", cfg.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let report = Report::read_path(&out.join("report.json")).unwrap();
    let hash = report.metadata.config_hash.clone();
    assert_eq!(report.runs[0].tests.len(), 2);
    assert_eq!(report.runs[0].tests[1].observed_ratio.as_ref().unwrap().len(), 2);
    let first = std::fs::read(out.join("report.json")).unwrap();
    for entry in std::fs::read_dir(out.join("histograms")).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(text.starts_with(&format!("# config_hash: {hash}\n")));
    }

    // same config: allowed, byte-identical
    let o = dircause(&["infer", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), first);

    // different config into the same directory: refused, then forced
    let cfg = write_config(dir.path(), chain, 2);
    let o = dircause(&["infer", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("report.json")).unwrap(), first);
    let o = dircause(&["infer", cfg.to_str().unwrap(), "--force"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_ne!(Report::read_path(&out.join("report.json")).unwrap().metadata.config_hash, hash);
}

#[test]
fn infer_reads_simulated_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let o = dircause(&["simulate", "--model", "chain", "--n", "1600", "--out", sim.to_str().unwrap()]);
    assert!(o.status.success());
    let cfg = write_config(dir.path(), r#"{ "kind": "csv", "path": "sim/data.csv" }"#, 1);
    let from_csv = dircause(&["infer", cfg.to_str().unwrap()]);
    assert!(from_csv.status.success(), "{}", stderr(&from_csv));
    let csv_report = Report::read_path(&dir.path().join("out/report.json")).unwrap();

    let cfg = write_config(dir.path(), r#"{ "kind": "chain", "params": { "n": 1600 } }"#, 1);
    assert!(dircause(&["infer", cfg.to_str().unwrap(), "--force"]).status.success());
    let gen_report = Report::read_path(&dir.path().join("out/report.json")).unwrap();
    // CSV stores shortest round-trip decimals, so the values are identical
    assert_eq!(csv_report.runs, gen_report.runs);
}

#[test]
fn infer_rejects_unknown_channels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{ "data": { "kind": "chain", "params": { "n": 1600 } },
             "blocks": { "n_blocks": 2, "block_len": 800 },
             "policy": { "seed": 1, "alpha": 0.1 },
             "measures": [ { "kind": "te", "target": "q", "source": "x" } ],
             "output": "out" }"#,
    )
    .unwrap();
    let o = dircause(&["infer", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown channel `q`"), "{}", stderr(&o));
}

#[test]
fn k_sweep_writes_one_graph_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{ "data": { "kind": "chain", "params": { "n": 1000 } },
             "blocks": { "n_blocks": 2, "block_len": 500 },
             "policy": { "seed": 1, "alpha": 0.1 },
             "graph": { "channels": ["x", "y"], "lag": 1 },
             "output": "out" }"#,
    )
    .unwrap();
    let o = dircause(&["infer", cfg.to_str().unwrap(), "--k-sweep", "3,5,10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for k in [3, 5, 10] {
        let dot = std::fs::read_to_string(out.join(format!("graph_k{k}.dot"))).unwrap();
        assert!(dot.starts_with("// config_hash: "));
        assert!(dot.contains("digraph causality {"));
    }
    let report = Report::read_path(&out.join("report.json")).unwrap();
    assert_eq!(report.metadata.k_values, vec![3, 5, 10]);
    for run in &report.runs {
        assert!(run.tests.iter().all(|t| t.k == run.k));
        assert_eq!(run.tests.len(), 3);
    }
}

fn oracle_values(o: &Output) -> Vec<(String, f64)> {
    stdout(o)
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let label = it.next()?.to_string();
            let v: f64 = it.next()?.parse().ok()?;
            Some((label, v))
        })
        .collect()
}

#[test]
fn oracle_identities_on_random_models() {
    for seed in 0..3 {
        let o = dircause(&["oracle", "--random", "--seed", &seed.to_string(), "--identities"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        let max: f64 = text
            .lines()
            .find(|l| l.trim_start().starts_with("max"))
            .unwrap()
            .split_whitespace()
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        assert!(max < 1e-10, "{text}");
    }
}

#[test]
fn oracle_decoupled_model_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("decoupled.json");
    std::fs::write(
        &model,
        r#"{"a": [[0.5, 0, 0], [0, -0.3, 0], [0, 0, 0.7]], "q": [[1, 0, 0], [0, 2, 0], [0, 0, 0.5]], "names": ["a", "b", "c"]}"#,
    )
    .unwrap();
    let o = dircause(&["oracle", "--model", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let values = oracle_values(&o);
    // 6 ordered pairs x 10 kinds, each with one side channel
    assert_eq!(values.len(), 60);
    for (label, v) in values {
        assert!(v.abs() < 1e-12, "{label} = {v}");
    }
}

#[test]
fn oracle_transfer_entropy_is_half_the_geweke_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bivariate.json");
    std::fs::write(&model, r#"{"a": [[0.5, 0.0], [0.7, 0.8]], "q": [[1.0, 0.0], [0.0, 1.0]], "names": ["x", "y"]}"#)
        .unwrap();
    let query = |kind: &str| {
        let o = dircause(&[
            "oracle",
            "--model",
            model.to_str().unwrap(),
            "--kind",
            kind,
            "--target",
            "y",
            "--source",
            "x",
            "--lag",
            "3",
            "--ar-order",
            "3",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        oracle_values(&o)[0].1
    };
    let te = query("te");
    let gw = query("geweke_dyn");
    assert!(te > 0.1);
    assert!((te - 0.5 * gw).abs() < 1e-12, "{te} vs {gw}");
}

#[test]
fn oracle_rejects_unstable_models() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("unstable.json");
    std::fs::write(&model, r#"{"a": [[1.1, 0.0], [0.0, 0.2]], "q": [[1.0, 0.0], [0.0, 1.0]]}"#).unwrap();
    let o = dircause(&["oracle", "--model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not stable"), "{}", stderr(&o));
}
