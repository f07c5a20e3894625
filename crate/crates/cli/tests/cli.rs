//! End-to-end checks of the `gg` binary: exit codes, file outputs, and
//! the pipeline-composition guarantee (subcommand chains match the
//! monolithic run byte for byte).

use std::path::Path;
use std::process::{Command, Output};

fn gg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_small_synth_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("synth_small.toml");
    std::fs::write(
        &path,
        r#"n_bad_devices = 25
n_good_devices = 50
n_bad_apps = 16
n_good_apps = 30
p_homophile = 0.2
p_cross = 0.02
topology_mode = "mobile-like"
seed = 11
"#,
    )
    .unwrap();
    path
}

#[test]
fn ingest_of_empty_file_succeeds_with_empty_edge_list() {
    let tmp = tempfile::tempdir().unwrap();
    let traffic = tmp.path().join("empty.tsv");
    std::fs::write(&traffic, "").unwrap();
    let out = gg(
        &["ingest", "--traffic", "empty.tsv", "--mode", "app-string", "--out", "o"],
        tmp.path(),
    );
    assert_ok(&out);
    let edges = std::fs::read_to_string(tmp.path().join("o/edges.tsv")).unwrap();
    assert!(edges.is_empty());
    // Every run echoes its effective config.
    assert!(tmp.path().join("o/config.toml").exists());
}

#[test]
fn missing_input_file_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gg(
        &["ingest", "--traffic", "nope.tsv", "--mode", "app-string", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "diagnostic must be a single line");
}

#[test]
fn malformed_traffic_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.tsv"), "1\t999.0.0.5\t1.2.3.4\t\t\t\t\t\n").unwrap();
    let out = gg(
        &["ingest", "--traffic", "bad.tsv", "--mode", "app-string", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.toml"), "no_such_key = 5\n").unwrap();
    std::fs::write(tmp.path().join("t.tsv"), "").unwrap();
    let out = gg(
        &["ingest", "--config", "cfg.toml", "--traffic", "t.tsv", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn infeasible_eval_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    // Two devices cannot be split into five folds.
    std::fs::write(
        tmp.path().join("t.tsv"),
        "1\t10.0.0.1\t1.1.1.1\t\t\t\tcom.a\t\n1\t10.0.0.2\t1.1.1.1\t\t\t\tcom.b\t\n",
    )
    .unwrap();
    std::fs::write(tmp.path().join("gt.csv"), "device_id,label\n10.0.0.1,bad\n10.0.0.2,good\n")
        .unwrap();
    let out = gg(
        &[
            "eval",
            "--traffic",
            "t.tsv",
            "--ground-truth",
            "gt.csv",
            "--mode",
            "app-string",
            "--out",
            "o",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(5), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_pipeline_produces_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_synth_config(tmp.path());
    let out = gg(
        &[
            "synth",
            "--synth-config",
            cfg.to_str().unwrap(),
            "--plant-fraction",
            "0.4",
            "--out",
            "corpus",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    for file in [
        "traffic.tsv",
        "edges.tsv",
        "ground_truth.csv",
        "verdicts.csv",
        "dns_domains.csv",
        "ip_asn.csv",
        "manifest.json",
        "leak_manifest.csv",
    ] {
        assert!(tmp.path().join("corpus").join(file).exists(), "missing {file}");
    }
    let manifest = std::fs::read_to_string(tmp.path().join("corpus/leak_manifest.csv")).unwrap();
    let reported: usize = String::from_utf8_lossy(&out.stdout)
        .lines()
        .find_map(|l| l.strip_prefix("synth: planted ")?.split(' ').next()?.parse().ok())
        .expect("plant count line");
    assert_eq!(manifest.lines().count() - 1, reported);
}

#[test]
fn composed_pipeline_matches_monolithic_run_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_synth_config(tmp.path());
    assert_ok(&gg(
        &["synth", "--synth-config", cfg.to_str().unwrap(), "--out", "corpus"],
        tmp.path(),
    ));

    // Monolithic: eval straight from traffic.
    assert_ok(&gg(
        &[
            "eval",
            "--traffic",
            "corpus/traffic.tsv",
            "--verdicts",
            "corpus/verdicts.csv",
            "--mode",
            "app-string",
            "--k",
            "3",
            "--out",
            "mono",
        ],
        tmp.path(),
    ));

    // Composed: ingest to an edge list, then eval from it.
    assert_ok(&gg(
        &["ingest", "--traffic", "corpus/traffic.tsv", "--mode", "app-string", "--out", "ing"],
        tmp.path(),
    ));
    assert_ok(&gg(
        &[
            "eval",
            "--edges",
            "ing/edges.tsv",
            "--verdicts",
            "corpus/verdicts.csv",
            "--mode",
            "app-string",
            "--k",
            "3",
            "--out",
            "comp",
        ],
        tmp.path(),
    ));

    for file in ["scores.csv", "roc.csv"] {
        let mono = std::fs::read(tmp.path().join("mono").join(file)).unwrap();
        let comp = std::fs::read(tmp.path().join("comp").join(file)).unwrap();
        assert_eq!(mono, comp, "{file} differs between pipelines");
    }
    // results.csv embeds the config hash, which covers input paths; strip
    // the hash column before comparing.
    let strip = |dir: &str| {
        std::fs::read_to_string(tmp.path().join(dir).join("results.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split_once(',').map(|x| x.1).unwrap_or("").to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip("mono"), strip("comp"));
}

#[test]
fn infer_writes_beliefs_and_timing_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_synth_config(tmp.path());
    assert_ok(&gg(
        &["synth", "--synth-config", cfg.to_str().unwrap(), "--out", "corpus"],
        tmp.path(),
    ));
    let out = gg(
        &[
            "infer",
            "--edges",
            "corpus/edges.tsv",
            "--verdicts",
            "corpus/verdicts.csv",
            "--out",
            "inf",
        ],
        tmp.path(),
    );
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.lines().any(|l| l.starts_with("bp_iterations=") && l.contains(" wall_seconds=")),
        "timing line missing from: {stdout}"
    );
    let beliefs = std::fs::read_to_string(tmp.path().join("inf/beliefs.csv")).unwrap();
    assert!(beliefs.starts_with("node_id,side,p_bad,iterations,converged"));
}

#[test]
fn report_aggregates_available_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_synth_config(tmp.path());
    assert_ok(&gg(
        &["synth", "--synth-config", cfg.to_str().unwrap(), "--out", "corpus"],
        tmp.path(),
    ));
    assert_ok(&gg(
        &[
            "eval",
            "--edges",
            "corpus/edges.tsv",
            "--verdicts",
            "corpus/verdicts.csv",
            "--k",
            "3",
            "--out",
            "ev",
        ],
        tmp.path(),
    ));
    std::fs::copy(tmp.path().join("corpus/edges.tsv"), tmp.path().join("ev/edges.tsv")).unwrap();
    let out = gg(&["report", "--in", "ev", "--out", "rep"], tmp.path());
    assert_ok(&out);
    let report = std::fs::read_to_string(tmp.path().join("rep/report.txt")).unwrap();
    assert!(report.contains("== AUC results =="));
    assert!(report.contains("== app popularity =="));
    assert!(tmp.path().join("rep/report_app_degree_cdf.csv").exists());
}
