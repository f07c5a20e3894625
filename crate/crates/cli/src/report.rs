//! `gg report`: folds the CSVs found in an output directory into one
//! plain-text summary, plus a degree-distribution series when an edge list
//! is present. Absent files are skipped with a note, so the report works
//! over any subset of pipeline outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use guiltgraph::graph::read_edge_list_path;
use guiltgraph::util::counts_cdf;

use crate::config::Effective;
use crate::CliError;

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

pub fn report(eff: &Effective, input: Option<&Path>) -> Result<(), CliError> {
    eff.echo("report")?;
    let dir = input.unwrap_or(&eff.out).to_path_buf();
    let mut out = String::new();
    let mut sections = 0;

    let grid = dir.join("label_grid.csv");
    if grid.exists() {
        sections += 1;
        writeln!(out, "== ground-truth counts by vt and np ==").unwrap();
        writeln!(out, "{:>6} {:>8} {:>10} {:>12} {:>13}", "vt", "np", "bad_apps", "bad_devices", "good_devices")
            .unwrap();
        for row in read_csv_rows(&grid)? {
            if row.len() == 5 {
                writeln!(out, "{:>6} {:>8} {:>10} {:>12} {:>13}", row[0], row[1], row[2], row[3], row[4])
                    .unwrap();
            }
        }
        writeln!(out).unwrap();
    }

    let results = dir.join("results.csv");
    if results.exists() {
        sections += 1;
        writeln!(out, "== AUC results ==").unwrap();
        writeln!(out, "{:>8} {:>6} {:>8} {:>8} {:>8}", "epsilon", "vt", "np", "fold", "auc").unwrap();
        for row in read_csv_rows(&results)? {
            if row.len() == 7 {
                let auc: f64 = row[6].parse().unwrap_or(f64::NAN);
                writeln!(out, "{:>8} {:>6} {:>8} {:>8} {auc:>8.4}", row[1], row[2], row[3], row[5])
                    .unwrap();
            }
        }
        writeln!(out).unwrap();
    }

    let roc = dir.join("roc.csv");
    if roc.exists() {
        sections += 1;
        // Operating points at a few round false-positive rates.
        let rows = read_csv_rows(&roc)?;
        writeln!(out, "== pooled ROC operating points ==").unwrap();
        for target in [0.001, 0.01, 0.05, 0.1] {
            let mut best: Option<(f64, f64, f64)> = None;
            for row in &rows {
                if row.len() != 3 {
                    continue;
                }
                let (t, fpr, tpr): (f64, f64, f64) = (
                    row[0].parse().unwrap_or(f64::NAN),
                    row[1].parse().unwrap_or(f64::NAN),
                    row[2].parse().unwrap_or(f64::NAN),
                );
                if fpr <= target && best.map(|(_, _, bt)| tpr > bt).unwrap_or(true) {
                    best = Some((t, fpr, tpr));
                }
            }
            if let Some((t, fpr, tpr)) = best {
                writeln!(out, "fpr <= {target:>5}: tpr {tpr:.3} at threshold {t:.6} (fpr {fpr:.4})")
                    .unwrap();
            }
        }
        writeln!(out).unwrap();
    }

    for name in ["topology_summary.txt", "postanalysis_summary.txt"] {
        let path = dir.join(name);
        if path.exists() {
            sections += 1;
            writeln!(out, "== {name} ==").unwrap();
            out.push_str(
                &std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
            );
            writeln!(out).unwrap();
        }
    }

    let edges = dir.join("edges.tsv");
    if edges.exists() {
        sections += 1;
        let edge_set = read_edge_list_path(&edges).map_err(|e| CliError::Parse(e.to_string()))?;
        let mut app_degree: BTreeMap<&str, u64> = BTreeMap::new();
        for (_, app) in &edge_set {
            *app_degree.entry(app.as_str()).or_default() += 1;
        }
        let degrees: Vec<u64> = app_degree.values().copied().collect();
        let cdf = counts_cdf(&degrees);
        let mut w = std::fs::File::create(eff.out.join("report_app_degree_cdf.csv"))
            .map_err(|e| CliError::Io(e.to_string()))?;
        use std::io::Write;
        writeln!(w, "devices_per_app,cum_fraction").map_err(|e| CliError::Io(e.to_string()))?;
        for (value, fraction) in &cdf {
            writeln!(w, "{value},{fraction}").map_err(|e| CliError::Io(e.to_string()))?;
        }
        writeln!(out, "== app popularity ==").unwrap();
        if let Some((_, single_frac)) = cdf.iter().find(|(v, _)| *v == 1) {
            writeln!(out, "fraction of apps with a single device: {single_frac:.3}").unwrap();
        }
        writeln!(out, "apps: {}, devices-per-app series in report_app_degree_cdf.csv", degrees.len())
            .unwrap();
        writeln!(out).unwrap();
    }

    if sections == 0 {
        writeln!(out, "nothing to report in {}", dir.display()).unwrap();
    }
    std::fs::write(eff.out.join("report.txt"), &out)
        .map_err(|e| CliError::Io(format!("write report: {e}")))?;
    print!("{out}");
    Ok(())
}
