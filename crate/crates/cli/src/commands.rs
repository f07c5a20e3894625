//! Subcommand implementations. Each run echoes its effective config into
//! the output directory and writes machine-readable CSVs there.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use guiltgraph::evaluation::{
    balanced_folds, roc, run_cv_with_folds, score_thresholds, write_results_csv, write_roc_csv,
    write_scores_csv, EvalError, ResultRow,
};
use guiltgraph::graph::{build_graph, read_edge_list_path, BipartiteGraph, DeviceId, NodeRef};
use guiltgraph::inference::{
    classify, init_beliefs, run_bp, run_lp, write_beliefs_csv, InferenceError,
};
use guiltgraph::ingest::{build_edge_stream, read_traffic_file, IngestError, TrafficRecord};
use guiltgraph::labeling::{
    label_apps, label_devices, read_ground_truth_path, read_verdicts_path, write_ground_truth,
    AppLabel, GroundTruth, LabelingError, VerdictRecord,
};
use guiltgraph::postanalysis::{
    asn_stats, leaking_app_overlap, scan_leaks, select_extremes, short_lived_domains,
    DnsEnrichment, LeakCatalog, PostAnalysisError,
};
use guiltgraph::synthgen::{generate, plant_leaks, PlantConfig, SynthConfig, SynthError};
use guiltgraph::topology::{
    centrality_report, cluster_distance_stats, shortest_paths, PairClass, TopologyError,
};
use guiltgraph::util::counts_cdf;

use crate::config::Effective;
use crate::CliError;

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Parse(p) => CliError::Parse(p.to_string()),
            IngestError::Io(io) => CliError::Io(io.to_string()),
        }
    }
}

impl From<LabelingError> for CliError {
    fn from(e: LabelingError) -> Self {
        match e {
            LabelingError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ClassTooSmall { .. } | EvalError::EmptyClass { .. } => {
                CliError::Infeasible(e.to_string())
            }
            EvalError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Infeasible(other.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Infeasible(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => CliError::Io(io.to_string()),
            SynthError::Parse(m) => CliError::Config(m),
            SynthError::Infeasible(m) => CliError::Infeasible(m),
        }
    }
}

impl From<PostAnalysisError> for CliError {
    fn from(e: PostAnalysisError) -> Self {
        match e {
            PostAnalysisError::Io(io) => CliError::Io(io.to_string()),
            PostAnalysisError::TooFewDevices { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<TopologyError> for CliError {
    fn from(e: TopologyError) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?))
}

fn load_records(eff: &Effective) -> Result<Vec<TrafficRecord>, CliError> {
    let path = eff
        .traffic
        .as_deref()
        .ok_or_else(|| CliError::Config("--traffic is required".to_string()))?;
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    Ok(read_traffic_file(path)?)
}

/// The raw (unfiltered) graph from --edges, or from --traffic via
/// extraction.
fn load_raw_graph(eff: &Effective) -> Result<BipartiteGraph, CliError> {
    if let Some(edges_path) = eff.edges.as_deref() {
        if !edges_path.exists() {
            return Err(CliError::Io(format!("{}: no such file", edges_path.display())));
        }
        let edges = read_edge_list_path(edges_path).map_err(|e| CliError::Parse(e.to_string()))?;
        return Ok(build_graph(&edges));
    }
    let records = load_records(eff)?;
    Ok(build_graph(&build_edge_stream(&records, eff.mode)))
}

fn load_verdicts(eff: &Effective) -> Result<BTreeMap<String, VerdictRecord>, CliError> {
    let path = eff
        .verdicts
        .as_deref()
        .ok_or_else(|| CliError::Config("--verdicts is required".to_string()))?;
    if !path.exists() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    Ok(read_verdicts_path(path)?)
}

/// Ground truth from --ground-truth, or derived from --verdicts on the
/// already-filtered graph.
fn load_ground_truth(eff: &Effective, filtered: &BipartiteGraph) -> Result<GroundTruth, CliError> {
    if let Some(path) = eff.ground_truth.as_deref() {
        if !path.exists() {
            return Err(CliError::Io(format!("{}: no such file", path.display())));
        }
        let gt = read_ground_truth_path(path)?;
        gt.validate(filtered)?;
        return Ok(gt);
    }
    let verdicts = load_verdicts(eff)?;
    let labels = label_apps(filtered, &verdicts, &eff.labeling_config());
    Ok(label_devices(filtered, &labels, &eff.labeling_config()))
}

fn load_catalog(eff: &Effective) -> Result<LeakCatalog, CliError> {
    match eff.catalog.as_deref() {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Io(format!("{}: no such file", path.display())));
            }
            Ok(LeakCatalog::from_csv_path(path)?)
        }
        None => Ok(LeakCatalog::builtin()),
    }
}

fn load_enrichment(eff: &Effective) -> Result<DnsEnrichment, CliError> {
    let mut enrich = DnsEnrichment::default();
    if let Some(path) = eff.enrich_dns.as_deref() {
        let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        enrich.read_domains(file)?;
    }
    if let Some(path) = eff.enrich_asn.as_deref() {
        let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        enrich.read_asns(file)?;
    }
    Ok(enrich)
}

pub fn ingest(eff: &Effective) -> Result<(), CliError> {
    eff.echo("ingest")?;
    let records = load_records(eff)?;
    let edges = build_edge_stream(&records, eff.mode);
    let graph = build_graph(&edges);
    let path = eff.out.join("edges.tsv");
    graph.write_edge_list_path(&path).map_err(|e| io_err(&path, e))?;
    println!(
        "ingest: {} records -> {} devices, {} apps, {} edges",
        records.len(),
        graph.device_count(),
        graph.app_count(),
        graph.edge_count()
    );
    Ok(())
}

pub fn label(eff: &Effective) -> Result<(), CliError> {
    eff.echo("label")?;
    let raw = load_raw_graph(eff)?;
    let verdicts = load_verdicts(eff)?;

    let filtered = raw.remove_popular_apps(eff.np);
    let cfg = eff.labeling_config();
    let labels = label_apps(&filtered, &verdicts, &cfg);
    let gt = label_devices(&filtered, &labels, &cfg);
    let out = eff.out.join("ground_truth.csv");
    write_ground_truth(&gt, create(&out)?)?;

    // The vt x np grid of bad-app/bad-device counts, for the report.
    let mut grid = create(&eff.out.join("label_grid.csv"))?;
    writeln!(grid, "vt,np,bad_apps,bad_devices,good_devices").map_err(|e| CliError::Io(e.to_string()))?;
    for &np in &eff.np_sweep {
        let g = raw.remove_popular_apps(np);
        for &vt in &eff.vt_sweep {
            let cfg = guiltgraph::labeling::LabelingConfig { vt, n_p: np, ..cfg.clone() };
            let labels = label_apps(&g, &verdicts, &cfg);
            let bad_apps = labels.values().filter(|l| **l == AppLabel::Bad).count();
            let gt = label_devices(&g, &labels, &cfg);
            writeln!(
                grid,
                "{vt},{np},{bad_apps},{},{}",
                gt.bad_devices.len(),
                gt.good_devices.len()
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    println!(
        "label: {} bad devices, {} good devices, {} unlabeled ({} bad apps)",
        gt.bad_devices.len(),
        gt.good_devices.len(),
        filtered.device_count() - gt.bad_devices.len() - gt.good_devices.len(),
        gt.app_labels.values().filter(|l| **l == AppLabel::Bad).count()
    );
    Ok(())
}

pub fn infer(eff: &Effective, with_lp: bool) -> Result<(), CliError> {
    eff.echo("infer")?;
    let graph = load_raw_graph(eff)?.remove_popular_apps(eff.np);
    let gt = load_ground_truth(eff, &graph)?;
    let training: BTreeSet<DeviceId> =
        gt.bad_devices.union(&gt.good_devices).cloned().collect();

    let bp_cfg = eff.bp_config();
    let priors = init_beliefs(&graph, &gt, &training, &bp_cfg)?;
    let started = Instant::now();
    let result = run_bp(&graph, &priors, &bp_cfg)?;
    let wall = started.elapsed().as_secs_f64();
    println!("bp_iterations={} wall_seconds={wall:.3}", result.iterations_run);
    if !result.converged {
        log::warn!("belief propagation hit the iteration cap without converging");
    }

    write_beliefs_csv(&graph, &result, create(&eff.out.join("beliefs.csv"))?)
        .map_err(|e| CliError::Io(e.to_string()))?;

    let classes = classify(&graph, &result, eff.threshold);
    let mut w = create(&eff.out.join("classified.csv"))?;
    writeln!(w, "device_id,class").map_err(|e| CliError::Io(e.to_string()))?;
    for (d, c) in &classes {
        writeln!(w, "{d},{c}").map_err(|e| CliError::Io(e.to_string()))?;
    }

    if with_lp {
        let lp = run_lp(&graph, &gt, &training, bp_cfg.max_iterations, bp_cfg.convergence_tol)?;
        let mut w = create(&eff.out.join("lp_scores.csv"))?;
        writeln!(w, "node_id,side,score,iterations,converged")
            .map_err(|e| CliError::Io(e.to_string()))?;
        for (i, s) in lp.device_scores.iter().enumerate() {
            writeln!(w, "{},device,{s},{},{}", graph.device_id(i as u32), lp.iterations_run, lp.converged)
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        for (i, s) in lp.app_scores.iter().enumerate() {
            writeln!(w, "{},app,{s},{},{}", graph.app_id(i as u32), lp.iterations_run, lp.converged)
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    println!(
        "infer: {} nodes scored, {} devices classified bad at threshold {}",
        graph.node_count(),
        classes.values().filter(|c| matches!(c, guiltgraph::inference::DeviceClass::Bad)).count(),
        eff.threshold
    );
    Ok(())
}

pub fn eval(eff: &Effective) -> Result<(), CliError> {
    eff.echo("eval")?;
    let graph = load_raw_graph(eff)?.remove_popular_apps(eff.np);
    let gt = load_ground_truth(eff, &graph)?;
    let bp_cfg = eff.bp_config();

    let folds = balanced_folds(&gt, eff.k, eff.seed)?;
    let scores = run_cv_with_folds(&graph, &gt, &folds, &bp_cfg)?;
    write_scores_csv(&scores, create(&eff.out.join("scores.csv"))?)
        .map_err(|e| CliError::Io(e.to_string()))?;

    let pooled = roc(&scores, &gt, &score_thresholds(&scores))?;
    write_roc_csv(&pooled, create(&eff.out.join("roc.csv"))?)
        .map_err(|e| CliError::Io(e.to_string()))?;

    let hash = eff.hash();
    let mut rows = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let fold_scores: BTreeMap<DeviceId, f64> = fold
            .testing
            .iter()
            .filter_map(|d| scores.get(d).map(|&s| (d.clone(), s)))
            .collect();
        let curve = roc(&fold_scores, &gt, &score_thresholds(&fold_scores))?;
        write_roc_csv(&curve, create(&eff.out.join(format!("roc_fold{f}.csv")))?)
            .map_err(|e| CliError::Io(e.to_string()))?;
        rows.push(ResultRow {
            config_hash: hash.clone(),
            epsilon: eff.epsilon,
            vt: eff.vt,
            n_p: eff.np,
            mode: eff.mode,
            fold: f.to_string(),
            auc: curve.auc,
        });
    }
    rows.push(ResultRow {
        config_hash: hash,
        epsilon: eff.epsilon,
        vt: eff.vt,
        n_p: eff.np,
        mode: eff.mode,
        fold: "pooled".to_string(),
        auc: pooled.auc,
    });
    write_results_csv(&rows, create(&eff.out.join("results.csv"))?)
        .map_err(|e| CliError::Io(e.to_string()))?;

    println!(
        "eval: k={} pooled AUC {:.4} over {} scored devices",
        eff.k,
        pooled.auc,
        scores.len()
    );
    Ok(())
}

pub fn sweep(eff: &Effective) -> Result<(), CliError> {
    eff.echo("sweep")?;
    let raw = load_raw_graph(eff)?;
    let verdicts = if eff.ground_truth.is_some() { None } else { Some(load_verdicts(eff)?) };

    let hash = eff.hash();
    let mut rows = Vec::new();
    println!("{:>6} {:>6} {:>8} {:>8}", "vt", "np", "epsilon", "auc");
    for &np in &eff.np_sweep {
        let graph = raw.remove_popular_apps(np);
        for &vt in &eff.vt_sweep {
            let labeling = guiltgraph::labeling::LabelingConfig {
                vt,
                n_p: np,
                ..eff.labeling_config()
            };
            let gt = match &verdicts {
                Some(v) => {
                    let labels = label_apps(&graph, v, &labeling);
                    label_devices(&graph, &labels, &labeling)
                }
                None => load_ground_truth(eff, &graph)?,
            };
            let folds = balanced_folds(&gt, eff.k, eff.seed)?;
            for &epsilon in &eff.epsilon_sweep {
                let bp_cfg = guiltgraph::inference::BpConfig { epsilon, ..eff.bp_config() };
                let scores = run_cv_with_folds(&graph, &gt, &folds, &bp_cfg)?;
                let curve = roc(&scores, &gt, &score_thresholds(&scores))?;
                println!("{vt:>6} {np:>6} {epsilon:>8} {:>8.4}", curve.auc);
                rows.push(ResultRow {
                    config_hash: hash.clone(),
                    epsilon,
                    vt,
                    n_p: np,
                    mode: eff.mode,
                    fold: "pooled".to_string(),
                    auc: curve.auc,
                });
            }
        }
    }
    write_results_csv(&rows, create(&eff.out.join("results.csv"))?)
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

pub fn topology(eff: &Effective, with_heatmap: bool) -> Result<(), CliError> {
    eff.echo("topology")?;
    let graph = load_raw_graph(eff)?.remove_popular_apps(eff.np);
    let gt = load_ground_truth(eff, &graph)?;

    let refs = |set: &BTreeSet<DeviceId>| -> BTreeSet<NodeRef> {
        set.iter().filter_map(|d| graph.device_index(d).map(NodeRef::device)).collect()
    };
    let cb = refs(&gt.bad_devices);
    let cg = refs(&gt.good_devices);
    if cb.is_empty() || cg.is_empty() {
        return Err(CliError::Infeasible("both ground-truth clusters must be non-empty".into()));
    }
    let sources: BTreeSet<NodeRef> = cb.union(&cg).copied().collect();
    let dm = shortest_paths(&graph, &sources);
    let stats = cluster_distance_stats(&dm, &cb, &cg)?;

    let mut cdf = create(&eff.out.join("distance_cdf.csv"))?;
    writeln!(cdf, "pair_class,length,cum_fraction").map_err(|e| CliError::Io(e.to_string()))?;
    for (class, summary) in &stats.per_class {
        for (length, fraction) in &summary.cdf {
            writeln!(cdf, "{class},{length},{fraction}").map_err(|e| CliError::Io(e.to_string()))?;
        }
    }

    if with_heatmap {
        let mut heat = create(&eff.out.join("heatmap.csv"))?;
        writeln!(heat, "src,dst,length").map_err(|e| CliError::Io(e.to_string()))?;
        let nodes: Vec<NodeRef> = sources.iter().copied().collect();
        for &a in &nodes {
            for &b in &nodes {
                if a < b {
                    let d = dm
                        .distance(a, b)
                        .expect("sources cover clusters")
                        .map(|l| l.to_string())
                        .unwrap_or_else(|| "unreachable".to_string());
                    writeln!(heat, "{},{},{d}", graph.node_id(a), graph.node_id(b))
                        .map_err(|e| CliError::Io(e.to_string()))?;
                }
            }
        }
    }

    let report = centrality_report(&graph, &sources, 1e-10, 20_000)?;
    let mut cent = create(&eff.out.join("centrality.csv"))?;
    writeln!(cent, "node_id,cc,ec").map_err(|e| CliError::Io(e.to_string()))?;
    for node in &sources {
        writeln!(
            cent,
            "{},{},{}",
            graph.node_id(*node),
            report.closeness[node],
            report.eigenvector[node]
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
    }

    let mean_over = |set: &BTreeSet<NodeRef>, map: &BTreeMap<NodeRef, f64>| {
        set.iter().map(|n| map[n]).sum::<f64>() / set.len() as f64
    };
    let mut summary = create(&eff.out.join("topology_summary.txt"))?;
    let mut emit = |line: String| -> Result<(), CliError> {
        println!("{line}");
        writeln!(summary, "{line}").map_err(|e| CliError::Io(e.to_string()))
    };
    for class in [PairClass::BadBad, PairClass::BadGood, PairClass::GoodGood] {
        let c = &stats.per_class[&class];
        emit(format!(
            "mean shortest path {class}: {:.3} ({} pairs, {} unreachable)",
            c.mean, c.reachable_pairs, c.unreachable_pairs
        ))?;
    }
    emit(format!(
        "closeness centrality: bad {:.4}, good {:.4}",
        mean_over(&cb, &report.closeness),
        mean_over(&cg, &report.closeness)
    ))?;
    emit(format!(
        "eigenvector centrality: bad {:.6}, good {:.6} (kappa1 {:.3})",
        mean_over(&cb, &report.eigenvector),
        mean_over(&cg, &report.eigenvector),
        report.kappa1
    ))?;
    Ok(())
}

fn read_scores(path: &Path) -> Result<BTreeMap<DeviceId, f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut scores = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == "device_id,p_bad") {
            continue;
        }
        let Some((device, score)) = line.split_once(',') else {
            return Err(CliError::Parse(format!("{}:{}: expected device_id,p_bad", path.display(), i + 1)));
        };
        let score: f64 = score
            .parse()
            .map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        scores.insert(DeviceId::new(device), score);
    }
    Ok(scores)
}

pub fn postanalyze(eff: &Effective) -> Result<(), CliError> {
    eff.echo("postanalyze")?;
    let scores_path = eff
        .scores
        .as_deref()
        .ok_or_else(|| CliError::Config("--scores is required (eval writes scores.csv)".into()))?;
    let scores = read_scores(scores_path)?;
    let records = load_records(eff)?;
    let catalog = load_catalog(eff)?;
    let enrich = load_enrichment(eff)?;

    let (top, bottom) = select_extremes(&scores, eff.top_n)?;
    let mut summary = create(&eff.out.join("postanalysis_summary.txt"))?;
    let mut emit = |line: String| -> Result<(), CliError> {
        println!("{line}");
        writeln!(summary, "{line}").map_err(|e| CliError::Io(e.to_string()))
    };

    let mut leaks = create(&eff.out.join("leaks.csv"))?;
    writeln!(
        leaks,
        "group,device_id,leaked_types,leaking_apps,leaking_packets,total_apps,total_packets,leaking_app_ratio,leaking_traffic_ratio"
    )
    .map_err(|e| CliError::Io(e.to_string()))?;
    let mut cdfs = create(&eff.out.join("leak_type_cdf.csv"))?;
    writeln!(cdfs, "group,leaked_types,cum_fraction").map_err(|e| CliError::Io(e.to_string()))?;

    for (group, members) in [("top", &top), ("bottom", &bottom)] {
        let set: BTreeSet<DeviceId> = members.iter().cloned().collect();
        let reports = scan_leaks(&records, &set, &catalog);
        let mut type_counts = Vec::new();
        for (device, report) in &reports {
            writeln!(
                leaks,
                "{group},{device},{},{},{},{},{},{},{}",
                report.leaked_types.len(),
                report.leaking_apps.len(),
                report.leaking_packets,
                report.apps_seen.len(),
                report.total_packets,
                report.leaking_app_ratio(),
                report.leaking_traffic_ratio()
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
            type_counts.push(report.leaked_types.len() as u64);
        }
        for (value, fraction) in counts_cdf(&type_counts) {
            writeln!(cdfs, "{group},{value},{fraction}").map_err(|e| CliError::Io(e.to_string()))?;
        }
        let leaking = reports.values().filter(|r| r.leaking_packets > 0).count();
        emit(format!(
            "{group}: {leaking}/{} devices leak at least one type",
            reports.len()
        ))?;

        if eff.verdicts.is_some() && group == "top" {
            let verdicts = load_verdicts(eff)?;
            let bad_apps = verdicts
                .values()
                .filter(|v| v.positives >= eff.vt)
                .map(|v| guiltgraph::graph::AppId::new(v.entity_id.clone()))
                .collect();
            if let Some(overlap) = leaking_app_overlap(&reports, &bad_apps) {
                emit(format!(
                    "{group}: {:.1}% of leaking apps are outside the bad ground truth",
                    overlap * 100.0
                ))?;
            }
        }

        if !enrich.ip_asn.is_empty() {
            let asn = asn_stats(&records, &set, &enrich);
            let mut w = create(&eff.out.join(format!("asn_{group}.csv")))?;
            writeln!(w, "device_id,distinct_asns").map_err(|e| CliError::Io(e.to_string()))?;
            for (d, c) in &asn {
                writeln!(w, "{d},{c}").map_err(|e| CliError::Io(e.to_string()))?;
            }
            let counts: Vec<u64> = asn.values().map(|&c| c as u64).collect();
            let mut w = create(&eff.out.join(format!("asn_cdf_{group}.csv")))?;
            writeln!(w, "distinct_asns,cum_fraction").map_err(|e| CliError::Io(e.to_string()))?;
            for (value, fraction) in counts_cdf(&counts) {
                writeln!(w, "{value},{fraction}").map_err(|e| CliError::Io(e.to_string()))?;
            }
            let over = asn.values().filter(|&&c| c > 20).count();
            emit(format!("{group}: {over}/{} devices contact more than 20 ASes", asn.len()))?;
        }
        if !enrich.domain_spans.is_empty() {
            let short = short_lived_domains(&records, &set, &enrich, eff.window_days);
            let mut w = create(&eff.out.join(format!("short_lived_{group}.csv")))?;
            writeln!(w, "device_id,short_lived_domains").map_err(|e| CliError::Io(e.to_string()))?;
            for (d, c) in &short {
                writeln!(w, "{d},{c}").map_err(|e| CliError::Io(e.to_string()))?;
            }
            let counts: Vec<u64> = short.values().map(|&c| c as u64).collect();
            let mut w = create(&eff.out.join(format!("short_lived_cdf_{group}.csv")))?;
            writeln!(w, "short_lived_domains,cum_fraction").map_err(|e| CliError::Io(e.to_string()))?;
            for (value, fraction) in counts_cdf(&counts) {
                writeln!(w, "{value},{fraction}").map_err(|e| CliError::Io(e.to_string()))?;
            }
            let over = short.values().filter(|&&c| c > 40).count();
            emit(format!(
                "{group}: {over}/{} devices touch more than 40 short-lived domains",
                short.len()
            ))?;
        }
    }
    Ok(())
}

pub fn synth(
    eff: &Effective,
    synth_mode: Option<&str>,
    synth_config: Option<&Path>,
    plant_fraction: Option<f64>,
) -> Result<(), CliError> {
    eff.echo("synth")?;
    let mut cfg = match (synth_config, synth_mode) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            SynthConfig::from_toml_str(&text)?
        }
        (None, Some("mobile-like")) | (None, None) => SynthConfig::mobile_like(),
        (None, Some("dns-like")) => SynthConfig::dns_like(),
        (None, Some(other)) => {
            return Err(CliError::Config(format!(
                "unknown synth mode `{other}`; use mobile-like or dns-like"
            )))
        }
    };
    // An explicit --seed overrides the generator config's seed.
    if let Some(seed) = eff.seed_override {
        cfg.seed = seed;
    }

    let mut out = generate(&cfg)?;
    if let Some(fraction) = plant_fraction {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(CliError::Config(format!("plant fraction must be in [0, 1], got {fraction}")));
        }
        let catalog = load_catalog(eff)?;
        let planted = plant_leaks(
            &mut out.records,
            &out.ground_truth.bad_devices,
            &catalog,
            &PlantConfig { fraction, seed: cfg.seed },
        );
        let mut w = create(&eff.out.join("leak_manifest.csv"))?;
        writeln!(w, "record_index,device_id,app_id,category,type,keyword")
            .map_err(|e| CliError::Io(e.to_string()))?;
        for p in &planted {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.record_index, p.device_id, p.app_id, p.category, p.leak_type, p.keyword
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
        println!("synth: planted {} leaks", planted.len());
    }
    out.write_to_dir(&eff.out)?;
    println!(
        "synth: {} devices, {} apps, {} edges, {} records -> {}",
        out.graph.device_count(),
        out.graph.app_count(),
        out.graph.edge_count(),
        out.records.len(),
        eff.out.display()
    );
    Ok(())
}

