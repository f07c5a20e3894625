//! Calibration harness for the committed synthetic configs: prints the
//! topology and accuracy metrics the corpus shapes are tuned against.
//!
//! Run: cargo run --release --example calibrate [mobile|dns]

use std::collections::BTreeSet;

use guiltgraph::evaluation::{epsilon_sweep, EvalConfig};
use guiltgraph::graph::NodeRef;
use guiltgraph::inference::BpConfig;
use guiltgraph::labeling::LabelingConfig;
use guiltgraph::synthgen::{generate, SynthConfig};
use guiltgraph::topology::{
    cluster_distance_stats, eigenvector_centrality, shortest_paths, PairClass,
};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "mobile".to_string());
    let cfg = match which.as_str() {
        "mobile" => SynthConfig::mobile_like(),
        "dns" => SynthConfig::dns_like(),
        other => {
            eprintln!("unknown config `{other}`; use mobile or dns");
            std::process::exit(2);
        }
    };
    println!("config: {cfg:?}");

    let started = std::time::Instant::now();
    let out = generate(&cfg).unwrap();
    println!(
        "generated: {} devices, {} apps, {} edges, {} records ({:.2}s)",
        out.graph.device_count(),
        out.graph.app_count(),
        out.graph.edge_count(),
        out.records.len(),
        started.elapsed().as_secs_f64()
    );

    let labeling = LabelingConfig::default();
    let graph = out.graph.remove_popular_apps(labeling.n_p);
    println!(
        "after popularity filter: {} apps, {} edges",
        graph.app_count(),
        graph.edge_count()
    );

    let gt = &out.ground_truth;
    let cb: BTreeSet<NodeRef> = gt
        .bad_devices
        .iter()
        .filter_map(|d| graph.device_index(d).map(NodeRef::device))
        .collect();
    let cg: BTreeSet<NodeRef> = gt
        .good_devices
        .iter()
        .filter_map(|d| graph.device_index(d).map(NodeRef::device))
        .collect();

    let t = std::time::Instant::now();
    let sources: BTreeSet<NodeRef> = cb.union(&cg).copied().collect();
    let dm = shortest_paths(&graph, &sources);
    let stats = cluster_distance_stats(&dm, &cb, &cg).unwrap();
    for class in [PairClass::BadBad, PairClass::BadGood, PairClass::GoodGood] {
        let c = &stats.per_class[&class];
        println!(
            "dist {class}: mean {:.3} over {} pairs ({} unreachable)",
            c.mean, c.reachable_pairs, c.unreachable_pairs
        );
    }
    println!(
        "gap BG-BB = {:.3} ({:.2}s)",
        stats.mean(PairClass::BadGood) - stats.mean(PairClass::BadBad),
        t.elapsed().as_secs_f64()
    );

    let t = std::time::Instant::now();
    let ec = eigenvector_centrality(&graph, 1e-10, 10_000).unwrap();
    let mean_ec = |set: &BTreeSet<NodeRef>| {
        set.iter().map(|&n| ec.score(n)).sum::<f64>() / set.len() as f64
    };
    println!(
        "eigenvector: mean bad {:.6}, mean good {:.6}, kappa1 {:.3} ({} iters, {:.2}s)",
        mean_ec(&cb),
        mean_ec(&cg),
        ec.kappa1,
        ec.iterations,
        t.elapsed().as_secs_f64()
    );

    let t = std::time::Instant::now();
    let eval_cfg = EvalConfig {
        epsilon_sweep: vec![0.51, 0.6, 0.7, 0.8, 0.9],
        ..Default::default()
    };
    let sweep = epsilon_sweep(&graph, gt, &BpConfig::default(), &eval_cfg).unwrap();
    for (eps, auc) in &sweep {
        println!("auc @ epsilon {eps}: {auc:.4}");
    }
    let aucs: Vec<f64> = sweep.iter().map(|(_, a)| *a).collect();
    let spread = aucs.iter().cloned().fold(f64::MIN, f64::max)
        - aucs.iter().cloned().fold(f64::MAX, f64::min);
    println!(
        "auc(0.51) = {:.4}, auc(0.9) = {:.4}, drop = {:.4}, spread = {:.4} ({:.2}s)",
        aucs[0],
        aucs[aucs.len() - 1],
        aucs[0] - aucs[aucs.len() - 1],
        spread,
        t.elapsed().as_secs_f64()
    );
}
