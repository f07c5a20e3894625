//! Synthetic bipartite corpora with controllable homophily.
//!
//! The generator plants two device/app clusters and emits every artifact
//! the rest of the pipeline consumes: a traffic file that round-trips
//! through ingest to the same graph, verdict and enrichment files
//! consistent with the labeling rules, and a manifest recording exactly
//! what was planted so tests have an independent oracle.
//!
//! Two committed topologies are calibrated against the qualitative
//! findings the toolkit must reproduce: `MobileLike` overlaps the clusters
//! densely, `DnsLike` separates them with a long thin bridge.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, AppId, BipartiteGraph, DeviceId};
use crate::ingest::TrafficRecord;
use crate::labeling::{label_apps, GroundTruth, LabelingConfig, VerdictRecord};
use crate::postanalysis::{DnsEnrichment, LeakCatalog};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("config parse: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyMode {
    MobileLike,
    DnsLike,
}

impl std::fmt::Display for TopologyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologyMode::MobileLike => f.write_str("mobile-like"),
            TopologyMode::DnsLike => f.write_str("dns-like"),
        }
    }
}

/// Generator parameters. `p_homophile` scales same-class device-app edge
/// probabilities; `p_cross` scales cross-class edges (mobile-like) or
/// picks the bridge count (dns-like).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_bad_devices: u32,
    pub n_good_devices: u32,
    pub n_bad_apps: u32,
    pub n_good_apps: u32,
    pub p_homophile: f64,
    pub p_cross: f64,
    pub topology_mode: TopologyMode,
    pub seed: u64,
}

impl SynthConfig {
    /// The committed mobile-like calibration (`configs/mobile_like.toml`).
    pub fn mobile_like() -> Self {
        toml::from_str(include_str!("../configs/mobile_like.toml"))
            .expect("bundled mobile-like config is well-formed")
    }

    /// The committed dns-like calibration (`configs/dns_like.toml`).
    pub fn dns_like() -> Self {
        toml::from_str(include_str!("../configs/dns_like.toml"))
            .expect("bundled dns-like config is well-formed")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_bad_devices == 0
            || self.n_good_devices == 0
            || self.n_bad_apps == 0
            || self.n_good_apps == 0
        {
            return Err(SynthError::Infeasible(
                "all node counts must be positive; a class without apps would stay isolated".into(),
            ));
        }
        if !(self.p_homophile > 0.0 && self.p_homophile <= 1.0) {
            return Err(SynthError::Infeasible(format!(
                "p_homophile must be in (0, 1], got {}",
                self.p_homophile
            )));
        }
        if !(0.0..1.0).contains(&self.p_cross) {
            return Err(SynthError::Infeasible(format!(
                "p_cross must be in [0, 1), got {}",
                self.p_cross
            )));
        }
        if self.p_homophile <= self.p_cross {
            return Err(SynthError::Infeasible(format!(
                "p_homophile ({}) must exceed p_cross ({})",
                self.p_homophile, self.p_cross
            )));
        }
        Ok(())
    }
}

/// Per-mode shape constants. Densities multiply `p_homophile` for the
/// respective class, the cross factors attenuate `p_cross` per direction,
/// and the zipf exponent skews app popularity so a few apps dominate while
/// much of the tail ends up with one device.
struct ModeParams {
    bad_density: f64,
    good_density: f64,
    cross_bad_to_good: f64,
    cross_good_to_bad: f64,
    zipf_alpha: f64,
    bridge_interior_devices: usize,
}

fn mode_params(mode: TopologyMode) -> ModeParams {
    match mode {
        // A dense bad core inside a sparse good periphery: cross edges make
        // the core a shortcut, so good-good distances exceed bad-good ones
        // and the bad side carries the influence.
        TopologyMode::MobileLike => ModeParams {
            bad_density: 1.0,
            good_density: 0.315,
            cross_bad_to_good: 0.25,
            cross_good_to_bad: 1.0,
            zipf_alpha: 0.7,
            bridge_interior_devices: 0,
        },
        // Two self-contained clusters, the good one denser, joined only by
        // bridge chains.
        TopologyMode::DnsLike => ModeParams {
            bad_density: 1.0,
            good_density: 1.2,
            cross_bad_to_good: 0.0,
            cross_good_to_bad: 0.0,
            zipf_alpha: 1.1,
            bridge_interior_devices: 5,
        },
    }
}

/// Verdict threshold bad apps must clear for the planted device ground
/// truth to reproduce under default labeling.
const CONFIDENT_VT: u32 = 5;
/// Bad apps a planted bad device is guaranteed to touch.
const FORCED_BAD_EDGES: u32 = 2;

const BASE_TS: u64 = 1_554_076_800;
const SHORT_POOL: usize = 60;
const WINDOW_DAYS: i64 = 90;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrganicEdgeStats {
    pub observed: u64,
    pub expected: f64,
    pub std_dev: f64,
}

/// Everything the generator planted, for use as a test oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthManifest {
    pub mode: TopologyMode,
    pub seed: u64,
    pub bad_devices: Vec<String>,
    pub good_devices: Vec<String>,
    pub bridge_devices: Vec<String>,
    pub verdicted_bad_apps: Vec<String>,
    pub unverdicted_bad_apps: Vec<String>,
    /// Bernoulli edge-draw tallies per pair class, with the analytic
    /// moments the draws should match.
    pub organic_edges: BTreeMap<String, OrganicEdgeStats>,
    pub forced_edges: u64,
    pub bridge_edges: u64,
    /// Distinct enriched ASNs each device contacts.
    pub expected_asn_counts: BTreeMap<String, usize>,
    /// Distinct sub-window domains each device contacts.
    pub expected_short_lived: BTreeMap<String, usize>,
    pub short_lived_window_days: i64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub graph: BipartiteGraph,
    pub ground_truth: GroundTruth,
    pub records: Vec<TrafficRecord>,
    pub verdicts: BTreeMap<String, VerdictRecord>,
    pub enrichment: DnsEnrichment,
    pub manifest: SynthManifest,
}

fn device_ip(class_octet: u8, i: u32) -> String {
    format!("10.{}.{}.{}", class_octet, (i >> 8) & 0xff, i & 0xff)
}

fn app_name(global: u32) -> String {
    format!("com.gen.app{global:05}")
}

fn app_ip(global: u32) -> String {
    format!("203.0.{}.{}", (global >> 8) & 0xff, global & 0xff)
}

fn app_domain(global: u32) -> String {
    format!("a{global:05}.apps.gen")
}

/// Zipf-ish weights over within-class rank, normalized to mean 1.
fn app_weights(n: usize, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|r| 1.0 / ((r + 1) as f64).powf(alpha)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

struct EdgeTally {
    observed: u64,
    expected: f64,
    variance: f64,
}

impl EdgeTally {
    fn new() -> Self {
        EdgeTally { observed: 0, expected: 0.0, variance: 0.0 }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng, p: f64) -> bool {
        let p = p.min(1.0);
        self.expected += p;
        self.variance += p * (1.0 - p);
        let hit = rng.random::<f64>() < p;
        if hit {
            self.observed += 1;
        }
        hit
    }

    fn stats(&self) -> OrganicEdgeStats {
        OrganicEdgeStats {
            observed: self.observed,
            expected: self.expected,
            std_dev: self.variance.sqrt(),
        }
    }
}

/// Weighted index draw over `weights` (linear scan; pools are small).
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64], candidates: &[u32]) -> u32 {
    let total: f64 = candidates.iter().map(|&c| weights[c as usize]).sum();
    let mut target = rng.random::<f64>() * total;
    for &c in candidates {
        target -= weights[c as usize];
        if target <= 0.0 {
            return c;
        }
    }
    *candidates.last().expect("candidate pool is non-empty")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let params = mode_params(cfg.topology_mode);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_bad_dev = cfg.n_bad_devices as usize;
    let n_good_dev = cfg.n_good_devices as usize;
    let n_bad_app = cfg.n_bad_apps as usize;
    let n_good_app = cfg.n_good_apps as usize;

    let bad_devices: Vec<DeviceId> =
        (0..n_bad_dev).map(|i| DeviceId::new(device_ip(1, i as u32))).collect();
    let good_devices: Vec<DeviceId> =
        (0..n_good_dev).map(|i| DeviceId::new(device_ip(2, i as u32))).collect();
    // Bad apps take global indices [0, n_bad_app), good apps follow.
    let bad_apps: Vec<AppId> = (0..n_bad_app).map(|i| AppId::new(app_name(i as u32))).collect();
    let good_apps: Vec<AppId> =
        (0..n_good_app).map(|i| AppId::new(app_name((n_bad_app + i) as u32))).collect();

    let w_bad = app_weights(n_bad_app, params.zipf_alpha);
    let w_good = app_weights(n_good_app, params.zipf_alpha);

    // Verdicts: alternate bad apps between scanned (with a positives draw)
    // and never-seen; zero-positive verdicts cover most good apps. The
    // planted bad devices are anchored to apps clearing CONFIDENT_VT so
    // the labeling rules reproduce the planted classes.
    let mut verdicts: BTreeMap<String, VerdictRecord> = BTreeMap::new();
    let mut verdicted: Vec<u32> = Vec::new();
    let mut unverdicted: Vec<u32> = Vec::new();
    let mut confident: Vec<u32> = Vec::new();
    for rank in 0..n_bad_app as u32 {
        if rank % 2 == 0 {
            let positives = rng.random_range(3..=18);
            verdicts.insert(
                bad_apps[rank as usize].as_str().to_string(),
                VerdictRecord {
                    entity_id: bad_apps[rank as usize].as_str().to_string(),
                    positives,
                    total_engines: 60,
                },
            );
            verdicted.push(rank);
            if positives >= CONFIDENT_VT {
                confident.push(rank);
            }
        } else {
            unverdicted.push(rank);
        }
    }
    if confident.len() < FORCED_BAD_EDGES as usize {
        return Err(SynthError::Infeasible(format!(
            "only {} bad apps cleared the confident verdict threshold; raise n_bad_apps",
            confident.len()
        )));
    }
    for rank in 0..n_good_app as u32 {
        if rank % 10 < 7 {
            verdicts.insert(
                good_apps[rank as usize].as_str().to_string(),
                VerdictRecord {
                    entity_id: good_apps[rank as usize].as_str().to_string(),
                    positives: 0,
                    total_engines: 60,
                },
            );
        }
    }

    // Organic Bernoulli edge draws, in fixed loop order.
    let mut edges: BTreeSet<(DeviceId, AppId)> = BTreeSet::new();
    let mut tallies: BTreeMap<&str, EdgeTally> = BTreeMap::new();
    for key in ["bad_bad", "good_good", "bad_dev_good_app", "good_dev_bad_app"] {
        tallies.insert(key, EdgeTally::new());
    }

    for d in &bad_devices {
        for (ai, a) in bad_apps.iter().enumerate() {
            let p = cfg.p_homophile * params.bad_density * w_bad[ai];
            if tallies.get_mut("bad_bad").unwrap().draw(&mut rng, p) {
                edges.insert((d.clone(), a.clone()));
            }
        }
    }
    for d in &good_devices {
        for (ai, a) in good_apps.iter().enumerate() {
            let p = cfg.p_homophile * params.good_density * w_good[ai];
            if tallies.get_mut("good_good").unwrap().draw(&mut rng, p) {
                edges.insert((d.clone(), a.clone()));
            }
        }
    }
    if cfg.topology_mode == TopologyMode::MobileLike {
        // Bad devices reach into good apps; good devices only ever touch
        // the never-scanned part of the bad side, so the good ground truth
        // stays consistent with the labeling rules.
        for d in &bad_devices {
            for (ai, a) in good_apps.iter().enumerate() {
                let p = cfg.p_cross * params.cross_bad_to_good * w_good[ai];
                if tallies.get_mut("bad_dev_good_app").unwrap().draw(&mut rng, p) {
                    edges.insert((d.clone(), a.clone()));
                }
            }
        }
        for d in &good_devices {
            for &rank in &unverdicted {
                let p = cfg.p_cross * params.cross_good_to_bad * w_bad[rank as usize];
                if tallies.get_mut("good_dev_bad_app").unwrap().draw(&mut rng, p) {
                    edges.insert((d.clone(), bad_apps[rank as usize].clone()));
                }
            }
        }
    }

    // Forced edges: every bad device needs FORCED_BAD_EDGES confident bad
    // apps (so it labels bad), every device needs degree >= 1.
    let mut forced_edges = 0u64;
    for d in &bad_devices {
        let mut have: u32 = confident
            .iter()
            .filter(|&&r| edges.contains(&(d.clone(), bad_apps[r as usize].clone())))
            .count() as u32;
        let mut guard = 0;
        while have < FORCED_BAD_EDGES {
            let pick = weighted_pick(&mut rng, &w_bad, &confident);
            if edges.insert((d.clone(), bad_apps[pick as usize].clone())) {
                have += 1;
                forced_edges += 1;
            }
            guard += 1;
            if guard > 10_000 {
                return Err(SynthError::Infeasible("cannot place forced bad edges".into()));
            }
        }
    }
    let all_good_ranks: Vec<u32> = (0..n_good_app as u32).collect();
    for d in &good_devices {
        let isolated = !good_apps.iter().any(|a| edges.contains(&(d.clone(), a.clone())))
            && !bad_apps.iter().any(|a| edges.contains(&(d.clone(), a.clone())));
        if isolated {
            let pick = weighted_pick(&mut rng, &w_good, &all_good_ranks);
            edges.insert((d.clone(), good_apps[pick as usize].clone()));
            forced_edges += 1;
        }
    }

    // Bridge chains (dns-like): the only cross-class paths. Anchored at
    // mid-popularity apps so popularity filtering never severs them.
    let mut bridge_devices: Vec<DeviceId> = Vec::new();
    let mut bridge_apps: Vec<AppId> = Vec::new();
    let mut bridge_edges = 0u64;
    if cfg.topology_mode == TopologyMode::DnsLike {
        let n_bridges = (cfg.p_cross * n_bad_dev as f64).round() as usize;
        let mut next_app_global = (n_bad_app + n_good_app) as u32;
        let mut next_bridge_dev = 0u32;
        for b in 0..n_bridges {
            let bad_anchor_rank = unverdicted[(unverdicted.len() / 3 + b) % unverdicted.len()];
            let good_anchor_rank = (n_good_app / 3 + b) % n_good_app;
            let bad_anchor = bad_apps[bad_anchor_rank as usize].clone();
            let good_anchor = good_apps[good_anchor_rank].clone();
            // Anchors must be attached to their clusters.
            if !bad_devices.iter().any(|d| edges.contains(&(d.clone(), bad_anchor.clone()))) {
                let dev = bad_devices[rng.random_range(0..n_bad_dev)].clone();
                edges.insert((dev, bad_anchor.clone()));
                bridge_edges += 1;
            }
            if !good_devices.iter().any(|d| edges.contains(&(d.clone(), good_anchor.clone()))) {
                let dev = good_devices[rng.random_range(0..n_good_dev)].clone();
                edges.insert((dev, good_anchor.clone()));
                bridge_edges += 1;
            }
            let mut prev_app = bad_anchor;
            for step in 0..params.bridge_interior_devices {
                let dev = DeviceId::new(device_ip(3, next_bridge_dev));
                next_bridge_dev += 1;
                bridge_devices.push(dev.clone());
                edges.insert((dev.clone(), prev_app.clone()));
                bridge_edges += 1;
                let next_app = if step + 1 == params.bridge_interior_devices {
                    good_anchor.clone()
                } else {
                    let app = AppId::new(app_name(next_app_global));
                    next_app_global += 1;
                    bridge_apps.push(app.clone());
                    app
                };
                edges.insert((dev, next_app.clone()));
                bridge_edges += 1;
                prev_app = next_app;
            }
        }
    }

    let graph = build_graph(&edges);

    // Infrastructure assignment: app IPs sit in per-class AS pools, app
    // domains are long-lived; background traffic tops devices up to their
    // planted AS-diversity and short-lived-domain targets.
    let mut enrichment = DnsEnrichment::default();
    let date = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("literal date");
    let epoch = date("2019-01-01");

    let app_globals: BTreeMap<&AppId, u32> = bad_apps
        .iter()
        .enumerate()
        .map(|(i, a)| (a, i as u32))
        .chain(good_apps.iter().enumerate().map(|(i, a)| (a, (n_bad_app + i) as u32)))
        .chain(
            bridge_apps
                .iter()
                .enumerate()
                .map(|(i, a)| (a, (n_bad_app + n_good_app + i) as u32)),
        )
        .collect();
    // Apps share a handful of ASes per class; the planted background
    // targets, not organic app degrees, decide each device's AS spread.
    let asn_of_app = |global: u32| -> u32 {
        if (global as usize) < n_bad_app {
            64_600 + global % 8
        } else if (global as usize) < n_bad_app + n_good_app {
            64_700 + (global - n_bad_app as u32) % 8
        } else {
            64_800
        }
    };
    for &global in app_globals.values() {
        enrichment.ip_asn.insert(app_ip(global), asn_of_app(global));
        let first = epoch + chrono::Days::new(u64::from(global % 120));
        let last = first + chrono::Days::new(400 + u64::from(global % 300));
        enrichment.domain_spans.insert(app_domain(global), (first, last));
    }

    // Background pools: one IP per AS, short-lived domain pools per class
    // with an 89-day entry, and an exactly-90-day edge domain per class
    // that must never count as short-lived.
    let bad_bg_asns: Vec<(String, u32)> =
        (0..40).map(|i| (format!("198.18.0.{i}"), 64_600 + i)).collect();
    let good_bg_asns: Vec<(String, u32)> =
        (0..40).map(|i| (format!("198.19.0.{i}"), 64_700 + i)).collect();
    for (ip, asn) in bad_bg_asns.iter().chain(&good_bg_asns) {
        enrichment.ip_asn.insert(ip.clone(), *asn);
    }
    let mut short_pools: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for class in ["bad", "good"] {
        let mut pool = Vec::with_capacity(SHORT_POOL);
        for i in 0..SHORT_POOL {
            let domain = format!("sl{i:03}.{class}.gen");
            let lifespan = if i == 0 { WINDOW_DAYS - 1 } else { rng.random_range(10..WINDOW_DAYS) };
            let first = epoch + chrono::Days::new(rng.random_range(0..200));
            let last = first + chrono::Days::new(lifespan as u64);
            enrichment.domain_spans.insert(domain.clone(), (first, last));
            pool.push(domain);
        }
        let edge_domain = format!("edge90.{class}.gen");
        let first = epoch;
        let last = first + chrono::Days::new(WINDOW_DAYS as u64);
        enrichment.domain_spans.insert(edge_domain, (first, last));
        short_pools.insert(class, pool);
    }

    // Traffic: edge records first (canonical edge order), then background
    // records per device in id order.
    let mut records: Vec<TrafficRecord> = Vec::new();
    let mut ts = BASE_TS;
    let mut asn_sets: BTreeMap<DeviceId, BTreeSet<u32>> = BTreeMap::new();
    let mut short_sets: BTreeMap<DeviceId, BTreeSet<String>> = BTreeMap::new();
    let mut primary_ip: BTreeMap<DeviceId, String> = BTreeMap::new();

    for (d, a) in graph.edges() {
        let global = app_globals[a];
        let ip = app_ip(global);
        let n_rec = rng.random_range(1..=3);
        for _ in 0..n_rec {
            records.push(TrafficRecord {
                timestamp: ts,
                src_ip: d.as_str().to_string(),
                dst_ip: ip.clone(),
                dst_domain: Some(app_domain(global)),
                http_method: Some("GET".to_string()),
                http_path: Some(format!("/api/v1/sync?ver=2&ts={ts}")),
                app_string: Some(a.as_str().to_string()),
                header_pairs: vec![("enc".to_string(), "gzip".to_string())],
            });
            ts += 3;
        }
        asn_sets.entry(d.clone()).or_default().insert(enrichment.ip_asn[&ip]);
        primary_ip.entry(d.clone()).or_insert(ip);
    }

    let bad_set: BTreeSet<DeviceId> = bad_devices.iter().cloned().collect();
    let good_set: BTreeSet<DeviceId> = good_devices.iter().cloned().collect();
    let push_bg = |records: &mut Vec<TrafficRecord>,
                       ts: &mut u64,
                       device: &DeviceId,
                       dst_ip: String,
                       domain: Option<String>| {
        records.push(TrafficRecord {
            timestamp: *ts,
            src_ip: device.as_str().to_string(),
            dst_ip,
            dst_domain: domain,
            http_method: Some("GET".to_string()),
            http_path: Some("/".to_string()),
            app_string: None,
            header_pairs: Vec::new(),
        });
        *ts += 3;
    };

    for d in graph.device_ids() {
        let is_bad = bad_set.contains(d);
        let is_good = good_set.contains(d);
        if !is_bad && !is_good {
            continue; // bridge devices keep only their app traffic
        }
        let current = asn_sets.entry(d.clone()).or_default();
        // AS-diversity target: most bad devices clear the 20-AS mark,
        // most good devices stay well under it, and both sides plant a
        // few devices at exactly 20.
        let target = if is_bad {
            if rng.random::<f64>() < 0.92 {
                rng.random_range(21..=28)
            } else {
                20
            }
        } else {
            let roll = rng.random::<f64>();
            if roll < 0.30 {
                rng.random_range(21..=26)
            } else if roll < 0.35 {
                20
            } else {
                rng.random_range(2..=12)
            }
        };
        let target = target.max(current.len());
        let pool = if is_bad { &bad_bg_asns } else { &good_bg_asns };
        for (ip, asn) in pool {
            if current.len() >= target {
                break;
            }
            if current.insert(*asn) {
                push_bg(&mut records, &mut ts, d, ip.clone(), None);
            }
        }

        // Short-lived-domain target: a fifth of bad devices cross the
        // 40-domain mark; good devices rarely do.
        let sl_target = if is_bad {
            if rng.random::<f64>() < 0.20 {
                rng.random_range(41..=50)
            } else {
                rng.random_range(3..=10)
            }
        } else if rng.random::<f64>() < 0.08 {
            rng.random_range(41..=44)
        } else {
            rng.random_range(0..=5)
        };
        let pool = &short_pools[if is_bad { "bad" } else { "good" }];
        let ip = primary_ip[d].clone();
        let shorts = short_sets.entry(d.clone()).or_default();
        for domain in pool.iter().take(sl_target) {
            shorts.insert(domain.clone());
            push_bg(&mut records, &mut ts, d, ip.clone(), Some(domain.clone()));
        }
        // A quarter of devices also touch the exactly-90-day domain,
        // which sits on the boundary and must not count.
        if rng.random::<f64>() < 0.25 {
            let edge_domain = format!("edge90.{}.gen", if is_bad { "bad" } else { "good" });
            push_bg(&mut records, &mut ts, d, ip, Some(edge_domain));
        }
    }

    // Ground truth: the planted classes, with app labels derived from the
    // emitted verdicts by the labeling rules themselves.
    let labeling_cfg = LabelingConfig::default();
    let app_labels = label_apps(&graph, &verdicts, &labeling_cfg);
    let ground_truth = GroundTruth {
        bad_devices: bad_set.clone(),
        good_devices: good_set.clone(),
        app_labels,
    };
    ground_truth
        .validate(&graph)
        .map_err(|e| SynthError::Infeasible(format!("planted ground truth invalid: {e}")))?;

    let manifest = SynthManifest {
        mode: cfg.topology_mode,
        seed: cfg.seed,
        bad_devices: bad_devices.iter().map(|d| d.to_string()).collect(),
        good_devices: good_devices.iter().map(|d| d.to_string()).collect(),
        bridge_devices: bridge_devices.iter().map(|d| d.to_string()).collect(),
        verdicted_bad_apps: verdicted.iter().map(|&r| bad_apps[r as usize].to_string()).collect(),
        unverdicted_bad_apps: unverdicted.iter().map(|&r| bad_apps[r as usize].to_string()).collect(),
        organic_edges: tallies.into_iter().map(|(k, t)| (k.to_string(), t.stats())).collect(),
        forced_edges,
        bridge_edges,
        expected_asn_counts: asn_sets.iter().map(|(d, s)| (d.to_string(), s.len())).collect(),
        expected_short_lived: short_sets.iter().map(|(d, s)| (d.to_string(), s.len())).collect(),
        short_lived_window_days: WINDOW_DAYS,
    };

    Ok(SynthOutput { graph, ground_truth, records, verdicts, enrichment, manifest })
}

/// Leak-injection parameters: the fraction of bad-device app packets that
/// receive a planted key-value leak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub fraction: f64,
    pub seed: u64,
}

/// One planted leak, as recorded for the scan oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedLeak {
    pub record_index: usize,
    pub device_id: String,
    pub app_id: String,
    pub category: String,
    #[serde(rename = "type")]
    pub leak_type: String,
    pub keyword: String,
}

/// Injects catalog key-value pairs into a seeded fraction of bad-device
/// app packets, alternating between header pairs and query parameters and
/// occasionally upper-casing the key (detection is case-insensitive).
/// Returns the manifest of planted leaks in record order.
pub fn plant_leaks(
    records: &mut [TrafficRecord],
    bad_devices: &BTreeSet<DeviceId>,
    catalog: &LeakCatalog,
    cfg: &PlantConfig,
) -> Vec<PlantedLeak> {
    let entries: Vec<(&str, &str, &str)> = catalog.entries().collect();
    assert!(!entries.is_empty(), "catalog must not be empty");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut planted = Vec::new();
    for (idx, rec) in records.iter_mut().enumerate() {
        let Some(app) = rec.app_string.clone() else {
            continue;
        };
        if !bad_devices.contains(&DeviceId::new(rec.src_ip.clone())) {
            continue;
        }
        if rng.random::<f64>() >= cfg.fraction {
            continue;
        }
        let (category, leak_type, keyword) = entries[rng.random_range(0..entries.len())];
        let n = planted.len();
        let key = if n % 3 == 0 { keyword.to_uppercase() } else { keyword.to_string() };
        let value = format!("x{n}");
        if n % 2 == 0 {
            rec.header_pairs.push((key, value));
        } else {
            let path = rec.http_path.take().unwrap_or_else(|| "/".to_string());
            let sep = if path.contains('?') { '&' } else { '?' };
            rec.http_path = Some(format!("{path}{sep}{key}={value}"));
        }
        planted.push(PlantedLeak {
            record_index: idx,
            device_id: rec.src_ip.clone(),
            app_id: app,
            category: category.to_string(),
            leak_type: leak_type.to_string(),
            keyword: keyword.to_string(),
        });
    }
    planted
}

impl SynthOutput {
    /// Writes every artifact in the formats the pipeline consumes:
    /// `traffic.tsv`, `edges.tsv`, `ground_truth.csv`, `verdicts.csv`,
    /// `dns_domains.csv`, `ip_asn.csv`, `manifest.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir)?;
        let mut traffic = std::io::BufWriter::new(std::fs::File::create(dir.join("traffic.tsv"))?);
        for rec in &self.records {
            writeln!(traffic, "{}", rec.to_tsv_line())?;
        }
        traffic.flush()?;

        self.graph
            .write_edge_list_path(&dir.join("edges.tsv"))
            .map_err(|e| SynthError::Infeasible(e.to_string()))?;

        let err = |e: crate::labeling::LabelingError| SynthError::Infeasible(e.to_string());
        crate::labeling::write_ground_truth(
            &self.ground_truth,
            std::fs::File::create(dir.join("ground_truth.csv"))?,
        )
        .map_err(err)?;
        crate::labeling::write_verdicts(
            &self.verdicts,
            std::fs::File::create(dir.join("verdicts.csv"))?,
        )
        .map_err(err)?;

        let perr = |e: crate::postanalysis::PostAnalysisError| SynthError::Infeasible(e.to_string());
        self.enrichment
            .write_domains(std::fs::File::create(dir.join("dns_domains.csv"))?)
            .map_err(perr)?;
        self.enrichment
            .write_asns(std::fs::File::create(dir.join("ip_asn.csv"))?)
            .map_err(perr)?;

        let manifest = std::fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(manifest), &self.manifest)
            .map_err(|e| SynthError::Infeasible(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_edge_stream, EntityMode};
    use crate::labeling::label_devices;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_bad_devices: 30,
            n_good_devices: 60,
            n_bad_apps: 20,
            n_good_apps: 40,
            p_homophile: 0.1,
            p_cross: 0.01,
            topology_mode: TopologyMode::MobileLike,
            seed: 7,
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = generate(&small_cfg()).unwrap();
        let b = generate(&small_cfg()).unwrap();
        assert_eq!(a.graph.edge_set(), b.graph.edge_set());
        assert_eq!(a.records, b.records);
        assert_eq!(a.verdicts, b.verdicts);
        assert_eq!(a.manifest.expected_asn_counts, b.manifest.expected_asn_counts);
    }

    #[test]
    fn traffic_round_trips_to_the_same_graph() {
        let out = generate(&small_cfg()).unwrap();
        let edges = build_edge_stream(&out.records, EntityMode::AppString);
        assert_eq!(edges, out.graph.edge_set());
    }

    #[test]
    fn zero_cross_probability_disconnects_the_classes() {
        for mode in [TopologyMode::MobileLike, TopologyMode::DnsLike] {
            let cfg = SynthConfig { p_cross: 0.0, topology_mode: mode, ..small_cfg() };
            let out = generate(&cfg).unwrap();
            // No edge touches a bad device and a good app or vice versa.
            let bad_devs: BTreeSet<&str> =
                out.manifest.bad_devices.iter().map(String::as_str).collect();
            let bad_apps: BTreeSet<&str> =
                out.manifest.verdicted_bad_apps.iter().chain(&out.manifest.unverdicted_bad_apps).map(String::as_str).collect();
            for (d, a) in out.graph.edges() {
                let dev_bad = bad_devs.contains(d.as_str());
                let app_bad = bad_apps.contains(a.as_str());
                assert_eq!(dev_bad, app_bad, "edge {d}-{a} crosses classes");
            }
            assert!(out.manifest.bridge_devices.is_empty());
        }
    }

    #[test]
    fn dns_like_bridge_connects_the_clusters() {
        let cfg = SynthConfig {
            // round(p_cross * n_bad_devices) = 1 bridge chain
            p_cross: 0.034,
            p_homophile: 0.1,
            topology_mode: TopologyMode::DnsLike,
            ..small_cfg()
        };
        let out = generate(&cfg).unwrap();
        assert!(!out.manifest.bridge_devices.is_empty());
        assert!(out.manifest.bridge_edges > 0);

        // A bad device can reach a good device, but only through a long
        // path.
        let g = &out.graph;
        let bad = DeviceId::new(out.manifest.bad_devices[0].clone());
        let good = DeviceId::new(out.manifest.good_devices[0].clone());
        let src = crate::graph::NodeRef::device(g.device_index(&bad).unwrap());
        let dst = crate::graph::NodeRef::device(g.device_index(&good).unwrap());
        let sources: BTreeSet<crate::graph::NodeRef> = [src].into();
        let dm = crate::topology::shortest_paths(g, &sources);
        let dist = dm.distance(src, dst).unwrap();
        assert!(dist.is_some(), "clusters must be connected through the bridge");
        assert!(dist.unwrap() >= 10, "bridge paths are long, got {:?}", dist);
    }

    #[test]
    fn planted_ground_truth_reproduces_under_labeling_rules() {
        let out = generate(&small_cfg()).unwrap();
        let cfg = LabelingConfig::default();
        let filtered = out.graph.remove_popular_apps(cfg.n_p);
        let labels = label_apps(&filtered, &out.verdicts, &cfg);
        let gt = label_devices(&filtered, &labels, &cfg);
        assert_eq!(
            gt.bad_devices,
            out.ground_truth.bad_devices,
            "derived bad devices differ from planted"
        );
        for d in &out.ground_truth.good_devices {
            assert!(gt.good_devices.contains(d), "planted good device {d} not derived good");
        }
    }

    #[test]
    fn organic_draws_match_binomial_moments() {
        let out = generate(&small_cfg()).unwrap();
        for (class, stats) in &out.manifest.organic_edges {
            if stats.expected == 0.0 {
                assert_eq!(stats.observed, 0);
                continue;
            }
            let diff = (stats.observed as f64 - stats.expected).abs();
            assert!(
                diff <= 3.0 * stats.std_dev + 1.0,
                "{class}: observed {} vs expected {} (std {})",
                stats.observed,
                stats.expected,
                stats.std_dev
            );
        }
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let cfg = SynthConfig { n_bad_apps: 0, ..small_cfg() };
        assert!(generate(&cfg).is_err());
        let cfg = SynthConfig { p_cross: 0.2, p_homophile: 0.1, ..small_cfg() };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn committed_configs_parse() {
        let m = SynthConfig::mobile_like();
        assert_eq!(m.topology_mode, TopologyMode::MobileLike);
        m.validate().unwrap();
        let d = SynthConfig::dns_like();
        assert_eq!(d.topology_mode, TopologyMode::DnsLike);
        d.validate().unwrap();
    }

    #[test]
    fn plant_fraction_zero_changes_nothing() {
        let out = generate(&small_cfg()).unwrap();
        let mut records = out.records.clone();
        let bad: BTreeSet<DeviceId> =
            out.manifest.bad_devices.iter().map(|d| DeviceId::new(d.clone())).collect();
        let planted = plant_leaks(
            &mut records,
            &bad,
            &LeakCatalog::builtin(),
            &PlantConfig { fraction: 0.0, seed: 1 },
        );
        assert!(planted.is_empty());
        assert_eq!(records, out.records);
    }

    #[test]
    fn plant_manifest_counts_injections() {
        let out = generate(&small_cfg()).unwrap();
        let mut records = out.records.clone();
        let bad: BTreeSet<DeviceId> =
            out.manifest.bad_devices.iter().map(|d| DeviceId::new(d.clone())).collect();
        let planted = plant_leaks(
            &mut records,
            &bad,
            &LeakCatalog::builtin(),
            &PlantConfig { fraction: 0.5, seed: 9 },
        );
        assert!(!planted.is_empty());
        let changed = records
            .iter()
            .zip(&out.records)
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, planted.len());
        for p in &planted {
            assert!(bad.contains(&DeviceId::new(p.device_id.clone())));
        }
    }

    #[test]
    fn enrichment_covers_every_destination() {
        let out = generate(&small_cfg()).unwrap();
        for rec in &out.records {
            assert!(out.enrichment.ip_asn.contains_key(&rec.dst_ip), "unenriched ip {}", rec.dst_ip);
            if let Some(domain) = &rec.dst_domain {
                assert!(out.enrichment.domain_spans.contains_key(domain), "unenriched domain {domain}");
            }
        }
    }
}
