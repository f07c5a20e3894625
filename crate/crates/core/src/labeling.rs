//! Ground-truth construction from offline scanner verdicts.
//!
//! Verdicts normally arrive as a static CSV snapshot (`entity_id,
//! positives,total_engines`); [`VerdictSource`] abstracts the lookup so a
//! live intelligence client could be slotted in later without touching
//! the threshold rules.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AppId, BipartiteGraph, DeviceId};
use crate::ingest::EntityMode;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("invalid labeling config: {0}")]
    InvalidConfig(String),
    #[error("verdict for `{entity}`: positives {positives} exceed total engines {total}")]
    InvalidVerdict { entity: String, positives: u32, total: u32 },
    #[error("ground-truth device `{0}` not present in the graph")]
    UnknownDevice(String),
    #[error("ground-truth line {line}: label `{label}` is not bad/good")]
    BadLabel { line: usize, label: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One scanner verdict: how many engines flagged the entity out of how many
/// queried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub entity_id: String,
    pub positives: u32,
    pub total_engines: u32,
}

impl VerdictRecord {
    fn validate(&self) -> Result<(), LabelingError> {
        if self.positives > self.total_engines {
            return Err(LabelingError::InvalidVerdict {
                entity: self.entity_id.clone(),
                positives: self.positives,
                total: self.total_engines,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AppLabel {
    Bad,
    Suspicious,
    Good,
    NoInfo,
}

impl std::fmt::Display for AppLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppLabel::Bad => f.write_str("bad"),
            AppLabel::Suspicious => f.write_str("suspicious"),
            AppLabel::Good => f.write_str("good"),
            AppLabel::NoInfo => f.write_str("no-info"),
        }
    }
}

/// Threshold parameters for ground-truth construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingConfig {
    /// Minimum engine count for an app to be labeled bad.
    pub vt: u32,
    /// Popularity cutoff: apps used by more than this many devices are
    /// filtered before labeling and inference.
    pub n_p: u32,
    /// Minimum count of bad apps for a device to enter the bad set.
    pub n_ab: u32,
    pub mode: EntityMode,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig { vt: 5, n_p: 1000, n_ab: 2, mode: EntityMode::AppString }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<(), LabelingError> {
        if self.vt < 1 || self.n_p < 1 || self.n_ab < 1 {
            return Err(LabelingError::InvalidConfig(
                "vt, n_p and n_ab must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Labeled device sets plus the app labels they were derived from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub bad_devices: BTreeSet<DeviceId>,
    pub good_devices: BTreeSet<DeviceId>,
    pub app_labels: BTreeMap<AppId, AppLabel>,
}

impl GroundTruth {
    /// Checks the structural invariants: disjoint device sets, every
    /// labeled device present in the graph.
    pub fn validate(&self, graph: &BipartiteGraph) -> Result<(), LabelingError> {
        if let Some(d) = self.bad_devices.intersection(&self.good_devices).next() {
            panic!("device {d} labeled both bad and good; labeling rules are exclusive");
        }
        for d in self.bad_devices.iter().chain(&self.good_devices) {
            if graph.device_index(d).is_none() {
                return Err(LabelingError::UnknownDevice(d.to_string()));
            }
        }
        Ok(())
    }

    pub fn device_label(&self, d: &DeviceId) -> Option<bool> {
        if self.bad_devices.contains(d) {
            Some(true)
        } else if self.good_devices.contains(d) {
            Some(false)
        } else {
            None
        }
    }
}

/// Verdict lookup, so the threshold rules stay independent of where
/// intelligence comes from. The CSV snapshot (a map) implements it; a live
/// scanner client would too.
pub trait VerdictSource {
    fn verdict(&self, entity_id: &str) -> Option<&VerdictRecord>;
}

impl VerdictSource for BTreeMap<String, VerdictRecord> {
    fn verdict(&self, entity_id: &str) -> Option<&VerdictRecord> {
        self.get(entity_id)
    }
}

/// Labels one app from its verdict (or lack of one): at least `vt` engines
/// is bad, one to `vt - 1` is suspicious, zero is good, and missing
/// verdicts are no-info.
pub fn label_app(verdict: Option<&VerdictRecord>, cfg: &LabelingConfig) -> AppLabel {
    match verdict {
        None => AppLabel::NoInfo,
        Some(v) => {
            if v.positives >= cfg.vt {
                AppLabel::Bad
            } else if v.positives >= 1 {
                AppLabel::Suspicious
            } else {
                AppLabel::Good
            }
        }
    }
}

/// Labels one destination IP: two or more engines is bad, exactly one is
/// suspicious.
pub fn label_ip(verdict: Option<&VerdictRecord>) -> AppLabel {
    match verdict {
        None => AppLabel::NoInfo,
        Some(v) => {
            if v.positives >= 2 {
                AppLabel::Bad
            } else if v.positives == 1 {
                AppLabel::Suspicious
            } else {
                AppLabel::Good
            }
        }
    }
}

/// Labels every app node of the graph against a verdict source, using the
/// rule matching the extraction mode.
pub fn label_apps<V: VerdictSource>(
    graph: &BipartiteGraph,
    verdicts: &V,
    cfg: &LabelingConfig,
) -> BTreeMap<AppId, AppLabel> {
    graph
        .app_ids()
        .iter()
        .map(|app| {
            let v = verdicts.verdict(app.as_str());
            let label = match cfg.mode {
                EntityMode::AppString => label_app(v, cfg),
                EntityMode::DestinationIp => label_ip(v),
            };
            (app.clone(), label)
        })
        .collect()
}

/// Derives the device ground truth from app labels. The graph must already
/// be popularity-filtered. A device with at least `n_ab` bad apps is bad; a
/// device touching no bad and no suspicious apps is good; everything else
/// stays unlabeled (the unknown pool).
pub fn label_devices(
    graph: &BipartiteGraph,
    app_labels: &BTreeMap<AppId, AppLabel>,
    cfg: &LabelingConfig,
) -> GroundTruth {
    let per_app: Vec<AppLabel> = graph
        .app_ids()
        .iter()
        .map(|a| app_labels.get(a).copied().unwrap_or(AppLabel::NoInfo))
        .collect();

    let mut bad_devices = BTreeSet::new();
    let mut good_devices = BTreeSet::new();
    for d in 0..graph.device_count() as u32 {
        let mut bad = 0u32;
        let mut suspicious = 0u32;
        for &a in graph.device_neighbors(d) {
            match per_app[a as usize] {
                AppLabel::Bad => bad += 1,
                AppLabel::Suspicious => suspicious += 1,
                _ => {}
            }
        }
        let id = graph.device_id(d).clone();
        if bad >= cfg.n_ab {
            bad_devices.insert(id);
        } else if bad == 0 && suspicious == 0 {
            good_devices.insert(id);
        }
    }
    let gt = GroundTruth { bad_devices, good_devices, app_labels: app_labels.clone() };
    gt.validate(graph).expect("labeled devices come from the graph");
    gt
}

/// Reads a verdict CSV (`entity_id,positives,total_engines`, header row).
pub fn read_verdicts<R: Read>(reader: R) -> Result<BTreeMap<String, VerdictRecord>, LabelingError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut map = BTreeMap::new();
    for row in rdr.deserialize() {
        let v: VerdictRecord = row?;
        v.validate()?;
        map.insert(v.entity_id.clone(), v);
    }
    Ok(map)
}

pub fn read_verdicts_path(path: &Path) -> Result<BTreeMap<String, VerdictRecord>, LabelingError> {
    read_verdicts(std::fs::File::open(path)?)
}

pub fn write_verdicts<W: Write>(
    verdicts: &BTreeMap<String, VerdictRecord>,
    writer: W,
) -> Result<(), LabelingError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for v in verdicts.values() {
        wtr.serialize(v)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the device ground truth as CSV `device_id,label`.
pub fn write_ground_truth<W: Write>(gt: &GroundTruth, mut writer: W) -> Result<(), LabelingError> {
    writeln!(writer, "device_id,label")?;
    for d in &gt.bad_devices {
        writeln!(writer, "{d},bad")?;
    }
    for d in &gt.good_devices {
        writeln!(writer, "{d},good")?;
    }
    Ok(())
}

/// Reads a device ground-truth CSV back; app labels are left empty.
pub fn read_ground_truth<R: Read>(reader: R) -> Result<GroundTruth, LabelingError> {
    let mut content = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut content)?;
    let mut gt = GroundTruth::default();
    for (i, line) in content.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == "device_id,label") {
            continue;
        }
        let Some((id, label)) = line.split_once(',') else {
            return Err(LabelingError::BadLabel { line: i + 1, label: line.to_string() });
        };
        match label {
            "bad" => gt.bad_devices.insert(DeviceId::new(id)),
            "good" => gt.good_devices.insert(DeviceId::new(id)),
            other => return Err(LabelingError::BadLabel { line: i + 1, label: other.to_string() }),
        };
    }
    Ok(gt)
}

pub fn read_ground_truth_path(path: &Path) -> Result<GroundTruth, LabelingError> {
    read_ground_truth(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use std::collections::BTreeSet;

    fn verdict(id: &str, positives: u32) -> VerdictRecord {
        VerdictRecord { entity_id: id.to_string(), positives, total_engines: 60 }
    }

    #[test]
    fn app_label_boundary_is_inclusive() {
        let cfg = LabelingConfig::default();
        assert_eq!(label_app(Some(&verdict("a", 5)), &cfg), AppLabel::Bad);
        assert_eq!(label_app(Some(&verdict("a", 4)), &cfg), AppLabel::Suspicious);
        assert_eq!(label_app(Some(&verdict("a", 1)), &cfg), AppLabel::Suspicious);
        assert_eq!(label_app(Some(&verdict("a", 0)), &cfg), AppLabel::Good);
        assert_eq!(label_app(None, &cfg), AppLabel::NoInfo);
    }

    #[test]
    fn ip_label_threshold_is_two() {
        assert_eq!(label_ip(Some(&verdict("i", 2))), AppLabel::Bad);
        assert_eq!(label_ip(Some(&verdict("i", 1))), AppLabel::Suspicious);
        assert_eq!(label_ip(Some(&verdict("i", 0))), AppLabel::Good);
        assert_eq!(label_ip(None), AppLabel::NoInfo);
    }

    #[test]
    fn destination_ip_mode_uses_the_ip_rule() {
        // positives = 2 is Bad under the IP rule but Suspicious under the
        // app rule at vt = 5.
        let edges: BTreeSet<(DeviceId, AppId)> =
            [(DeviceId::new("10.0.0.1"), AppId::new("93.184.216.34"))].into();
        let g = build_graph(&edges);
        let verdicts: BTreeMap<String, VerdictRecord> =
            [("93.184.216.34".to_string(), verdict("93.184.216.34", 2))].into();

        let ip_cfg = LabelingConfig { mode: EntityMode::DestinationIp, ..Default::default() };
        let labels = label_apps(&g, &verdicts, &ip_cfg);
        assert_eq!(labels[&AppId::new("93.184.216.34")], AppLabel::Bad);

        let app_cfg = LabelingConfig::default();
        let labels = label_apps(&g, &verdicts, &app_cfg);
        assert_eq!(labels[&AppId::new("93.184.216.34")], AppLabel::Suspicious);
    }

    #[test]
    fn ground_truth_device_outside_graph_is_rejected() {
        let g = toy_graph();
        let gt = GroundTruth {
            bad_devices: [DeviceId::new("10.9.9.9")].into(),
            good_devices: BTreeSet::new(),
            app_labels: BTreeMap::new(),
        };
        assert!(matches!(gt.validate(&g), Err(LabelingError::UnknownDevice(_))));
    }

    fn toy_graph() -> BipartiteGraph {
        let edges: BTreeSet<(DeviceId, AppId)> = [
            ("d.bad", "a.bad1"),
            ("d.bad", "a.bad2"),
            ("d.susp", "a.susp"),
            ("d.good", "a.good"),
            ("d.noinfo", "a.none"),
            ("d.onebad", "a.bad1"),
        ]
        .iter()
        .map(|(d, a)| (DeviceId::new(*d), AppId::new(*a)))
        .collect();
        build_graph(&edges)
    }

    fn toy_labels() -> BTreeMap<AppId, AppLabel> {
        [
            ("a.bad1", AppLabel::Bad),
            ("a.bad2", AppLabel::Bad),
            ("a.susp", AppLabel::Suspicious),
            ("a.good", AppLabel::Good),
            ("a.none", AppLabel::NoInfo),
        ]
        .iter()
        .map(|(a, l)| (AppId::new(*a), *l))
        .collect()
    }

    #[test]
    fn device_rules_partition_as_specified() {
        let g = toy_graph();
        let gt = label_devices(&g, &toy_labels(), &LabelingConfig::default());
        assert!(gt.bad_devices.contains(&DeviceId::new("d.bad")));
        // One bad app only: neither bad (below n_ab) nor good (has a bad app).
        assert!(!gt.bad_devices.contains(&DeviceId::new("d.onebad")));
        assert!(!gt.good_devices.contains(&DeviceId::new("d.onebad")));
        // Suspicious app only: unlabeled.
        assert!(!gt.bad_devices.contains(&DeviceId::new("d.susp")));
        assert!(!gt.good_devices.contains(&DeviceId::new("d.susp")));
        // Good and no-info only: good.
        assert!(gt.good_devices.contains(&DeviceId::new("d.good")));
        assert!(gt.good_devices.contains(&DeviceId::new("d.noinfo")));
    }

    #[test]
    fn raising_vt_never_grows_the_bad_set() {
        let g = toy_graph();
        let verdicts: BTreeMap<String, VerdictRecord> = [
            verdict("a.bad1", 7),
            verdict("a.bad2", 5),
            verdict("a.susp", 2),
            verdict("a.good", 0),
        ]
        .into_iter()
        .map(|v| (v.entity_id.clone(), v))
        .collect();
        let mut prev_bad_apps = usize::MAX;
        let mut prev_bad_devices = usize::MAX;
        for vt in 3..=7 {
            let cfg = LabelingConfig { vt, ..Default::default() };
            let labels = label_apps(&g, &verdicts, &cfg);
            let bad_apps = labels.values().filter(|l| **l == AppLabel::Bad).count();
            let gt = label_devices(&g, &labels, &cfg);
            assert!(bad_apps <= prev_bad_apps);
            assert!(gt.bad_devices.len() <= prev_bad_devices);
            prev_bad_apps = bad_apps;
            prev_bad_devices = gt.bad_devices.len();
        }
    }

    #[test]
    fn raising_n_ab_never_grows_bad_devices() {
        let g = toy_graph();
        let labels = toy_labels();
        let mut prev = usize::MAX;
        for n_ab in 1..=3 {
            let cfg = LabelingConfig { n_ab, ..Default::default() };
            let gt = label_devices(&g, &labels, &cfg);
            assert!(gt.bad_devices.len() <= prev);
            prev = gt.bad_devices.len();
        }
    }

    #[test]
    fn isolated_device_is_good_by_vacuous_rule() {
        let g = toy_graph().remove_popular_apps(1); // a.bad1 has degree 2, removed
        let gt = label_devices(&g, &toy_labels(), &LabelingConfig::default());
        assert!(gt.good_devices.contains(&DeviceId::new("d.onebad")));
    }

    #[test]
    fn verdict_csv_round_trip() {
        let mut verdicts = BTreeMap::new();
        verdicts.insert("com.a".to_string(), verdict("com.a", 6));
        verdicts.insert("com.b".to_string(), verdict("com.b", 0));
        let mut buf = Vec::new();
        write_verdicts(&verdicts, &mut buf).unwrap();
        assert_eq!(read_verdicts(&buf[..]).unwrap(), verdicts);
    }

    #[test]
    fn invalid_verdict_is_rejected() {
        let csv = "entity_id,positives,total_engines\ncom.a,61,60\n";
        assert!(read_verdicts(csv.as_bytes()).is_err());
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let g = toy_graph();
        let gt = label_devices(&g, &toy_labels(), &LabelingConfig::default());
        let mut buf = Vec::new();
        write_ground_truth(&gt, &mut buf).unwrap();
        let back = read_ground_truth(&buf[..]).unwrap();
        assert_eq!(back.bad_devices, gt.bad_devices);
        assert_eq!(back.good_devices, gt.good_devices);
    }
}
