//! Balanced k-fold cross-validation, ROC/AUC, and parameter sweeps.
//!
//! Class sizes are equalized before folding: the larger ground-truth class
//! is down-sampled (seeded) to the size of the smaller one, since an
//! unbalanced prior set would dominate the propagated beliefs. Every
//! sampled device lands in exactly one test fold and is scored exactly
//! once, by a run whose training set never contains it.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{BipartiteGraph, DeviceId};
use crate::inference::{init_beliefs, run_bp, BpConfig, InferenceError};
use crate::ingest::EntityMode;
use crate::labeling::GroundTruth;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class `{class}` has {size} devices, fewer than k = {k}")]
    ClassTooSmall { class: &'static str, size: usize, k: u32 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("scored device `{0}` has no ground-truth label")]
    UnlabeledScore(String),
    #[error("roc needs at least one device of each class, got {bad} bad / {good} good")]
    EmptyClass { bad: usize, good: usize },
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Cross-validation and sweep parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalConfig {
    pub k: u32,
    pub seed: u64,
    pub epsilon_sweep: Vec<f64>,
    pub vt_sweep: Vec<u32>,
    pub np_sweep: Vec<u32>,
    pub mode: EntityMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            seed: 42,
            epsilon_sweep: vec![0.51],
            vt_sweep: vec![5],
            np_sweep: vec![1000],
            mode: EntityMode::AppString,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.k < 2 {
            return Err(EvalError::InvalidConfig(format!("k must be at least 2, got {}", self.k)));
        }
        if self.epsilon_sweep.is_empty() || self.vt_sweep.is_empty() || self.np_sweep.is_empty() {
            return Err(EvalError::InvalidConfig("sweep lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// One cross-validation fold: disjoint training and testing device sets.
#[derive(Debug, Clone)]
pub struct Fold {
    pub training: BTreeSet<DeviceId>,
    pub testing: BTreeSet<DeviceId>,
}

fn chunk_bounds(len: usize, k: u32) -> Vec<std::ops::Range<usize>> {
    let k = k as usize;
    let base = len / k;
    let rem = len % k;
    let mut bounds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < rem);
        bounds.push(start..start + size);
        start += size;
    }
    bounds
}

/// Splits the ground truth into `k` balanced folds. `min(|bad|, |good|)`
/// devices are kept per class (the larger class is seeded-sampled down),
/// each class is shuffled and chunked, and fold `f`'s test set is chunk
/// `f` of both classes. The same seed always produces the same folds.
pub fn balanced_folds(gt: &GroundTruth, k: u32, seed: u64) -> Result<Vec<Fold>, EvalError> {
    if (gt.bad_devices.len() as u32) < k {
        return Err(EvalError::ClassTooSmall { class: "bad", size: gt.bad_devices.len(), k });
    }
    if (gt.good_devices.len() as u32) < k {
        return Err(EvalError::ClassTooSmall { class: "good", size: gt.good_devices.len(), k });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_size = gt.bad_devices.len().min(gt.good_devices.len());
    // BTreeSet iteration is sorted, so the shuffles see a canonical order
    // regardless of how the sets were built.
    let mut bad: Vec<DeviceId> = gt.bad_devices.iter().cloned().collect();
    let mut good: Vec<DeviceId> = gt.good_devices.iter().cloned().collect();
    bad.shuffle(&mut rng);
    good.shuffle(&mut rng);
    bad.truncate(sample_size);
    good.truncate(sample_size);

    let bounds = chunk_bounds(sample_size, k);
    let folds = bounds
        .iter()
        .map(|test_range| {
            let mut training = BTreeSet::new();
            let mut testing = BTreeSet::new();
            for class in [&bad, &good] {
                for (i, d) in class.iter().enumerate() {
                    if test_range.contains(&i) {
                        testing.insert(d.clone());
                    } else {
                        training.insert(d.clone());
                    }
                }
            }
            Fold { training, testing }
        })
        .collect();
    Ok(folds)
}

/// Runs one BP pass per fold and collects each test device's final badness
/// belief. Training devices get label-strength priors, everything else
/// (test devices included) starts unknown, so a test device's own label
/// can never influence its score.
pub fn run_cv_with_folds(
    graph: &BipartiteGraph,
    gt: &GroundTruth,
    folds: &[Fold],
    bp_cfg: &BpConfig,
) -> Result<BTreeMap<DeviceId, f64>, EvalError> {
    let mut scores = BTreeMap::new();
    for fold in folds {
        let priors = init_beliefs(graph, gt, &fold.training, bp_cfg)?;
        let result = run_bp(graph, &priors, bp_cfg)?;
        for d in &fold.testing {
            let idx = graph
                .device_index(d)
                .ok_or_else(|| InferenceError::TrainingDeviceNotInGraph(d.to_string()))?;
            scores.insert(d.clone(), result.device_beliefs()[idx as usize].p_bad());
        }
    }
    Ok(scores)
}

/// Balanced cross-validation end to end: fold, run, pool scores.
pub fn run_cv(
    graph: &BipartiteGraph,
    gt: &GroundTruth,
    bp_cfg: &BpConfig,
    eval_cfg: &EvalConfig,
) -> Result<BTreeMap<DeviceId, f64>, EvalError> {
    eval_cfg.validate()?;
    let folds = balanced_folds(gt, eval_cfg.k, eval_cfg.seed)?;
    run_cv_with_folds(graph, gt, &folds, bp_cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// An ROC curve with its trapezoidal area.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// Points sorted by descending threshold; rates grow as the threshold
    /// falls.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// The exact empirical threshold grid: every distinct score, descending.
pub fn score_thresholds(scores: &BTreeMap<DeviceId, f64>) -> Vec<f64> {
    let mut t: Vec<f64> = scores.values().copied().collect();
    t.sort_by(|a, b| b.partial_cmp(a).expect("scores are finite"));
    t.dedup();
    t
}

/// Builds the ROC curve over labeled scores. Per threshold, a device with
/// score strictly above it is classified bad; TPR is the fraction of bad
/// devices classified bad, FPR the fraction of good devices classified
/// bad. The AUC is the trapezoidal area over the (FPR, TPR) polyline with
/// (0,0) and (1,1) appended.
pub fn roc(
    scores: &BTreeMap<DeviceId, f64>,
    gt: &GroundTruth,
    thresholds: &[f64],
) -> Result<RocCurve, EvalError> {
    let mut labeled: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for (d, &s) in scores {
        let bad = gt
            .device_label(d)
            .ok_or_else(|| EvalError::UnlabeledScore(d.to_string()))?;
        labeled.push((s, bad));
    }
    let n_bad = labeled.iter().filter(|(_, b)| *b).count();
    let n_good = labeled.len() - n_bad;
    if n_bad == 0 || n_good == 0 {
        return Err(EvalError::EmptyClass { bad: n_bad, good: n_good });
    }

    let mut sorted_thresholds = thresholds.to_vec();
    sorted_thresholds.sort_by(|a, b| b.partial_cmp(a).expect("thresholds are finite"));

    let mut points = Vec::with_capacity(sorted_thresholds.len());
    for &t in &sorted_thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for &(s, bad) in &labeled {
            if s > t {
                if bad {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / n_good as f64,
            tpr: tp as f64 / n_bad as f64,
        });
    }

    // Trapezoid over the polyline, endpoints included.
    let mut polyline: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    polyline.push((0.0, 0.0));
    polyline.extend(points.iter().map(|p| (p.fpr, p.tpr)));
    polyline.push((1.0, 1.0));
    polyline.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    polyline.dedup();
    let mut auc = 0.0;
    for w in polyline.windows(2) {
        let (x1, y1) = w[0];
        let (x2, y2) = w[1];
        auc += (x2 - x1) * (y1 + y2) / 2.0;
    }

    Ok(RocCurve { points, auc })
}

/// Writes an ROC dump CSV: `threshold,fpr,tpr`.
pub fn write_roc_csv<W: std::io::Write>(curve: &RocCurve, mut w: W) -> std::io::Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

/// Writes pooled per-device scores: `device_id,p_bad`.
pub fn write_scores_csv<W: std::io::Write>(
    scores: &BTreeMap<DeviceId, f64>,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "device_id,p_bad")?;
    for (d, s) in scores {
        writeln!(w, "{d},{s}")?;
    }
    Ok(())
}

/// One result row per AUC measurement:
/// `config_hash,epsilon,vt,n_p,mode,fold,auc`.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub config_hash: String,
    pub epsilon: f64,
    pub vt: u32,
    pub n_p: u32,
    pub mode: EntityMode,
    /// Fold index, or "pooled" for the pooled-score curve.
    pub fold: String,
    pub auc: f64,
}

pub fn write_results_csv<W: std::io::Write>(rows: &[ResultRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "config_hash,epsilon,vt,n_p,mode,fold,auc")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.config_hash, r.epsilon, r.vt, r.n_p, r.mode, r.fold, r.auc
        )?;
    }
    Ok(())
}

/// One full cross-validation per epsilon, everything else (folds included)
/// held fixed. Returns `(epsilon, pooled AUC)` pairs in sweep order.
pub fn epsilon_sweep(
    graph: &BipartiteGraph,
    gt: &GroundTruth,
    bp_cfg: &BpConfig,
    eval_cfg: &EvalConfig,
) -> Result<Vec<(f64, f64)>, EvalError> {
    eval_cfg.validate()?;
    let folds = balanced_folds(gt, eval_cfg.k, eval_cfg.seed)?;
    let mut out = Vec::with_capacity(eval_cfg.epsilon_sweep.len());
    for &epsilon in &eval_cfg.epsilon_sweep {
        let cfg = BpConfig { epsilon, ..bp_cfg.clone() };
        let scores = run_cv_with_folds(graph, gt, &folds, &cfg)?;
        let curve = roc(&scores, gt, &score_thresholds(&scores))?;
        out.push((epsilon, curve.auc));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, AppId};
    use crate::labeling::GroundTruth;

    fn gt_of(bad: &[&str], good: &[&str]) -> GroundTruth {
        GroundTruth {
            bad_devices: bad.iter().map(|d| DeviceId::new(*d)).collect(),
            good_devices: good.iter().map(|d| DeviceId::new(*d)).collect(),
            app_labels: BTreeMap::new(),
        }
    }

    #[test]
    fn folds_sample_down_the_larger_class() {
        let bad: Vec<String> = (0..4).map(|i| format!("b{i}")).collect();
        let good: Vec<String> = (0..10).map(|i| format!("g{i}")).collect();
        let gt = gt_of(
            &bad.iter().map(String::as_str).collect::<Vec<_>>(),
            &good.iter().map(String::as_str).collect::<Vec<_>>(),
        );
        let folds = balanced_folds(&gt, 2, 7).unwrap();
        let mut tested: BTreeSet<DeviceId> = BTreeSet::new();
        for f in &folds {
            assert!(f.training.is_disjoint(&f.testing));
            assert!(tested.is_disjoint(&f.testing));
            tested.extend(f.testing.iter().cloned());
        }
        // 4 bad + 4 sampled good devices in total.
        assert_eq!(tested.len(), 8);
        let tested_good = tested.iter().filter(|d| d.as_str().starts_with('g')).count();
        assert_eq!(tested_good, 4);
    }

    #[test]
    fn equal_classes_split_evenly() {
        let gt = gt_of(&["b1", "b2", "b3", "b4"], &["g1", "g2", "g3", "g4"]);
        let folds = balanced_folds(&gt, 2, 1).unwrap();
        for f in &folds {
            let bad = f.testing.iter().filter(|d| d.as_str().starts_with('b')).count();
            let good = f.testing.len() - bad;
            assert_eq!(bad, 2);
            assert_eq!(good, 2);
        }
    }

    #[test]
    fn folds_are_seed_deterministic() {
        let gt = gt_of(&["b1", "b2", "b3"], &["g1", "g2", "g3", "g4", "g5"]);
        let f1 = balanced_folds(&gt, 3, 99).unwrap();
        let f2 = balanced_folds(&gt, 3, 99).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert_eq!(a.training, b.training);
            assert_eq!(a.testing, b.testing);
        }
    }

    #[test]
    fn class_smaller_than_k_is_an_error() {
        let gt = gt_of(&["b1"], &["g1", "g2"]);
        assert!(matches!(
            balanced_folds(&gt, 2, 0),
            Err(EvalError::ClassTooSmall { class: "bad", .. })
        ));
    }

    #[test]
    fn edgeless_graph_scores_everything_at_half() {
        // Devices exist in the graph but share no apps after filtering.
        let edges: BTreeSet<(DeviceId, AppId)> = ["b1", "b2", "g1", "g2"]
            .iter()
            .map(|d| (DeviceId::new(*d), AppId::new("hub")))
            .collect();
        let g = build_graph(&edges).remove_popular_apps(3);
        let gt = gt_of(&["b1", "b2"], &["g1", "g2"]);
        let eval_cfg = EvalConfig { k: 2, ..Default::default() };
        let scores = run_cv(&g, &gt, &BpConfig::default(), &eval_cfg).unwrap();
        assert_eq!(scores.len(), 4);
        for s in scores.values() {
            assert_eq!(*s, 0.5);
        }
    }

    #[test]
    fn every_sampled_device_scored_once() {
        let mut edges: BTreeSet<(DeviceId, AppId)> = BTreeSet::new();
        for i in 0..6 {
            edges.insert((DeviceId::new(format!("b{i}")), AppId::new("bad.app")));
            edges.insert((DeviceId::new(format!("g{i}")), AppId::new("good.app")));
        }
        let g = build_graph(&edges);
        let bad: Vec<String> = (0..6).map(|i| format!("b{i}")).collect();
        let good: Vec<String> = (0..6).map(|i| format!("g{i}")).collect();
        let gt = gt_of(
            &bad.iter().map(String::as_str).collect::<Vec<_>>(),
            &good.iter().map(String::as_str).collect::<Vec<_>>(),
        );
        let eval_cfg = EvalConfig { k: 3, ..Default::default() };
        let scores = run_cv(&g, &gt, &BpConfig::default(), &eval_cfg).unwrap();
        assert_eq!(scores.len(), 12);
    }

    #[test]
    fn perfectly_separated_scores_have_auc_one() {
        let gt = gt_of(&["b1", "b2"], &["g1", "g2"]);
        let scores: BTreeMap<DeviceId, f64> = [("b1", 0.9), ("b2", 0.8), ("g1", 0.1), ("g2", 0.2)]
            .iter()
            .map(|(d, s)| (DeviceId::new(*d), *s))
            .collect();
        let curve = roc(&scores, &gt, &score_thresholds(&scores)).unwrap();
        assert_eq!(curve.auc, 1.0);
    }

    #[test]
    fn constant_scores_have_auc_half() {
        let gt = gt_of(&["b1"], &["g1"]);
        let scores: BTreeMap<DeviceId, f64> =
            [("b1", 0.5), ("g1", 0.5)].iter().map(|(d, s)| (DeviceId::new(*d), *s)).collect();
        let curve = roc(&scores, &gt, &score_thresholds(&scores)).unwrap();
        assert_eq!(curve.auc, 0.5);
    }

    #[test]
    fn rates_are_monotone_as_threshold_falls() {
        let gt = gt_of(&["b1", "b2", "b3"], &["g1", "g2", "g3"]);
        let scores: BTreeMap<DeviceId, f64> = [
            ("b1", 0.9),
            ("b2", 0.4),
            ("b3", 0.7),
            ("g1", 0.3),
            ("g2", 0.6),
            ("g3", 0.1),
        ]
        .iter()
        .map(|(d, s)| (DeviceId::new(*d), *s))
        .collect();
        let curve = roc(&scores, &gt, &score_thresholds(&scores)).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].threshold < w[0].threshold);
            assert!(w[1].fpr >= w[0].fpr);
            assert!(w[1].tpr >= w[0].tpr);
        }
        assert!(curve.auc >= 0.0 && curve.auc <= 1.0);
    }

    #[test]
    fn unlabeled_score_is_an_error() {
        let gt = gt_of(&["b1"], &["g1"]);
        let scores: BTreeMap<DeviceId, f64> =
            [("b1", 0.9), ("mystery", 0.5), ("g1", 0.2)]
                .iter()
                .map(|(d, s)| (DeviceId::new(*d), *s))
                .collect();
        assert!(matches!(
            roc(&scores, &gt, &[0.5]),
            Err(EvalError::UnlabeledScore(_))
        ));
    }

    #[test]
    fn single_element_sweep_has_one_entry() {
        let mut edges: BTreeSet<(DeviceId, AppId)> = BTreeSet::new();
        for i in 0..4 {
            edges.insert((DeviceId::new(format!("b{i}")), AppId::new("m.app")));
            edges.insert((DeviceId::new(format!("g{i}")), AppId::new("c.app")));
        }
        let g = build_graph(&edges);
        let bad: Vec<String> = (0..4).map(|i| format!("b{i}")).collect();
        let good: Vec<String> = (0..4).map(|i| format!("g{i}")).collect();
        let gt = gt_of(
            &bad.iter().map(String::as_str).collect::<Vec<_>>(),
            &good.iter().map(String::as_str).collect::<Vec<_>>(),
        );
        let eval_cfg = EvalConfig { k: 2, epsilon_sweep: vec![0.6], ..Default::default() };
        let sweep = epsilon_sweep(&g, &gt, &BpConfig::default(), &eval_cfg).unwrap();
        assert_eq!(sweep.len(), 1);
        assert_eq!(sweep[0].0, 0.6);
    }
}
