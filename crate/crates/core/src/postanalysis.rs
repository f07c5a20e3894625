//! Post-analysis of classified devices: structured privacy-leak scanning
//! of HTTP key-value pairs, and network-infrastructure statistics (AS
//! diversity, short-lived domains).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AppId, DeviceId};
use crate::ingest::TrafficRecord;

#[derive(Debug, Error)]
pub enum PostAnalysisError {
    #[error("need at least {need} scored devices to pick {n} per extreme, got {got}")]
    TooFewDevices { need: usize, n: usize, got: usize },
    #[error("catalog keyword `{keyword}` is not lowercase")]
    KeywordNotLowercase { keyword: String },
    #[error("catalog keyword `{keyword}` duplicated within type `{leak_type}`")]
    DuplicateKeyword { keyword: String, leak_type: String },
    #[error("enrichment for `{domain}`: first_seen {first} is after last_seen {last}")]
    InvertedSpan { domain: String, first: NaiveDate, last: NaiveDate },
    #[error("enrichment line for `{entity}`: {reason}")]
    BadEnrichment { entity: String, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct CatalogRow {
    category: String,
    #[serde(rename = "type")]
    leak_type: String,
    keyword: String,
}

/// The private-information keyword catalog: categories, types, and the
/// lowercase keys that mark a leak of each type.
#[derive(Debug, Clone)]
pub struct LeakCatalog {
    rows: Vec<CatalogRow>,
    // keyword -> indexes of rows carrying it (a keyword may serve several
    // types in user-edited catalogs)
    by_keyword: BTreeMap<String, Vec<usize>>,
}

impl LeakCatalog {
    /// The keyword list shipped with the crate
    /// (`data/leak_catalog.csv`); the file can be edited and passed in at
    /// runtime without recompiling.
    pub fn builtin() -> Self {
        Self::from_csv(include_str!("../data/leak_catalog.csv").as_bytes())
            .expect("bundled catalog is well-formed")
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self, PostAnalysisError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            let row: CatalogRow = row?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, PostAnalysisError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    fn from_rows(rows: Vec<CatalogRow>) -> Result<Self, PostAnalysisError> {
        let mut by_keyword: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut per_type: BTreeSet<(String, String)> = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            if row.keyword != row.keyword.to_lowercase() {
                return Err(PostAnalysisError::KeywordNotLowercase { keyword: row.keyword.clone() });
            }
            if !per_type.insert((row.leak_type.clone(), row.keyword.clone())) {
                return Err(PostAnalysisError::DuplicateKeyword {
                    keyword: row.keyword.clone(),
                    leak_type: row.leak_type.clone(),
                });
            }
            by_keyword.entry(row.keyword.clone()).or_default().push(i);
        }
        Ok(LeakCatalog { rows, by_keyword })
    }

    /// (category, type) pairs leaked by a key, matched case-insensitively
    /// by exact token equality. Substring matching would flood false
    /// positives ("id" inside "android_id").
    pub fn lookup(&self, key: &str) -> Vec<(&str, &str)> {
        let lower = key.to_lowercase();
        self.by_keyword
            .get(&lower)
            .map(|idxs| {
                idxs.iter()
                    .map(|&i| (self.rows[i].category.as_str(), self.rows[i].leak_type.as_str()))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.rows
            .iter()
            .map(|r| (r.category.as_str(), r.leak_type.as_str(), r.keyword.as_str()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-device leak aggregate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceLeakReport {
    /// (category, type) pairs seen leaking.
    pub leaked_types: BTreeSet<(String, String)>,
    pub leaking_apps: BTreeSet<AppId>,
    pub leaking_packets: u64,
    pub apps_seen: BTreeSet<AppId>,
    pub total_packets: u64,
}

impl DeviceLeakReport {
    /// Leaking apps over total apps; 0 when the device produced no apps.
    pub fn leaking_app_ratio(&self) -> f64 {
        if self.apps_seen.is_empty() {
            0.0
        } else {
            self.leaking_apps.len() as f64 / self.apps_seen.len() as f64
        }
    }

    /// Leaking packets over total packets; 0 when the device is silent.
    pub fn leaking_traffic_ratio(&self) -> f64 {
        if self.total_packets == 0 {
            0.0
        } else {
            self.leaking_packets as f64 / self.total_packets as f64
        }
    }

    /// Combines two partial scans of the same device: counts add, app and
    /// type sets union.
    pub fn merge(&mut self, other: &DeviceLeakReport) {
        self.leaked_types.extend(other.leaked_types.iter().cloned());
        self.leaking_apps.extend(other.leaking_apps.iter().cloned());
        self.leaking_packets += other.leaking_packets;
        self.apps_seen.extend(other.apps_seen.iter().cloned());
        self.total_packets += other.total_packets;
    }
}

/// The n highest- and n lowest-scoring devices, ties broken by device id
/// so the split is deterministic. The top list is returned best-score
/// first, the bottom list worst-score first.
pub fn select_extremes(
    scores: &BTreeMap<DeviceId, f64>,
    n: usize,
) -> Result<(Vec<DeviceId>, Vec<DeviceId>), PostAnalysisError> {
    if scores.len() < 2 * n {
        return Err(PostAnalysisError::TooFewDevices { need: 2 * n, n, got: scores.len() });
    }
    let mut ranked: Vec<(&DeviceId, f64)> = scores.iter().map(|(d, &s)| (d, s)).collect();
    // BTreeMap iteration is id-sorted; a stable sort on the score alone
    // keeps that order inside ties.
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("scores are finite"));
    let bottom: Vec<DeviceId> = ranked[..n].iter().map(|(d, _)| (*d).clone()).collect();
    let top: Vec<DeviceId> = ranked[ranked.len() - n..].iter().rev().map(|(d, _)| (*d).clone()).collect();
    Ok((top, bottom))
}

fn record_leaks<'c>(rec: &TrafficRecord, catalog: &'c LeakCatalog) -> Vec<(&'c str, &'c str)> {
    let mut found = Vec::new();
    let pairs = rec
        .header_pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .chain(rec.query_params());
    for (k, v) in pairs {
        // A leak needs a catalog key and a non-empty value.
        if v.is_empty() {
            continue;
        }
        found.extend(catalog.lookup(k));
    }
    found.sort_unstable();
    found.dedup();
    found
}

/// Scans traffic for structured leaks. A packet leaks type T when some
/// header pair or query parameter has a key in T's keyword set
/// (case-insensitive) with a non-empty value. Only devices in `devices`
/// are aggregated; each gets a report even if it never appears.
pub fn scan_leaks(
    records: &[TrafficRecord],
    devices: &BTreeSet<DeviceId>,
    catalog: &LeakCatalog,
) -> BTreeMap<DeviceId, DeviceLeakReport> {
    let mut reports: BTreeMap<DeviceId, DeviceLeakReport> =
        devices.iter().map(|d| (d.clone(), DeviceLeakReport::default())).collect();
    for rec in records {
        let device = DeviceId::new(rec.src_ip.clone());
        let Some(report) = reports.get_mut(&device) else {
            continue;
        };
        report.total_packets += 1;
        if let Some(app) = &rec.app_string {
            report.apps_seen.insert(AppId::new(app.clone()));
        }
        let leaks = record_leaks(rec, catalog);
        if !leaks.is_empty() {
            report.leaking_packets += 1;
            if let Some(app) = &rec.app_string {
                report.leaking_apps.insert(AppId::new(app.clone()));
            }
            report
                .leaked_types
                .extend(leaks.into_iter().map(|(c, t)| (c.to_string(), t.to_string())));
        }
    }
    reports
}

/// Fraction of leaking apps that are NOT in the given bad-app ground-truth
/// set. Returns `None` when nothing leaked.
pub fn leaking_app_overlap(
    reports: &BTreeMap<DeviceId, DeviceLeakReport>,
    bad_apps: &BTreeSet<AppId>,
) -> Option<f64> {
    let leaking: BTreeSet<&AppId> = reports.values().flat_map(|r| r.leaking_apps.iter()).collect();
    if leaking.is_empty() {
        return None;
    }
    let outside = leaking.iter().filter(|a| !bad_apps.contains(**a)).count();
    Some(outside as f64 / leaking.len() as f64)
}

/// Passive-DNS style enrichment: per-domain first/last seen dates and
/// per-IP AS numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DnsEnrichment {
    pub domain_spans: BTreeMap<String, (NaiveDate, NaiveDate)>,
    pub ip_asn: BTreeMap<String, u32>,
}

impl DnsEnrichment {
    pub fn lifespan_days(&self, domain: &str) -> Option<i64> {
        self.domain_spans
            .get(domain)
            .map(|(first, last)| (*last - *first).num_days())
    }

    /// Reads `domain,first_seen,last_seen` (ISO-8601 dates, header row).
    pub fn read_domains<R: Read>(&mut self, reader: R) -> Result<(), PostAnalysisError> {
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize() {
            let (domain, first, last): (String, String, String) = row?;
            let parse = |s: &str| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| {
                    PostAnalysisError::BadEnrichment { entity: domain.clone(), reason: e.to_string() }
                })
            };
            let first = parse(&first)?;
            let last = parse(&last)?;
            if first > last {
                return Err(PostAnalysisError::InvertedSpan { domain, first, last });
            }
            self.domain_spans.insert(domain, (first, last));
        }
        Ok(())
    }

    /// Reads `ip,asn` (header row).
    pub fn read_asns<R: Read>(&mut self, reader: R) -> Result<(), PostAnalysisError> {
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize() {
            let (ip, asn): (String, u32) = row?;
            self.ip_asn.insert(ip, asn);
        }
        Ok(())
    }

    pub fn write_domains<W: Write>(&self, mut w: W) -> Result<(), PostAnalysisError> {
        writeln!(w, "domain,first_seen,last_seen")?;
        for (domain, (first, last)) in &self.domain_spans {
            writeln!(w, "{domain},{first},{last}")?;
        }
        Ok(())
    }

    pub fn write_asns<W: Write>(&self, mut w: W) -> Result<(), PostAnalysisError> {
        writeln!(w, "ip,asn")?;
        for (ip, asn) in &self.ip_asn {
            writeln!(w, "{ip},{asn}")?;
        }
        Ok(())
    }
}

/// Distinct AS numbers contacted per device. Destination IPs without an
/// enrichment entry are excluded from the count.
pub fn asn_stats(
    records: &[TrafficRecord],
    devices: &BTreeSet<DeviceId>,
    enrich: &DnsEnrichment,
) -> BTreeMap<DeviceId, usize> {
    let mut per_device: BTreeMap<DeviceId, BTreeSet<u32>> =
        devices.iter().map(|d| (d.clone(), BTreeSet::new())).collect();
    for rec in records {
        let device = DeviceId::new(rec.src_ip.clone());
        let Some(asns) = per_device.get_mut(&device) else {
            continue;
        };
        if let Some(&asn) = enrich.ip_asn.get(&rec.dst_ip) {
            asns.insert(asn);
        }
    }
    per_device.into_iter().map(|(d, s)| (d, s.len())).collect()
}

/// Distinct short-lived domains accessed per device: a domain counts when
/// its enrichment footprint spans strictly fewer than `window_days` days.
pub fn short_lived_domains(
    records: &[TrafficRecord],
    devices: &BTreeSet<DeviceId>,
    enrich: &DnsEnrichment,
    window_days: i64,
) -> BTreeMap<DeviceId, usize> {
    let mut per_device: BTreeMap<DeviceId, BTreeSet<&str>> =
        devices.iter().map(|d| (d.clone(), BTreeSet::new())).collect();
    for rec in records {
        let device = DeviceId::new(rec.src_ip.clone());
        let Some(domains) = per_device.get_mut(&device) else {
            continue;
        };
        let Some(domain) = rec.dst_domain.as_deref() else {
            continue;
        };
        if let Some(days) = enrich.lifespan_days(domain) {
            if days < window_days {
                domains.insert(domain);
            }
        }
    }
    per_device.into_iter().map(|(d, s)| (d, s.len())).collect()
}
