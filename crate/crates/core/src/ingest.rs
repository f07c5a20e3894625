//! Traffic-record parsing and device/app entity extraction.
//!
//! Traffic files are UTF-8, one record per line, 8 tab-separated columns:
//! timestamp, src_ip, dst_ip, dst_domain, http_method, http_path,
//! app_string, header_pairs. An empty string marks an absent optional
//! field, lines beginning with `#` are comments, and blank lines are
//! skipped. Header pairs are serialized `k1=v1&k2=v2`; keys and values must
//! not contain tabs or `&`.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::net::Ipv4Addr;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{AppId, DeviceId};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: expected 8 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid IPv4 address `{value}`")]
    BadIpv4 { line: usize, value: String },
    #[error("line {line}: invalid timestamp `{value}`")]
    BadTimestamp { line: usize, value: String },
    #[error("line {line}: app string contains whitespace")]
    BadAppString { line: usize },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One parsed packet/flow metadata row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficRecord {
    /// UTC seconds.
    pub timestamp: u64,
    /// Device identity.
    pub src_ip: String,
    pub dst_ip: String,
    pub dst_domain: Option<String>,
    pub http_method: Option<String>,
    /// URL path plus query string.
    pub http_path: Option<String>,
    /// Package-name token, e.g. `com.sina.news`.
    pub app_string: Option<String>,
    pub header_pairs: Vec<(String, String)>,
}

impl TrafficRecord {
    /// Key-value pairs from the query-string part of `http_path`.
    pub fn query_params(&self) -> Vec<(&str, &str)> {
        let Some(path) = self.http_path.as_deref() else {
            return Vec::new();
        };
        let Some((_, query)) = path.split_once('?') else {
            return Vec::new();
        };
        query
            .split('&')
            .filter(|kv| !kv.is_empty())
            .map(|kv| kv.split_once('=').unwrap_or((kv, "")))
            .collect()
    }

    /// The record as one traffic-file line (inverse of [`parse_record`]).
    pub fn to_tsv_line(&self) -> String {
        let opt = |s: &Option<String>| s.clone().unwrap_or_default();
        let headers = self
            .header_pairs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("&");
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.timestamp,
            self.src_ip,
            self.dst_ip,
            opt(&self.dst_domain),
            opt(&self.http_method),
            opt(&self.http_path),
            opt(&self.app_string),
            headers
        )
    }
}

/// Which entity stands in for "app" during extraction: the explicit app
/// string from the HTTP header, or the destination IP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityMode {
    AppString,
    DestinationIp,
}

impl std::fmt::Display for EntityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntityMode::AppString => f.write_str("app-string"),
            EntityMode::DestinationIp => f.write_str("dst-ip"),
        }
    }
}

fn validate_ipv4(value: &str, line: usize) -> Result<(), ParseError> {
    // IPv6 and anything else non-dotted-quad is rejected, not coerced.
    Ipv4Addr::from_str(value)
        .map(|_| ())
        .map_err(|_| ParseError::BadIpv4 { line, value: value.to_string() })
}

fn opt_col(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

/// Parses one traffic-file row. `line_no` is 1-based and only used in
/// errors.
pub fn parse_record(line: &str, line_no: usize) -> Result<TrafficRecord, ParseError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 8 {
        return Err(ParseError::ColumnCount { line: line_no, found: cols.len() });
    }
    let timestamp = cols[0]
        .parse::<u64>()
        .map_err(|_| ParseError::BadTimestamp { line: line_no, value: cols[0].to_string() })?;
    validate_ipv4(cols[1], line_no)?;
    validate_ipv4(cols[2], line_no)?;
    let app_string = opt_col(cols[6]);
    if let Some(app) = &app_string {
        if app.chars().any(char::is_whitespace) {
            return Err(ParseError::BadAppString { line: line_no });
        }
    }
    let header_pairs = if cols[7].is_empty() {
        Vec::new()
    } else {
        cols[7]
            .split('&')
            .filter(|kv| !kv.is_empty())
            .map(|kv| {
                let (k, v) = kv.split_once('=').unwrap_or((kv, ""));
                (k.to_string(), v.to_string())
            })
            .collect()
    };
    Ok(TrafficRecord {
        timestamp,
        src_ip: cols[1].to_string(),
        dst_ip: cols[2].to_string(),
        dst_domain: opt_col(cols[3]),
        http_method: opt_col(cols[4]),
        http_path: opt_col(cols[5]),
        app_string,
        header_pairs,
    })
}

/// The device behind a record: the source IP, verbatim.
pub fn extract_device(rec: &TrafficRecord) -> DeviceId {
    DeviceId::new(rec.src_ip.clone())
}

/// The app entity of a record under the given mode. Each distinct app
/// string is its own app; version or market suffixes are not stripped.
/// Records without an app string yield `None` in app-string mode.
pub fn extract_app(rec: &TrafficRecord, mode: EntityMode) -> Option<AppId> {
    match mode {
        EntityMode::AppString => rec.app_string.as_ref().map(|s| AppId::new(s.clone())),
        EntityMode::DestinationIp => Some(AppId::new(rec.dst_ip.clone())),
    }
}

/// Deduplicated device-app co-occurrence edges; a pair appears once no
/// matter how many packets produced it.
pub fn build_edge_stream<'a, I>(records: I, mode: EntityMode) -> BTreeSet<(DeviceId, AppId)>
where
    I: IntoIterator<Item = &'a TrafficRecord>,
{
    records
        .into_iter()
        .filter_map(|rec| extract_app(rec, mode).map(|app| (extract_device(rec), app)))
        .collect()
}

/// Reads a whole traffic file. Rows are parsed in parallel by line; the
/// result is identical to sequential parsing, and when several rows are
/// malformed the error for the earliest line is returned.
pub fn read_traffic_file(path: &Path) -> Result<Vec<TrafficRecord>, IngestError> {
    let file = std::fs::File::open(path)?;
    read_traffic(std::io::BufReader::new(file))
}

pub fn read_traffic<R: BufRead>(reader: R) -> Result<Vec<TrafficRecord>, IngestError> {
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lines.push((i + 1, line));
    }
    let results: Vec<Result<TrafficRecord, ParseError>> = lines
        .par_iter()
        .map(|(no, line)| parse_record(line, *no))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    Ok(records)
}
