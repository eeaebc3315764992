use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::index::posting_order;
use super::{ArchiveError, ArchiveIndex, Posting, QueryLog, QueryLogEntry, Result, TagRecord};
use crate::datasets::{ClassCatalog, Instrument};

const TAG_HEADER: [&str; 7] = [
    "item_id",
    "class",
    "confidence",
    "lat",
    "lon",
    "instrument",
    "tagged_at",
];
const LOG_HEADER: [&str; 3] = ["timestamp", "class", "result_count"];
const INDEX_MAGIC: &str = "# marstag archive index v1";

fn io_err(path: &Path, source: std::io::Error) -> ArchiveError {
    ArchiveError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> ArchiveError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        kind => ArchiveError::Parse {
            line,
            reason: format!("{kind:?}"),
        },
    }
}

fn opt_coord(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn parse_err(line: usize, reason: impl Into<String>) -> ArchiveError {
    ArchiveError::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_opt(s: &str, line: usize, what: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| parse_err(line, format!("{what}: not a number: {s:?}")))
}

fn parse_real(s: &str, line: usize, what: &str) -> Result<f64> {
    parse_opt(s, line, what)?.ok_or_else(|| parse_err(line, format!("{what} is empty")))
}

fn parse_time(s: &str, line: usize) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| parse_err(line, format!("bad timestamp {s:?}: {e}")))
}

fn parse_instrument(s: &str, line: usize) -> Result<Instrument> {
    s.parse().map_err(|e: String| parse_err(line, e))
}

fn rfc3339(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn write_tags_csv(path: impl AsRef<Path>, tags: &[TagRecord], catalog: &ClassCatalog) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(TAG_HEADER).map_err(|e| csv_err(path, e))?;
    for t in tags {
        w.write_record([
            t.item_id.clone(),
            catalog.name(t.class).to_string(),
            format!("{:.6}", t.confidence),
            opt_coord(t.lat),
            opt_coord(t.lon),
            t.instrument.to_string(),
            rfc3339(&t.tagged_at),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_tags_csv(path: impl AsRef<Path>, catalog: &ClassCatalog) -> Result<Vec<TagRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != TAG_HEADER.len() {
            return Err(parse_err(line, format!("expected {} columns", TAG_HEADER.len())));
        }
        out.push(TagRecord {
            item_id: rec[0].to_string(),
            class: catalog
                .id_of(&rec[1])
                .ok_or_else(|| ArchiveError::UnknownClass(rec[1].to_string()))?,
            confidence: parse_real(&rec[2], line, "confidence")?,
            lat: parse_opt(&rec[3], line, "lat")?,
            lon: parse_opt(&rec[4], line, "lon")?,
            instrument: parse_instrument(&rec[5], line)?,
            tagged_at: parse_time(&rec[6], line)?,
        });
    }
    Ok(out)
}

/// One `[class name]` section per class, then tab-separated
/// `item_id confidence instrument lat lon` rows in posting order.
pub fn write_index(path: impl AsRef<Path>, index: &ArchiveIndex, catalog: &ClassCatalog) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{INDEX_MAGIC}\n");
    for (class, list) in &index.postings {
        writeln!(out, "[{}]", catalog.name(*class)).expect("string write");
        for p in list {
            if p.item_id.contains(['\t', '\n', '\r']) || p.item_id.starts_with('[') {
                return Err(ArchiveError::Invalid(format!(
                    "item id {:?} cannot be indexed",
                    p.item_id
                )));
            }
            writeln!(
                out,
                "{}\t{:.6}\t{}\t{}\t{}",
                p.item_id,
                p.confidence,
                p.instrument,
                opt_coord(p.lat),
                opt_coord(p.lon)
            )
            .expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_index(path: impl AsRef<Path>, catalog: &ClassCatalog) -> Result<ArchiveIndex> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == INDEX_MAGIC => {}
        _ => return Err(parse_err(1, "missing index header")),
    }
    let mut postings: BTreeMap<_, Vec<Posting>> = BTreeMap::new();
    let mut current = None;
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let class = catalog
                .id_of(name)
                .ok_or_else(|| ArchiveError::UnknownClass(name.to_string()))?;
            postings.entry(class).or_default();
            current = Some(class);
            continue;
        }
        let class = current.ok_or_else(|| parse_err(n, "posting before any class section"))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(parse_err(n, "expected 5 tab-separated fields"));
        }
        postings.entry(class).or_default().push(Posting {
            item_id: f[0].to_string(),
            confidence: parse_real(f[1], n, "confidence")?,
            instrument: parse_instrument(f[2], n)?,
            lat: parse_opt(f[3], n, "lat")?,
            lon: parse_opt(f[4], n, "lon")?,
        });
    }
    for list in postings.values() {
        if !list.windows(2).all(|w| posting_order(&w[0], &w[1]).is_le()) {
            return Err(parse_err(0, "postings are not sorted"));
        }
    }
    postings.retain(|_, v| !v.is_empty());
    Ok(ArchiveIndex { postings })
}

/// Appends entries to a CSV query log, writing the header to a new file.
pub fn write_query_log(path: impl AsRef<Path>, entries: &[QueryLogEntry], catalog: &ClassCatalog) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    if fresh {
        w.write_record(LOG_HEADER).map_err(|e| csv_err(path, e))?;
    }
    for e in entries {
        w.write_record([
            rfc3339(&e.timestamp),
            catalog.name(e.class).to_string(),
            e.result_count.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e.into_error()))?;
    f.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// Reads a query log; a missing file is an empty log.
pub fn read_query_log(path: impl AsRef<Path>, catalog: &ClassCatalog) -> Result<QueryLog> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(QueryLog::default());
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut log = QueryLog::default();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != LOG_HEADER.len() {
            return Err(parse_err(line, "expected timestamp,class,result_count"));
        }
        let class = catalog
            .id_of(&rec[1])
            .ok_or_else(|| ArchiveError::UnknownClass(rec[1].to_string()))?;
        let count = rec[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad result count {:?}", &rec[2])))?;
        log.record(parse_time(&rec[0], line)?, class, count);
    }
    Ok(log)
}
