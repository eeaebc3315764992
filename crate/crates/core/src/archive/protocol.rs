//! Line protocol: `QUERY <class> <min_conf> [instrument] [lat_lo lat_hi]`.
//! Class names with spaces are double-quoted. Each response is the matching
//! item ids, one per line, followed by a blank line; failures are a single
//! `ERR <message>` line followed by a blank line.

use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};

use super::{query, ArchiveError, ArchiveIndex, QueryFilter, QueryLog, Result};
use crate::datasets::{ClassCatalog, Instrument};

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRequest {
    pub class_name: String,
    pub filter: QueryFilter,
}

fn tokenize(line: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = line.trim().chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut tok = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => tok.push(ch),
                    None => return Err("unterminated quote".into()),
                }
            }
            out.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                tok.push(ch);
                chars.next();
            }
            out.push(tok);
        }
    }
    Ok(out)
}

pub fn parse_query_line(line: &str) -> std::result::Result<QueryRequest, String> {
    let toks = tokenize(line)?;
    let usage = "usage: QUERY <class> <min_conf> [instrument] [lat_lo lat_hi]";
    if toks.len() < 3 || !toks[0].eq_ignore_ascii_case("QUERY") {
        return Err(usage.into());
    }
    let min_conf: f64 = toks[2]
        .parse()
        .map_err(|_| format!("min_conf is not a number: {:?}", toks[2]))?;
    if !(0.0..=1.0).contains(&min_conf) {
        return Err(format!("min_conf {min_conf} outside [0, 1]"));
    }
    let mut rest = &toks[3..];
    let mut instrument = None;
    if let Some(first) = rest.first() {
        if first.parse::<f64>().is_err() {
            instrument = Some(first.parse::<Instrument>()?);
            rest = &rest[1..];
        }
    }
    let lat_range = match rest {
        [] => None,
        [lo, hi] => {
            let lo: f64 = lo.parse().map_err(|_| format!("lat_lo is not a number: {lo:?}"))?;
            let hi: f64 = hi.parse().map_err(|_| format!("lat_hi is not a number: {hi:?}"))?;
            if lo > hi {
                return Err(format!("empty latitude range [{lo}, {hi}]"));
            }
            Some((lo, hi))
        }
        _ => return Err(usage.into()),
    };
    Ok(QueryRequest {
        class_name: toks[1].clone(),
        filter: QueryFilter {
            min_conf,
            instrument,
            lat_range,
        },
    })
}

/// Answers queries read from `input` until end of input. Returns the number
/// of requests handled.
pub fn serve_queries<R: BufRead, W: Write>(
    index: &ArchiveIndex,
    catalog: &ClassCatalog,
    input: R,
    mut output: W,
    log: &mut QueryLog,
    mut clock: impl FnMut() -> DateTime<Utc>,
) -> Result<usize> {
    let io = |e: std::io::Error| ArchiveError::Io {
        path: "<stream>".into(),
        source: e,
    };
    let mut handled = 0;
    for line in input.lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        handled += 1;
        let answer = parse_query_line(&line).and_then(|req| {
            let class = catalog
                .id_of(&req.class_name)
                .ok_or_else(|| format!("unknown class {:?}", req.class_name))?;
            query(index, catalog, class, &req.filter, log, clock()).map_err(|e| e.to_string())
        });
        match answer {
            Ok(ids) => {
                for id in ids {
                    writeln!(output, "{id}").map_err(io)?;
                }
            }
            Err(msg) => writeln!(output, "ERR {msg}").map_err(io)?,
        }
        writeln!(output).map_err(io)?;
        output.flush().map_err(io)?;
    }
    Ok(handled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::tests::when;
    use crate::archive::{build_index, TagRecord};

    #[test]
    fn parses_full_and_minimal_forms() {
        let r = parse_query_line(r#"QUERY "Swiss cheese" 0.9 HIRISE -90 -60"#).unwrap();
        assert_eq!(r.class_name, "Swiss cheese");
        assert_eq!(r.filter.instrument, Some(Instrument::Hirise));
        assert_eq!(r.filter.lat_range, Some((-90.0, -60.0)));
        let m = parse_query_line("query Crater 0.5").unwrap();
        assert_eq!((m.class_name.as_str(), m.filter.min_conf), ("Crater", 0.5));
        let lat_only = parse_query_line("QUERY Crater 0 -10 10").unwrap();
        assert_eq!(lat_only.filter.lat_range, Some((-10.0, 10.0)));
        for bad in [
            "",
            "QUERY Crater",
            "FIND Crater 0.5",
            "QUERY Crater x",
            "QUERY \"Crater 0.5",
            "QUERY Crater 0.5 -10",
        ] {
            assert!(parse_query_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn serves_a_session() {
        let cat = ClassCatalog::hirise();
        let crater = cat.id_of("Crater").unwrap();
        let tags: Vec<TagRecord> = [("a", 0.91), ("b", 0.99)]
            .iter()
            .map(|&(id, c)| TagRecord {
                item_id: id.into(),
                class: crater,
                confidence: c,
                lat: Some(-5.0),
                lon: Some(0.0),
                instrument: Instrument::Hirise,
                tagged_at: when(),
            })
            .collect();
        let idx = build_index(&tags);
        let input = "QUERY Crater 0.95\n\nQUERY Volcano 0.1\nQUERY Crater 0 HIRISE -10 0\n";
        let mut out = Vec::new();
        let mut log = QueryLog::default();
        let n = serve_queries(&idx, &cat, input.as_bytes(), &mut out, &mut log, when).unwrap();
        assert_eq!(n, 3);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "b\n\nERR unknown class \"Volcano\"\n\nb\na\n\n");
        assert_eq!(log.entries.len(), 2);
    }
}
