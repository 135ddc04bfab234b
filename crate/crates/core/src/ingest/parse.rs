use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use super::CheckIn;
use crate::{Error, Result};

const TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

/// Which optional columns a check-in file carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSchema {
    /// Decide per row: 8 columns carry a timezone offset, 7 do not.
    #[default]
    Auto,
    WithOffset,
    WithoutOffset,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub schema: ColumnSchema,
    /// Fail on the first malformed row instead of skipping it.
    pub strict: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseStats {
    pub accepted: usize,
    pub rejected: usize,
    pub user_count: usize,
    /// Line numbers (1-based) of the first rejected rows.
    pub rejected_lines: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseOutcome {
    pub checkins: Vec<CheckIn>,
    pub stats: ParseStats,
}

const MAX_REPORTED_REJECTS: usize = 100;

pub fn format_utc_time(t: DateTime<Utc>) -> String {
    t.format("%a %b %d %H:%M:%S +0000 %Y").to_string()
}

fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| DateTime::parse_from_rfc3339(s))
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

fn parse_row(line: &str, schema: ColumnSchema) -> std::result::Result<CheckIn, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let with_offset = match (schema, cols.len()) {
        (ColumnSchema::Auto | ColumnSchema::WithOffset, 8) => true,
        (ColumnSchema::Auto | ColumnSchema::WithoutOffset, 7) => false,
        (_, n) => return Err(format!("expected 7 or 8 tab-separated columns, found {n}")),
    };
    let num = |i: usize, name: &str| -> std::result::Result<f64, String> {
        cols[i].trim().parse::<f64>().map_err(|_| format!("{name} {:?} is not a number", cols[i]))
    };
    let latitude = num(4, "latitude")?;
    let longitude = num(5, "longitude")?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(format!("latitude {latitude} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&longitude) {
        return Err(format!("longitude {longitude} outside [-180, 180]"));
    }
    let tz_offset_minutes = if with_offset {
        let raw = cols[6].trim();
        Some(raw.parse::<i32>().map_err(|_| format!("timezone offset {raw:?} is not an integer"))?)
    } else {
        None
    };
    let time_col = cols[if with_offset { 7 } else { 6 }].trim();
    let utc_time = parse_time(time_col).ok_or_else(|| format!("unparseable time {time_col:?}"))?;
    if cols[0].is_empty() {
        return Err("empty user id".into());
    }
    Ok(CheckIn {
        user_id: cols[0].to_string(),
        poi_id: cols[1].to_string(),
        category_id: cols[2].to_string(),
        category_name: cols[3].to_string(),
        latitude,
        longitude,
        tz_offset_minutes,
        utc_time,
    })
}

/// Streams tab-separated check-ins. Blank lines and a leading `user_id`
/// header are skipped; other malformed rows are counted (lenient) or fail the
/// parse (strict).
pub fn parse_checkins<R: BufRead>(mut source: R, opts: ParseOptions) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let mut users = BTreeSet::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if source.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let row = match std::str::from_utf8(&buf) {
            Ok(s) => Ok(s.trim_end_matches(['\n', '\r'])),
            Err(_) => Err("row is not valid UTF-8".to_string()),
        };
        let parsed = row.and_then(|line| {
            if line.trim().is_empty() || (line_no == 1 && line.starts_with("user_id\t")) {
                return Ok(None);
            }
            parse_row(line, opts.schema).map(Some)
        });
        match parsed {
            Ok(Some(c)) => {
                users.insert(c.user_id.clone());
                out.checkins.push(c);
            }
            Ok(None) => {}
            Err(reason) if opts.strict => return Err(Error::MalformedRow { line: line_no, reason }),
            Err(reason) => {
                log::debug!("skipping line {line_no}: {reason}");
                out.stats.rejected += 1;
                if out.stats.rejected_lines.len() < MAX_REPORTED_REJECTS {
                    out.stats.rejected_lines.push(line_no);
                }
            }
        }
    }
    out.stats.accepted = out.checkins.len();
    out.stats.user_count = users.len();
    Ok(out)
}

/// Writes check-ins back in the input TSV layout.
pub fn write_tsv<W: Write>(mut w: W, checkins: &[CheckIn]) -> Result<()> {
    for c in checkins {
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t",
            c.user_id, c.poi_id, c.category_id, c.category_name, c.latitude, c.longitude
        )?;
        if let Some(off) = c.tz_offset_minutes {
            write!(w, "{off}\t")?;
        }
        writeln!(w, "{}", format_utc_time(c.utc_time))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    #[serde(flatten)]
    checkin: &'a CheckIn,
    local_time: String,
    hour: u32,
}

/// Newline-delimited JSON, one canonical record per check-in.
pub fn write_canonical<W: Write>(mut w: W, checkins: &[CheckIn]) -> Result<()> {
    for c in checkins {
        let local = c.local_time();
        let rec = CanonicalRecord {
            checkin: c,
            local_time: local.format("%Y-%m-%dT%H:%M:%S").to_string(),
            hour: local.hour(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
