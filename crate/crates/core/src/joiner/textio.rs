//! Newline-delimited, tab-separated stream records.
//!
//! ```text
//! F <request_key> <ts> <slot:id,...>     feature log
//! A <request_key> <ts> <action>          action log (pos | neg)
//! E <ts> <label> <slot:id,...>           joined example
//! ```

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::joiner::{ActionKind, ActionLog, FeatureLog};
use crate::types::{Example, FeatureKey};

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Feature(FeatureLog),
    Action(ActionLog),
    Example(Example),
}

fn parse_features(field: &str, line: usize) -> Result<Vec<FeatureKey>> {
    let mut features = Vec::new();
    for part in field.split(',') {
        let (slot, id) = part.split_once(':').ok_or(Error::Parse {
            line,
            msg: format!("feature `{part}` is not slot:id"),
        })?;
        let table_id = slot.parse::<u16>().map_err(|e| Error::Parse {
            line,
            msg: format!("bad slot `{slot}`: {e}"),
        })?;
        let id = id.parse::<u64>().map_err(|e| Error::Parse {
            line,
            msg: format!("bad id `{id}`: {e}"),
        })?;
        features.push(FeatureKey::new(table_id, id));
    }
    if features.is_empty() {
        return Err(Error::Parse {
            line,
            msg: "empty feature list".into(),
        });
    }
    Ok(features)
}

fn format_features(features: &[FeatureKey]) -> String {
    features
        .iter()
        .map(|f| format!("{}:{}", f.table_id, f.id))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_record(text: &str, line: usize) -> Result<Record> {
    let fields: Vec<&str> = text.trim_end().split('\t').collect();
    let err = |msg: String| Error::Parse { line, msg };
    let int = |s: &str| -> Result<i64> {
        s.parse().map_err(|e| Error::Parse {
            line,
            msg: format!("bad integer `{s}`: {e}"),
        })
    };
    match fields.first() {
        Some(&"F") => {
            if fields.len() != 4 {
                return Err(err(format!("F record needs 4 fields, got {}", fields.len())));
            }
            Ok(Record::Feature(FeatureLog {
                request_key: int(fields[1])? as u64,
                ts: int(fields[2])?,
                features: parse_features(fields[3], line)?,
            }))
        }
        Some(&"A") => {
            if fields.len() != 4 {
                return Err(err(format!("A record needs 4 fields, got {}", fields.len())));
            }
            let action = match fields[3] {
                "pos" => ActionKind::Positive,
                "neg" => ActionKind::Negative,
                other => return Err(err(format!("unknown action `{other}`"))),
            };
            Ok(Record::Action(ActionLog {
                request_key: int(fields[1])? as u64,
                ts: int(fields[2])?,
                action,
            }))
        }
        Some(&"E") => {
            if fields.len() != 4 {
                return Err(err(format!("E record needs 4 fields, got {}", fields.len())));
            }
            let label = match fields[2] {
                "0" => 0u8,
                "1" => 1u8,
                other => return Err(err(format!("bad label `{other}`"))),
            };
            Ok(Record::Example(Example::new(
                int(fields[1])?,
                label,
                parse_features(fields[3], line)?,
            )))
        }
        Some(other) => Err(err(format!("unknown record kind `{other}`"))),
        None => Err(err("empty line".into())),
    }
}

pub fn format_feature(log: &FeatureLog) -> String {
    format!(
        "F\t{}\t{}\t{}",
        log.request_key,
        log.ts,
        format_features(&log.features)
    )
}

pub fn format_action(log: &ActionLog) -> String {
    let kind = match log.action {
        ActionKind::Positive => "pos",
        ActionKind::Negative => "neg",
    };
    format!("A\t{}\t{}\t{}", log.request_key, log.ts, kind)
}

pub fn format_example(ex: &Example) -> String {
    format!(
        "E\t{}\t{}\t{}",
        ex.ts,
        ex.label,
        format_features(&ex.features)
    )
}

/// Reads records from a stream, skipping blank lines.
pub fn read_records(reader: impl BufRead) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line, lineno + 1)?);
    }
    Ok(records)
}

pub fn write_examples(mut writer: impl Write, examples: &[Example]) -> Result<()> {
    for ex in examples {
        writeln!(writer, "{}", format_example(ex))?;
    }
    Ok(())
}
