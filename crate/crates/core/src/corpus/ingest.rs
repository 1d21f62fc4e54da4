use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BehaviorRaw, Completion, CorpusError, Dataset, Result, ReviewRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestFormat {
    Jsonl,
    Csv,
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub rejects: Vec<Reject>,
}

impl IngestOutcome {
    pub fn reject_count(&self) -> usize {
        self.rejects.len()
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    id: Option<String>,
    course_id: Option<String>,
    domain: Option<String>,
    text: Option<String>,
    rating: Option<f64>,
    ts: Option<i64>,
    #[serde(default)]
    behavior: Option<BTreeMap<String, Option<BehaviorRaw>>>,
    completion: Option<Completion>,
}

/// Reads a review file. Malformed input is fatal; rows that parse but violate
/// a record invariant are rejected and reported. `schema` lists the accepted
/// behavioral feature names; every record gets an explicit entry per feature.
pub fn ingest_reviews(path: &Path, format: IngestFormat, schema: &[String]) -> Result<IngestOutcome> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let rows = match format {
        IngestFormat::Jsonl => read_jsonl_rows(BufReader::new(file))?,
        IngestFormat::Csv => read_csv_rows(file)?,
    };

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    let mut rejects = Vec::new();
    for (line, row) in rows {
        match validate(row, schema) {
            Ok(rec) => {
                if seen.insert(rec.id.clone()) {
                    records.push(rec);
                } else {
                    rejects.push(Reject {
                        line,
                        reason: format!("duplicate id '{}'", rec.id),
                    });
                }
            }
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    if !rejects.is_empty() {
        log::warn!("{}: rejected {} rows", path.display(), rejects.len());
    }
    Ok(IngestOutcome {
        dataset: Dataset::new(records),
        rejects,
    })
}

fn read_jsonl_rows(reader: impl BufRead) -> Result<Vec<(usize, RawRow)>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RawRow = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        rows.push((line_no, row));
    }
    Ok(rows)
}

fn read_csv_rows(file: File) -> Result<Vec<(usize, RawRow)>> {
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| CorpusError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| CorpusError::Parse { line, message };

        let mut row = RawRow {
            id: None,
            course_id: None,
            domain: None,
            text: None,
            rating: None,
            ts: None,
            behavior: None,
            completion: None,
        };
        let mut behavior = BTreeMap::new();
        for (name, cell) in headers.iter().zip(record.iter()) {
            if cell.is_empty() {
                if let Some(feature) = name.strip_prefix("beh.") {
                    behavior.insert(feature.to_string(), None);
                }
                continue;
            }
            match name {
                "id" => row.id = Some(cell.to_string()),
                "course_id" => row.course_id = Some(cell.to_string()),
                "domain" => row.domain = Some(cell.to_string()),
                "text" => row.text = Some(cell.to_string()),
                "rating" => {
                    row.rating = Some(
                        cell.trim()
                            .parse()
                            .map_err(|_| parse_err(format!("rating '{cell}' is not a number")))?,
                    )
                }
                "ts" => {
                    row.ts = Some(
                        cell.trim()
                            .parse()
                            .map_err(|_| parse_err(format!("ts '{cell}' is not an integer")))?,
                    )
                }
                "completion" => {
                    row.completion = Some(
                        Completion::parse(cell.trim())
                            .ok_or_else(|| parse_err(format!("unknown completion '{cell}'")))?,
                    )
                }
                other => match other.strip_prefix("beh.") {
                    Some(feature) => {
                        let v: f64 = cell
                            .trim()
                            .parse()
                            .map_err(|_| parse_err(format!("{other} '{cell}' is not a number")))?;
                        behavior.insert(feature.to_string(), Some(BehaviorRaw::Scalar(v)));
                    }
                    None => return Err(parse_err(format!("unknown column '{other}'"))),
                },
            }
        }
        row.behavior = Some(behavior);
        rows.push((line, row));
    }
    Ok(rows)
}

fn validate(row: RawRow, schema: &[String]) -> std::result::Result<ReviewRecord, String> {
    let id = row.id.ok_or("missing id")?;
    let text = row.text.ok_or("missing text")?;
    let rating = row.rating.ok_or("missing rating")?;
    if !(1.0..=5.0).contains(&rating) {
        return Err(format!("rating {rating} outside [1, 5]"));
    }
    let course_id = row.course_id.ok_or("missing course_id")?;
    let timestamp = row.ts.ok_or("missing ts")?;

    let mut behavior: BTreeMap<String, Option<BehaviorRaw>> = schema.iter().map(|f| (f.clone(), None)).collect();
    for (name, value) in row.behavior.unwrap_or_default() {
        let slot = behavior
            .get_mut(&name)
            .ok_or_else(|| format!("unknown behavioral feature '{name}'"))?;
        if let Some(v) = &value {
            let finite = match v {
                BehaviorRaw::Scalar(x) => x.is_finite(),
                BehaviorRaw::Events(ev) => ev.iter().all(|(_, x)| x.is_finite()),
            };
            if !finite {
                return Err(format!("non-finite value for '{name}'"));
            }
        }
        *slot = value;
    }

    Ok(ReviewRecord {
        id,
        course_id,
        domain_tag: row.domain.unwrap_or_else(|| "unknown".to_string()),
        text,
        rating,
        timestamp,
        behavior,
        completion: row.completion,
    })
}

pub fn write_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    write_lines(path, dataset.records.iter())
}

pub fn write_rejects(rejects: &[Reject], path: &Path) -> Result<()> {
    write_lines(path, rejects.iter())
}

fn write_lines<'a, T: Serialize + 'a>(path: &Path, items: impl Iterator<Item = &'a T>) -> Result<()> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| io_err(e.into()))?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
