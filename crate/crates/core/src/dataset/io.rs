use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Region, TaskInstance};

fn read_jsonl<T: DeserializeOwned>(reader: impl Read, name: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: name.to_owned(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(writer: impl Write, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses regions JSONL, rejecting duplicate ids, ragged feature vectors and
/// non-finite indicator values.
pub fn read_regions(reader: impl Read, name: &str) -> Result<Vec<Region>> {
    let records: Vec<(usize, Region)> = read_jsonl(reader, name)?;
    let mut seen = HashSet::new();
    let dim = records.first().map(|(_, r)| r.features.len());
    let err = |line, msg: String| Error::Record { path: name.to_owned(), line, msg };
    for (line, r) in &records {
        if !seen.insert(r.region_id.clone()) {
            return Err(err(*line, format!("duplicate region_id `{}`", r.region_id)));
        }
        if Some(r.features.len()) != dim {
            return Err(err(
                *line,
                format!("features has length {}, expected {}", r.features.len(), dim.unwrap_or(0)),
            ));
        }
        if let Some((k, v)) = r.indicators.iter().find(|(_, v)| !v.is_finite()) {
            return Err(err(*line, format!("indicator `{k}` has non-finite value {v}")));
        }
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

pub fn read_tasks(reader: impl Read, name: &str) -> Result<Vec<TaskInstance>> {
    read_jsonl::<TaskInstance>(reader, name)?
        .into_iter()
        .map(|(line, t)| {
            t.validate().map_err(|e| Error::Record {
                path: name.to_owned(),
                line,
                msg: e.to_string(),
            })?;
            Ok(t)
        })
        .collect()
}

pub fn load_regions(path: impl AsRef<Path>) -> Result<Vec<Region>> {
    let path = path.as_ref();
    read_regions(File::open(path)?, &path.display().to_string())
}

pub fn save_regions(path: impl AsRef<Path>, regions: &[Region]) -> Result<()> {
    write_jsonl(File::create(path)?, regions)
}

pub fn save_tasks(path: impl AsRef<Path>, tasks: &[TaskInstance]) -> Result<()> {
    write_jsonl(File::create(path)?, tasks)
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<TaskInstance>> {
    let path = path.as_ref();
    read_tasks(File::open(path)?, &path.display().to_string())
}
