//! Time-course observation tables.
//!
//! CSV with a header row. Required columns `t` and `s`; optional `c` (an
//! empty cell means "not observed") and `weight` (default 1). Column order
//! is free and unknown columns are ignored.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub t: f64,
    pub s_obs: f64,
    pub c_obs: Option<f64>,
    pub weight: f64,
}

impl Observation {
    pub fn new(t: f64, s_obs: f64) -> Self {
        Observation {
            t,
            s_obs,
            c_obs: None,
            weight: 1.0,
        }
    }

    pub fn with_c(mut self, c_obs: f64) -> Self {
        self.c_obs = Some(c_obs);
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.t.is_finite()
            && self.s_obs.is_finite()
            && self.c_obs.is_none_or(f64::is_finite)
            && self.weight.is_finite();
        if !finite {
            return Err(Error::Table(format!("non-finite value in {self:?}")));
        }
        if self.t < 0.0 {
            return Err(Error::Table(format!("negative time {}", self.t)));
        }
        if self.weight < 0.0 {
            return Err(Error::Table(format!("negative weight {}", self.weight)));
        }
        Ok(())
    }
}

struct Columns {
    t: usize,
    s: usize,
    c: Option<usize>,
    weight: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::Table(format!("missing required column `{name}`")))
        };
        Ok(Columns {
            t: required("t")?,
            s: required("s")?,
            c: find("c"),
            weight: find("weight"),
        })
    }
}

fn cell(record: &csv::StringRecord, idx: usize, line: u64, name: &str) -> Result<Option<f64>> {
    let raw = record.get(idx).map(str::trim).unwrap_or("");
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| {
        Error::Table(format!(
            "line {line}: column `{name}` is not a number: {raw:?}"
        ))
    })
}

/// Parses and validates an observation table.
pub fn parse_observations<R: Read>(input: R) -> Result<Vec<Observation>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::Table(e.to_string()))?
        .clone();
    let cols = Columns::locate(&headers)?;

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Table(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let t = cell(&record, cols.t, line, "t")?
            .ok_or_else(|| Error::Table(format!("line {line}: empty `t`")))?;
        let s = cell(&record, cols.s, line, "s")?
            .ok_or_else(|| Error::Table(format!("line {line}: empty `s`")))?;
        let mut obs = Observation::new(t, s);
        if let Some(i) = cols.c {
            obs.c_obs = cell(&record, i, line, "c")?;
        }
        if let Some(i) = cols.weight {
            obs.weight = cell(&record, i, line, "weight")?.unwrap_or(1.0);
        }
        obs.validate()
            .map_err(|e| Error::Table(format!("line {line}: {e}")))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Table(format!("{}: {e}", path.display())))?;
    parse_observations(std::io::BufReader::new(file))
}

/// Writes `t,s[,c],weight`; the `c` column is emitted when any row has it.
pub fn write_observations<W: Write>(out: W, data: &[Observation]) -> Result<()> {
    let with_c = data.iter().any(|o| o.c_obs.is_some());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Table(e.to_string());
    if with_c {
        w.write_record(["t", "s", "c", "weight"]).map_err(io)?;
    } else {
        w.write_record(["t", "s", "weight"]).map_err(io)?;
    }
    for o in data {
        let mut row = vec![o.t.to_string(), o.s_obs.to_string()];
        if with_c {
            row.push(o.c_obs.map(|c| c.to_string()).unwrap_or_default());
        }
        row.push(o.weight.to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Table(e.to_string()))?;
    Ok(())
}
