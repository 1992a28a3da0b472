use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::TaskDomain;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "variant,dataset,task,samples_per_sec,sgcs,nmse_db,seed";

/// One evaluated (model, dataset, task) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub variant: String,
    pub dataset: String,
    pub distribution: String,
    pub task: TaskDomain,
    pub samples_per_sec: Option<f64>,
    pub sgcs: f64,
    /// `-inf` for exact predictions; serialized as the string "-inf".
    #[serde(with = "db")]
    pub nmse_db: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub(super) mod db {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Num(*v).serialize(s)
        } else {
            Repr::Text(super::fmt_db(*v)).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn fmt_db(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.4}")
    }
}

impl EvalRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.4},{},{}",
            self.variant,
            self.dataset,
            self.task,
            self.samples_per_sec.map_or(String::new(), |v| format!("{v:.2}")),
            self.sgcs,
            fmt_db(self.nmse_db),
            self.seed
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub hardware: String,
    /// What one "sample" means in `samples_per_sec`.
    pub sample_unit: String,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(hardware: String) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            hardware,
            sample_unit: "one task sample (t_past observed frames -> t_future predicted frames)".into(),
            rows: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !(0.0..=1.0).contains(&r.sgcs) {
                return Err(Error::Format(format!("sgcs {} outside [0, 1]", r.sgcs)));
            }
            if r.samples_per_sec.is_some_and(|s| s.is_nan() || s <= 0.0) {
                return Err(Error::Format("throughput must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Appends rows to a CSV file, writing the header only when the file is new
/// and refusing to append to a file with a different header.
pub fn append_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let existing = match std::fs::File::open(path) {
        Ok(f) => BufReader::new(f).lines().next().transpose()?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(header) = &existing {
        if header != CSV_HEADER {
            return Err(Error::Format(format!(
                "{} has header {header:?}, expected {CSV_HEADER:?}",
                path.display()
            )));
        }
    }
    let mut out = String::new();
    if existing.is_none() {
        writeln!(out, "{CSV_HEADER}").expect("string write");
    }
    for r in rows {
        writeln!(out, "{}", r.csv_line()).expect("string write");
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Wide table: one line per (variant, dataset) with throughput, then SGCS and
/// NMSE for each task domain. Missing cells are left empty.
pub fn table_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("variant,dataset,samples_per_sec");
    for prefix in ["sgcs", "nmse_db"] {
        for d in TaskDomain::ALL {
            write!(out, ",{prefix}_{d}").expect("string write");
        }
    }
    out.push('\n');
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(&r.variant, &r.dataset)) {
            keys.push((&r.variant, &r.dataset));
        }
    }
    for (variant, dataset) in keys {
        let cell: Vec<&EvalRow> = rows.iter().filter(|r| r.variant == variant && r.dataset == dataset).collect();
        let speeds: Vec<f64> = cell.iter().filter_map(|r| r.samples_per_sec).collect();
        let speed = if speeds.is_empty() {
            String::new()
        } else {
            format!("{:.2}", speeds.iter().sum::<f64>() / speeds.len() as f64)
        };
        write!(out, "{variant},{dataset},{speed}").expect("string write");
        for metric in [0, 1] {
            for d in TaskDomain::ALL {
                let vals: Vec<f64> = cell
                    .iter()
                    .filter(|r| r.task == d)
                    .map(|r| if metric == 0 { r.sgcs } else { r.nmse_db })
                    .collect();
                if vals.is_empty() {
                    out.push(',');
                } else {
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let text = if metric == 0 { format!("{mean:.4}") } else { fmt_db(mean) };
                    write!(out, ",{text}").expect("string write");
                }
            }
        }
        out.push('\n');
    }
    out
}
