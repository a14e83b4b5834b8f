//! Clustered survival data as CSV.
//!
//! Schema: a mandatory header `cluster,time,status,<cov1>,...`, one row per
//! subject. Rows sharing a `cluster` value form one cluster, in row order.
//! Numbers are written with 12 significant digits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use copulasurv_core::{Cluster, Dataset, Subject};

use crate::error::CliError;

const FIXED: [&str; 3] = ["cluster", "time", "status"];

fn line_error(line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("line {line}: {msg}"))
}

pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| line_error(1, e))?.clone();
    if header.len() < 3 || header.iter().take(3).ne(FIXED) {
        return Err(line_error(1, format!("header must start with cluster,time,status (found '{}')", header.iter().collect::<Vec<_>>().join(","))));
    }
    let covariate_names: Vec<String> = header.iter().skip(3).map(str::to_owned).collect();
    for (i, name) in covariate_names.iter().enumerate() {
        if name.is_empty() {
            return Err(line_error(1, format!("covariate column {} has an empty name", i + 4)));
        }
        if covariate_names[..i].contains(name) {
            return Err(line_error(1, format!("duplicate covariate column '{name}'")));
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Subject>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            line_error(line, e)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(line_error(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(line_error(line, "empty cluster identifier"));
        }
        let time: f64 = record[1].parse().map_err(|_| line_error(line, format!("time '{}' is not a number", &record[1])))?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(line_error(line, format!("time must be a finite number > 0 (got {time})")));
        }
        let event = match &record[2] {
            "1" => true,
            "0" => false,
            other => return Err(line_error(line, format!("status must be 0 or 1 (got '{other}')"))),
        };
        let covariates = (3..record.len())
            .map(|k| {
                record[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| line_error(line, format!("covariate '{}' value '{}' is not a finite number", header[k].to_owned(), &record[k])))
            })
            .collect::<Result<Vec<f64>, CliError>>()?;
        let entry = groups.entry(id.to_owned()).or_insert_with(|| {
            order.push(id.to_owned());
            Vec::new()
        });
        entry.push(Subject::new(time, event, covariates));
    }
    if order.is_empty() {
        return Err(CliError::Input("no data rows".into()));
    }
    let clusters = order
        .into_iter()
        .map(|id| {
            let subjects = groups.remove(&id).unwrap_or_default();
            Cluster::new(id, subjects)
        })
        .collect();
    Dataset::new(clusters, covariate_names).map_err(|e| CliError::Input(e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    read_dataset_from(file).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Shortest decimal text of `v` rounded to 12 significant digits.
pub fn format_number(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    format!("{rounded}")
}

pub fn write_dataset_to<W: Write>(writer: W, data: &Dataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FIXED.to_vec();
    header.extend(data.covariate_names().iter().map(String::as_str));
    w.write_record(&header).map_err(CliError::from_csv)?;
    for c in data.clusters() {
        for s in &c.subjects {
            let mut row = vec![c.id.clone(), format_number(s.time), if s.event { "1".into() } else { "0".into() }];
            row.extend(s.covariates.iter().map(|&z| format_number(z)));
            w.write_record(&row).map_err(CliError::from_csv)?;
        }
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
    write_dataset_to(std::io::BufWriter::new(file), data)
}
