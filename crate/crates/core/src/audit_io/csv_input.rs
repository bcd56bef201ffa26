//! CSV readers for effect estimates and study counts.
//!
//! Both readers are all-or-nothing: the first invalid row aborts the load
//! and is reported with its line number.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use crate::effect_stats::{EffectEstimate, ReportedP};
use crate::error::{Error, Result};
use crate::search_space::StudyCounts;

const ESTIMATE_COLUMNS: [&str; 6] = ["study_id", "label", "group", "ee", "cl_low", "cl_high"];
const COUNT_COLUMNS: [&str; 5] = ["study_id", "outcomes", "predictors", "lags", "covariates"];

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn new(headers: &StringRecord) -> Self {
        Columns {
            headers: headers
                .iter()
                .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
                .collect(),
        }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| Error::Schema(format!("missing required column {name:?}")))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io {
            path: Default::default(),
            source: io,
        },
        kind => Error::RowValidation {
            row: line,
            message: format!("malformed CSV: {kind:?}"),
        },
    }
}

fn parse_f64(field: &str, column: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::RowValidation {
        row: line,
        message: format!("{column}: {field:?} is not a number"),
    })
}

pub fn load_estimates_csv(path: impl AsRef<Path>) -> Result<Vec<EffectEstimate>> {
    let path = path.as_ref();
    read_estimates(open(path)?).map_err(|e| attach_path(e, path))
}

pub fn load_counts_csv(path: impl AsRef<Path>) -> Result<Vec<StudyCounts>> {
    let path = path.as_ref();
    read_counts(open(path)?).map_err(|e| attach_path(e, path))
}

fn attach_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { path: p, source } if p.as_os_str().is_empty() => Error::io(path, source),
        other => other,
    }
}

/// Reads estimates with columns `study_id,label,group,ee,cl_low,cl_high`
/// and optional `confidence_level` and `reported_p`. Other columns are ignored.
pub fn read_estimates<R: Read>(reader: R) -> Result<Vec<EffectEstimate>> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns::new(rdr.headers().map_err(csv_error)?);
    let idx: Vec<usize> = ESTIMATE_COLUMNS
        .iter()
        .map(|c| cols.require(c))
        .collect::<Result<_>>()?;
    let level_idx = cols.find("confidence_level");
    let reported_idx = cols.find("reported_p");

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let study_id = get(idx[0]).to_string();
        if study_id.is_empty() {
            return Err(Error::RowValidation {
                row: line,
                message: "study_id is empty".into(),
            });
        }
        let group = get(idx[2]);
        if group.is_empty() {
            return Err(Error::RowValidation {
                row: line,
                message: "group is empty".into(),
            });
        }
        let confidence_level = match level_idx.map(get) {
            Some(s) if !s.is_empty() => parse_f64(s, "confidence_level", line)?,
            _ => 0.95,
        };
        let reported_p = match reported_idx.map(get) {
            None => ReportedP::NotSupplied,
            Some("") => ReportedP::Missing,
            Some(s) => ReportedP::Value(parse_f64(s, "reported_p", line)?),
        };
        let est = EffectEstimate {
            study_id,
            label: get(idx[1]).to_string(),
            ee: parse_f64(get(idx[3]), "ee", line)?,
            cl_low: parse_f64(get(idx[4]), "cl_low", line)?,
            cl_high: parse_f64(get(idx[5]), "cl_high", line)?,
            confidence_level,
            group: Some(group.to_string()),
            reported_p,
        };
        est.validate().map_err(|e| Error::RowValidation {
            row: line,
            message: match e {
                Error::Domain(m) => m,
                other => other.to_string(),
            },
        })?;
        out.push(est);
    }
    Ok(out)
}

/// Reads counts with columns `study_id,outcomes,predictors,lags,covariates`.
pub fn read_counts<R: Read>(reader: R) -> Result<Vec<StudyCounts>> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let cols = Columns::new(rdr.headers().map_err(csv_error)?);
    let idx: Vec<usize> = COUNT_COLUMNS.iter().map(|c| cols.require(c)).collect::<Result<_>>()?;

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| record.get(i).unwrap_or("");
        let int = |i: usize| -> Result<u64> {
            let name = COUNT_COLUMNS[i];
            get(idx[i]).parse::<u64>().map_err(|_| Error::RowValidation {
                row: line,
                message: format!("{name}: {:?} is not a nonnegative integer", get(idx[i])),
            })
        };
        let study_id = get(idx[0]);
        if study_id.is_empty() {
            return Err(Error::RowValidation {
                row: line,
                message: "study_id is empty".into(),
            });
        }
        let covariates = u32::try_from(int(4)?).map_err(|_| Error::RowValidation {
            row: line,
            message: "covariates is too large".into(),
        })?;
        let counts = StudyCounts {
            study_id: study_id.to_string(),
            outcomes: int(1)?,
            predictors: int(2)?,
            lags: int(3)?,
            covariates,
        };
        for (name, v) in [
            ("outcomes", counts.outcomes),
            ("predictors", counts.predictors),
            ("lags", counts.lags),
        ] {
            if v < 1 {
                return Err(Error::RowValidation {
                    row: line,
                    message: format!("{name} must be ≥ 1"),
                });
            }
        }
        out.push(counts);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "study_id,label,group,ee,cl_low,cl_high\n";

    #[test]
    fn parses_table_row() {
        let rows = read_estimates(format!("{HEADER}bc,asthma,NO2,1.13,1.04,1.23\n").as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!((r.ee, r.cl_low, r.cl_high), (1.13, 1.04, 1.23));
        assert_eq!(r.group.as_deref(), Some("NO2"));
        assert_eq!(r.confidence_level, 0.95);
        assert_eq!(r.reported_p, ReportedP::NotSupplied);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_estimates(HEADER.as_bytes()).unwrap().is_empty());
        assert!(read_counts("study_id,outcomes,predictors,lags,covariates\n".as_bytes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn invariant_breach_names_row() {
        let data = format!("{HEADER}a,x,G,1.0,0.9,1.1\nb,x,G,1.1,1.2,1.5\n");
        let err = read_estimates(data.as_bytes()).unwrap_err();
        match err {
            Error::RowValidation { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("cl_low ≤ ee"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = read_estimates("study_id,label,ee,cl_low,cl_high\na,b,1,0.5,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Schema(m) if m.contains("group")));
    }

    #[test]
    fn optional_columns() {
        let data = "study_id,label,group,ee,cl_low,cl_high,confidence_level,reported_p\n\
                    a,x,G,1.1,0.9,1.3,0.9,0.2\n\
                    b,x,G,1.1,0.9,1.3,,\n";
        let rows = read_estimates(data.as_bytes()).unwrap();
        assert_eq!(rows[0].confidence_level, 0.9);
        assert_eq!(rows[0].reported_p, ReportedP::Value(0.2));
        assert_eq!(rows[1].confidence_level, 0.95);
        assert_eq!(rows[1].reported_p, ReportedP::Missing);
    }

    #[test]
    fn non_numeric_field() {
        let err = read_estimates(format!("{HEADER}a,x,G,abc,0.9,1.1\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::RowValidation { row: 2, .. }));
    }

    #[test]
    fn counts_rows() {
        let header = "study_id,outcomes,predictors,lags,covariates\n";
        let rows = read_counts(format!("{header}bamse,7,3,4,6\npiama,5,4,8,18\n").as_bytes()).unwrap();
        assert_eq!(rows[0], StudyCounts::new("bamse", 7, 3, 4, 6).unwrap());
        assert_eq!(rows[1].covariates, 18);
        let err = read_counts(format!("{header}x,0,1,1,1\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::RowValidation { row: 2, ref message } if message.contains("outcomes")));
        let err = read_counts(format!("{header}x,1,1,1,-2\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::RowValidation { .. }));
    }

    #[test]
    fn unreadable_file_is_io() {
        let err = load_estimates_csv("/nonexistent/estimates.csv").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
