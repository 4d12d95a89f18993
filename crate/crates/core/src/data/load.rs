use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{days_since, DatasetSchema, FeatureKind};
use crate::error::{Error, Result};

/// Largest tolerated share of malformed rows.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

/// A feature value before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RawValue {
    Number(f64),
    Category(String),
    Missing,
}

/// One parsed row, features in active-feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub region: String,
    pub time: f64,
    pub event: bool,
    /// Origination in days from the reference date.
    pub origination: Option<f64>,
    pub features: Vec<RawValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalformedRow {
    /// One-based line number in the file, header being line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub schema: DatasetSchema,
    pub records: Vec<RawRecord>,
    pub malformed: Vec<MalformedRow>,
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Load { reason, .. } => Error::Load {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

/// As [`load_csv`] from any reader.
pub fn read_csv<R: Read>(reader: R, schema: &DatasetSchema) -> Result<RawDataset> {
    schema.validate()?;
    let reference = schema.reference_date()?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let col = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column `{name}` missing from the header")))
    };
    let time_col = col(&schema.time)?;
    let event_col = col(&schema.event)?;
    let region_col = col(&schema.region)?;
    let orig_col = schema.origination.as_deref().map(col).transpose()?;
    let features = schema.active_features();
    let feature_cols = features.iter().map(|f| col(&f.name)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                malformed.push(MalformedRow { line, reason: e.to_string() });
                continue;
            }
        };
        if rec.len() != headers.len() {
            malformed.push(MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
            continue;
        }
        let parsed = (|| -> std::result::Result<RawRecord, String> {
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let time: f64 = field(time_col)
                .parse()
                .map_err(|_| format!("time `{}` is not a number", field(time_col)))?;
            if !(time.is_finite() && time >= 0.0) {
                return Err(format!("time {time} is negative or not finite"));
            }
            let event = match field(event_col).to_ascii_lowercase().as_str() {
                "1" | "1.0" | "true" => true,
                "0" | "0.0" | "false" => false,
                other => return Err(format!("event `{other}` is not 0/1")),
            };
            let region = field(region_col);
            if region.is_empty() {
                return Err("region is empty".into());
            }
            let origination = match orig_col {
                None => None,
                Some(i) => Some(parse_day(field(i), reference).map_err(|e| format!("origination: {e}"))?),
            };
            let mut values = Vec::with_capacity(features.len());
            for (spec, &i) in features.iter().zip(&feature_cols) {
                let raw = field(i);
                let v = if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                    RawValue::Missing
                } else {
                    match spec.kind {
                        FeatureKind::Numeric => RawValue::Number(
                            raw.parse::<f64>()
                                .ok()
                                .filter(|v| v.is_finite())
                                .ok_or_else(|| format!("`{}` value `{raw}` is not a number", spec.name))?,
                        ),
                        FeatureKind::Categorical => RawValue::Category(raw.to_string()),
                        FeatureKind::Date => {
                            let r = reference.ok_or("date feature without a reference date")?;
                            RawValue::Number(days_since(raw, r).map_err(|e| e.to_string())?)
                        }
                    }
                };
                values.push(v);
            }
            Ok(RawRecord {
                region: region.to_string(),
                time,
                event,
                origination,
                features: values,
            })
        })();
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => malformed.push(MalformedRow { line, reason }),
        }
    }
    for m in &malformed {
        log::warn!("line {}: {}", m.line, m.reason);
    }
    let total = records.len() + malformed.len();
    if total == 0 {
        return Err(Error::EmptyInput("csv rows"));
    }
    let share = malformed.len() as f64 / total as f64;
    if share > MAX_MALFORMED_FRACTION {
        let lines: Vec<String> = malformed.iter().take(10).map(|m| m.line.to_string()).collect();
        return Err(Error::Load {
            path: Default::default(),
            reason: format!(
                "{} of {total} rows malformed (lines {}{})",
                malformed.len(),
                lines.join(", "),
                if malformed.len() > 10 { ", ..." } else { "" }
            ),
        });
    }
    Ok(RawDataset {
        schema: schema.clone(),
        records,
        malformed,
    })
}

fn parse_day(raw: &str, reference: Option<chrono::NaiveDate>) -> Result<f64> {
    match reference {
        Some(r) => days_since(raw, r),
        None => raw
            .parse::<f64>()
            .map_err(|_| Error::Schema(format!("`{raw}` is not a day count"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> DatasetSchema {
        DatasetSchema::from_toml(
            r#"
time = "t"
event = "d"
region = "r"
origination = "o"
date_reference = "2020-01-01"
category_min_count = 1
[[features]]
name = "a"
kind = "numeric"
[[features]]
name = "g"
kind = "categorical"
"#,
        )
        .unwrap()
    }

    #[test]
    fn three_rows() {
        let text = "r,t,d,o,a,g\nNY,3.5,1,2020-01-11,2.5,A\nCA,12,0,2020-02-01,,B\nNY,0,false,2020-01-01,-1,\n";
        let ds = read_csv(text.as_bytes(), &schema()).unwrap();
        assert!(ds.malformed.is_empty());
        assert_eq!(
            ds.records[0],
            RawRecord {
                region: "NY".into(),
                time: 3.5,
                event: true,
                origination: Some(10.0),
                features: vec![RawValue::Number(2.5), RawValue::Category("A".into())],
            }
        );
        assert_eq!(ds.records[1].features[0], RawValue::Missing);
        assert_eq!(ds.records[1].origination, Some(31.0));
        assert_eq!(ds.records[2].features[1], RawValue::Missing);
        assert!(!ds.records[2].event);
    }

    #[test]
    fn too_many_bad_rows() {
        let text = "r,t,d,o,a,g\nNY,x,1,2020-01-11,2.5,A\nCA,12,0,2020-02-01,1,B\n";
        let err = read_csv(text.as_bytes(), &schema()).unwrap_err();
        match err {
            Error::Load { reason, .. } => assert!(reason.contains("lines 2"), "{reason}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn tolerates_rare_bad_rows() {
        let mut text = String::from("r,t,d,o,a,g\n");
        for i in 0..200 {
            text.push_str(&format!("NY,{i},1,2020-01-11,2.5,A\n"));
        }
        text.push_str("NY,-4,1,2020-01-11,2.5,A\n");
        let ds = read_csv(text.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.records.len(), 200);
        assert_eq!(ds.malformed[0].line, 202);
    }

    #[test]
    fn missing_column() {
        let text = "r,t,d,o,a\nNY,1,1,2020-01-11,2.5\n";
        assert!(matches!(read_csv(text.as_bytes(), &schema()), Err(Error::Schema(_))));
    }
}
