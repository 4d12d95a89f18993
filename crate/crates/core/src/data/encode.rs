use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::load::{RawRecord, RawValue};
use super::schema::{DatasetSchema, FeatureKind};
use crate::error::{Error, Result};

pub const OTHER_CATEGORY: &str = "other";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Column {
    Number { name: String },
    OneHot { name: String, vocabulary: Vec<String> },
}

/// Maps raw rows to numeric vectors: numbers pass through, categories are
/// one-hot encoded with a trailing `other` slot, missing values become 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    columns: Vec<Column>,
}

impl FeatureEncoder {
    /// Learns category vocabularies from `train`.
    pub fn fit(schema: &DatasetSchema, train: &[RawRecord]) -> Result<Self> {
        let features = schema.active_features();
        let mut columns = Vec::with_capacity(features.len());
        for (j, spec) in features.iter().enumerate() {
            match spec.kind {
                FeatureKind::Numeric | FeatureKind::Date => columns.push(Column::Number { name: spec.name.clone() }),
                FeatureKind::Categorical => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for r in train {
                        if let Some(RawValue::Category(c)) = r.features.get(j) {
                            *counts.entry(c.as_str()).or_default() += 1;
                        }
                    }
                    let vocabulary = counts
                        .into_iter()
                        .filter(|(c, n)| *n >= schema.category_min_count && *c != OTHER_CATEGORY)
                        .map(|(c, _)| c.to_string())
                        .collect();
                    columns.push(Column::OneHot {
                        name: spec.name.clone(),
                        vocabulary,
                    });
                }
            }
        }
        Ok(Self { columns })
    }

    /// Identity encoder for purely numeric rows of width `d`.
    pub fn numeric(names: Vec<String>) -> Self {
        Self {
            columns: names.into_iter().map(|name| Column::Number { name }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                Column::Number { .. } => 1,
                Column::OneHot { vocabulary, .. } => vocabulary.len() + 1,
            })
            .sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for c in &self.columns {
            match c {
                Column::Number { name } => out.push(name.clone()),
                Column::OneHot { name, vocabulary } => {
                    out.extend(vocabulary.iter().map(|v| format!("{name}={v}")));
                    out.push(format!("{name}={OTHER_CATEGORY}"));
                }
            }
        }
        out
    }

    pub fn transform(&self, record: &RawRecord) -> Result<Vec<f64>> {
        if record.features.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                actual: record.features.len(),
            });
        }
        let mut out = Vec::with_capacity(self.width());
        for (c, v) in self.columns.iter().zip(&record.features) {
            match (c, v) {
                (Column::Number { .. }, RawValue::Number(x)) => out.push(*x),
                (Column::Number { .. }, RawValue::Missing) => out.push(0.0),
                (Column::Number { name }, RawValue::Category(s)) => {
                    return Err(Error::InvalidRecord(format!("numeric feature `{name}` holds `{s}`")))
                }
                (Column::OneHot { vocabulary, .. }, v) => {
                    let start = out.len();
                    out.resize(start + vocabulary.len() + 1, 0.0);
                    match v {
                        RawValue::Missing => {}
                        RawValue::Category(s) => {
                            let slot = vocabulary.binary_search(s).unwrap_or(vocabulary.len());
                            out[start + slot] = 1.0;
                        }
                        RawValue::Number(x) => {
                            let s = x.to_string();
                            let slot = vocabulary.binary_search(&s).unwrap_or(vocabulary.len());
                            out[start + slot] = 1.0;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Per-feature standardization with population moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Zero-variance features get mean 0 and scale 1, i.e. pass through.
    pub fn fit(train: &[&[f64]]) -> Result<Self> {
        let first = train.first().ok_or(Error::EmptyInput("training features"))?;
        let d = first.len();
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for x in train {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: x.len() });
            }
            mean.iter_mut().zip(x.iter()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for x in train {
            var.iter_mut().zip(x.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let mut std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        for j in 0..d {
            if !(std[j] > 1e-12) {
                std[j] = 1.0;
                mean[j] = 0.0;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &mut [f64]) {
        x.iter_mut()
            .zip(self.mean.iter().zip(&self.std))
            .for_each(|(v, (m, s))| *v = (*v - m) / s);
    }
}

/// Fits a scaler on `train` and applies it to every split in `all`.
pub fn standardize(train: &[&[f64]], all: &mut [&mut Vec<f64>]) -> Result<Scaler> {
    let scaler = Scaler::fit(train)?;
    for x in all.iter_mut() {
        scaler.transform(x);
    }
    Ok(scaler)
}
