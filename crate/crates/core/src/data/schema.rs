use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    /// ISO-8601 date, converted to days from the schema reference date.
    Date,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

/// Column roles of a tabular survival dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    /// Observed time in months.
    pub time: String,
    /// 1/0 or true/false default indicator.
    pub event: String,
    /// Client partition key.
    pub region: String,
    /// Origination date used for the out-of-time split.
    #[serde(default)]
    pub origination: Option<String>,
    /// When set, `origination` and date features are ISO dates counted in
    /// days from here; otherwise `origination` is already a day count.
    #[serde(default)]
    pub date_reference: Option<String>,
    pub features: Vec<FeatureSpec>,
    /// Columns removed from the feature set, e.g. post-outcome fields.
    #[serde(default)]
    pub drop: Vec<String>,
    /// Categories seen fewer times than this in training map to `other`.
    #[serde(default = "default_min_count")]
    pub category_min_count: usize,
}

fn default_min_count() -> usize {
    10
}

impl DatasetSchema {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Features that survive the drop list.
    pub fn active_features(&self) -> Vec<&FeatureSpec> {
        self.features.iter().filter(|f| !self.drop.contains(&f.name)).collect()
    }

    pub fn reference_date(&self) -> Result<Option<NaiveDate>> {
        self.date_reference.as_deref().map(parse_date).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let roles = [&self.time, &self.event, &self.region];
        let mut seen = HashSet::new();
        for r in roles.iter().copied().chain(self.origination.as_ref()) {
            if r.is_empty() {
                return Err(Error::Schema("role column names must not be empty".into()));
            }
            if !seen.insert(r.as_str()) {
                return Err(Error::Schema(format!("column `{r}` has more than one role")));
            }
            if self.drop.contains(r) {
                return Err(Error::Schema(format!("role column `{r}` is in the drop list")));
            }
        }
        let active = self.active_features();
        if active.is_empty() {
            return Err(Error::Schema("no features left after the drop list".into()));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if seen.contains(f.name.as_str()) {
                return Err(Error::Schema(format!("feature `{}` is also a role column", f.name)));
            }
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("feature `{}` listed twice", f.name)));
            }
        }
        let reference = self.reference_date()?;
        if reference.is_none() && active.iter().any(|f| f.kind == FeatureKind::Date) {
            return Err(Error::Schema("date features need `date_reference`".into()));
        }
        Ok(())
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    // Accept a trailing time part.
    let day = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|_| Error::Schema(format!("`{s}` is not an ISO-8601 date")))
}

/// Days from `reference` to `date`.
pub(crate) fn days_since(date: &str, reference: NaiveDate) -> Result<f64> {
    Ok((parse_date(date)? - reference).num_days() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = r#"
time = "months"
event = "default"
region = "state"
origination = "issue_d"
date_reference = "2007-01-01"
drop = ["funded_amnt"]

[[features]]
name = "loan_amnt"
kind = "numeric"

[[features]]
name = "grade"
kind = "categorical"

[[features]]
name = "funded_amnt"
kind = "numeric"
"#;

    #[test]
    fn parses_and_drops() {
        let s = DatasetSchema::from_toml(SCHEMA).unwrap();
        let names: Vec<_> = s.active_features().iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["loan_amnt", "grade"]);
        let back = DatasetSchema::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn empty_features_rejected() {
        let text = SCHEMA.replace("drop = [\"funded_amnt\"]", "drop = [\"funded_amnt\", \"loan_amnt\", \"grade\"]");
        assert!(matches!(DatasetSchema::from_toml(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn duplicate_role_rejected() {
        let text = SCHEMA.replace("region = \"state\"", "region = \"months\"");
        assert!(DatasetSchema::from_toml(&text).is_err());
    }

    #[test]
    fn dates() {
        let r = parse_date("2007-01-01").unwrap();
        assert_eq!(days_since("2007-02-01", r).unwrap(), 31.0);
        assert_eq!(days_since("2007-01-03T00:00:00", r).unwrap(), 2.0);
        assert!(parse_date("Jan-2007").is_err());
    }
}
