use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::rng::tag::SPLIT;

pub const REST_CLIENT: &str = "rest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    /// Regions smaller than this are merged into one `rest` client.
    pub min_client_size: usize,
    pub merge_small: bool,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            min_client_size: 1000,
            merge_small: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub name: String,
    pub n: usize,
    pub events: usize,
    pub event_rate: f64,
    /// Source regions merged into this client.
    pub regions: Vec<String>,
}

/// Records grouped into clients, in region-name order with `rest` last.
/// Named client groups in partition order.
pub type Groups<T> = Vec<(String, Vec<T>)>;

pub fn partition_by_region<T>(
    records: Vec<T>,
    region: impl Fn(&T) -> &str,
    event: impl Fn(&T) -> bool,
    spec: &PartitionSpec,
) -> Result<(Groups<T>, Vec<ClientSummary>)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("records to partition"));
    }
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for r in records {
        groups.entry(region(&r).to_string()).or_default().push(r);
    }
    let mut clients: Vec<(String, Vec<String>, Vec<T>)> = Vec::new();
    let mut rest: (Vec<String>, Vec<T>) = (Vec::new(), Vec::new());
    for (name, rows) in groups {
        if spec.merge_small && rows.len() < spec.min_client_size {
            rest.0.push(name);
            rest.1.extend(rows);
        } else {
            clients.push((name.clone(), vec![name], rows));
        }
    }
    if !rest.1.is_empty() {
        let name = if clients.iter().any(|(n, _, _)| n == REST_CLIENT) {
            format!("{REST_CLIENT}_merged")
        } else {
            REST_CLIENT.to_string()
        };
        clients.push((name, rest.0, rest.1));
    }
    let summary = clients
        .iter()
        .map(|(name, regions, rows)| {
            let events = rows.iter().filter(|r| event(r)).count();
            ClientSummary {
                name: name.clone(),
                n: rows.len(),
                events,
                event_rate: events as f64 / rows.len() as f64,
                regions: regions.clone(),
            }
        })
        .collect();
    Ok((clients.into_iter().map(|(n, _, rows)| (n, rows)).collect(), summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Records originated strictly after this day go out-of-time.
    pub oot_cutoff_days: Option<f64>,
    /// Alternatively, the latest share of origination days goes out-of-time.
    pub oot_fraction: Option<f64>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            oot_cutoff_days: None,
            oot_fraction: None,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::param("train_fraction", "must lie in (0, 1)"));
        }
        if let Some(f) = self.oot_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::param("oot_fraction", "must lie in (0, 1)"));
            }
            if self.oot_cutoff_days.is_some() {
                return Err(Error::param("oot_fraction", "give either a cutoff or a fraction, not both"));
            }
        }
        Ok(())
    }

    /// Resolves the cutoff day from all origination days.
    pub fn cutoff(&self, originations: &[f64]) -> Option<f64> {
        if let Some(c) = self.oot_cutoff_days {
            return Some(c);
        }
        let f = self.oot_fraction?;
        let mut days = originations.to_vec();
        if days.is_empty() {
            return None;
        }
        days.sort_by(f64::total_cmp);
        let keep = ((1.0 - f) * days.len() as f64).round() as usize;
        Some(days[keep.clamp(1, days.len()) - 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub oot: Vec<T>,
}

/// Out-of-time records first (origination after `cutoff`), then a seeded
/// `round(train_fraction n)` / rest split of the remainder.
pub fn split<T>(
    records: Vec<T>,
    origination: impl Fn(&T) -> Option<f64>,
    cutoff: Option<f64>,
    train_fraction: f64,
    seed: &[u64],
) -> Result<Splits<T>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param("train_fraction", "must lie in (0, 1)"));
    }
    let (oot, mut in_time): (Vec<T>, Vec<T>) = records
        .into_iter()
        .partition(|r| matches!((cutoff, origination(r)), (Some(c), Some(o)) if o > c));
    let mut parts = seed.to_vec();
    parts.push(SPLIT);
    in_time.shuffle(&mut stream(&parts));
    let n_train = (train_fraction * in_time.len() as f64).round() as usize;
    let test = in_time.split_off(n_train);
    Ok(Splits {
        train: in_time,
        test,
        oot,
    })
}
