//! Ingestion and preparation of survival datasets.
//!
//! The pipeline is load, partition by region, split per client, then fit
//! the category vocabulary and the scaler on the pooled training rows only
//! and apply both to every split. Observed times are truncated to the time
//! grid window before discretization.

mod encode;
mod load;
mod partition;
mod schema;
mod synthetic;

pub use encode::{standardize, FeatureEncoder, Scaler, OTHER_CATEGORY};
pub use load::{load_csv, read_csv, MalformedRow, RawDataset, RawRecord, RawValue, MAX_MALFORMED_FRACTION};
pub use partition::{partition_by_region, split, ClientSummary, Groups, PartitionSpec, SplitSpec, Splits, REST_CLIENT};
pub use schema::{DatasetSchema, FeatureKind, FeatureSpec};
pub use synthetic::{
    feature_names, generate_synthetic, region_name, synthetic_schema, write_synthetic_csv, write_synthetic_dataset, GroundTruth, SyntheticRecord,
    SyntheticSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{Example, SurvivalRecord, TimeGrid};

/// One client's encoded, standardized and discretized splits.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedClient {
    pub name: String,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub oot: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub encoder: FeatureEncoder,
    pub scaler: Scaler,
    pub feature_names: Vec<String>,
}

impl Preprocessing {
    pub fn apply(&self, raw: &RawRecord, grid: &TimeGrid) -> Result<Example> {
        let mut x = self.encoder.transform(raw)?;
        self.scaler.transform(&mut x);
        Example::new(SurvivalRecord::new(x, raw.time, raw.event)?.truncated(grid.horizon()), grid)
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub grid: TimeGrid,
    pub clients: Vec<PreparedClient>,
    pub summary: Vec<ClientSummary>,
    pub preprocessing: Preprocessing,
    pub oot_cutoff: Option<f64>,
}

impl PreparedData {
    pub fn input_dim(&self) -> usize {
        self.preprocessing.feature_names.len()
    }

    pub fn pooled_train(&self) -> Vec<Example> {
        self.clients.iter().flat_map(|c| c.train.iter().cloned()).collect()
    }
}

/// Runs the full preparation pipeline on raw rows.
pub fn prepare(
    raw: Vec<RawRecord>,
    schema: &DatasetSchema,
    grid: &TimeGrid,
    partition: &PartitionSpec,
    split_spec: &SplitSpec,
    seed: u64,
) -> Result<PreparedData> {
    split_spec.validate()?;
    let days: Vec<f64> = raw.iter().filter_map(|r| r.origination).collect();
    let cutoff = split_spec.cutoff(&days);
    let (groups, summary) = partition_by_region(raw, |r| &r.region, |r| r.event, partition)?;
    let mut splits = Vec::with_capacity(groups.len());
    for (k, (name, rows)) in groups.into_iter().enumerate() {
        let s = split(rows, |r| r.origination, cutoff, split_spec.train_fraction, &[seed, k as u64])?;
        if s.train.is_empty() {
            return Err(Error::EmptyInput("client training split"));
        }
        splits.push((name, s));
    }
    let train_raw: Vec<RawRecord> = splits.iter().flat_map(|(_, s)| s.train.iter().cloned()).collect();
    let encoder = FeatureEncoder::fit(schema, &train_raw)?;
    let encoded_train = train_raw.iter().map(|r| encoder.transform(r)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = encoded_train.iter().map(|v| v.as_slice()).collect();
    let scaler = Scaler::fit(&refs)?;
    let preprocessing = Preprocessing {
        feature_names: encoder.feature_names(),
        encoder,
        scaler,
    };
    let convert = |rows: &[RawRecord]| rows.iter().map(|r| preprocessing.apply(r, grid)).collect::<Result<Vec<_>>>();
    let clients = splits
        .iter()
        .map(|(name, s)| {
            Ok(PreparedClient {
                name: name.clone(),
                train: convert(&s.train)?,
                test: convert(&s.test)?,
                oot: convert(&s.oot)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData {
        grid: grid.clone(),
        clients,
        summary,
        preprocessing,
        oot_cutoff: cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;

    #[test]
    fn pipeline_is_a_bijection() {
        let spec = SyntheticSpec {
            client_sizes: vec![120, 80, 50],
            client_shifts: vec![0.0, 0.2, -0.2],
            n_features: 2,
            ..Default::default()
        };
        let (recs, _) = generate_synthetic(&spec, Execution::Sequential).unwrap();
        let raw: Vec<RawRecord> = recs.iter().map(SyntheticRecord::to_raw).collect();
        let split_spec = SplitSpec {
            oot_fraction: Some(0.1),
            ..Default::default()
        };
        let part = PartitionSpec {
            min_client_size: 60,
            merge_small: true,
        };
        let data = prepare(raw, &synthetic_schema(2), &spec.grid, &part, &split_spec, 3).unwrap();
        let names: Vec<_> = data.clients.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["client_00", "client_01", "rest"]);
        let total: usize = data.clients.iter().map(|c| c.train.len() + c.test.len() + c.oot.len()).sum();
        assert_eq!(total, 250);
        assert!(data.clients.iter().all(|c| !c.oot.is_empty()));
        let h = spec.grid.horizon();
        assert!(data.clients.iter().flat_map(|c| &c.test).all(|e| e.record.t <= h));
    }
}
