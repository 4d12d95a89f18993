use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::load::{RawRecord, RawValue};
use super::schema::{DatasetSchema, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::stream;
use crate::rng::tag::SYNTHETIC;
use crate::survival::{sigmoid, SurvivalRecord, TimeGrid};

/// Parameters of the synthetic lending population.
///
/// Client `k` has hazard `sigmoid(a_k + baseline + w.x + b_t)` in interval
/// `t`, with `b_t` rising linearly from 0 to `time_trend`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_features: usize,
    pub client_sizes: Vec<usize>,
    /// Additive logit shift `a_k` per client.
    pub client_shifts: Vec<f64>,
    /// Shared coefficients `w`; drawn from the seed with norm `signal` when absent.
    pub weights: Option<Vec<f64>>,
    pub signal: f64,
    pub baseline: f64,
    pub time_trend: f64,
    /// Client `k` draws features around a mean of this size along axis `k mod d`.
    pub feature_shift: f64,
    /// Probability that a record receives a uniform censoring time over the window.
    pub censoring_rate: f64,
    pub grid: TimeGrid,
    /// Origination days are uniform on `[0, origination_days)`.
    pub origination_days: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_features: 8,
            client_sizes: vec![5000; 8],
            client_shifts: vec![-0.3, -0.2, -0.1, 0.0, 0.0, 0.1, 0.2, 0.3],
            weights: None,
            signal: 1.0,
            baseline: -3.5,
            time_trend: 0.5,
            feature_shift: 0.0,
            censoring_rate: 0.3,
            grid: TimeGrid::monthly(12).expect("valid grid"),
            origination_days: 730.0,
        }
    }
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::param("n_features", "need at least one feature"));
        }
        if self.client_sizes.is_empty() || self.client_sizes.contains(&0) {
            return Err(Error::param("client_sizes", "every client needs at least one record"));
        }
        if self.client_shifts.len() != self.client_sizes.len() {
            return Err(Error::param("client_shifts", "need one shift per client"));
        }
        if self.client_shifts.iter().any(|a| !a.is_finite()) {
            return Err(Error::param("client_shifts", "must be finite"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.n_features || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("weights", "need n_features finite coefficients"));
            }
        }
        if !(self.censoring_rate >= 0.0 && self.censoring_rate < 1.0) {
            return Err(Error::param("censoring_rate", "must lie in [0, 1)"));
        }
        for (name, v) in [
            ("signal", self.signal),
            ("baseline", self.baseline),
            ("time_trend", self.time_trend),
            ("feature_shift", self.feature_shift),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if !(self.origination_days > 0.0 && self.origination_days.is_finite()) {
            return Err(Error::param("origination_days", "must be positive"));
        }
        Ok(())
    }

    pub fn total_records(&self) -> usize {
        self.client_sizes.iter().sum()
    }
}

/// The generating parameters, persisted next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub weights: Vec<f64>,
    pub client_shifts: Vec<f64>,
    pub baseline: f64,
    /// `b_t` per interval.
    pub time_effects: Vec<f64>,
    pub client_feature_means: Vec<Vec<f64>>,
    pub grid: TimeGrid,
    pub censoring_rate: f64,
}

impl GroundTruth {
    /// True interval hazards of a client-`k` record with features `x`.
    pub fn hazards(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let eta = self.client_shifts[client] + self.baseline + dot(&self.weights, x);
        self.time_effects.iter().map(|b| sigmoid(eta + b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub region: String,
    pub client: usize,
    pub origination: f64,
    /// Untruncated: events past the window are still marked as events.
    pub record: SurvivalRecord,
}

impl SyntheticRecord {
    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            region: self.region.clone(),
            time: self.record.t,
            event: self.record.event,
            origination: Some(self.origination),
            features: self.record.x.iter().map(|v| RawValue::Number(*v)).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn region_name(k: usize) -> String {
    format!("client_{k:02}")
}

/// Draws the population. Clients use independent streams derived from the seed.
pub fn generate_synthetic(spec: &SyntheticSpec, exec: Execution) -> Result<(Vec<SyntheticRecord>, GroundTruth)> {
    spec.validate()?;
    let d = spec.n_features;
    let weights = match &spec.weights {
        Some(w) => w.clone(),
        None => {
            let mut rng = stream(&[spec.seed, SYNTHETIC, u64::MAX]);
            let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dot(&raw, &raw).sqrt();
            raw.iter().map(|v| v * spec.signal / norm).collect()
        }
    };
    let t = spec.grid.intervals();
    let time_effects: Vec<f64> = (0..t)
        .map(|l| if t > 1 { spec.time_trend * l as f64 / (t - 1) as f64 } else { 0.0 })
        .collect();
    let means: Vec<Vec<f64>> = (0..spec.client_sizes.len())
        .map(|k| {
            let mut m = vec![0.0; d];
            let sign = if (k / d).is_multiple_of(2) { 1.0 } else { -1.0 };
            m[k % d] = sign * spec.feature_shift;
            m
        })
        .collect();
    let truth = GroundTruth {
        weights,
        client_shifts: spec.client_shifts.clone(),
        baseline: spec.baseline,
        time_effects,
        client_feature_means: means,
        grid: spec.grid.clone(),
        censoring_rate: spec.censoring_rate,
    };
    let per_client = exec.map_range(spec.client_sizes.len(), |k| generate_client(spec, &truth, k));
    let records = per_client.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    Ok((records, truth))
}

fn generate_client(spec: &SyntheticSpec, truth: &GroundTruth, k: usize) -> Result<Vec<SyntheticRecord>> {
    let mut rng = stream(&[spec.seed, SYNTHETIC, k as u64]);
    let b = truth.grid.boundaries();
    let horizon = truth.grid.horizon();
    let last_width = b[b.len() - 1] - b[b.len() - 2];
    let region = region_name(k);
    (0..spec.client_sizes[k])
        .map(|_| {
            let x: Vec<f64> = truth.client_feature_means[k]
                .iter()
                .map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let h = truth.hazards(k, &x);
            let mut time = None;
            for (l, &hl) in h.iter().enumerate() {
                if rng.random::<f64>() < hl {
                    time = Some(b[l] + rng.random::<f64>() * (b[l + 1] - b[l]));
                    break;
                }
            }
            let mut t = time.unwrap_or_else(|| {
                // Geometric continuation at the last hazard.
                let h_last = h[h.len() - 1];
                let u: f64 = 1.0 - rng.random::<f64>();
                let extra = if h_last > 0.0 { (u.ln() / (-h_last).ln_1p()).floor().min(1e12) } else { 1e12 };
                horizon + (extra + rng.random::<f64>()) * last_width
            });
            let mut event = true;
            if rng.random::<f64>() < spec.censoring_rate {
                let c = rng.random::<f64>() * horizon;
                if c < t {
                    t = c;
                    event = false;
                }
            }
            let origination = rng.random::<f64>() * spec.origination_days;
            Ok(SyntheticRecord {
                region: region.clone(),
                client: k,
                origination,
                record: SurvivalRecord::new(x, t, event)?,
            })
        })
        .collect()
}

pub fn feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Schema matching [`write_synthetic_csv`] output.
pub fn synthetic_schema(d: usize) -> DatasetSchema {
    DatasetSchema {
        time: "time".into(),
        event: "event".into(),
        region: "region".into(),
        origination: Some("origination_day".into()),
        date_reference: None,
        features: feature_names(d)
            .into_iter()
            .map(|name| FeatureSpec {
                name,
                kind: FeatureKind::Numeric,
            })
            .collect(),
        drop: Vec::new(),
        category_min_count: 10,
    }
}

/// Columns `region, origination_day, time, event, x0..`, floats in shortest
/// round-trip form.
pub fn write_synthetic_csv<W: Write>(records: &[SyntheticRecord], out: W) -> Result<()> {
    let d = records.first().map_or(0, |r| r.record.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["region".to_string(), "origination_day".into(), "time".into(), "event".into()];
    header.extend(feature_names(d));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.region.clone(),
            r.origination.to_string(),
            r.record.t.to_string(),
            u8::from(r.record.event).to_string(),
        ];
        row.extend(r.record.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("synthetic csv", e))?;
    Ok(())
}

/// Writes `data.csv`, `schema.toml`, `ground_truth.json` and `spec.toml`
/// into `dir`; returns the number of rows.
pub fn write_synthetic_dataset(spec: &SyntheticSpec, dir: &Path, exec: Execution) -> Result<usize> {
    let (records, truth) = generate_synthetic(spec, exec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = |name: &str| {
        let path = dir.join(name);
        fs::File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
    };
    write_synthetic_csv(&records, file("data.csv")?)?;
    let mut w = file("ground_truth.json")?;
    serde_json::to_writer_pretty(&mut w, &truth)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(dir.join("ground_truth.json"), e))?;
    let schema = synthetic_schema(spec.n_features).to_toml()?;
    fs::write(dir.join("schema.toml"), schema).map_err(|e| Error::io(dir.join("schema.toml"), e))?;
    let spec_text = toml::to_string_pretty(spec).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("spec.toml"), spec_text).map_err(|e| Error::io(dir.join("spec.toml"), e))?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load::read_csv;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            client_sizes: vec![300, 200],
            client_shifts: vec![0.0, 0.5],
            n_features: 3,
            ..Default::default()
        }
    }

    #[test]
    fn no_censoring_means_all_events() {
        let spec = SyntheticSpec {
            censoring_rate: 0.0,
            ..small()
        };
        let (recs, _) = generate_synthetic(&spec, Execution::Parallel).unwrap();
        assert_eq!(recs.len(), 500);
        assert!(recs.iter().all(|r| r.record.event));
    }

    #[test]
    fn vanishing_hazard() {
        let spec = SyntheticSpec {
            client_shifts: vec![-20.0, -20.0],
            ..small()
        };
        let (recs, truth) = generate_synthetic(&spec, Execution::Sequential).unwrap();
        let h = truth.hazards(0, &recs[0].record.x);
        assert!(h.iter().all(|v| *v < 1e-7));
        let horizon = spec.grid.horizon();
        assert!(recs.iter().all(|r| !r.record.event || r.record.t > horizon));
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let a = generate_synthetic(&small(), Execution::Parallel).unwrap();
        let b = generate_synthetic(&small(), Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_rate() {
        let spec = SyntheticSpec {
            censoring_rate: 1.0,
            ..small()
        };
        assert!(generate_synthetic(&spec, Execution::Sequential).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (recs, _) = generate_synthetic(&small(), Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_synthetic_csv(&recs, &mut buf).unwrap();
        let ds = read_csv(buf.as_slice(), &synthetic_schema(3)).unwrap();
        assert_eq!(ds.records.len(), recs.len());
        for (raw, r) in ds.records.iter().zip(&recs) {
            assert_eq!(raw.time, r.record.t);
            assert_eq!(raw.origination, Some(r.origination));
            assert_eq!(raw.features[1], RawValue::Number(r.record.x[1]));
        }
    }
}
