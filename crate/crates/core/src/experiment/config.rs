use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{PartitionSpec, SplitSpec, SyntheticSpec};
use crate::dp::{BdpConfig, DpConfig, PrivacyRegime};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::federation::Weighting;
use crate::survival::{Activation, OptimizerConfig, TimeGrid};

/// Centralized or federated training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Centralized,
    Federated,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Centralized => "centralized",
            Setting::Federated => "federated",
        }
    }
}

/// One cell of the setting by privacy-regime grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario {
    pub setting: Setting,
    pub regime: PrivacyRegime,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::new(Setting::Centralized, PrivacyRegime::None),
        Scenario::new(Setting::Centralized, PrivacyRegime::Classical),
        Scenario::new(Setting::Centralized, PrivacyRegime::Bayesian),
        Scenario::new(Setting::Federated, PrivacyRegime::None),
        Scenario::new(Setting::Federated, PrivacyRegime::Classical),
        Scenario::new(Setting::Federated, PrivacyRegime::Bayesian),
    ];

    pub const fn new(setting: Setting, regime: PrivacyRegime) -> Self {
        Self { setting, regime }
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.setting.as_str(), self.regime.as_str())
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct DataConfig {
    pub synthetic: Option<SyntheticSpec>,
    pub csv: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Required for CSV data; synthetic data defaults to its own grid.
    pub grid: Option<TimeGrid>,
    pub partition: PartitionSpec,
    pub split: SplitSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64, 64, 32, 32],
            activation: Activation::Selu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub participation_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub weighting: Weighting,
    pub fallback_threshold: usize,
    pub parallel_clients: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            local_epochs: 5,
            participation_rate: 1.0,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            weighting: Weighting::Samples,
            fallback_threshold: 100,
            parallel_clients: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    /// When set, the noise multiplier is calibrated to this classical
    /// epsilon for the least favourable client and shared by both regimes.
    pub target_epsilon: Option<f64>,
    pub dp: DpConfig,
    pub bdp: BdpConfig,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        Self {
            target_epsilon: Some(1.0),
            dp: DpConfig::default(),
            bdp: BdpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Explicit horizons; otherwise derived from the pooled test split.
    pub eval_times: Option<Vec<f64>>,
    /// Evaluate the global model on the test split after every round.
    pub track_rounds: bool,
    /// Loss given default for the expected-credit-loss column.
    pub lgd: f64,
    pub ead: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            eval_times: None,
            track_rounds: true,
            lgd: 0.45,
            ead: 1.0,
        }
    }
}

/// Everything needed to reproduce a set of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub scenarios: Vec<Scenario>,
    pub execution: Execution,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub privacy: PrivacyConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            out_dir: PathBuf::from("runs"),
            seeds: vec![42, 43, 44, 45, 46],
            scenarios: Scenario::ALL.to_vec(),
            execution: Execution::Parallel,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            privacy: PrivacyConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.data.synthetic.is_none() && cfg.data.csv.is_none() {
            cfg.data.synthetic = Some(SyntheticSpec::default());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.csv, &mut cfg.data.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Default settings on the default synthetic population.
    pub fn synthetic_default() -> Self {
        let mut cfg = Self::default();
        cfg.data.synthetic = Some(SyntheticSpec::default());
        cfg
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config("`name` must be a nonempty plain directory name".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        if self.scenarios.is_empty() {
            return Err(Error::Config("`scenarios` must not be empty".into()));
        }
        match (&self.data.synthetic, &self.data.csv) {
            (Some(spec), None) => spec.validate()?,
            (None, Some(_)) => {
                if self.data.schema.is_none() {
                    return Err(Error::Config("`data.csv` needs `data.schema`".into()));
                }
                if self.data.grid.is_none() {
                    return Err(Error::Config("`data.csv` needs `data.grid`".into()));
                }
            }
            _ => return Err(Error::Config("give exactly one of `data.synthetic` and `data.csv`".into())),
        }
        self.data.split.validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Error::param("hidden", "layer widths must be positive"));
        }
        let t = &self.training;
        if t.rounds == 0 || t.local_epochs == 0 {
            return Err(Error::param("rounds", "rounds and local_epochs must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if !(t.participation_rate > 0.0 && t.participation_rate <= 1.0) {
            return Err(Error::param("participation_rate", "must lie in (0, 1]"));
        }
        t.optimizer.validate()?;
        let private = self.scenarios.iter().any(|s| s.regime != PrivacyRegime::None);
        if private {
            self.privacy.dp.validate()?;
            if let Some(e) = self.privacy.target_epsilon {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(Error::param("target_epsilon", "must be positive"));
                }
            }
        }
        if self.scenarios.iter().any(|s| s.regime == PrivacyRegime::Bayesian) {
            self.privacy.bdp.validate()?;
        }
        if let Some(times) = &self.evaluation.eval_times {
            crate::metrics::EvalTimes::new(times.clone())?;
        }
        if !(self.evaluation.lgd >= 0.0 && self.evaluation.ead >= 0.0) {
            return Err(Error::param("lgd", "lgd and ead must be nonnegative"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        if let Some(g) = &self.data.grid {
            return Ok(g.clone());
        }
        self.data
            .synthetic
            .as_ref()
            .map(|s| s.grid.clone())
            .ok_or_else(|| Error::Config("no time grid configured".into()))
    }

    /// Directory of one seed of one scenario.
    pub fn run_dir(&self, scenario: Scenario, seed: u64) -> PathBuf {
        self.out_dir.join(&self.name).join(scenario.name()).join(format!("seed_{seed}"))
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::synthetic_default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.training.optimizer.learning_rate, 0.001);
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.privacy.dp.clip_norm, 1.0);
        assert_eq!(cfg.privacy.bdp.mc_samples, 10);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("name = \"x\"\nseeds = [7]\n").unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.scenarios.len(), 6);
    }

    #[test]
    fn scenario_names() {
        let names: Vec<String> = Scenario::ALL.iter().map(Scenario::name).collect();
        assert_eq!(names[0], "centralized_none");
        assert_eq!("federated_bayesian".parse::<Scenario>().unwrap(), Scenario::ALL[5]);
        assert!("federated_laplace".parse::<Scenario>().is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml("[training]\nbatch_size = 0").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        let both = "[data]\ncsv = \"a.csv\"\nschema = \"s.toml\"\ngrid = [0.0, 1.0]\n[data.synthetic]\nseed = 1\n";
        assert!(ExperimentConfig::from_toml(both).is_err());
    }
}
