//! Run configuration: one TOML file, deep-merged over the built-in defaults
//! so a config only needs the keys it changes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use grasp_ebm::ebm::TrainConfig;
use grasp_ebm::eval::{sub_seed, ExperimentSpec};
use grasp_ebm::scene::{builtin_object, ObjectModel, WorldModel};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRef {
    /// Built-in profile name, or the name given to `path`'s polygon.
    pub name: String,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspParams {
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataParams {
    pub feasibility_records: usize,
    pub shared_records: usize,
    /// (train, test, val) fractions.
    pub split: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchParams {
    pub sizes: Vec<usize>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    /// Artifacts of the pipeline commands (candidates, data, models, thresholds).
    pub output_dir: PathBuf,
    pub report_dir: PathBuf,
    pub world: WorldModel,
    pub object: ObjectRef,
    pub grasps: GraspParams,
    pub data: DataParams,
    pub train: TrainConfig,
    pub bench: BenchParams,
    pub experiments: BTreeMap<String, ExperimentSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let experiments = ["data_efficiency", "unseen_grasps", "unseen_objects", "baselines"]
            .into_iter()
            .map(|n| (n.to_string(), ExperimentSpec::named(n).expect("built-in")))
            .collect();
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: "runs/default".into(),
            report_dir: "reports".into(),
            world: WorldModel::default(),
            object: ObjectRef {
                name: "bottle".into(),
                path: None,
            },
            grasps: GraspParams { count: 57 },
            data: DataParams {
                feasibility_records: 75_000,
                shared_records: 75_000,
                split: (2.0 / 3.0, 0.2, 2.0 / 15.0),
            },
            train: TrainConfig::default(),
            bench: BenchParams {
                sizes: vec![57, 109, 352],
                trials: 200,
            },
            experiments,
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        if let Some(v) = user.get("version") {
            if v.as_integer() != Some(CONFIG_VERSION as i64) {
                bail!("unsupported config version {v} (this build reads version {CONFIG_VERSION})");
            }
        }
        // experiments inherit the top-level [train] unless they set their own
        let own_train: Vec<String> = user
            .get("experiments")
            .and_then(|e| e.as_table())
            .map(|t| {
                t.iter()
                    .filter(|(_, v)| v.get("train").is_some())
                    .map(|(k, _)| k.clone())
                    .collect()
            })
            .unwrap_or_default();
        let mut base = toml::Value::try_from(RunConfig::default()).context("default config serializes")?;
        if let Some(exps) = user.get("experiments").and_then(|e| e.as_table()) {
            let table = base
                .get_mut("experiments")
                .and_then(|e| e.as_table_mut())
                .expect("default has experiments");
            for name in exps.keys() {
                if !table.contains_key(name) {
                    let fresh = ExperimentSpec {
                        name: name.clone(),
                        ..ExperimentSpec::default()
                    };
                    table.insert(name.clone(), toml::Value::try_from(fresh)?);
                }
            }
        }
        merge(&mut base, toml::Value::Table(user));
        let mut cfg: RunConfig = base.try_into().context("config does not match the expected layout")?;
        for (name, spec) in cfg.experiments.iter_mut() {
            if !own_train.contains(name) {
                spec.train = cfg.train.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        for spec in self.experiments.values() {
            spec.validate()?;
        }
        if self.grasps.count == 0 {
            bail!("grasps.count must be positive");
        }
        Ok(())
    }

    pub fn object(&self) -> Result<ObjectModel> {
        Ok(match &self.object.path {
            Some(p) => ObjectModel::from_polygon_file(&self.object.name, p)?,
            None => builtin_object(&self.object.name)?,
        })
    }

    /// Named sub-stream of the global seed.
    pub fn stream(&self, name: &str) -> u64 {
        sub_seed(self.seed, name)
    }

    /// The experiment as run: its seeds and grasp seed are drawn from the
    /// global seed's streams.
    pub fn experiment(&self, name: &str) -> Result<ExperimentSpec> {
        let mut spec = match self.experiments.get(name) {
            Some(s) => s.clone(),
            None => {
                let mut s = ExperimentSpec::named(name)?;
                s.train = self.train.clone();
                s
            }
        };
        spec.name = name.to_string();
        spec.grasp_seed = self.stream(&format!("grasps/{}", spec.grasp_seed));
        spec.seeds = spec
            .seeds
            .iter()
            .map(|s| self.stream(&format!("experiment/{s}")))
            .collect();
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn partial_overrides_keep_other_defaults() {
        let c = RunConfig::from_toml(
            "seed = 9\n[train]\nepochs = 3\n[experiments.unseen_grasps]\ncandidate_counts = [10, 20]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 1024);
        let ug = &c.experiments["unseen_grasps"];
        assert_eq!(ug.candidate_counts, vec![10, 20]);
        assert_eq!(ug.eval_candidate_count, 922);
        assert_eq!(ug.train.epochs, 3);
        assert_eq!(c.experiments["baselines"].train.epochs, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(RunConfig::from_toml("sede = 1").is_err());
        assert!(RunConfig::from_toml("version = 2").is_err());
        assert!(RunConfig::from_toml("[train]\ntemperature = -1.0").is_err());
    }
}
