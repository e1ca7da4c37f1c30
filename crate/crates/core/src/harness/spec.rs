use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::world::WorldSpec;
use super::HarnessError;
use crate::codec::TaskKind;
use crate::model::ModelConfig;
use crate::trainer::{Stage, TrainConfig};

/// Pretraining corpus combination of a grid row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Combo {
    #[serde(rename = "SOLID_ONLY")]
    SolidOnly,
    #[serde(rename = "SOLID_PLUS_CCTK")]
    SolidPlusCctk,
    #[serde(rename = "CCTK_ONLY")]
    CctkOnly,
}

impl Combo {
    pub const ALL: [Combo; 3] = [Combo::SolidOnly, Combo::SolidPlusCctk, Combo::CctkOnly];

    pub fn name(self) -> &'static str {
        match self {
            Combo::SolidOnly => "SOLID_ONLY",
            Combo::SolidPlusCctk => "SOLID_PLUS_CCTK",
            Combo::CctkOnly => "CCTK_ONLY",
        }
    }

    /// Row label in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Combo::SolidOnly => "SOLID",
            Combo::SolidPlusCctk => "SOLID+CCTK",
            Combo::CctkOnly => "CCTK",
        }
    }

    pub fn uses_solid(self) -> bool {
        self != Combo::CctkOnly
    }

    pub fn uses_cctk(self) -> bool {
        self != Combo::SolidOnly
    }
}

impl fmt::Display for Combo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Combo {
    type Err = HarnessError;

    /// Accepts both the identifier and the table label.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Combo::ALL
            .into_iter()
            .find(|c| c.name() == s || c.label() == s)
            .ok_or_else(|| HarnessError::Spec(format!("unknown combo `{s}`")))
    }
}

/// Task data stored as canonical JSONL files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFiles {
    pub name: String,
    /// Defaults to the task name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    pub kind: TaskKind,
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Where the grid's corpora come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSpec {
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        world: WorldSpec,
    },
    Files {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        solid: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cctk: Option<PathBuf>,
        #[serde(default)]
        tasks: Vec<TaskFiles>,
    },
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic { seed: 0, world: WorldSpec::default() }
    }
}

impl DataSpec {
    /// Resolves relative file paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSpec::Files { solid, cctk, tasks } = self {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            solid.iter_mut().for_each(fix);
            cctk.iter_mut().for_each(fix);
            for t in tasks {
                fix(&mut t.train);
                fix(&mut t.test);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub thresholds: Vec<f64>,
    pub combos: Vec<Combo>,
    /// Task names to evaluate; empty selects every task in the corpora.
    pub tasks: Vec<String>,
    pub n_runs: usize,
    /// Fine-tuning seed of each run.
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub data: DataSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            thresholds: vec![0.05, 0.1, 0.15, 0.2],
            combos: Combo::ALL.to_vec(),
            tasks: Vec::new(),
            n_runs: 10,
            seeds: (0..10).collect(),
            model: ModelConfig::toy(0),
            pretrain: TrainConfig::pretrain(),
            finetune: TrainConfig::finetune(),
            data: DataSpec::default(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    thresholds: Option<Vec<f64>>,
    combos: Option<Vec<Combo>>,
    tasks: Option<Vec<String>>,
    n_runs: Option<usize>,
    seeds: Option<Vec<u64>>,
    model: Option<ModelConfig>,
    pretrain: Option<toml::Table>,
    finetune: Option<toml::Table>,
    data: Option<DataSpec>,
}

fn stage_config(table: Option<toml::Table>, stage: Stage) -> Result<TrainConfig, HarnessError> {
    let Some(mut table) = table else { return Ok(TrainConfig::defaults(stage)) };
    let stage_value = toml::Value::try_from(stage).expect("stage serialises");
    match table.get("stage") {
        None => {
            table.insert("stage".into(), stage_value);
        }
        Some(v) if *v == stage_value => {}
        Some(v) => return Err(HarnessError::Spec(format!("stage {v} in the {stage_value} section"))),
    }
    let text = toml::to_string(&table).map_err(|e| HarnessError::Spec(e.to_string()))?;
    Ok(TrainConfig::from_toml_str(&text)?)
}

impl GridSpec {
    /// Parses TOML; absent keys take their defaults, and absent `seeds`
    /// become `0..n_runs`.
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let file: SpecFile = toml::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        let d = Self::default();
        let n_runs = file.n_runs.or(file.seeds.as_ref().map(Vec::len)).unwrap_or(d.n_runs);
        let spec = Self {
            thresholds: file.thresholds.unwrap_or(d.thresholds),
            combos: file.combos.unwrap_or(d.combos),
            tasks: file.tasks.unwrap_or_default(),
            n_runs,
            seeds: file.seeds.unwrap_or_else(|| (0..n_runs as u64).collect()),
            model: file.model.unwrap_or(d.model),
            pretrain: stage_config(file.pretrain, Stage::Pretrain)?,
            finetune: stage_config(file.finetune, Stage::Finetune)?,
            data: file.data.unwrap_or_default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let mut spec = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        spec.data.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid spec serialises")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1".into());
        }
        if self.seeds.len() != self.n_runs {
            return bad(format!("{} seeds for {} runs", self.seeds.len(), self.n_runs));
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad(format!("thresholds must be finite and non-negative: {:?}", self.thresholds));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("thresholds must be strictly increasing: {:?}", self.thresholds));
        }
        if self.combos.is_empty() {
            return bad("no combos".into());
        }
        for (i, c) in self.combos.iter().enumerate() {
            if self.combos[..i].contains(c) {
                return bad(format!("combo {c} listed twice"));
            }
        }
        if self.combos.iter().any(|c| c.uses_solid()) && self.thresholds.is_empty() {
            return bad("SOLID combos need at least one threshold".into());
        }
        if self.pretrain.stage != Stage::Pretrain || self.finetune.stage != Stage::Finetune {
            return bad("pretrain and finetune sections must carry their own stage".into());
        }
        self.pretrain.validate()?;
        self.finetune.validate()?;
        Ok(())
    }

    /// Pretraining rows in table order; `CCTK_ONLY` has a single row
    /// without threshold.
    pub fn rows(&self) -> Vec<(Combo, Option<f64>)> {
        let mut rows = Vec::new();
        for &c in &self.combos {
            if c.uses_solid() {
                rows.extend(self.thresholds.iter().map(|&t| (c, Some(t))));
            } else {
                rows.push((c, None));
            }
        }
        rows
    }
}
