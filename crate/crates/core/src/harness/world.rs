//! Synthetic stand-ins for the grid's corpora.
//!
//! The default world has three parts. A SOLID-like corpus covers half of the
//! offensive lexicon and carries decoy texts whose ensemble scores scatter
//! around 0.6, so loose confidence thresholds admit decoys labelled
//! offensive. A CCTK-like corpus covers the whole lexicon and labels decoys
//! correctly. The downstream task uses the whole lexicon and decoys, so
//! both the extra coverage and the label noise show up in its score.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GridCorpora, TaskData};
use super::HarnessError;
use crate::codec::{encode_token, TaskKind};
use crate::corpus::{merge_with_prefixes, synth_corpus, CorpusSource, CuratedDataset, Scheme, SchemeMapping, Source, SynthSpec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTask {
    pub name: String,
    /// Defaults to the task name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    pub kind: TaskKind,
    pub n_train: usize,
    pub n_test: usize,
    /// Generator; its `n_instances` is replaced by `n_train + n_test`.
    pub spec: SynthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub solid: SynthSpec,
    pub cctk: SynthSpec,
    pub tasks: Vec<SynthTask>,
}

fn tokens(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

impl Default for WorldSpec {
    fn default() -> Self {
        let decoys = tokens("dc", 3);
        let solid = SynthSpec {
            vocab_size: 50,
            lexicon: tokens("kw", 4),
            n_instances: 2000,
            noise: 0.05,
            source: Source::SolidLike,
            id_prefix: "solid".into(),
            decoys: decoys.clone(),
            decoy_rate: 0.5,
            decoy_mean: 0.6,
            decoy_noise: 0.25,
            ..SynthSpec::default()
        };
        let cctk = SynthSpec {
            lexicon: tokens("kw", 8),
            n_instances: 1000,
            source: Source::CctkLike,
            id_prefix: "cctk".into(),
            decoy_mean: 0.1,
            decoy_noise: 0.05,
            ..solid.clone()
        };
        let task = SynthTask {
            name: "AHSD".into(),
            prefix: None,
            kind: TaskKind::Sentence,
            n_train: 100,
            n_test: 400,
            spec: SynthSpec { source: Source::Task, id_prefix: "ahsd".into(), ..cctk.clone() },
        };
        Self { solid, cctk, tasks: vec![task] }
    }
}

/// Independent seed for one named component of a world.
fn component_seed(seed: u64, name: &str) -> u64 {
    rng::stream(seed, &format!("world/{name}")).random()
}

fn synth_task(task: &SynthTask, seed: u64) -> Result<TaskData, HarnessError> {
    let spec = SynthSpec { n_instances: task.n_train + task.n_test, ..task.spec.clone() };
    let rows = synth_corpus(&spec, component_seed(seed, &format!("task/{}", task.name)))?;
    let prefix = task.prefix.clone().unwrap_or_else(|| task.name.clone());
    let examples = match task.kind {
        TaskKind::Sentence => {
            let mut mapping = SchemeMapping::identity(task.name.clone(), Scheme::OlidA);
            mapping.prefix = prefix.clone();
            let source = CorpusSource { name: task.name.clone(), instances: rows, mapping, std_threshold: None };
            merge_with_prefixes(vec![source])?.examples
        }
        TaskKind::Token => rows
            .iter()
            .map(|r| {
                let spans = r.token_spans.clone().unwrap_or_default();
                let mut ex = encode_token(&prefix, &r.text, &spans)?;
                ex.id = format!("{}/{}", task.name, r.id);
                ex.source = task.name.clone();
                Ok(ex)
            })
            .collect::<Result<Vec<_>, HarnessError>>()?,
    };
    let mut train = examples;
    let test = train.split_off(task.n_train.min(train.len()));
    let no_thresholds = Default::default();
    Ok(TaskData {
        name: task.name.clone(),
        kind: task.kind,
        train: CuratedDataset::from_examples(train, &no_thresholds),
        test: CuratedDataset::from_examples(test, &no_thresholds),
    })
}

/// Generates every corpus of `spec`; each part draws from its own stream.
pub fn build_world(spec: &WorldSpec, seed: u64) -> Result<GridCorpora, HarnessError> {
    let solid = synth_corpus(&spec.solid, component_seed(seed, "solid"))?;
    let cctk = synth_corpus(&spec.cctk, component_seed(seed, "cctk"))?;
    let tasks = spec.tasks.iter().map(|t| synth_task(t, seed)).collect::<Result<Vec<_>, _>>()?;
    Ok(GridCorpora { solid: Some(solid), cctk: Some(cctk), tasks })
}
