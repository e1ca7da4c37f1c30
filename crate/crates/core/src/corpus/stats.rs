use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CuratedDataset;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub per_source: BTreeMap<String, usize>,
    pub per_label: BTreeMap<String, usize>,
    /// Whitespace-token count of the original text -> number of examples.
    pub length_histogram: BTreeMap<usize, usize>,
}

pub fn stats(dataset: &CuratedDataset) -> DatasetStats {
    let mut s = DatasetStats { total: dataset.len(), ..DatasetStats::default() };
    for ex in &dataset.examples {
        *s.per_source.entry(ex.source.clone()).or_default() += 1;
        *s.per_label.entry(ex.target_text.clone()).or_default() += 1;
        *s.length_histogram.entry(ex.original_text.split_whitespace().count()).or_default() += 1;
    }
    s
}
