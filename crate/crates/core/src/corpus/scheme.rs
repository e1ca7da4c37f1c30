//! Mapping of heterogeneous dataset label sets onto the two canonical schemes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CanonicalLabel, CorpusError, LabelValue, Scheme};

/// Prefixes known to the pipeline. Every one of them is reserved in the model
/// vocabulary, so a task prefix never falls back to the unknown token.
pub const REGISTERED_PREFIXES: &[&str] = &["OLID_A", "CCTK", "TSD", "HateX", "AHSD", "TRAC"];

/// Separator between a prefix and the text it tags.
pub const PREFIX_SEPARATOR: &str = ": ";

/// Maps the label set of one dataset onto a canonical scheme and names the
/// prefix its examples carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMapping {
    pub dataset: String,
    pub prefix: String,
    pub scheme: Scheme,
    /// Source label -> canonical value, in declaration order.
    pub labels: Vec<(String, LabelValue)>,
}

impl SchemeMapping {
    pub fn new(
        dataset: impl Into<String>,
        prefix: impl Into<String>,
        scheme: Scheme,
        labels: &[(&str, LabelValue)],
    ) -> Result<Self, CorpusError> {
        let mapping = Self {
            dataset: dataset.into(),
            prefix: prefix.into(),
            scheme,
            labels: labels.iter().map(|(l, v)| (l.to_string(), *v)).collect(),
        };
        mapping.validate()?;
        Ok(mapping)
    }

    /// Mapping whose source labels are the canonical label strings themselves.
    pub fn identity(dataset: impl Into<String>, scheme: Scheme) -> Self {
        Self {
            dataset: dataset.into(),
            prefix: scheme.name().to_string(),
            scheme,
            labels: scheme.labels().iter().map(|v| (v.as_str().to_string(), *v)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (label, value) in &self.labels {
            if !self.scheme.admits(*value) {
                return Err(CorpusError::SchemeMismatch { label: *value, scheme: self.scheme });
            }
            if label.trim().is_empty() {
                return Err(CorpusError::Parse(format!("{}: empty source label", self.dataset)));
            }
        }
        if self.prefix.is_empty() || self.prefix.chars().any(char::is_whitespace) {
            return Err(CorpusError::Parse(format!("{}: invalid prefix `{}`", self.dataset, self.prefix)));
        }
        Ok(())
    }

    pub fn source_labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|(l, _)| l.as_str())
    }
}

/// Map a dataset-specific label onto its canonical label.
pub fn map_scheme(raw_label: &str, mapping: &SchemeMapping) -> Result<CanonicalLabel, CorpusError> {
    let raw = raw_label.trim();
    mapping
        .labels
        .iter()
        .find(|(label, _)| label == raw)
        .map(|(_, value)| CanonicalLabel::new(*value, mapping.scheme))
        .unwrap_or_else(|| {
            Err(CorpusError::UnmappedLabel {
                label: raw.to_string(),
                dataset: mapping.dataset.clone(),
                known: mapping.source_labels().collect::<Vec<_>>().join(", "),
            })
        })
}

/// Named collection of label mappings.
#[derive(Debug, Clone, Default)]
pub struct SchemeRegistry {
    mappings: BTreeMap<String, SchemeMapping>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// English pretraining/fine-tuning corpora and the six multilingual
    /// evaluation sets with their sentence-level mapping.
    pub fn builtin() -> Self {
        use LabelValue::{Not, Off, Tox};
        let binary_offensive = [("Offensive", Off), ("Not offensive", Not)];
        let mut registry = Self::empty();
        let mappings = [
            Ok(SchemeMapping::identity("SOLID", Scheme::OlidA)),
            Ok(SchemeMapping::identity("CCTK", Scheme::Cctk)),
            Ok(SchemeMapping::identity("OLID", Scheme::OlidA)),
            SchemeMapping::new("German", "CCTK", Scheme::Cctk, &[("Toxic", Tox), ("Not-toxic", Not)]),
            SchemeMapping::new(
                "Spanish",
                "OLID_A",
                Scheme::OlidA,
                &[
                    ("Offensive individual target", Off),
                    ("Offensive group target", Off),
                    ("Offensive other target", Off),
                    ("Expletive language", Off),
                    ("Non-offensive", Not),
                ],
            ),
            SchemeMapping::new("Hindi", "OLID_A", Scheme::OlidA, &binary_offensive),
            SchemeMapping::new("Korean", "OLID_A", Scheme::OlidA, &binary_offensive),
            SchemeMapping::new("Sinhala", "OLID_A", Scheme::OlidA, &binary_offensive),
            SchemeMapping::new("Marathi", "OLID_A", Scheme::OlidA, &binary_offensive),
        ];
        for mapping in mappings {
            registry.register(mapping.expect("builtin mappings are valid"));
        }
        registry
    }

    pub fn register(&mut self, mapping: SchemeMapping) -> Option<SchemeMapping> {
        self.mappings.insert(mapping.dataset.clone(), mapping)
    }

    pub fn get(&self, dataset: &str) -> Result<&SchemeMapping, CorpusError> {
        self.mappings.get(dataset).ok_or_else(|| CorpusError::UnknownDataset {
            dataset: dataset.to_string(),
            known: self.mappings.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn datasets(&self) -> impl Iterator<Item = &str> {
        self.mappings.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn german_maps_to_cctk() {
        let registry = SchemeRegistry::builtin();
        let german = registry.get("German").unwrap();
        let label = map_scheme("Toxic", german).unwrap();
        assert_eq!(label, CanonicalLabel::TOX);
        assert_eq!(german.prefix, "CCTK");
        assert_eq!(map_scheme("Not-toxic", german).unwrap(), CanonicalLabel::NOT_TOX);
    }

    #[test]
    fn hindi_maps_to_olid_a() {
        let registry = SchemeRegistry::builtin();
        let hindi = registry.get("Hindi").unwrap();
        assert_eq!(map_scheme("Offensive", hindi).unwrap(), CanonicalLabel::OFF);
        assert_eq!(map_scheme(" Not offensive ", hindi).unwrap(), CanonicalLabel::NOT_OFF);
        assert_eq!(hindi.prefix, "OLID_A");
    }

    #[test]
    fn spanish_five_labels_collapse_to_binary() {
        let registry = SchemeRegistry::builtin();
        let spanish = registry.get("Spanish").unwrap();
        assert_eq!(map_scheme("Expletive language", spanish).unwrap(), CanonicalLabel::OFF);
        let off: Vec<&str> = spanish
            .source_labels()
            .filter(|l| map_scheme(l, spanish).unwrap() == CanonicalLabel::OFF)
            .collect();
        assert_eq!(
            off,
            ["Offensive individual target", "Offensive group target", "Offensive other target", "Expletive language"]
        );
        assert_eq!(map_scheme("Non-offensive", spanish).unwrap(), CanonicalLabel::NOT_OFF);
    }

    #[test]
    fn unmapped_label_lists_known_labels() {
        let registry = SchemeRegistry::builtin();
        let err = map_scheme("Hateful", registry.get("German").unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Hateful") && msg.contains("Toxic, Not-toxic"), "{msg}");
    }

    #[test]
    fn mapping_rejects_cross_scheme_targets() {
        assert!(SchemeMapping::new("x", "CCTK", Scheme::Cctk, &[("a", LabelValue::Off)]).is_err());
        assert!(SchemeMapping::new("x", "bad prefix", Scheme::Cctk, &[("a", LabelValue::Tox)]).is_err());
    }

    #[test]
    fn every_registered_mapping_uses_a_registered_prefix() {
        let registry = SchemeRegistry::builtin();
        for name in registry.datasets() {
            assert!(REGISTERED_PREFIXES.contains(&registry.get(name).unwrap().prefix.as_str()));
        }
    }
}
