use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Canonical annotation scheme a sentence label belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// OLID level A: offensive vs not offensive.
    #[serde(rename = "OLID_A")]
    OlidA,
    /// Civil Comments toxicity: toxic vs not toxic.
    #[serde(rename = "CCTK")]
    Cctk,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::OlidA, Scheme::Cctk];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::OlidA => "OLID_A",
            Scheme::Cctk => "CCTK",
        }
    }

    /// Labels admitted by the scheme, positive class first.
    pub fn labels(self) -> [LabelValue; 2] {
        match self {
            Scheme::OlidA => [LabelValue::Off, LabelValue::Not],
            Scheme::Cctk => [LabelValue::Tox, LabelValue::Not],
        }
    }

    pub fn positive(self) -> LabelValue {
        self.labels()[0]
    }

    pub fn admits(self, value: LabelValue) -> bool {
        self.labels().contains(&value)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OLID_A" => Ok(Scheme::OlidA),
            "CCTK" => Ok(Scheme::Cctk),
            other => Err(CorpusError::Parse(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelValue {
    #[serde(rename = "OFF")]
    Off,
    #[serde(rename = "NOT")]
    Not,
    #[serde(rename = "TOX")]
    Tox,
}

impl LabelValue {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelValue::Off => "OFF",
            LabelValue::Not => "NOT",
            LabelValue::Tox => "TOX",
        }
    }
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelValue {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OFF" => Ok(LabelValue::Off),
            "NOT" => Ok(LabelValue::Not),
            "TOX" => Ok(LabelValue::Tox),
            other => Err(CorpusError::Parse(format!("unknown label `{other}`"))),
        }
    }
}

/// A label value together with the scheme that admits it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalLabel {
    value: LabelValue,
    scheme: Scheme,
}

impl CanonicalLabel {
    pub fn new(value: LabelValue, scheme: Scheme) -> Result<Self, CorpusError> {
        if scheme.admits(value) {
            Ok(Self { value, scheme })
        } else {
            Err(CorpusError::SchemeMismatch { label: value, scheme })
        }
    }

    pub const OFF: CanonicalLabel = CanonicalLabel { value: LabelValue::Off, scheme: Scheme::OlidA };
    pub const NOT_OFF: CanonicalLabel = CanonicalLabel { value: LabelValue::Not, scheme: Scheme::OlidA };
    pub const TOX: CanonicalLabel = CanonicalLabel { value: LabelValue::Tox, scheme: Scheme::Cctk };
    pub const NOT_TOX: CanonicalLabel = CanonicalLabel { value: LabelValue::Not, scheme: Scheme::Cctk };

    /// The negative class of `scheme`.
    pub fn negative(scheme: Scheme) -> Self {
        Self { value: LabelValue::Not, scheme }
    }

    pub fn value(&self) -> LabelValue {
        self.value
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn is_positive(&self) -> bool {
        self.value != LabelValue::Not
    }

    /// `SCHEME:VALUE`, the form used in canonical interchange files.
    pub fn qualified(&self) -> String {
        format!("{}:{}", self.scheme, self.value)
    }

    pub fn parse_qualified(s: &str) -> Result<Self, CorpusError> {
        let (scheme, value) = s
            .split_once(':')
            .ok_or_else(|| CorpusError::Parse(format!("label `{s}` is not SCHEME:VALUE")))?;
        Self::new(value.parse()?, scheme.parse()?)
    }
}

impl fmt::Display for CanonicalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.value.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemes_admit_only_their_labels() {
        assert!(CanonicalLabel::new(LabelValue::Off, Scheme::OlidA).is_ok());
        assert!(CanonicalLabel::new(LabelValue::Tox, Scheme::OlidA).is_err());
        assert!(CanonicalLabel::new(LabelValue::Off, Scheme::Cctk).is_err());
        assert!(CanonicalLabel::new(LabelValue::Not, Scheme::Cctk).is_ok());
    }

    #[test]
    fn qualified_form_roundtrips() {
        for scheme in Scheme::ALL {
            for value in scheme.labels() {
                let label = CanonicalLabel::new(value, scheme).unwrap();
                assert_eq!(CanonicalLabel::parse_qualified(&label.qualified()).unwrap(), label);
            }
        }
        assert!(CanonicalLabel::parse_qualified("CCTK:OFF").is_err());
        assert!(CanonicalLabel::parse_qualified("OFF").is_err());
    }
}
