use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::CodecError;

/// Set of character positions (Unicode scalar values) inside a text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharSpanSet(BTreeSet<usize>);

impl CharSpanSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Self(indices.into_iter().collect())
    }

    /// Set covering the inclusive ranges `start..=end`.
    pub fn from_ranges(ranges: &[(usize, usize)]) -> Self {
        Self(ranges.iter().flat_map(|&(a, b)| a..=b).collect())
    }

    pub fn insert(&mut self, index: usize) -> bool {
        self.0.insert(index)
    }

    /// Insert the half-open range `start..end`.
    pub fn insert_range(&mut self, start: usize, end: usize) {
        self.0.extend(start..end);
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn as_set(&self) -> &BTreeSet<usize> {
        &self.0
    }

    pub fn intersection_len(&self, other: &CharSpanSet) -> usize {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.0.iter().filter(|i| large.0.contains(i)).count()
    }

    /// True if any index falls in the half-open range `start..end`.
    pub fn intersects_range(&self, start: usize, end: usize) -> bool {
        self.0.range(start..end).next().is_some()
    }

    /// Maximal runs of consecutive indices as inclusive `(start, end)` pairs.
    pub fn to_ranges(&self) -> Vec<(usize, usize)> {
        let mut ranges: Vec<(usize, usize)> = Vec::new();
        for i in self.iter() {
            match ranges.last_mut() {
                Some((_, end)) if *end + 1 == i => *end = i,
                _ => ranges.push((i, i)),
            }
        }
        ranges
    }

    pub fn check_within(&self, text_len: usize) -> Result<(), CodecError> {
        match self.max() {
            Some(max) if max >= text_len => Err(CodecError::SpanOutOfRange { index: max, len: text_len }),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for CharSpanSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::from_indices(iter)
    }
}

/// Inclusive ranges joined by commas, e.g. `8-13,20-24`; empty set is `""`.
impl fmt::Display for CharSpanSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, b)) in self.to_ranges().into_iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}-{b}")?;
        }
        Ok(())
    }
}

impl FromStr for CharSpanSet {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = CharSpanSet::new();
        let s = s.trim();
        if s.is_empty() {
            return Ok(set);
        }
        let bad = || CodecError::SpanSyntax(s.to_string());
        for part in s.split(',') {
            let part = part.trim();
            let (a, b): (usize, usize) = match part.split_once('-') {
                Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
                None => {
                    let i: usize = part.parse().map_err(|_| bad())?;
                    (i, i)
                }
            };
            if a > b {
                return Err(bad());
            }
            set.0.extend(a..=b);
        }
        Ok(set)
    }
}
