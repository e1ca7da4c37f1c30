//! Token alignment by longest common subsequence.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignment {
    /// `(output index, original index)`, strictly increasing in both.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_output: Vec<usize>,
}

/// LCS on exact token equality. Among alignments of maximal length the one
/// whose sequence of original indices is lexicographically smallest wins.
pub fn align_tokens<A: AsRef<str>, B: AsRef<str>>(output: &[A], original: &[B]) -> TokenAlignment {
    let (n, m) = (output.len(), original.len());
    // suffix[i][j] = LCS length of output[i..] and original[j..]
    let width = m + 1;
    let mut suffix = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if output[i].as_ref() == original[j].as_ref() {
                suffix[(i + 1) * width + j + 1] + 1
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }

    let mut pairs = Vec::with_capacity(suffix[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m && suffix[i * width + j] > 0 {
        let need = suffix[i * width + j];
        // Smallest original index first; for it, the earliest output match
        // leaves the longest remainder.
        let next = (j..m).find_map(|jj| {
            let ii = (i..n).find(|&ii| output[ii].as_ref() == original[jj].as_ref())?;
            (suffix[(ii + 1) * width + jj + 1] + 1 == need).then_some((ii, jj))
        });
        let Some((ii, jj)) = next else { break };
        pairs.push((ii, jj));
        i = ii + 1;
        j = jj + 1;
    }

    let mut matched = vec![false; n];
    for &(o, _) in &pairs {
        matched[o] = true;
    }
    let unmatched_output = (0..n).filter(|&o| !matched[o]).collect();
    TokenAlignment { pairs, unmatched_output }
}
