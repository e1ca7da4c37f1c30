use ndarray::Array2;

use super::{ModelConfig, ModelError, Vocab};

/// Token ids of one example before padding. `tgt` excludes EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl EncodedPair {
    pub fn new(vocab: &Vocab, input: &str, target: &str) -> Self {
        Self { src: vocab.encode(input), tgt: vocab.encode(target) }
    }

    /// True if building a batch under `config` would drop tokens.
    pub fn exceeds(&self, config: &ModelConfig) -> bool {
        self.src.len() > config.max_src_len || self.tgt.len() + 1 > config.max_tgt_len
    }
}

/// Padded ids with validity masks. Valid positions form a prefix of each
/// row; the decoder input is BOS followed by the target, the labels are the
/// target followed by EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub src: Array2<u32>,
    pub src_mask: Array2<bool>,
    pub tgt_in: Array2<u32>,
    pub labels: Array2<u32>,
    pub tgt_mask: Array2<bool>,
}

impl Batch {
    /// Pads `pairs`, truncating sources to `max_src_len` and targets so that
    /// target plus EOS fits `max_tgt_len`.
    pub fn from_pairs(pairs: &[EncodedPair], config: &ModelConfig) -> Self {
        let srcs: Vec<&[u32]> = pairs.iter().map(|p| &p.src[..p.src.len().min(config.max_src_len)]).collect();
        let tgts: Vec<&[u32]> = pairs.iter().map(|p| &p.tgt[..p.tgt.len().min(config.max_tgt_len - 1)]).collect();
        let s_len = srcs.iter().map(|s| s.len()).max().unwrap_or(0);
        let t_len = tgts.iter().map(|t| t.len() + 1).max().unwrap_or(0);
        let b = pairs.len();
        let mut batch = Self {
            src: Array2::from_elem((b, s_len), Vocab::PAD_ID),
            src_mask: Array2::from_elem((b, s_len), false),
            tgt_in: Array2::from_elem((b, t_len), Vocab::PAD_ID),
            labels: Array2::from_elem((b, t_len), Vocab::PAD_ID),
            tgt_mask: Array2::from_elem((b, t_len), false),
        };
        for (i, (s, t)) in srcs.iter().zip(&tgts).enumerate() {
            for (j, &id) in s.iter().enumerate() {
                batch.src[[i, j]] = id;
                batch.src_mask[[i, j]] = true;
            }
            batch.tgt_in[[i, 0]] = Vocab::BOS_ID;
            for (j, &id) in t.iter().enumerate() {
                batch.tgt_in[[i, j + 1]] = id;
                batch.labels[[i, j]] = id;
            }
            batch.labels[[i, t.len()]] = Vocab::EOS_ID;
            for j in 0..=t.len() {
                batch.tgt_mask[[i, j]] = true;
            }
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.src.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of loss-bearing target positions.
    pub fn token_count(&self) -> usize {
        self.tgt_mask.iter().filter(|&&m| m).count()
    }

    /// Valid lengths of row `i`: `(source, target)`.
    pub fn lengths(&self, i: usize) -> (usize, usize) {
        let count = |row: ndarray::ArrayView1<bool>| row.iter().filter(|&&m| m).count();
        (count(self.src_mask.row(i)), count(self.tgt_mask.row(i)))
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Contract(m));
        let b = self.len();
        if self.src_mask.dim() != self.src.dim() {
            return bad("source mask shape differs from source ids".into());
        }
        if self.tgt_in.dim() != self.labels.dim() || self.tgt_mask.dim() != self.labels.dim() || self.labels.nrows() != b {
            return bad("target shapes disagree".into());
        }
        for (name, mask) in [("source", &self.src_mask), ("target", &self.tgt_mask)] {
            for (i, row) in mask.rows().into_iter().enumerate() {
                if row.iter().skip_while(|&&m| m).any(|&m| m) {
                    return bad(format!("{name} mask of row {i} is not a prefix"));
                }
            }
        }
        let v = config.vocab_size as u32;
        for (i, (&id, &m)) in self.src.iter().zip(&self.src_mask).chain(self.tgt_in.iter().zip(&self.tgt_mask)).chain(self.labels.iter().zip(&self.tgt_mask)).enumerate() {
            if m && id >= v {
                return bad(format!("token id {id} at flat position {i} exceeds vocabulary of {v}"));
            }
        }
        for i in 0..b {
            let (s, t) = self.lengths(i);
            if s > config.max_src_len || t > config.max_tgt_len {
                return bad(format!("row {i} lengths ({s}, {t}) exceed ({}, {})", config.max_src_len, config.max_tgt_len));
            }
            if t > 0 && s == 0 {
                return bad(format!("row {i} has a target but an empty source"));
            }
        }
        Ok(())
    }
}
