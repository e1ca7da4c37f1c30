//! Binary container: magic, version, JSON header, raw tensors.
//!
//! ```text
//! 8 bytes   magic "T2TCKPT\0"
//! u32 LE    format version
//! u64 LE    header length in bytes
//! header    UTF-8 JSON: model config, vocabulary, tensor table, extra fields
//! data      f32 LE values of every tensor, in table order
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{Model, ModelConfig, ModelError, ModelState, Vocab};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"T2TCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the data section, in values.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<TensorInfo>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Header contents, readable without loading tensor data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainerSummary {
    pub version: u32,
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub tensors: Vec<TensorInfo>,
    pub n_params: usize,
    pub extra: serde_json::Value,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn write_container<W: Write>(mut out: W, state: &ModelState, extra: &serde_json::Value) -> Result<(), ModelError> {
    let params = state.model.params();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, data, shape) in params.tensors() {
        tensors.push(TensorInfo { name, shape, offset });
        offset += data.len();
    }
    let header = Header { config: state.model.config().clone(), vocab: state.vocab.clone(), tensors, extra: extra.clone() };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(offset * 4);
    for (_, data, _) in params.tensors() {
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

fn read_header<R: Read>(input: &mut R) -> Result<(u32, Header), ModelError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| bad("truncated file"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(|_| bad("truncated file"))?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(|_| bad("truncated file"))?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|_| bad("header too large"))?;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    header.config.validate()?;
    if header.vocab.len() != header.config.vocab_size {
        return Err(bad(format!("vocabulary has {} tokens, config says {}", header.vocab.len(), header.config.vocab_size)));
    }
    let expected = Params::<f32>::layout(&header.config);
    let mut offset = 0;
    if expected.len() != header.tensors.len() {
        return Err(bad(format!("expected {} tensors, table lists {}", expected.len(), header.tensors.len())));
    }
    for ((name, shape), t) in expected.iter().zip(&header.tensors) {
        if &t.name != name || &t.shape != shape || t.offset != offset {
            return Err(bad(format!("tensor `{}` does not match the expected layout at `{name}`", t.name)));
        }
        offset += shape.iter().product::<usize>();
    }
    Ok((version, header))
}

pub fn read_container<R: Read>(mut input: R) -> Result<(ModelState, serde_json::Value), ModelError> {
    let (_, header) = read_header(&mut input)?;
    let mut data = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        input.read_exact(&mut bytes).map_err(|_| bad(format!("truncated data in `{}`", t.name)))?;
        let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        data.push((t.name.clone(), values));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after tensor data"));
    }
    let params = Params::from_tensors(&header.config, data)?;
    params.check_finite("checkpoint tensor")?;
    let model = Model::new(header.config, params)?;
    Ok((ModelState::new(header.vocab, model)?, header.extra))
}

pub fn inspect<R: Read>(mut input: R) -> Result<ContainerSummary, ModelError> {
    let (version, header) = read_header(&mut input)?;
    let n_params = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    Ok(ContainerSummary {
        version,
        vocab_size: header.vocab.len(),
        config: header.config,
        tensors: header.tensors,
        n_params,
        extra: header.extra,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CuratedExample, TaskKind};

    fn state() -> ModelState {
        let ex = CuratedExample {
            id: "1".into(),
            source: "s".into(),
            prefix: "OLID_A".into(),
            task: TaskKind::Sentence,
            input_text: "OLID_A: some words here".into(),
            target_text: "OFF".into(),
            original_text: "some words here".into(),
            gold_spans: None,
        };
        let vocab = Vocab::build(&[ex], 1);
        let config = ModelConfig { d_model: 8, d_ff: 8, n_heads: 2, ..ModelConfig::toy(vocab.len()) };
        ModelState::new(vocab, Model::init(config, 3).unwrap()).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let s = state();
        let extra = serde_json::json!({"step": 7});
        let mut buf = Vec::new();
        write_container(&mut buf, &s, &extra).unwrap();
        assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
        let (back, e) = read_container(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(e, extra);
    }

    #[test]
    fn inspect_reports_shapes() {
        let s = state();
        let mut buf = Vec::new();
        write_container(&mut buf, &s, &serde_json::Value::Null).unwrap();
        let summary = inspect(buf.as_slice()).unwrap();
        assert_eq!(summary.n_params, s.model.params().n_params());
        assert_eq!(summary.tensors[0].name, "embed");
        assert_eq!(summary.tensors[0].shape, vec![s.vocab.len(), 8]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let s = state();
        let mut buf = Vec::new();
        write_container(&mut buf, &s, &serde_json::Value::Null).unwrap();
        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(read_container(wrong_magic.as_slice()).is_err());
        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(read_container(wrong_version.as_slice()).is_err());
        assert!(read_container(&buf[..buf.len() - 1]).is_err());
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(read_container(trailing.as_slice()).is_err());
        let mut nan = buf.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_container(nan.as_slice()).is_err());
    }
}
