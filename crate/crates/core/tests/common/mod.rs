//! Independent oracles shared by the integration test targets.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use t2t_lab::model::{Batch, EncodedPair, Model, ModelConfig, Vocab};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The gradient-check architecture: d_model 8, one head, one layer each side.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_heads: 1,
        n_enc_layers: 1,
        n_dec_layers: 1,
        d_ff: 16,
        max_src_len: 8,
        max_tgt_len: 8,
        vocab_size: 30,
        dropout: 0.0,
    }
}

pub fn random_batch(seed: u64, n: usize, config: &ModelConfig) -> Batch {
    let mut r = rng(seed);
    let lo = Vocab::n_reserved() as u32;
    let v = config.vocab_size as u32;
    let pairs: Vec<EncodedPair> = (0..n)
        .map(|_| {
            let s = r.random_range(1..=6);
            let t = r.random_range(1..=5);
            EncodedPair {
                src: (0..s).map(|_| r.random_range(lo..v)).collect(),
                tgt: (0..t).map(|_| r.random_range(lo..v)).collect(),
            }
        })
        .collect();
    Batch::from_pairs(&pairs, config)
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub sampled: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, FLOOR)`; the floor only matters
/// for gradients that are exactly zero on both sides.
pub const REL_FLOOR: f64 = 1e-8;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Central differences on `n` parameters sampled uniformly over all tensors.
pub fn finite_difference_check(model: &Model<f64>, batch: &Batch, n: usize, h: f64, seed: u64) -> GradCheck {
    let grads = model.backward(batch).unwrap();
    let names: Vec<(String, usize)> = model.params().tensors().iter().map(|(n, t, _)| (n.clone(), t.len())).collect();
    let total: usize = names.iter().map(|(_, l)| l).sum();
    let mut r = rng(seed);
    let mut picked = BTreeSet::new();
    while picked.len() < n.min(total) {
        picked.insert(r.random_range(0..total));
    }
    let locate = |mut flat: usize| {
        for (t, (_, len)) in names.iter().enumerate() {
            if flat < *len {
                return (t, flat);
            }
            flat -= len;
        }
        unreachable!()
    };
    let mut worst = (0.0, String::new());
    for &flat in &picked {
        let (t, i) = locate(flat);
        let analytic = grads.tensors()[t].1[i];
        let eval = |delta: f64| {
            let mut m = model.clone();
            m.params_mut().tensors_mut()[t][i] += delta;
            m.forward_loss(batch).unwrap().loss
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let e = rel_error(analytic, numeric);
        if e > worst.0 {
            worst = (e, format!("{}[{i}] analytic {analytic:.6e} numeric {numeric:.6e}", names[t].0));
        }
    }
    GradCheck { max_rel_error: worst.0, worst: worst.1, sampled: picked.len() }
}

/// Planted-lexicon sentence task: the first `n_train` instances train, the
/// next `n_test` test. Labels are hard OLID_A labels under `prefix`.
pub fn lexicon_task(
    spec: &t2t_lab::corpus::SynthSpec,
    seed: u64,
    n_train: usize,
    n_test: usize,
    prefix: &str,
) -> (t2t_lab::CuratedDataset, t2t_lab::CuratedDataset) {
    use t2t_lab::corpus::{merge_with_prefixes, synth_corpus, CorpusSource, SchemeMapping, SynthSpec};
    use t2t_lab::{CuratedDataset, Scheme, Source};
    let spec = SynthSpec { n_instances: n_train + n_test, source: Source::Task, ..spec.clone() };
    let rows = synth_corpus(&spec, seed).unwrap();
    let mut mapping = SchemeMapping::identity("task", Scheme::OlidA);
    mapping.prefix = prefix.to_string();
    let mut all = merge_with_prefixes(vec![CorpusSource { name: "task".into(), instances: rows, mapping, std_threshold: None }])
        .unwrap()
        .examples;
    let test = all.split_off(n_train);
    (CuratedDataset::from_examples(all, &Default::default()), CuratedDataset::from_examples(test, &Default::default()))
}

/// Macro F1 over {OFF, NOT} by counting confusion cells directly.
pub fn brute_binary_macro_f1(gold: &[&str], pred: &[&str]) -> f64 {
    let mut total = 0.0;
    for class in ["OFF", "NOT"] {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for (g, p) in gold.iter().zip(pred) {
            match (*g == class, *p == class) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        total += if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    }
    total / 2.0
}

/// Best constant predictor's macro F1, trying both labels.
pub fn brute_majority_baseline(gold: &[&str]) -> f64 {
    ["OFF", "NOT"]
        .iter()
        .map(|c| brute_binary_macro_f1(gold, &vec![*c; gold.len()]))
        .fold(0.0, f64::max)
}

/// Share of examples whose greedy output equals the target exactly.
pub fn exact_match(state: &t2t_lab::model::ModelState, data: &t2t_lab::CuratedDataset) -> f64 {
    let hits = data
        .examples
        .iter()
        .filter(|ex| {
            let src = state.vocab.encode(&ex.input_text);
            let out = state.model.greedy_decode(&src, state.model.config().max_tgt_len).unwrap();
            state.vocab.decode(&out) == ex.target_text
        })
        .count();
    hits as f64 / data.len() as f64
}
